#pragma once

// Neural building blocks over the tensor tape.
//
// Parameters live in a name -> tensor map. Blocks are addressed by a name
// prefix, e.g. rdb(p, "dm.enc1.rdb0", x, ...) reads "dm.enc1.rdb0.layer0.w".
// Layout conventions:
//   conv weights    (out_ch, in_ch, k, k), bias (out_ch)
//   deconv weights  (in_ch, out_ch, k, k), bias (out_ch)

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "blurvid/tensor.hpp"

namespace blurvid {

template <typename T>
using ParamMap = std::map<std::string, BasicTensor<T>>;

template <typename T>
const BasicTensor<T>& param(const ParamMap<T>& p, const std::string& name);

enum class Init { kHeNormal, kZeros, kConstant, kIdentity, kForgetBias };

struct ParamSpec {
  std::string name;
  Shape shape;
  Init init = Init::kHeNormal;
  double fan_in = 1.0;
  double gain = 1.0;      // multiplies the He standard deviation
  float value = 0.0f;     // kConstant fill
  bool trainable = true;  // false for running statistics
};

using ParamSpecs = std::vector<ParamSpec>;

// Draws every declared parameter in declaration order from one seeded stream.
ParamMap<float> initialize(const ParamSpecs& specs, std::uint64_t seed);
std::int64_t count_parameters(const ParamSpecs& specs, bool trainable_only = true);

template <typename T, typename U>
ParamMap<U> cast_params(const ParamMap<T>& p) {
  ParamMap<U> out;
  for (const auto& [k, v] : p) out.emplace(k, v.template cast<U>());
  return out;
}

// ---- raw differentiable ops -------------------------------------------------

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b,
                      int stride, int pad);

// Transposed convolution; output extent (in - 1) * stride - 2 * pad + k.
template <typename T>
BasicTensor<T> deconv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b,
                        int stride, int pad);

enum class NormMode { kTrain, kEval };

template <typename T>
struct BatchNormOutput {
  BasicTensor<T> y;
  std::vector<double> batch_mean;
  std::vector<double> batch_var;  // unbiased
};

// Per-channel normalization over (B,H,W). In eval mode `running_mean` and
// `running_var` are used and batch statistics are not reported.
template <typename T>
BatchNormOutput<T> batchnorm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                             const BasicTensor<T>& running_mean, const BasicTensor<T>& running_var,
                             NormMode mode, double eps = 1e-5);

// ---- parameterized blocks ---------------------------------------------------

void declare_conv(ParamSpecs& s, const std::string& name, int in, int out, int k, double gain = 1.0);
void declare_deconv(ParamSpecs& s, const std::string& name, int in, int out, int k = 4, int stride = 2);

template <typename T>
BasicTensor<T> conv(const ParamMap<T>& p, const std::string& name, const BasicTensor<T>& x, int stride = 1);
template <typename T>
BasicTensor<T> deconv(const ParamMap<T>& p, const std::string& name, const BasicTensor<T>& x);

template <typename T>
struct ConvLstmState {
  BasicTensor<T> h;
  BasicTensor<T> c;
};

void declare_convlstm(ParamSpecs& s, const std::string& name, int in, int hidden, float forget_bias = 1.0f);

// Gates i,f,o,g from one 3x3 convolution over concat(x, h); no peepholes.
template <typename T>
ConvLstmState<T> convlstm_step(const ParamMap<T>& p, const std::string& name, const BasicTensor<T>& x,
                               const ConvLstmState<T>& state);

template <typename T>
ConvLstmState<T> zero_state(int batch, int hidden, int height, int width);

void declare_resblock(ParamSpecs& s, const std::string& name, int channels);
// x + conv(lrelu(conv(x)))
template <typename T>
BasicTensor<T> resblock(const ParamMap<T>& p, const std::string& name, const BasicTensor<T>& x);

struct RdbShape {
  int channels = 16;  // C0
  int growth = 16;    // G
  int layers = 4;     // L
};

void declare_rdb(ParamSpecs& s, const std::string& name, const RdbShape& shape);
// x + residual_scale * fuse(concat(x, l_1, ..., l_L)); layer i sees C0 + i*G channels.
template <typename T>
BasicTensor<T> rdb(const ParamMap<T>& p, const std::string& name, const BasicTensor<T>& x,
                   const RdbShape& shape, double residual_scale = 1.0);

// 1x1 channel projection without activation.
void declare_bottleneck(ParamSpecs& s, const std::string& name, int in, int out);
template <typename T>
BasicTensor<T> bottleneck(const ParamMap<T>& p, const std::string& name, const BasicTensor<T>& x);

// Trainable gamma/beta plus running mean/var and a tracked-batch counter.
void declare_batchnorm(ParamSpecs& s, const std::string& name, int channels);

// Running-statistic updates produced by train-mode normalization layers.
using BufferUpdates = std::map<std::string, Tensor>;

struct NormContext {
  NormMode mode = NormMode::kTrain;
  double momentum = 0.1;
  BufferUpdates* updates = nullptr;  // receives new running stats in train mode
};

template <typename T>
BasicTensor<T> batchnorm(const ParamMap<T>& p, const std::string& name, const BasicTensor<T>& x,
                         const NormContext& ctx);

}  // namespace blurvid
