#include "blurvid/models.hpp"

#include <algorithm>

#include "blurvid/ops.hpp"

namespace blurvid {

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::full() {
  ModelConfig c;
  c.frames = 9;
  c.height = 256;
  c.width = 256;
  c.base_channels = 16;
  c.dm_base = 32;
  c.dm_growth = 32;
  c.dm_rdb_layers = 6;
  c.dm_rdbs_per_level = 3;
  return c;
}

void check_divisible(int height, int width, int by, const char* what) {
  if (height <= 0 || width <= 0 || height % by || width % by) {
    throw ShapeError(std::string(what) + ": spatial size " + std::to_string(height) + "x" + std::to_string(width) +
                     " must be positive and divisible by " + std::to_string(by));
  }
}

void ModelConfig::validate() const {
  if (frames < 1) throw Error("config: frames must be >= 1");
  if (base_channels < 1 || dm_base < 1 || dm_growth < 1 || dm_rdb_layers < 1 || dm_rdbs_per_level < 0) {
    throw Error("config: channel counts must be positive");
  }
  if (dm_base % 4) throw Error("config: dm_base must be a multiple of 4 (depth-to-space)");
  check_divisible(height, width, 8, "config");
}

namespace {

const int kBieStrides[7] = {2, 2, 1, 2, 1, 1, 1};
const int kBieKernels[7] = {5, 3, 3, 3, 3, 3, 3};
// multiples of base_channels
const int kBieWidths[7] = {2, 4, 4, 8, 8, 8, 8};

int dm_width(const ModelConfig& c, int level) { return c.dm_base * (level + 1); }

RdbShape dm_rdb(const ModelConfig& c, int level) { return {dm_width(c, level), c.dm_growth, c.dm_rdb_layers}; }

// Four blocks: stride-1 conv, then three stride-2 conv + resblock stages.
void declare_frame_encoder(ParamSpecs& s, const std::string& name, int in, int base) {
  declare_conv(s, name + ".block0.conv", in, base, 3);
  int prev = base;
  for (int k = 1; k < 4; ++k) {
    const int w = base << k;
    declare_conv(s, name + ".block" + std::to_string(k) + ".conv", prev, w, 3);
    declare_resblock(s, name + ".block" + std::to_string(k) + ".res", w);
    prev = w;
  }
}

template <typename T>
std::array<BasicTensor<T>, 4> frame_encoder(const ParamMap<T>& p, const std::string& name, const BasicTensor<T>& x) {
  std::array<BasicTensor<T>, 4> f;
  f[0] = leaky_relu(conv(p, name + ".block0.conv", x));
  for (int k = 1; k < 4; ++k) {
    const std::string b = name + ".block" + std::to_string(k);
    f[k] = resblock(p, b + ".res", leaky_relu(conv(p, b + ".conv", f[k - 1], 2)));
  }
  return f;
}

template <typename T>
void require_frame(const char* what, const BasicTensor<T>& x, int channels) {
  if (x.rank() != 4 || x.dim(1) != channels) {
    throw ShapeError(std::string(what) + ": expected (B," + std::to_string(channels) + ",H,W), got " +
                     to_string(x.shape()));
  }
}

}  // namespace

ParamSpecs rve_params(const ModelConfig& cfg) {
  ParamSpecs s;
  declare_frame_encoder(s, "rve.enc", 3, cfg.base_channels);
  declare_convlstm(s, "rve.lstm", cfg.base_channels * 8, cfg.hidden());
  return s;
}

ParamSpecs rvd_params(const ModelConfig& cfg) {
  const int b = cfg.base_channels;
  ParamSpecs s;
  declare_frame_encoder(s, "rvd.fenc", 2, b);
  declare_convlstm(s, "rvd.lstm", b * 8, cfg.hidden());
  declare_conv(s, "rvd.flow1", cfg.hidden(), 2, 3, cfg.flow_head_gain);
  // hybrid features: deconv output, upsampled flow, encoder skip
  declare_deconv(s, "rvd.up2", cfg.hidden(), 4 * b);
  declare_conv(s, "rvd.flow2", 8 * b + 2, 2, 3, cfg.flow_head_gain);
  declare_deconv(s, "rvd.up3", 8 * b + 2, 2 * b);
  declare_conv(s, "rvd.flow3", 4 * b + 2, 2, 3, cfg.flow_head_gain);
  declare_deconv(s, "rvd.up4", 4 * b + 2, b);
  declare_conv(s, "rvd.flow4", 2 * b + 2, 2, 3, cfg.flow_head_gain);
  return s;
}

ParamSpecs bie_params(const ModelConfig& cfg) {
  ParamSpecs s;
  int prev = 6;
  for (int i = 0; i < 7; ++i) {
    const std::string name = "bie.conv" + std::to_string(i);
    const int w = i == 6 ? cfg.hidden() : kBieWidths[i] * cfg.base_channels;
    declare_conv(s, name, prev, w, kBieKernels[i]);
    if (i < 6) declare_batchnorm(s, "bie.bn" + std::to_string(i), w);
    prev = w;
  }
  if (cfg.bie_predicts_cell) declare_conv(s, "bie.cell", kBieWidths[5] * cfg.base_channels, cfg.hidden(), 3);
  return s;
}

ParamSpecs dm_params(const ModelConfig& cfg) {
  ParamSpecs s;
  declare_conv(s, "dm.stem", 4, dm_width(cfg, 0), 3);
  for (int l = 1; l <= 3; ++l) {
    const std::string lv = std::to_string(l);
    declare_conv(s, "dm.down" + lv, dm_width(cfg, l - 1), dm_width(cfg, l), 3);
    for (int r = 0; r < cfg.dm_rdbs_per_level; ++r) declare_rdb(s, "dm.enc" + lv + ".rdb" + std::to_string(r), dm_rdb(cfg, l));
  }
  for (int l = 3; l >= 1; --l) {
    const std::string lv = std::to_string(l);
    const int w = dm_width(cfg, l), below = dm_width(cfg, l - 1);
    declare_bottleneck(s, "dm.up" + lv + ".bottleneck", w, std::max(1, w / 2));
    declare_deconv(s, "dm.up" + lv + ".deconv", std::max(1, w / 2), below);
    declare_conv(s, "dm.proj" + lv, 2 * below, below, 1);
  }
  const int c0 = dm_width(cfg, 0);
  declare_conv(s, "dm.out1", c0 / 4, c0, 3);
  declare_conv(s, "dm.out2", c0, 1, 3, 0.1);
  return s;
}

std::vector<std::pair<std::string, std::int64_t>> parameter_counts(const ModelConfig& cfg) {
  return {{"rve", count_parameters(rve_params(cfg))},
          {"rvd", count_parameters(rvd_params(cfg))},
          {"bie", count_parameters(bie_params(cfg))},
          {"dm", count_parameters(dm_params(cfg))}};
}

void zero_flow_heads(ParamMap<float>& p) {
  for (int j = 1; j <= 4; ++j) {
    for (const char* suffix : {".w", ".b"}) {
      const std::string name = "rvd.flow" + std::to_string(j) + suffix;
      const auto& t = param(p, name);
      p[name] = Tensor::zeros(t.shape());
    }
  }
}

template <typename T>
ConvLstmState<T> rve_forward(const ParamMap<T>& p, const ModelConfig& cfg, const std::vector<BasicTensor<T>>& frames) {
  if (frames.empty()) throw Error("rve_forward: no frames");
  const auto& first = frames.front();
  require_frame("rve_forward", first, 3);
  check_divisible(first.dim(2), first.dim(3), 8, "rve_forward");
  auto state = zero_state<T>(first.dim(0), cfg.hidden(), first.dim(2) / 8, first.dim(3) / 8);
  for (const auto& x : frames) {
    if (x.shape() != first.shape()) {
      throw ShapeError("rve_forward: frame " + to_string(x.shape()) + " vs " + to_string(first.shape()));
    }
    auto feats = frame_encoder(p, "rve.enc", x);
    state = convlstm_step(p, "rve.lstm", feats[3], state);
  }
  return state;
}

template <typename T>
PredictionSet<T> rvd_rollout(const ParamMap<T>& p, const ModelConfig& cfg, const ConvLstmState<T>& init,
                             const BasicTensor<T>& center, int steps) {
  require_frame("rvd_rollout", center, 3);
  const int B = center.dim(0), H = center.dim(2), W = center.dim(3);
  check_divisible(H, W, 8, "rvd_rollout");
  const Shape expect{B, cfg.hidden(), H / 8, W / 8};
  if (init.h.shape() != expect || init.c.shape() != expect) {
    throw ShapeError("rvd_rollout: initial state " + to_string(init.h.shape()) + " does not match center " +
                     to_string(center.shape()) + " (expected " + to_string(expect) + ")");
  }
  if (steps < 1) throw Error("rvd_rollout: steps must be >= 1");

  const auto center_pyr = image_pyramid(center);
  PredictionSet<T> out;
  auto state = init;
  auto prev_flow = BasicTensor<T>::zeros({B, 2, H, W});
  for (int n = 0; n < steps; ++n) {
    auto skips = frame_encoder(p, "rvd.fenc", prev_flow);
    state = convlstm_step(p, "rvd.lstm", skips[3], state);

    Pyramid<T> flows;
    flows[0] = conv(p, "rvd.flow1", state.h);
    auto feat = state.h;
    for (int j = 1; j < kPyramidLevels; ++j) {
      const std::string lv = std::to_string(j + 1);
      auto up = leaky_relu(deconv(p, "rvd.up" + lv, feat));
      feat = concat_channels<T>({up, upsample_flow(flows[j - 1]), skips[3 - j]});
      flows[j] = conv(p, "rvd.flow" + lv, feat);
    }
    Pyramid<T> frames;
    for (int j = 0; j < kPyramidLevels; ++j) frames[j] = warp_bilinear(center_pyr[j], flows[j]);
    prev_flow = flows[kPyramidLevels - 1];
    out.flows.push_back(std::move(flows));
    out.frames.push_back(std::move(frames));
  }
  out.final_state = state;
  return out;
}

template <typename T>
ConvLstmState<T> bie_forward(const ParamMap<T>& p, const ModelConfig& cfg, const BasicTensor<T>& blurred,
                             const BasicTensor<T>& sharp, const NormContext& norm) {
  require_frame("bie_forward", blurred, 3);
  if (blurred.shape() != sharp.shape()) {
    throw ShapeError("bie_forward: blurred " + to_string(blurred.shape()) + " vs sharp " + to_string(sharp.shape()));
  }
  check_divisible(blurred.dim(2), blurred.dim(3), 8, "bie_forward");
  auto x = concat_channels<T>({blurred, sharp});
  BasicTensor<T> penultimate;
  for (int i = 0; i < 7; ++i) {
    x = conv(p, "bie.conv" + std::to_string(i), x, kBieStrides[i]);
    if (i < 6) x = leaky_relu(batchnorm(p, "bie.bn" + std::to_string(i), x, norm));
    if (i == 5) penultimate = x;
  }
  ConvLstmState<T> s;
  s.h = x;
  s.c = cfg.bie_predicts_cell ? conv(p, "bie.cell", penultimate) : BasicTensor<T>::zeros(x.shape());
  return s;
}

template <typename T>
BasicTensor<T> dm_forward(const ParamMap<T>& p, const ModelConfig& cfg, const BasicTensor<T>& blurred,
                          bool inference) {
  require_frame("dm_forward", blurred, 3);
  const int B = blurred.dim(0), H = blurred.dim(2), W = blurred.dim(3);
  check_divisible(H, W, 16, "dm_forward");
  auto planes = blurred.reshape({B * 3, 1, H, W});

  std::array<BasicTensor<T>, 4> skip;
  skip[0] = leaky_relu(conv(p, "dm.stem", space_to_depth(planes, 2)));
  for (int l = 1; l <= 3; ++l) {
    const std::string lv = std::to_string(l);
    auto x = leaky_relu(conv(p, "dm.down" + lv, skip[l - 1], 2));
    for (int r = 0; r < cfg.dm_rdbs_per_level; ++r) {
      x = rdb(p, "dm.enc" + lv + ".rdb" + std::to_string(r), x, dm_rdb(cfg, l), cfg.dm_residual_scale);
    }
    skip[l] = x;
  }
  auto x = skip[3];
  for (int l = 3; l >= 1; --l) {
    const std::string lv = std::to_string(l);
    x = bottleneck(p, "dm.up" + lv + ".bottleneck", x);
    x = leaky_relu(deconv(p, "dm.up" + lv + ".deconv", x));
    x = leaky_relu(conv(p, "dm.proj" + lv, concat_channels<T>({x, skip[l - 1]})));
  }
  x = depth_to_space(x, 2);
  x = leaky_relu(conv(p, "dm.out1", x));
  x = conv(p, "dm.out2", x);
  auto out = add(planes, x).reshape({B, 3, H, W});
  if (!inference) return out;
  std::vector<T> v(out.values());
  for (auto& e : v) e = std::clamp(e, T(0), T(1));
  return BasicTensor<T>(out.shape(), std::move(v));
}

#define BLURVID_INSTANTIATE_MODELS(T)                                                                          \
  template ConvLstmState<T> rve_forward(const ParamMap<T>&, const ModelConfig&, const std::vector<BasicTensor<T>>&); \
  template PredictionSet<T> rvd_rollout(const ParamMap<T>&, const ModelConfig&, const ConvLstmState<T>&,         \
                                        const BasicTensor<T>&, int);                                           \
  template ConvLstmState<T> bie_forward(const ParamMap<T>&, const ModelConfig&, const BasicTensor<T>&,         \
                                        const BasicTensor<T>&, const NormContext&);                            \
  template BasicTensor<T> dm_forward(const ParamMap<T>&, const ModelConfig&, const BasicTensor<T>&, bool);

BLURVID_INSTANTIATE_MODELS(float)
BLURVID_INSTANTIATE_MODELS(double)

}  // namespace blurvid
