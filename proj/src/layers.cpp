#include "blurvid/layers.hpp"

#include <Eigen/Core>
#include <cmath>
#include <random>

#include "blurvid/ops.hpp"

namespace blurvid {

template <typename T>
const BasicTensor<T>& param(const ParamMap<T>& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw Error("missing parameter '" + name + "'");
  return it->second;
}

ParamMap<float> initialize(const ParamSpecs& specs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamMap<float> out;
  for (const auto& s : specs) {
    const auto n = static_cast<std::size_t>(numel(s.shape));
    std::vector<float> v(n, 0.0f);
    switch (s.init) {
      case Init::kHeNormal: {
        std::normal_distribution<double> dist(0.0, s.gain * std::sqrt(2.0 / s.fan_in));
        for (auto& x : v) x = static_cast<float>(dist(rng));
        break;
      }
      case Init::kZeros:
        break;
      case Init::kConstant:
        std::fill(v.begin(), v.end(), s.value);
        break;
      case Init::kForgetBias: {
        const std::size_t hidden = n / 4;
        std::fill(v.begin() + static_cast<std::ptrdiff_t>(hidden), v.begin() + static_cast<std::ptrdiff_t>(2 * hidden), s.value);
        break;
      }
      case Init::kIdentity: {
        // (out, in, 1, 1) with out == in
        const int c = s.shape[0];
        for (int i = 0; i < c; ++i) v[static_cast<std::size_t>(i) * c + i] = 1.0f;
        break;
      }
    }
    if (!out.emplace(s.name, Tensor(s.shape, std::move(v))).second) {
      throw Error("parameter '" + s.name + "' declared twice");
    }
  }
  return out;
}

std::int64_t count_parameters(const ParamSpecs& specs, bool trainable_only) {
  std::int64_t n = 0;
  for (const auto& s : specs)
    if (s.trainable || !trainable_only) n += numel(s.shape);
  return n;
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const RowMat<T>>;

// C(m x n) = op(A) * op(B), or C += op(A) * op(B). Eigen's packet kernels peel
// leading elements up to the vector alignment, so multiplying over raw
// std::vector storage would sum in an order that depends on where malloc put
// each buffer. The operands are therefore copied into Eigen-owned (aligned)
// matrices, which keeps every result bitwise reproducible between runs.
template <typename T>
void gemm(const T* a, int a_rows, int a_cols, bool trans_a, const T* b, int b_rows, int b_cols, bool trans_b, T* c,
          bool accumulate) {
  const RowMat<T> A = MapC<T>(a, a_rows, a_cols);
  const RowMat<T> B = MapC<T>(b, b_rows, b_cols);
  RowMat<T> C;
  if (trans_a && trans_b) {
    C.noalias() = A.transpose() * B.transpose();
  } else if (trans_a) {
    C.noalias() = A.transpose() * B;
  } else if (trans_b) {
    C.noalias() = A * B.transpose();
  } else {
    C.noalias() = A * B;
  }
  const T* r = C.data();
  const std::size_t n = static_cast<std::size_t>(C.size());
  if (accumulate) {
    for (std::size_t i = 0; i < n; ++i) c[i] += r[i];
  } else {
    std::copy(r, r + n, c);
  }
}

struct Geometry {
  int C, H, W;    // image side
  int k, s, p;
  int Ho, Wo;     // patch grid
};

// cols[(c*k + ky)*k + kx][oy*Wo + ox] = img[c][oy*s - p + ky][ox*s - p + kx]
template <typename T>
void im2col(const T* img, const Geometry& g, T* cols) {
  const int P = g.Ho * g.Wo;
  for (int c = 0; c < g.C; ++c)
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        T* row = cols + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * P;
        for (int oy = 0; oy < g.Ho; ++oy) {
          const int iy = oy * g.s - g.p + ky;
          T* r = row + oy * g.Wo;
          if (iy < 0 || iy >= g.H) {
            std::fill(r, r + g.Wo, T(0));
            continue;
          }
          const T* src = img + (static_cast<std::size_t>(c) * g.H + iy) * g.W;
          for (int ox = 0; ox < g.Wo; ++ox) {
            const int ix = ox * g.s - g.p + kx;
            r[ox] = (ix >= 0 && ix < g.W) ? src[ix] : T(0);
          }
        }
      }
}

template <typename T>
void col2im(const T* cols, const Geometry& g, T* img) {
  const int P = g.Ho * g.Wo;
  for (int c = 0; c < g.C; ++c)
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        const T* row = cols + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * P;
        for (int oy = 0; oy < g.Ho; ++oy) {
          const int iy = oy * g.s - g.p + ky;
          if (iy < 0 || iy >= g.H) continue;
          T* dst = img + (static_cast<std::size_t>(c) * g.H + iy) * g.W;
          const T* r = row + oy * g.Wo;
          for (int ox = 0; ox < g.Wo; ++ox) {
            const int ix = ox * g.s - g.p + kx;
            if (ix >= 0 && ix < g.W) dst[ix] += r[ox];
          }
        }
      }
}

bool is_pointwise(const Geometry& g) { return g.k == 1 && g.s == 1 && g.p == 0; }

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b, int stride,
                      int pad) {
  if (x.rank() != 4 || w.rank() != 4 || w.dim(2) != w.dim(3)) {
    throw ShapeError("conv2d: bad shapes input " + to_string(x.shape()) + " weights " + to_string(w.shape()));
  }
  const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != Cin) {
    throw ShapeError("conv2d: channel mismatch, input " + to_string(x.shape()) + " weights " + to_string(w.shape()));
  }
  if (b.size() != Cout) throw ShapeError("conv2d: bias " + to_string(b.shape()) + " for " + std::to_string(Cout) + " outputs");
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: invalid stride/padding");
  const int Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
  if (Ho < 1 || Wo < 1) throw ShapeError("conv2d: input " + to_string(x.shape()) + " smaller than kernel");

  const Geometry geo{Cin, H, W, k, stride, pad, Ho, Wo};
  const int K = Cin * k * k, P = Ho * Wo;
  const bool pointwise = is_pointwise(geo);
  std::vector<T> out(static_cast<std::size_t>(B) * Cout * P);
  std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(K) * P);
  for (int n = 0; n < B; ++n) {
    const T* xin = x.data().data() + static_cast<std::size_t>(n) * Cin * H * W;
    if (!pointwise) im2col(xin, geo, cols.data());
    T* o = out.data() + static_cast<std::size_t>(n) * Cout * P;
    gemm(w.data().data(), Cout, K, false, pointwise ? xin : cols.data(), K, P, false, o, false);
    for (int c = 0; c < Cout; ++c)
      for (int i = 0; i < P; ++i) o[static_cast<std::size_t>(c) * P + i] += b[c];
  }

  Shape shape{B, Cout, Ho, Wo};
  Tape<T>* tape = common_tape({&x, &w, &b});
  if (!tape) return BasicTensor<T>(shape, std::move(out));
  const int nx = x.tracked() ? x.node() : -1, nw = w.tracked() ? w.node() : -1, nb = b.tracked() ? b.node() : -1;
  return tape->record(
      "conv2d", {&x, &w, &b}, shape, std::move(out),
      [xs = x.storage(), ws = w.storage(), geo, B, Cout, K, P, pointwise, nx, nw, nb](std::span<const T> g,
                                                                                     GradSink<T>& sink) {
        const std::size_t in_size = static_cast<std::size_t>(geo.C) * geo.H * geo.W;
        std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(K) * P);
        std::vector<T> dcols(static_cast<std::size_t>(K) * P);
        for (int n = 0; n < B; ++n) {
          const T* gn = g.data() + static_cast<std::size_t>(n) * Cout * P;
          if (sink.wants(nb)) {
            auto db = sink.slot(nb);
            for (int o = 0; o < Cout; ++o) {
              double acc = 0;
              for (int i = 0; i < P; ++i) acc += gn[static_cast<std::size_t>(o) * P + i];
              db[o] += static_cast<T>(acc);
            }
          }
          const T* xin = xs->data() + n * in_size;
          if (sink.wants(nw)) {
            if (!pointwise) im2col(xin, geo, cols.data());
            gemm(gn, Cout, P, false, pointwise ? xin : cols.data(), K, P, true, sink.slot(nw).data(), true);
          }
          if (sink.wants(nx)) {
            T* dx = sink.slot(nx).data() + n * in_size;
            if (pointwise) {
              gemm(ws->data(), Cout, K, true, gn, Cout, P, false, dx, true);
            } else {
              gemm(ws->data(), Cout, K, true, gn, Cout, P, false, dcols.data(), false);
              col2im(dcols.data(), geo, dx);
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> deconv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b, int stride,
                        int pad) {
  if (x.rank() != 4 || w.rank() != 4 || w.dim(2) != w.dim(3)) {
    throw ShapeError("deconv2d: bad shapes input " + to_string(x.shape()) + " weights " + to_string(w.shape()));
  }
  const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w.dim(1), k = w.dim(2);
  if (w.dim(0) != Cin) {
    throw ShapeError("deconv2d: channel mismatch, input " + to_string(x.shape()) + " weights " + to_string(w.shape()));
  }
  if (b.size() != Cout) throw ShapeError("deconv2d: bias " + to_string(b.shape()) + " for " + std::to_string(Cout) + " outputs");
  const int Ho = (H - 1) * stride - 2 * pad + k, Wo = (W - 1) * stride - 2 * pad + k;
  if (Ho < 1 || Wo < 1) throw ShapeError("deconv2d: empty output for " + to_string(x.shape()));

  // The output image plays the role of a conv input whose patch grid is (H, W).
  const Geometry geo{Cout, Ho, Wo, k, stride, pad, H, W};
  const int K = Cout * k * k, P = H * W;
  const std::size_t out_size = static_cast<std::size_t>(Cout) * Ho * Wo;
  std::vector<T> out(static_cast<std::size_t>(B) * out_size, T(0));
  std::vector<T> cols(static_cast<std::size_t>(K) * P);
  for (int n = 0; n < B; ++n) {
    gemm(w.data().data(), Cin, K, true, x.data().data() + static_cast<std::size_t>(n) * Cin * P, Cin, P, false,
         cols.data(), false);
    T* o = out.data() + n * out_size;
    col2im(cols.data(), geo, o);
    for (int c = 0; c < Cout; ++c)
      for (int i = 0; i < Ho * Wo; ++i) o[static_cast<std::size_t>(c) * Ho * Wo + i] += b[c];
  }

  Shape shape{B, Cout, Ho, Wo};
  Tape<T>* tape = common_tape({&x, &w, &b});
  if (!tape) return BasicTensor<T>(shape, std::move(out));
  const int nx = x.tracked() ? x.node() : -1, nw = w.tracked() ? w.node() : -1, nb = b.tracked() ? b.node() : -1;
  return tape->record(
      "deconv2d", {&x, &w, &b}, shape, std::move(out),
      [xs = x.storage(), ws = w.storage(), geo, B, Cin, Cout, K, P, out_size, nx, nw, nb](std::span<const T> g,
                                                                                         GradSink<T>& sink) {
        std::vector<T> gcols(static_cast<std::size_t>(K) * P);
        const int plane = geo.H * geo.W;
        for (int n = 0; n < B; ++n) {
          const T* gn = g.data() + n * out_size;
          if (sink.wants(nb)) {
            auto db = sink.slot(nb);
            for (int c = 0; c < Cout; ++c) {
              double acc = 0;
              for (int i = 0; i < plane; ++i) acc += gn[static_cast<std::size_t>(c) * plane + i];
              db[c] += static_cast<T>(acc);
            }
          }
          if (!sink.wants(nx) && !sink.wants(nw)) continue;
          im2col(gn, geo, gcols.data());
          const T* xn = xs->data() + static_cast<std::size_t>(n) * Cin * P;
          if (sink.wants(nw)) gemm(xn, Cin, P, false, gcols.data(), K, P, true, sink.slot(nw).data(), true);
          if (sink.wants(nx)) {
            gemm(ws->data(), Cin, K, false, gcols.data(), K, P, false,
                 sink.slot(nx).data() + static_cast<std::size_t>(n) * Cin * P, true);
          }
        }
      });
}

template <typename T>
BatchNormOutput<T> batchnorm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                             const BasicTensor<T>& running_mean, const BasicTensor<T>& running_var, NormMode mode,
                             double eps) {
  if (x.rank() != 4) throw ShapeError("batchnorm: expected (B,C,H,W), got " + to_string(x.shape()));
  const int B = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (gamma.size() != C || beta.size() != C || running_mean.size() != C || running_var.size() != C) {
    throw ShapeError("batchnorm: parameter size mismatch for " + to_string(x.shape()));
  }
  const std::int64_t m = static_cast<std::int64_t>(B) * plane;
  const auto& xv = x.values();
  auto stats_mean = std::make_shared<std::vector<double>>(C);
  auto inv_std = std::make_shared<std::vector<double>>(C);
  BatchNormOutput<T> result;
  if (mode == NormMode::kTrain) {
    if (m < 2) throw ShapeError("batchnorm: train mode needs more than one value per channel");
    result.batch_mean.resize(C);
    result.batch_var.resize(C);
    for (int c = 0; c < C; ++c) {
      double s = 0, s2 = 0;
      for (int n = 0; n < B; ++n) {
        const T* p = xv.data() + (static_cast<std::size_t>(n) * C + c) * plane;
        for (int i = 0; i < plane; ++i) s += p[i];
      }
      const double mu = s / m;
      for (int n = 0; n < B; ++n) {
        const T* p = xv.data() + (static_cast<std::size_t>(n) * C + c) * plane;
        for (int i = 0; i < plane; ++i) s2 += (p[i] - mu) * (p[i] - mu);
      }
      (*stats_mean)[c] = mu;
      (*inv_std)[c] = 1.0 / std::sqrt(s2 / m + eps);
      result.batch_mean[c] = mu;
      result.batch_var[c] = s2 / (m - 1);
    }
  } else {
    for (int c = 0; c < C; ++c) {
      (*stats_mean)[c] = running_mean[c];
      (*inv_std)[c] = 1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps);
    }
  }

  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  std::vector<T> out(xv.size());
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < C; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * C + c) * plane;
      for (int i = 0; i < plane; ++i) {
        const T h = static_cast<T>((xv[base + i] - (*stats_mean)[c]) * (*inv_std)[c]);
        (*xhat)[base + i] = h;
        out[base + i] = gamma[c] * h + beta[c];
      }
    }

  Tape<T>* tape = common_tape({&x, &gamma, &beta});
  if (!tape) {
    result.y = BasicTensor<T>(x.shape(), std::move(out));
    return result;
  }
  const int nx = x.tracked() ? x.node() : -1, ng = gamma.tracked() ? gamma.node() : -1,
            nb = beta.tracked() ? beta.node() : -1;
  const bool train = mode == NormMode::kTrain;
  result.y = tape->record(
      "batchnorm", {&x, &gamma, &beta}, x.shape(), std::move(out),
      [xhat, inv_std, gs = gamma.storage(), B, C, plane, m, train, nx, ng, nb](std::span<const T> g,
                                                                                GradSink<T>& sink) {
        for (int c = 0; c < C; ++c) {
          double sg = 0, sgh = 0;
          for (int n = 0; n < B; ++n) {
            const std::size_t base = (static_cast<std::size_t>(n) * C + c) * plane;
            for (int i = 0; i < plane; ++i) {
              sg += g[base + i];
              sgh += static_cast<double>(g[base + i]) * (*xhat)[base + i];
            }
          }
          if (sink.wants(nb)) sink.slot(nb)[c] += static_cast<T>(sg);
          if (sink.wants(ng)) sink.slot(ng)[c] += static_cast<T>(sgh);
          if (!sink.wants(nx)) continue;
          auto dx = sink.slot(nx);
          const double gam = (*gs)[c], is = (*inv_std)[c];
          for (int n = 0; n < B; ++n) {
            const std::size_t base = (static_cast<std::size_t>(n) * C + c) * plane;
            for (int i = 0; i < plane; ++i) {
              if (train) {
                const double v = m * static_cast<double>(g[base + i]) - sg - (*xhat)[base + i] * sgh;
                dx[base + i] += static_cast<T>(gam * is * v / m);
              } else {
                dx[base + i] += static_cast<T>(gam * is * g[base + i]);
              }
            }
          }
        }
      });
  return result;
}

// ---- blocks -------------------------------------------------------------------

void declare_conv(ParamSpecs& s, const std::string& name, int in, int out, int k, double gain) {
  s.push_back({name + ".w", {out, in, k, k}, Init::kHeNormal, static_cast<double>(in) * k * k, gain});
  s.push_back({name + ".b", {out}, Init::kZeros});
}

void declare_deconv(ParamSpecs& s, const std::string& name, int in, int out, int k, int stride) {
  // each output pixel receives in * (k / stride)^2 contributions
  const double fan_in = static_cast<double>(in) * (k / stride) * (k / stride);
  s.push_back({name + ".w", {in, out, k, k}, Init::kHeNormal, fan_in});
  s.push_back({name + ".b", {out}, Init::kZeros});
}

template <typename T>
BasicTensor<T> conv(const ParamMap<T>& p, const std::string& name, const BasicTensor<T>& x, int stride) {
  const auto& w = param(p, name + ".w");
  return conv2d(x, w, param(p, name + ".b"), stride, w.dim(2) / 2);
}

template <typename T>
BasicTensor<T> deconv(const ParamMap<T>& p, const std::string& name, const BasicTensor<T>& x) {
  return deconv2d(x, param(p, name + ".w"), param(p, name + ".b"), 2, 1);
}

void declare_convlstm(ParamSpecs& s, const std::string& name, int in, int hidden, float forget_bias) {
  s.push_back({name + ".w", {4 * hidden, in + hidden, 3, 3}, Init::kHeNormal, (in + hidden) * 9.0});
  // gate order is i, f, o, g
  s.push_back({name + ".b", {4 * hidden}, Init::kForgetBias, 1.0, 1.0, forget_bias});
}

template <typename T>
ConvLstmState<T> convlstm_step(const ParamMap<T>& p, const std::string& name, const BasicTensor<T>& x,
                               const ConvLstmState<T>& state) {
  if (x.rank() != 4 || state.h.rank() != 4 || x.dim(0) != state.h.dim(0) || x.dim(2) != state.h.dim(2) ||
      x.dim(3) != state.h.dim(3)) {
    throw ShapeError("convlstm_step: input " + to_string(x.shape()) + " does not match state " +
                     to_string(state.h.shape()));
  }
  if (state.h.shape() != state.c.shape()) {
    throw ShapeError("convlstm_step: h " + to_string(state.h.shape()) + " vs c " + to_string(state.c.shape()));
  }
  const int hidden = state.h.dim(1);
  const auto& w = param(p, name + ".w");
  const auto& b = param(p, name + ".b");
  if (w.dim(0) != 4 * hidden) throw ShapeError("convlstm_step: weights " + to_string(w.shape()) + " for hidden " + std::to_string(hidden));

  auto gates = conv2d(concat_channels<T>({x, state.h}), w, b, 1, 1);
  auto i = sigmoid(slice_channels(gates, 0, hidden));
  auto f = sigmoid(slice_channels(gates, hidden, hidden));
  auto o = sigmoid(slice_channels(gates, 2 * hidden, hidden));
  auto g = tanh(slice_channels(gates, 3 * hidden, hidden));
  auto c = add(mul(f, state.c), mul(i, g));
  auto h = mul(o, tanh(c));
  return {h, c};
}

template <typename T>
ConvLstmState<T> zero_state(int batch, int hidden, int height, int width) {
  Shape s{batch, hidden, height, width};
  return {BasicTensor<T>::zeros(s), BasicTensor<T>::zeros(s)};
}

void declare_resblock(ParamSpecs& s, const std::string& name, int channels) {
  declare_conv(s, name + ".conv1", channels, channels, 3);
  declare_conv(s, name + ".conv2", channels, channels, 3, 0.1);
}

template <typename T>
BasicTensor<T> resblock(const ParamMap<T>& p, const std::string& name, const BasicTensor<T>& x) {
  auto y = leaky_relu(conv(p, name + ".conv1", x));
  y = conv(p, name + ".conv2", y);
  if (y.shape() != x.shape()) throw ShapeError("resblock: branch " + to_string(y.shape()) + " vs input " + to_string(x.shape()));
  return add(x, y);
}

void declare_rdb(ParamSpecs& s, const std::string& name, const RdbShape& r) {
  for (int i = 0; i < r.layers; ++i) {
    declare_conv(s, name + ".layer" + std::to_string(i), r.channels + i * r.growth, r.growth, 3);
  }
  declare_conv(s, name + ".fuse", r.channels + r.layers * r.growth, r.channels, 1);
}

template <typename T>
BasicTensor<T> rdb(const ParamMap<T>& p, const std::string& name, const BasicTensor<T>& x, const RdbShape& r,
                   double residual_scale) {
  if (x.rank() != 4 || x.dim(1) != r.channels) {
    throw ShapeError("rdb: expected " + std::to_string(r.channels) + " channels, got " + to_string(x.shape()));
  }
  std::vector<BasicTensor<T>> feats{x};
  for (int i = 0; i < r.layers; ++i) {
    auto in = feats.size() == 1 ? x : concat_channels(feats);
    feats.push_back(leaky_relu(conv(p, name + ".layer" + std::to_string(i), in)));
  }
  auto fused = conv(p, name + ".fuse", concat_channels(feats));
  if (residual_scale != 1.0) fused = scale(fused, residual_scale);
  return add(x, fused);
}

void declare_bottleneck(ParamSpecs& s, const std::string& name, int in, int out) { declare_conv(s, name, in, out, 1); }

template <typename T>
BasicTensor<T> bottleneck(const ParamMap<T>& p, const std::string& name, const BasicTensor<T>& x) {
  return conv(p, name, x);
}

void declare_batchnorm(ParamSpecs& s, const std::string& name, int channels) {
  s.push_back({name + ".gamma", {channels}, Init::kConstant, 1.0, 1.0, 1.0f});
  s.push_back({name + ".beta", {channels}, Init::kZeros});
  s.push_back({name + ".running_mean", {channels}, Init::kZeros, 1.0, 1.0, 0.0f, false});
  s.push_back({name + ".running_var", {channels}, Init::kConstant, 1.0, 1.0, 1.0f, false});
  s.push_back({name + ".tracked", {1}, Init::kZeros, 1.0, 1.0, 0.0f, false});
}

template <typename T>
BasicTensor<T> batchnorm(const ParamMap<T>& p, const std::string& name, const BasicTensor<T>& x,
                         const NormContext& ctx) {
  const auto& rm = param(p, name + ".running_mean");
  const auto& rv = param(p, name + ".running_var");
  const auto& tracked = param(p, name + ".tracked");
  if (ctx.mode == NormMode::kEval && tracked.item() <= 0) {
    throw Error("batchnorm '" + name + "': eval mode before any training step (running statistics uninitialized)");
  }
  auto out = batchnorm(x, param(p, name + ".gamma"), param(p, name + ".beta"), rm, rv, ctx.mode);
  if (ctx.mode == NormMode::kTrain && ctx.updates) {
    const int C = x.dim(1);
    std::vector<float> nm(C), nv(C);
    for (int c = 0; c < C; ++c) {
      nm[c] = static_cast<float>((1 - ctx.momentum) * rm[c] + ctx.momentum * out.batch_mean[c]);
      nv[c] = static_cast<float>((1 - ctx.momentum) * rv[c] + ctx.momentum * out.batch_var[c]);
    }
    (*ctx.updates)[name + ".running_mean"] = Tensor({C}, std::move(nm));
    (*ctx.updates)[name + ".running_var"] = Tensor({C}, std::move(nv));
    (*ctx.updates)[name + ".tracked"] = Tensor::scalar(static_cast<float>(tracked.item() + 1));
  }
  return out.y;
}

#define BLURVID_INSTANTIATE_LAYERS(T)                                                                         \
  template const BasicTensor<T>& param(const ParamMap<T>&, const std::string&);                               \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, int, int); \
  template BasicTensor<T> deconv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, int, int); \
  template BatchNormOutput<T> batchnorm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,    \
                                        const BasicTensor<T>&, const BasicTensor<T>&, NormMode, double);       \
  template BasicTensor<T> conv(const ParamMap<T>&, const std::string&, const BasicTensor<T>&, int);           \
  template BasicTensor<T> deconv(const ParamMap<T>&, const std::string&, const BasicTensor<T>&);              \
  template ConvLstmState<T> convlstm_step(const ParamMap<T>&, const std::string&, const BasicTensor<T>&,       \
                                          const ConvLstmState<T>&);                                          \
  template ConvLstmState<T> zero_state<T>(int, int, int, int);                                                \
  template BasicTensor<T> resblock(const ParamMap<T>&, const std::string&, const BasicTensor<T>&);            \
  template BasicTensor<T> rdb(const ParamMap<T>&, const std::string&, const BasicTensor<T>&, const RdbShape&,  \
                              double);                                                                        \
  template BasicTensor<T> bottleneck(const ParamMap<T>&, const std::string&, const BasicTensor<T>&);          \
  template BasicTensor<T> batchnorm(const ParamMap<T>&, const std::string&, const BasicTensor<T>&,            \
                                    const NormContext&);

BLURVID_INSTANTIATE_LAYERS(float)
BLURVID_INSTANTIATE_LAYERS(double)

}  // namespace blurvid
