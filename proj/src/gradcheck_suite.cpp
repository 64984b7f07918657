#include "blurvid/gradcheck_suite.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

#include "blurvid/gradcheck.hpp"
#include "blurvid/layers.hpp"
#include "blurvid/losses.hpp"
#include "blurvid/models.hpp"
#include "blurvid/ops.hpp"
#include "blurvid/warp.hpp"

namespace blurvid {

namespace {

using TD = TensorD;
using Inputs = std::vector<TD>;

// Element budget per input tensor for the larger assembled checks.
constexpr std::size_t kSampled = 24;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : g_(seed) {}
  double uni(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(g_); }
  double sign() { return (g_() & 1) ? 1.0 : -1.0; }
  // Magnitude in [lo, hi] with a random sign: keeps values off the kinks of
  // |x|, relu and leaky relu.
  double away(double lo, double hi) { return sign() * uni(lo, hi); }
  std::uint64_t next() { return g_(); }

 private:
  std::mt19937_64 g_;
};

TD uniform(Rng& r, Shape s, double lo = -1, double hi = 1) {
  std::vector<double> v(static_cast<std::size_t>(numel(s)));
  for (auto& e : v) e = r.uni(lo, hi);
  return TD(std::move(s), std::move(v));
}

TD off_zero(Rng& r, Shape s, double lo = 0.05, double hi = 1) {
  std::vector<double> v(static_cast<std::size_t>(numel(s)));
  for (auto& e : v) e = r.away(lo, hi);
  return TD(std::move(s), std::move(v));
}

// Adds a per-element offset of magnitude in [lo, hi] with random sign.
TD offset(Rng& r, const TD& x, double lo = 0.05, double hi = 0.3) {
  std::vector<double> v(x.values());
  for (auto& e : v) e += r.away(lo, hi);
  return TD(x.shape(), std::move(v));
}

// Reduces a tensor to a scalar with fixed random weights, so every output
// element contributes a distinct amount.
TD project(const TD& y, std::uint64_t seed) {
  Rng r(seed ^ 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint64_t>(y.size()));
  return sum(mul(y, uniform(r, y.shape(), -1, 1)));
}

TD add_all(const std::vector<TD>& terms) {
  TD acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

// Smooth flow whose forward differences stay far from zero: a signed ramp
// in x and y plus small noise, so TV has no kinks nearby.
TD ramp_flow(Rng& r, int B, int H, int W) {
  std::vector<double> v(static_cast<std::size_t>(B) * 2 * H * W);
  for (int bc = 0; bc < B * 2; ++bc) {
    const double a = r.away(0.15, 0.5), b = r.away(0.15, 0.5), c = r.uni(-1, 1);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) v[(static_cast<std::size_t>(bc) * H + y) * W + x] = c + a * x + b * y + r.uni(-0.03, 0.03);
  }
  return TD({B, 2, H, W}, std::move(v));
}

// Flow whose sampling positions stay inside the image and away from integer
// coordinates, where bilinear sampling is not differentiable.
TD interior_flow(Rng& r, int B, int H, int W) {
  std::vector<double> v(static_cast<std::size_t>(B) * 2 * H * W);
  auto target = [&](int extent) {
    const double base = std::floor(r.uni(0, extent - 1 - 1e-9));
    return base + r.uni(0.15, 0.85);
  };
  for (int b = 0; b < B; ++b)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const std::size_t ix = ((static_cast<std::size_t>(b) * 2) * H + y) * W + x;
        const std::size_t iy = ((static_cast<std::size_t>(b) * 2 + 1) * H + y) * W + x;
        v[ix] = target(W) - x;
        v[iy] = target(H) - y;
      }
  return TD({B, 2, H, W}, std::move(v));
}

// Step used by the case currently running; set by run_gradcheck_suite.
thread_local double g_epsilon = 1e-3;

constexpr double kFine = 1e-5;

GradcheckCase make_case(std::string name, double tol, double eps, std::function<double(std::uint64_t)> fn) {
  return {std::move(name), tol, eps, [fn = std::move(fn)](std::uint64_t seed, double epsilon) {
            g_epsilon = epsilon;
            return fn(seed);
          }};
}

GradcheckOptions opts(std::uint64_t seed, std::size_t max_elements = 0) {
  GradcheckOptions o;
  o.epsilon = g_epsilon;
  o.max_elements = max_elements;
  o.seed = static_cast<unsigned>(seed);
  return o;
}

// Parameters of `specs` drawn at their initial scale plus uniform noise, so
// biases and normalization scales are not at special values.
std::pair<std::vector<std::string>, Inputs> random_params(const ParamSpecs& specs, std::uint64_t seed) {
  Rng r(seed * 7919 + 17);
  const auto init = initialize(specs, seed);
  std::vector<std::string> names;
  Inputs values;
  for (const auto& s : specs) {
    std::vector<double> v;
    for (float e : param(init, s.name).values()) v.push_back(e + r.uni(-0.1, 0.1));
    names.push_back(s.name);
    values.emplace_back(s.shape, std::move(v));
  }
  return {names, values};
}

ParamMap<double> bind(const std::vector<std::string>& names, const Inputs& xs, std::size_t first) {
  ParamMap<double> p;
  for (std::size_t i = 0; i < names.size(); ++i) p.emplace(names[i], xs[first + i]);
  return p;
}

// Checks a block with respect to its data inputs and all of its parameters.
double check_block(const ParamSpecs& specs, Inputs data,
                   const std::function<TD(const ParamMap<double>&, const Inputs&)>& f, std::uint64_t seed,
                   std::size_t max_elements = kSampled) {
  auto [names, values] = random_params(specs, seed);
  const std::size_t nd = data.size();
  Inputs all = std::move(data);
  all.insert(all.end(), values.begin(), values.end());
  ScalarFn<double> fn = [&, names = names](const Inputs& xs) {
    const Inputs d(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(nd));
    return project(f(bind(names, xs, nd), d), seed);
  };
  return gradcheck(fn, all, opts(seed, max_elements));
}

// ---- op cases -------------------------------------------------------------

double op_case(const std::string& name, std::uint64_t seed) {
  Rng r(seed);
  OpDesc op{name};
  Inputs in;
  const Shape img{1, 2, 4, 4};
  if (name == "add" || name == "subtract" || name == "multiply") {
    in = {uniform(r, img), uniform(r, img)};
  } else if (name == "scalar-scale") {
    op.alpha = r.uni(-2, 2);
    in = {uniform(r, img)};
  } else if (name == "concat-channels") {
    in = {uniform(r, img), uniform(r, {1, 3, 4, 4})};
  } else if (name == "slice-channels") {
    op.begin = 1;
    op.count = 2;
    in = {uniform(r, {1, 4, 3, 3})};
  } else if (name == "pad-spatial") {
    op.pad = 1;
    in = {uniform(r, img)};
  } else if (name == "absolute" || name == "relu" || name == "leaky-relu") {
    op.alpha = 0.2;
    in = {off_zero(r, img)};
  } else if (name == "sigmoid" || name == "tanh") {
    in = {uniform(r, img, -3, 3)};
  } else if (name == "sum" || name == "mean") {
    in = {uniform(r, {10})};
  } else if (name == "bilinear-resize") {
    op.alpha = 2.0;
    in = {uniform(r, img)};
  } else if (name == "space-to-depth") {
    op.block = 2;
    in = {uniform(r, {1, 3, 4, 4})};
  } else if (name == "depth-to-space") {
    op.block = 2;
    in = {uniform(r, {1, 8, 2, 2})};
  } else {
    throw Error("gradcheck suite: no case for op '" + name + "'");
  }
  ScalarFn<double> f = [&](const Inputs& xs) { return project(eval(op, xs), seed); };
  return gradcheck(f, in, opts(seed));
}

void add_op_cases(std::vector<GradcheckCase>& out) {
  for (const auto& name : op_names()) {
    out.push_back(make_case("op/" + name, 1e-3, 1e-3, [name](std::uint64_t s) { return op_case(name, s); }));
  }
  out.push_back(make_case("op/bilinear-resize-half", 1e-3, 1e-3, [](std::uint64_t s) {
                   Rng r(s);
                   ScalarFn<double> f = [&](const Inputs& x) { return project(resize_bilinear(x[0], 0.5), s); };
                   return gradcheck(f, {uniform(r, {1, 2, 6, 6})}, opts(s));
                 }));
  out.push_back(make_case("op/concat-batch", 1e-3, 1e-3, [](std::uint64_t s) {
                   Rng r(s);
                   ScalarFn<double> f = [&](const Inputs& x) { return project(concat_batch(x), s); };
                   return gradcheck(f, {uniform(r, {1, 2, 3, 3}), uniform(r, {1, 2, 3, 3})}, opts(s));
                 }));
  out.push_back(make_case("op/slice-batch", 1e-3, 1e-3, [](std::uint64_t s) {
                   Rng r(s);
                   ScalarFn<double> f = [&](const Inputs& x) { return project(slice_batch(x[0], 1), s); };
                   return gradcheck(f, {uniform(r, {3, 2, 3, 3})}, opts(s));
                 }));
  out.push_back(make_case("op/reshape", 1e-3, 1e-3, [](std::uint64_t s) {
                   Rng r(s);
                   ScalarFn<double> f = [&](const Inputs& x) { return project(tanh(x[0].reshape({2, 1, 3, 4})), s); };
                   return gradcheck(f, {uniform(r, {1, 2, 3, 4})}, opts(s));
                 }));
}

// ---- layers -----------------------------------------------------------------

void add_layer_cases(std::vector<GradcheckCase>& out) {
  for (int stride : {1, 2}) {
    out.push_back(make_case("layer/conv2d-stride" + std::to_string(stride), 1e-3, 1e-3, [stride](std::uint64_t s) {
                     Rng r(s);
                     ScalarFn<double> f = [&](const Inputs& x) { return project(conv2d(x[0], x[1], x[2], stride, 1), s); };
                     return gradcheck(f, {uniform(r, {2, 3, 5, 5}), uniform(r, {4, 3, 3, 3}), uniform(r, {4})}, opts(s));
                   }));
  }
  out.push_back(make_case("layer/deconv2d", 1e-3, 1e-3, [](std::uint64_t s) {
                   Rng r(s);
                   ScalarFn<double> f = [&](const Inputs& x) { return project(deconv2d(x[0], x[1], x[2], 2, 1), s); };
                   return gradcheck(f, {uniform(r, {1, 3, 4, 4}), uniform(r, {3, 2, 4, 4}), uniform(r, {2})}, opts(s));
                 }));
  out.push_back(make_case("layer/deconv-conv-chain", 1e-3, kFine, [](std::uint64_t s) {
                   Rng r(s);
                   ScalarFn<double> f = [&](const Inputs& x) {
                     return project(conv2d(deconv2d(x[0], x[1], x[2], 2, 1), x[3], x[4], 1, 1), s);
                   };
                   return gradcheck(f,
                                    {uniform(r, {1, 2, 3, 3}), uniform(r, {2, 3, 4, 4}), uniform(r, {3}),
                                     uniform(r, {2, 3, 3, 3}), uniform(r, {2})},
                                    opts(s));
                 }));
  out.push_back(make_case("layer/batchnorm", 1e-3, 1e-3, [](std::uint64_t s) {
                   Rng r(s);
                   const auto rm = TD::zeros({3}), rv = TD::full({3}, 1.0);
                   ScalarFn<double> f = [&](const Inputs& x) {
                     return project(batchnorm(x[0], x[1], x[2], rm, rv, NormMode::kTrain).y, s);
                   };
                   return gradcheck(f, {uniform(r, {2, 3, 3, 3}), uniform(r, {3}, 0.5, 1.5), uniform(r, {3})}, opts(s));
                 }));
  out.push_back(make_case("layer/convlstm-step", 1e-3, kFine, [](std::uint64_t s) {
                   Rng r(s);
                   ParamSpecs specs;
                   declare_convlstm(specs, "lstm", 2, 3);
                   return check_block(
                       specs, {uniform(r, {1, 2, 4, 4}), uniform(r, {1, 3, 4, 4}), uniform(r, {1, 3, 4, 4})},
                       [](const ParamMap<double>& p, const Inputs& d) {
                         auto st = convlstm_step(p, "lstm", d[0], ConvLstmState<double>{d[1], d[2]});
                         return concat_channels<double>({st.h, st.c});
                       },
                       s, 0);
                 }));
  out.push_back(make_case("layer/resblock", 1e-3, kFine, [](std::uint64_t s) {
                   Rng r(s);
                   ParamSpecs specs;
                   declare_resblock(specs, "res", 3);
                   return check_block(specs, {uniform(r, {1, 3, 5, 5})},
                                      [](const ParamMap<double>& p, const Inputs& d) { return resblock(p, "res", d[0]); },
                                      s);
                 }));
  out.push_back(make_case("layer/rdb", 1e-3, kFine, [](std::uint64_t s) {
                   Rng r(s);
                   const RdbShape shape{4, 3, 2};
                   ParamSpecs specs;
                   declare_rdb(specs, "rdb", shape);
                   return check_block(specs, {uniform(r, {1, 4, 4, 4})},
                                      [shape](const ParamMap<double>& p, const Inputs& d) {
                                        return rdb(p, "rdb", d[0], shape, 0.1);
                                      },
                                      s);
                 }));
  out.push_back(make_case("layer/bottleneck", 1e-3, kFine, [](std::uint64_t s) {
                   Rng r(s);
                   ParamSpecs specs;
                   declare_bottleneck(specs, "bn", 6, 3);
                   return check_block(specs, {uniform(r, {1, 6, 3, 3})},
                                      [](const ParamMap<double>& p, const Inputs& d) { return bottleneck(p, "bn", d[0]); },
                                      s, 0);
                 }));
}

// ---- warp -------------------------------------------------------------------

void add_warp_cases(std::vector<GradcheckCase>& out) {
  out.push_back(make_case("warp/warp-bilinear", 1e-3, 1e-3, [](std::uint64_t s) {
                   Rng r(s);
                   ScalarFn<double> f = [&](const Inputs& x) { return project(warp_bilinear(x[0], x[1]), s); };
                   return gradcheck(f, {uniform(r, {1, 3, 6, 6}, 0, 1), interior_flow(r, 1, 6, 6)}, opts(s));
                 }));
  out.push_back(make_case("warp/sample-bilinear", 1e-3, 1e-3, [](std::uint64_t s) {
                   Rng r(s);
                   const auto grid = make_grid<double>(5, 5);
                   const auto coords = add(grid, interior_flow(r, 1, 5, 5));
                   ScalarFn<double> f = [&](const Inputs& x) { return project(sample_bilinear(x[0], x[1]), s); };
                   return gradcheck(f, {uniform(r, {1, 2, 5, 5}), coords.detach()}, opts(s));
                 }));
  out.push_back(make_case("warp/upsample-flow", 1e-3, 1e-3, [](std::uint64_t s) {
                   Rng r(s);
                   ScalarFn<double> f = [&](const Inputs& x) { return project(upsample_flow(x[0]), s); };
                   return gradcheck(f, {uniform(r, {1, 2, 4, 4})}, opts(s));
                 }));
  out.push_back(make_case("warp/image-pyramid", 1e-3, 1e-3, [](std::uint64_t s) {
                   Rng r(s);
                   ScalarFn<double> f = [&](const Inputs& x) {
                     auto p = image_pyramid(x[0]);
                     std::vector<TD> terms;
                     for (const auto& level : p) terms.push_back(project(level, s));
                     return add_all(terms);
                   };
                   return gradcheck(f, {uniform(r, {1, 3, 8, 8})}, opts(s));
                 }));
  // One flow-decoder level: deconv + lrelu, concat with the upsampled coarse
  // flow and an encoder skip, then the flow head; followed by the warp.
  out.push_back(make_case("warp/flow-decoder-level", 1e-3, kFine, [](std::uint64_t s) {
                   Rng r(s);
                   ParamSpecs specs;
                   declare_deconv(specs, "up", 6, 3);
                   declare_conv(specs, "flow", 3 + 2 + 2, 2, 3);
                   return check_block(
                       specs,
                       {uniform(r, {1, 6, 3, 3}), uniform(r, {1, 2, 3, 3}, -0.5, 0.5), uniform(r, {1, 2, 6, 6})},
                       [](const ParamMap<double>& p, const Inputs& d) {
                         auto up = leaky_relu(deconv(p, "up", d[0]));
                         auto feat = concat_channels<double>({up, upsample_flow(d[1]), d[2]});
                         return conv(p, "flow", feat);
                       },
                       s);
                 }));
}

// ---- losses -----------------------------------------------------------------

// N frames per level for coarse-to-fine levels of a size x size image.
std::vector<Pyramid<double>> random_pyramids(Rng& r, int N, int size) {
  std::vector<Pyramid<double>> out(static_cast<std::size_t>(N));
  for (auto& p : out)
    for (int j = 0; j < kPyramidLevels; ++j) {
      const int e = size >> (kPyramidLevels - 1 - j);
      p[j] = uniform(r, {1, 3, e, e}, 0.1, 0.9);
    }
  return out;
}

// Predicted frames for the order-invariant loss, built from the ground
// truth so every inner and outer absolute value is far from its kink.
std::vector<TD> order_invariant_pred(Rng& r, const std::vector<TD>& gt) {
  const std::size_t N = gt.size();
  std::vector<std::vector<double>> pv(N);
  for (std::size_t n = 0; n < N; ++n) pv[n].resize(static_cast<std::size_t>(gt[n].size()));
  for (std::size_t n = 0; n < N / 2; ++n) {
    const std::size_t m = N - 1 - n;
    for (std::size_t i = 0; i < pv[n].size(); ++i) {
      const double gs = gt[n][static_cast<std::int64_t>(i)] + gt[m][static_cast<std::int64_t>(i)];
      const double gd = std::abs(gt[n][static_cast<std::int64_t>(i)] - gt[m][static_cast<std::int64_t>(i)]);
      const double ds = r.uni(0.05, 0.3), dd = r.uni(0.05, 0.3);
      const double sum = gs - ds > 0.1 && r.sign() < 0 ? gs - ds : gs + ds;
      const double diff = gd - dd > 0.05 && r.sign() < 0 ? gd - dd : gd + dd;
      const double sg = r.sign();
      pv[n][i] = (sum + sg * diff) / 2;
      pv[m][i] = (sum - sg * diff) / 2;
    }
  }
  if (N % 2) {
    for (std::size_t i = 0; i < pv[N / 2].size(); ++i) pv[N / 2][i] = gt[N / 2][static_cast<std::int64_t>(i)] + r.away(0.05, 0.3);
  }
  std::vector<TD> out;
  for (std::size_t n = 0; n < N; ++n) out.emplace_back(gt[n].shape(), std::move(pv[n]));
  return out;
}

std::vector<TD> level(const std::vector<Pyramid<double>>& p, int j) {
  std::vector<TD> out;
  for (const auto& e : p) out.push_back(e[j]);
  return out;
}

void add_loss_cases(std::vector<GradcheckCase>& out) {
  out.push_back(make_case("loss/data-l1", 1e-3, 1e-3, [](std::uint64_t s) {
                   Rng r(s);
                   const int N = 3;
                   auto gt = random_pyramids(r, N, 8);
                   Inputs pred;
                   for (const auto& p : gt)
                     for (const auto& l : p) pred.push_back(offset(r, l));
                   ScalarFn<double> f = [&](const Inputs& x) {
                     std::vector<Pyramid<double>> p(N);
                     for (int n = 0; n < N; ++n)
                       for (int j = 0; j < kPyramidLevels; ++j) p[n][j] = x[static_cast<std::size_t>(n * kPyramidLevels + j)];
                     auto L = data_loss_l1(p, gt);
                     return add_all({scale(L[0], 0.3), scale(L[1], 0.7), L[2], scale(L[3], 2.0)});
                   };
                   return gradcheck(f, pred, opts(s));
                 }));
  out.push_back(make_case("loss/tv", 1e-3, 1e-3, [](std::uint64_t s) {
                   Rng r(s);
                   ScalarFn<double> f = [](const Inputs& x) { return tv_loss(x[0]); };
                   return gradcheck(f, {ramp_flow(r, 1, 6, 6)}, opts(s));
                 }));
  for (int N : {4, 5}) {
    out.push_back(make_case("loss/order-invariant-N" + std::to_string(N), 1e-3, 1e-3, [N](std::uint64_t s) {
                     Rng r(s);
                     std::vector<TD> gt;
                     for (int n = 0; n < N; ++n) gt.push_back(uniform(r, {1, 3, 4, 4}, 0.1, 0.9));
                     ScalarFn<double> f = [&](const Inputs& x) { return order_invariant_loss(x, gt); };
                     return gradcheck(f, order_invariant_pred(r, gt), opts(s));
                   }));
  }
  for (auto mode : {DataTerm::kReconstruction, DataTerm::kOrderInvariant}) {
    const std::string name = mode == DataTerm::kReconstruction ? "loss/total-reconstruction" : "loss/total-order-invariant";
    out.push_back(make_case(name, 1e-3, 1e-3, [mode](std::uint64_t s) {
                     Rng r(s);
                     const int N = 3;
                     auto gt = random_pyramids(r, N, 8);
                     Inputs x0;
                     for (int j = 0; j < kPyramidLevels; ++j) {
                       auto pred = mode == DataTerm::kReconstruction ? std::vector<TD>{} : order_invariant_pred(r, level(gt, j));
                       for (int n = 0; n < N; ++n) {
                         x0.push_back(mode == DataTerm::kReconstruction ? offset(r, gt[n][j]) : pred[static_cast<std::size_t>(n)]);
                       }
                     }
                     for (int j = 0; j < kPyramidLevels; ++j)
                       for (int n = 0; n < N; ++n) {
                         const int e = 8 >> (kPyramidLevels - 1 - j);
                         x0.push_back(ramp_flow(r, 1, e, e));
                       }
                     LossConfig cfg;
                     cfg.mode = mode;
                     ScalarFn<double> f = [&](const Inputs& x) {
                       PredictionSet<double> p;
                       p.frames.resize(N);
                       p.flows.resize(N);
                       for (int j = 0; j < kPyramidLevels; ++j)
                         for (int n = 0; n < N; ++n) {
                           p.frames[n][j] = x[static_cast<std::size_t>(j * N + n)];
                           p.flows[n][j] = x[static_cast<std::size_t>(kPyramidLevels * N + j * N + n)];
                         }
                       return total_loss(p, gt, cfg).total;
                     };
                     return gradcheck(f, x0, opts(s));
                   }));
  }
}

// ---- miniature networks -----------------------------------------------------

ModelConfig tiny_config() {
  ModelConfig c;
  c.frames = 3;
  c.height = c.width = 16;
  c.base_channels = 1;
  c.dm_base = 4;
  c.dm_growth = 4;
  c.dm_rdb_layers = 2;
  c.dm_rdbs_per_level = 1;
  c.flow_head_gain = 1.0;
  return c;
}

Inputs to_inputs(const ParamMap<float>& p, const std::vector<std::string>& names) {
  Inputs out;
  for (const auto& n : names) out.push_back(param(p, n).cast<double>());
  return out;
}

void add_network_cases(std::vector<GradcheckCase>& out) {
  // Loss of a full decoder rollout with respect to the initial state. The
  // targets are the unperturbed prediction plus offsets, away from L1 kinks.
  out.push_back(make_case("network/rvd-rollout", 1e-3, kFine, [](std::uint64_t s) {
                   Rng r(s);
                   const auto cfg = tiny_config();
                   const auto p = cast_params<float, double>(initialize(rvd_params(cfg), s));
                   const auto center = uniform(r, {1, 3, 16, 16}, 0, 1);
                   const Inputs init{uniform(r, {1, cfg.hidden(), 2, 2}), uniform(r, {1, cfg.hidden(), 2, 2})};
                   const auto base = rvd_rollout(p, cfg, {init[0], init[1]}, center, cfg.frames);
                   std::vector<Pyramid<double>> gt;
                   for (const auto& f : base.frames) {
                     Pyramid<double> g;
                     for (int j = 0; j < kPyramidLevels; ++j) g[j] = offset(r, f[j]);
                     gt.push_back(g);
                   }
                   LossConfig loss;
                   loss.mu = 0;  // rolled-out flows have no kink-free guarantee for TV
                   ScalarFn<double> f = [&](const Inputs& x) {
                     auto pred = rvd_rollout(p, cfg, {x[0], x[1]}, center, cfg.frames);
                     return total_loss(pred, gt, loss).total;
                   };
                   auto o = opts(s);
                   o.max_kink_fraction = 0.1;   // warps of network-produced flows
                   return gradcheck(f, init, o);
                 }));
  out.push_back(make_case("network/rve-forward", 1e-3, kFine, [](std::uint64_t s) {
                   Rng r(s);
                   auto cfg = tiny_config();
                   cfg.frames = 2;
                   const auto p = cast_params<float, double>(initialize(rve_params(cfg), s));
                   ScalarFn<double> f = [&](const Inputs& x) {
                     auto st = rve_forward(p, cfg, x);
                     return add(project(st.h, s), project(st.c, s + 1));
                   };
                   return gradcheck(f, {uniform(r, {1, 3, 16, 16}, 0, 1), uniform(r, {1, 3, 16, 16}, 0, 1)},
                                    opts(s, kSampled));
                 }));
  out.push_back(make_case("network/bie-forward", 1e-3, kFine, [](std::uint64_t s) {
                   Rng r(s);
                   const auto cfg = tiny_config();
                   const auto p = cast_params<float, double>(initialize(bie_params(cfg), s));
                   const NormContext norm{NormMode::kTrain, 0.1, nullptr};
                   ScalarFn<double> f = [&](const Inputs& x) { return project(bie_forward(p, cfg, x[0], x[1], norm).h, s); };
                   return gradcheck(f, {uniform(r, {2, 3, 16, 16}, 0, 1), uniform(r, {2, 3, 16, 16}, 0, 1)},
                                    opts(s, kSampled));
                 }));
  out.push_back(make_case("network/dm-forward", 1e-3, kFine, [](std::uint64_t s) {
                   Rng r(s);
                   const auto cfg = tiny_config();
                   const auto init = initialize(dm_params(cfg), s);
                   const std::vector<std::string> names{"dm.stem.w", "dm.enc2.rdb0.layer1.w", "dm.enc3.rdb0.fuse.w",
                                                        "dm.up1.deconv.w", "dm.out2.w"};
                   auto p0 = cast_params<float, double>(init);
                   Inputs x0{uniform(r, {1, 3, 16, 16}, 0, 1)};
                   for (auto& t : to_inputs(init, names)) x0.push_back(t);
                   ScalarFn<double> f = [&](const Inputs& x) {
                     auto p = p0;
                     for (std::size_t i = 0; i < names.size(); ++i) p[names[i]] = x[i + 1];
                     return project(dm_forward(p, cfg, x[0]), s);
                   };
                   return gradcheck(f, x0, opts(s, kSampled));
                 }));
}

}  // namespace

const std::vector<GradcheckCase>& gradcheck_cases() {
  static const std::vector<GradcheckCase> cases = [] {
    std::vector<GradcheckCase> c;
    add_op_cases(c);
    add_layer_cases(c);
    add_warp_cases(c);
    add_loss_cases(c);
    add_network_cases(c);
    return c;
  }();
  return cases;
}

std::vector<GradcheckRow> run_gradcheck_suite(int seeds, const std::string& filter, std::ostream* table) {
  if (seeds < 1) throw Error("gradcheck: seeds must be >= 1");
  std::vector<GradcheckRow> rows;
  if (table) *table << std::left << std::setw(34) << "case" << std::setw(7) << "seeds" << std::setw(9) << "epsilon"
                    << std::setw(14) << "max_rel_err" << std::setw(11) << "tolerance" << "result\n";
  for (const auto& c : gradcheck_cases()) {
    if (!filter.empty() && c.name.find(filter) == std::string::npos) continue;
    GradcheckRow row{c.name, seeds, 0.0, c.tolerance, c.epsilon, false};
    for (int s = 1; s <= seeds; ++s) {
      const double e = c.run(static_cast<std::uint64_t>(s), c.epsilon);
      row.max_error = std::isfinite(e) ? std::max(row.max_error, e) : e;
      if (!std::isfinite(row.max_error)) break;
    }
    row.passed = std::isfinite(row.max_error) && row.max_error <= c.tolerance;
    if (table) {
      *table << std::left << std::setw(34) << row.name << std::setw(7) << row.seeds << std::scientific
             << std::setprecision(0) << std::setw(9) << row.epsilon << std::setw(14)
             << std::setprecision(3) << row.max_error << std::setw(11) << row.tolerance << std::defaultfloat
             << (row.passed ? "PASS" : "FAIL") << '\n'
             << std::flush;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace blurvid
