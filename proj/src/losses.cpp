#include "blurvid/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "blurvid/ops.hpp"

namespace blurvid {

void LossConfig::validate() const {
  if (!(mu >= 0)) throw Error("loss config: mu must be >= 0");
  bool any = false;
  for (double l : lambda) {
    if (!(l >= 0)) throw Error("loss config: scale weights must be >= 0");
    any = any || l > 0;
  }
  if (!any) throw Error("loss config: at least one scale weight must be positive");
}

namespace {

template <typename T>
void require_frames(const char* what, std::size_t a, std::size_t b) {
  if (a != b || a == 0) {
    throw ShapeError(std::string(what) + ": prediction has " + std::to_string(a) + " frames, ground truth " +
                     std::to_string(b));
  }
}

template <typename T>
BasicTensor<T> l1(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return mean(abs(sub(a, b)));
}

}  // namespace

template <typename T>
std::array<BasicTensor<T>, kPyramidLevels> data_loss_l1(const std::vector<Pyramid<T>>& pred,
                                                        const std::vector<Pyramid<T>>& gt) {
  require_frames<T>("data_loss_l1", pred.size(), gt.size());
  std::array<BasicTensor<T>, kPyramidLevels> out;
  for (int j = 0; j < kPyramidLevels; ++j) {
    BasicTensor<T> acc;
    for (std::size_t n = 0; n < pred.size(); ++n) {
      auto term = l1(pred[n][j], gt[n][j]);
      acc = n == 0 ? term : add(acc, term);
    }
    out[j] = acc;
  }
  return out;
}

template <typename T>
BasicTensor<T> tv_loss(const BasicTensor<T>& flow) {
  if (flow.rank() != 4) throw ShapeError("tv_loss: expected (B,C,H,W), got " + to_string(flow.shape()));
  const int BC = flow.dim(0) * flow.dim(1), H = flow.dim(2), W = flow.dim(3);
  const auto& v = flow.values();
  const double count = static_cast<double>(flow.size());
  double acc = 0;
  for (int c = 0; c < BC; ++c) {
    const T* s = v.data() + static_cast<std::size_t>(c) * H * W;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        if (x + 1 < W) acc += std::abs(static_cast<double>(s[y * W + x + 1]) - s[y * W + x]);
        if (y + 1 < H) acc += std::abs(static_cast<double>(s[(y + 1) * W + x]) - s[y * W + x]);
      }
  }
  std::vector<T> out{static_cast<T>(acc / count)};
  if (!flow.tracked()) return BasicTensor<T>(Shape{1}, std::move(out));
  return flow.tape()->record("tv", {&flow}, Shape{1}, std::move(out),
                             [fs = flow.storage(), in = flow.node(), BC, H, W, count](std::span<const T> g,
                                                                                      GradSink<T>& sink) {
                               if (!sink.wants(in)) return;
                               auto d = sink.slot(in);
                               const T k = static_cast<T>(static_cast<double>(g[0]) / count);
                               auto sgn = [](T a) { return a > T(0) ? T(1) : (a < T(0) ? T(-1) : T(0)); };
                               for (int c = 0; c < BC; ++c) {
                                 const T* s = fs->data() + static_cast<std::size_t>(c) * H * W;
                                 T* dd = d.data() + static_cast<std::size_t>(c) * H * W;
                                 for (int y = 0; y < H; ++y)
                                   for (int x = 0; x < W; ++x) {
                                     const int p = y * W + x;
                                     if (x + 1 < W) {
                                       const T sg = k * sgn(s[p + 1] - s[p]);
                                       dd[p + 1] += sg;
                                       dd[p] -= sg;
                                     }
                                     if (y + 1 < H) {
                                       const T sg = k * sgn(s[p + W] - s[p]);
                                       dd[p + W] += sg;
                                       dd[p] -= sg;
                                     }
                                   }
                               }
                             });
}

template <typename T>
BasicTensor<T> order_invariant_loss(const std::vector<BasicTensor<T>>& pred, const std::vector<BasicTensor<T>>& gt) {
  require_frames<T>("order_invariant_loss", pred.size(), gt.size());
  const std::size_t N = pred.size();
  BasicTensor<T> acc;
  bool first = true;
  auto accumulate = [&](const BasicTensor<T>& term) {
    acc = first ? term : add(acc, term);
    first = false;
  };
  for (std::size_t n = 0; n < N / 2; ++n) {
    const std::size_t m = N - 1 - n;
    accumulate(l1(abs(add(pred[n], pred[m])), abs(add(gt[n], gt[m]))));
    accumulate(l1(abs(sub(pred[n], pred[m])), abs(sub(gt[n], gt[m]))));
  }
  if (N % 2) accumulate(l1(pred[N / 2], gt[N / 2]));
  return acc;
}

template <typename T>
std::array<BasicTensor<T>, kPyramidLevels> order_invariant_losses(const std::vector<Pyramid<T>>& pred,
                                                                  const std::vector<Pyramid<T>>& gt) {
  require_frames<T>("order_invariant_losses", pred.size(), gt.size());
  std::array<BasicTensor<T>, kPyramidLevels> out;
  for (int j = 0; j < kPyramidLevels; ++j) {
    std::vector<BasicTensor<T>> p, g;
    for (std::size_t n = 0; n < pred.size(); ++n) {
      p.push_back(pred[n][j]);
      g.push_back(gt[n][j]);
    }
    out[j] = order_invariant_loss(p, g);
  }
  return out;
}

template <typename T>
LossTerms<T> total_loss(const PredictionSet<T>& pred, const std::vector<Pyramid<T>>& gt, const LossConfig& cfg) {
  cfg.validate();
  auto data = cfg.mode == DataTerm::kReconstruction ? data_loss_l1(pred.frames, gt)
                                                    : order_invariant_losses(pred.frames, gt);
  LossTerms<T> out;
  BasicTensor<T> total;
  bool first = true;
  for (int j = 0; j < kPyramidLevels; ++j) {
    out.data[j] = static_cast<double>(data[j].item());
    BasicTensor<T> tv;
    for (std::size_t n = 0; n < pred.flows.size(); ++n) {
      auto t = tv_loss(pred.flows[n][j]);
      tv = n == 0 ? t : add(tv, t);
    }
    out.tv[j] = static_cast<double>(tv.item());
    if (cfg.lambda[j] == 0) continue;
    auto level = data[j];
    if (cfg.mu != 0) level = add(level, scale(tv, cfg.mu));
    level = scale(level, cfg.lambda[j]);
    total = first ? level : add(total, level);
    first = false;
  }
  out.total = total;
  return out;
}

double psnr(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("psnr: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  double se = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    se += d * d;
  }
  if (se == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / (se / static_cast<double>(a.size())));
}

template <typename T>
std::vector<BasicTensor<T>> reversed(std::vector<BasicTensor<T>> frames) {
  std::reverse(frames.begin(), frames.end());
  return frames;
}

#define BLURVID_INSTANTIATE_LOSSES(T)                                                                            \
  template std::array<BasicTensor<T>, kPyramidLevels> data_loss_l1(const std::vector<Pyramid<T>>&,               \
                                                                   const std::vector<Pyramid<T>>&);              \
  template BasicTensor<T> tv_loss(const BasicTensor<T>&);                                                        \
  template BasicTensor<T> order_invariant_loss(const std::vector<BasicTensor<T>>&,                               \
                                               const std::vector<BasicTensor<T>>&);                              \
  template std::array<BasicTensor<T>, kPyramidLevels> order_invariant_losses(const std::vector<Pyramid<T>>&,     \
                                                                             const std::vector<Pyramid<T>>&);    \
  template LossTerms<T> total_loss(const PredictionSet<T>&, const std::vector<Pyramid<T>>&, const LossConfig&);  \
  template std::vector<BasicTensor<T>> reversed(std::vector<BasicTensor<T>>);

BLURVID_INSTANTIATE_LOSSES(float)
BLURVID_INSTANTIATE_LOSSES(double)

}  // namespace blurvid
