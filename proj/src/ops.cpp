#include "blurvid/ops.hpp"

#include <algorithm>
#include <cmath>

namespace blurvid {

namespace {

template <typename T>
void require_same(const char* op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

template <typename T>
void require_rank4(const char* op, const BasicTensor<T>& x) {
  if (x.rank() != 4) throw ShapeError(std::string(op) + ": expected (B,C,H,W), got " + to_string(x.shape()));
}

template <typename T>
void accumulate(GradSink<T>& sink, int node, std::span<const T> g) {
  if (!sink.wants(node)) return;
  auto dst = sink.slot(node);
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

// Unary elementwise op; `deriv(x, y)` is dy/dx given input and output.
template <typename T, typename Fwd, typename Deriv>
BasicTensor<T> unary(const char* name, const BasicTensor<T>& x, Fwd fwd, Deriv deriv) {
  const auto& xs = x.values();
  std::vector<T> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = fwd(xs[i]);
  if (!x.tracked()) return BasicTensor<T>(x.shape(), std::move(out));
  auto xin = x.storage();
  auto result = std::make_shared<std::vector<T>>(out);
  return x.tape()->record(name, {&x}, x.shape(), std::move(out),
                          [xin, result, in = x.node(), deriv](std::span<const T> g, GradSink<T>& sink) {
                            if (!sink.wants(in)) return;
                            auto dst = sink.slot(in);
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              dst[i] += g[i] * deriv((*xin)[i], (*result)[i]);
                            }
                          });
}

}  // namespace

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same("add", a, b);
  std::vector<T> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  Tape<T>* tape = common_tape({&a, &b});
  if (!tape) return BasicTensor<T>(a.shape(), std::move(out));
  int na = a.tracked() ? a.node() : -1, nb = b.tracked() ? b.node() : -1;
  return tape->record("add", {&a, &b}, a.shape(), std::move(out),
                      [na, nb](std::span<const T> g, GradSink<T>& sink) {
                        accumulate(sink, na, g);
                        accumulate(sink, nb, g);
                      });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same("subtract", a, b);
  std::vector<T> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  Tape<T>* tape = common_tape({&a, &b});
  if (!tape) return BasicTensor<T>(a.shape(), std::move(out));
  int na = a.tracked() ? a.node() : -1, nb = b.tracked() ? b.node() : -1;
  return tape->record("subtract", {&a, &b}, a.shape(), std::move(out),
                      [na, nb](std::span<const T> g, GradSink<T>& sink) {
                        accumulate(sink, na, g);
                        if (!sink.wants(nb)) return;
                        auto dst = sink.slot(nb);
                        for (std::size_t i = 0; i < g.size(); ++i) dst[i] -= g[i];
                      });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same("multiply", a, b);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  Tape<T>* tape = common_tape({&a, &b});
  if (!tape) return BasicTensor<T>(a.shape(), std::move(out));
  int na = a.tracked() ? a.node() : -1, nb = b.tracked() ? b.node() : -1;
  return tape->record("multiply", {&a, &b}, a.shape(), std::move(out),
                      [na, nb, as = a.storage(), bs = b.storage()](std::span<const T> g, GradSink<T>& sink) {
                        if (sink.wants(na)) {
                          auto dst = sink.slot(na);
                          for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * (*bs)[i];
                        }
                        if (sink.wants(nb)) {
                          auto dst = sink.slot(nb);
                          for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * (*as)[i];
                        }
                      });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, double factor) {
  const T f = static_cast<T>(factor);
  std::vector<T> out(a.values());
  for (auto& v : out) v *= f;
  if (!a.tracked()) return BasicTensor<T>(a.shape(), std::move(out));
  return a.tape()->record("scalar-scale", {&a}, a.shape(), std::move(out),
                          [na = a.node(), f](std::span<const T> g, GradSink<T>& sink) {
                            if (!sink.wants(na)) return;
                            auto dst = sink.slot(na);
                            for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * f;
                          });
}

template <typename T>
BasicTensor<T> abs(const BasicTensor<T>& x) {
  return unary<T>(
      "absolute", x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, double slope) {
  const T s = static_cast<T>(slope);
  return unary<T>(
      "leaky-relu", x, [s](T v) { return v > T(0) ? v : v * s; },
      [s](T v, T) { return v > T(0) ? T(1) : s; });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  return unary<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  return unary<T>(
      "sigmoid", x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x) {
  return unary<T>(
      "tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  double acc = 0.0;
  for (T v : x.values()) acc += static_cast<double>(v);
  std::vector<T> out{static_cast<T>(acc)};
  if (!x.tracked()) return BasicTensor<T>(Shape{1}, std::move(out));
  return x.tape()->record("sum", {&x}, Shape{1}, std::move(out),
                          [in = x.node()](std::span<const T> g, GradSink<T>& sink) {
                            if (!sink.wants(in)) return;
                            auto dst = sink.slot(in);
                            for (auto& d : dst) d += g[0];
                          });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  if (x.size() == 0) throw ShapeError("mean of empty tensor");
  double acc = 0.0;
  for (T v : x.values()) acc += static_cast<double>(v);
  const double n = static_cast<double>(x.size());
  std::vector<T> out{static_cast<T>(acc / n)};
  if (!x.tracked()) return BasicTensor<T>(Shape{1}, std::move(out));
  return x.tape()->record("mean", {&x}, Shape{1}, std::move(out),
                          [in = x.node(), n](std::span<const T> g, GradSink<T>& sink) {
                            if (!sink.wants(in)) return;
                            auto dst = sink.slot(in);
                            const T share = static_cast<T>(static_cast<double>(g[0]) / n);
                            for (auto& d : dst) d += share;
                          });
}

template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat-channels: no inputs");
  for (const auto& p : parts) require_rank4("concat-channels", p);
  const int B = parts[0].dim(0), H = parts[0].dim(2), W = parts[0].dim(3);
  int C = 0;
  std::vector<int> offsets;
  for (const auto& p : parts) {
    if (p.dim(0) != B || p.dim(2) != H || p.dim(3) != W) {
      throw ShapeError("concat-channels: shape mismatch " + to_string(parts[0].shape()) + " vs " +
                       to_string(p.shape()));
    }
    offsets.push_back(C);
    C += p.dim(1);
  }
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  std::vector<T> out(static_cast<std::size_t>(B) * C * plane);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const int Ck = parts[k].dim(1);
    const auto& src = parts[k].values();
    for (int b = 0; b < B; ++b) {
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(b * Ck * plane), Ck * plane,
                  out.begin() + static_cast<std::ptrdiff_t>((b * C + offsets[k]) * plane));
    }
  }
  std::vector<const BasicTensor<T>*> ins;
  for (const auto& p : parts) ins.push_back(&p);
  Tape<T>* tape = common_tape(ins);
  Shape shape{B, C, H, W};
  if (!tape) return BasicTensor<T>(shape, std::move(out));
  std::vector<int> nodes, widths;
  for (const auto& p : parts) {
    nodes.push_back(p.tracked() ? p.node() : -1);
    widths.push_back(p.dim(1));
  }
  return tape->record("concat-channels", ins, shape, std::move(out),
                      [nodes, widths, offsets, B, C, plane](std::span<const T> g, GradSink<T>& sink) {
                        for (std::size_t k = 0; k < nodes.size(); ++k) {
                          if (!sink.wants(nodes[k])) continue;
                          auto dst = sink.slot(nodes[k]);
                          const std::size_t Ck = static_cast<std::size_t>(widths[k]);
                          for (int b = 0; b < B; ++b) {
                            const T* src = g.data() + (b * C + offsets[k]) * plane;
                            T* d = dst.data() + b * Ck * plane;
                            for (std::size_t i = 0; i < Ck * plane; ++i) d[i] += src[i];
                          }
                        }
                      });
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, int begin, int count) {
  require_rank4("slice-channels", x);
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (begin < 0 || count <= 0 || begin + count > C) {
    throw ShapeError("slice-channels: range [" + std::to_string(begin) + "," +
                     std::to_string(begin + count) + ") outside " + to_string(x.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  std::vector<T> out(static_cast<std::size_t>(B) * count * plane);
  const auto& src = x.values();
  for (int b = 0; b < B; ++b) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((b * C + begin) * plane), count * plane,
                out.begin() + static_cast<std::ptrdiff_t>(b * count * plane));
  }
  Shape shape{B, count, H, W};
  if (!x.tracked()) return BasicTensor<T>(shape, std::move(out));
  return x.tape()->record("slice-channels", {&x}, shape, std::move(out),
                          [in = x.node(), B, C, begin, count, plane](std::span<const T> g, GradSink<T>& sink) {
                            if (!sink.wants(in)) return;
                            auto dst = sink.slot(in);
                            for (int b = 0; b < B; ++b) {
                              const T* s = g.data() + b * count * plane;
                              T* d = dst.data() + (b * C + begin) * plane;
                              for (std::size_t i = 0; i < count * plane; ++i) d[i] += s[i];
                            }
                          });
}

template <typename T>
BasicTensor<T> pad_spatial(const BasicTensor<T>& x, int pad) {
  require_rank4("pad-spatial", x);
  if (pad < 0) throw ShapeError("pad-spatial: negative padding");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = H + 2 * pad, Wo = W + 2 * pad;
  std::vector<T> out(static_cast<std::size_t>(B) * C * Ho * Wo, T(0));
  const auto& src = x.values();
  for (int bc = 0; bc < B * C; ++bc)
    for (int y = 0; y < H; ++y)
      std::copy_n(src.begin() + (static_cast<std::ptrdiff_t>(bc) * H + y) * W, W,
                  out.begin() + (static_cast<std::ptrdiff_t>(bc) * Ho + y + pad) * Wo + pad);
  Shape shape{B, C, Ho, Wo};
  if (!x.tracked()) return BasicTensor<T>(shape, std::move(out));
  return x.tape()->record("pad-spatial", {&x}, shape, std::move(out),
                          [in = x.node(), B, C, H, W, Ho, Wo, pad](std::span<const T> g, GradSink<T>& sink) {
                            if (!sink.wants(in)) return;
                            auto dst = sink.slot(in);
                            for (int bc = 0; bc < B * C; ++bc)
                              for (int y = 0; y < H; ++y)
                                for (int xx = 0; xx < W; ++xx)
                                  dst[(static_cast<std::size_t>(bc) * H + y) * W + xx] +=
                                      g[(static_cast<std::size_t>(bc) * Ho + y + pad) * Wo + xx + pad];
                          });
}

namespace {

// One axis of a separable bilinear resample: output index -> two source taps.
struct Taps {
  std::vector<int> lo, hi;
  std::vector<double> w_hi;
};

Taps resize_taps(int in, int out) {
  Taps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.w_hi.resize(out);
  const double ratio = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    int lo = static_cast<int>(std::floor(src));
    int hi = std::min(lo + 1, in - 1);
    t.lo[o] = lo;
    t.hi[o] = hi;
    t.w_hi[o] = src - lo;
  }
  return t;
}

}  // namespace

template <typename T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& x, double factor) {
  require_rank4("bilinear-resize", x);
  if (!(factor > 0.0)) throw ShapeError("bilinear-resize: factor must be positive");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = static_cast<int>(std::lround(H * factor));
  const int Wo = static_cast<int>(std::lround(W * factor));
  if (Ho < 1 || Wo < 1) throw ShapeError("bilinear-resize: empty output for " + to_string(x.shape()));
  auto ty = std::make_shared<Taps>(resize_taps(H, Ho));
  auto tx = std::make_shared<Taps>(resize_taps(W, Wo));
  const auto& src = x.values();
  std::vector<T> out(static_cast<std::size_t>(B) * C * Ho * Wo);
  for (int bc = 0; bc < B * C; ++bc) {
    const T* s = src.data() + static_cast<std::size_t>(bc) * H * W;
    T* d = out.data() + static_cast<std::size_t>(bc) * Ho * Wo;
    for (int oy = 0; oy < Ho; ++oy) {
      const T wy = static_cast<T>(ty->w_hi[oy]);
      const T* r0 = s + ty->lo[oy] * W;
      const T* r1 = s + ty->hi[oy] * W;
      for (int ox = 0; ox < Wo; ++ox) {
        const T wx = static_cast<T>(tx->w_hi[ox]);
        const int x0 = tx->lo[ox], x1 = tx->hi[ox];
        const T top = r0[x0] * (T(1) - wx) + r0[x1] * wx;
        const T bot = r1[x0] * (T(1) - wx) + r1[x1] * wx;
        d[oy * Wo + ox] = top * (T(1) - wy) + bot * wy;
      }
    }
  }
  Shape shape{B, C, Ho, Wo};
  if (!x.tracked()) return BasicTensor<T>(shape, std::move(out));
  return x.tape()->record("bilinear-resize", {&x}, shape, std::move(out),
                          [in = x.node(), B, C, H, W, Ho, Wo, ty, tx](std::span<const T> g, GradSink<T>& sink) {
                            if (!sink.wants(in)) return;
                            auto dst = sink.slot(in);
                            for (int bc = 0; bc < B * C; ++bc) {
                              T* d = dst.data() + static_cast<std::size_t>(bc) * H * W;
                              const T* gs = g.data() + static_cast<std::size_t>(bc) * Ho * Wo;
                              for (int oy = 0; oy < Ho; ++oy) {
                                const T wy = static_cast<T>(ty->w_hi[oy]);
                                T* r0 = d + ty->lo[oy] * W;
                                T* r1 = d + ty->hi[oy] * W;
                                for (int ox = 0; ox < Wo; ++ox) {
                                  const T wx = static_cast<T>(tx->w_hi[ox]);
                                  const T gv = gs[oy * Wo + ox];
                                  const int x0 = tx->lo[ox], x1 = tx->hi[ox];
                                  r0[x0] += gv * (T(1) - wy) * (T(1) - wx);
                                  r0[x1] += gv * (T(1) - wy) * wx;
                                  r1[x0] += gv * wy * (T(1) - wx);
                                  r1[x1] += gv * wy * wx;
                                }
                              }
                            }
                          });
}

namespace {

// Index map from depth layout (B, C*b*b, H/b, W/b) to space layout (B,C,H,W).
std::shared_ptr<std::vector<std::size_t>> s2d_index(int B, int C, int H, int W, int block) {
  const int Hs = H / block, Ws = W / block, Cd = C * block * block;
  auto idx = std::make_shared<std::vector<std::size_t>>(static_cast<std::size_t>(B) * C * H * W);
  std::size_t o = 0;
  for (int b = 0; b < B; ++b)
    for (int cd = 0; cd < Cd; ++cd) {
      const int c = cd / (block * block), r = cd % (block * block);
      const int dy = r / block, dx = r % block;
      for (int y = 0; y < Hs; ++y)
        for (int x = 0; x < Ws; ++x)
          (*idx)[o++] = ((static_cast<std::size_t>(b) * C + c) * H + y * block + dy) * W + x * block + dx;
    }
  return idx;
}

}  // namespace

template <typename T>
BasicTensor<T> space_to_depth(const BasicTensor<T>& x, int block) {
  require_rank4("space-to-depth", x);
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (block < 1 || H % block || W % block) {
    throw ShapeError("space-to-depth: block " + std::to_string(block) + " does not divide " + to_string(x.shape()));
  }
  auto idx = s2d_index(B, C, H, W, block);
  const auto& src = x.values();
  std::vector<T> out(src.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[(*idx)[i]];
  Shape shape{B, C * block * block, H / block, W / block};
  if (!x.tracked()) return BasicTensor<T>(shape, std::move(out));
  return x.tape()->record("space-to-depth", {&x}, shape, std::move(out),
                          [in = x.node(), idx](std::span<const T> g, GradSink<T>& sink) {
                            if (!sink.wants(in)) return;
                            auto dst = sink.slot(in);
                            for (std::size_t i = 0; i < g.size(); ++i) dst[(*idx)[i]] += g[i];
                          });
}

template <typename T>
BasicTensor<T> depth_to_space(const BasicTensor<T>& x, int block) {
  require_rank4("depth-to-space", x);
  const int B = x.dim(0), Cd = x.dim(1), Hs = x.dim(2), Ws = x.dim(3);
  if (block < 1 || Cd % (block * block)) {
    throw ShapeError("depth-to-space: block " + std::to_string(block) + " does not divide channels of " +
                     to_string(x.shape()));
  }
  const int C = Cd / (block * block), H = Hs * block, W = Ws * block;
  auto idx = s2d_index(B, C, H, W, block);
  const auto& src = x.values();
  std::vector<T> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[(*idx)[i]] = src[i];
  Shape shape{B, C, H, W};
  if (!x.tracked()) return BasicTensor<T>(shape, std::move(out));
  return x.tape()->record("depth-to-space", {&x}, shape, std::move(out),
                          [in = x.node(), idx](std::span<const T> g, GradSink<T>& sink) {
                            if (!sink.wants(in)) return;
                            auto dst = sink.slot(in);
                            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[(*idx)[i]];
                          });
}

template <typename T>
BasicTensor<T> concat_batch(const std::vector<BasicTensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat-batch: no inputs");
  Shape inner(parts[0].shape().begin() + 1, parts[0].shape().end());
  int B = 0;
  std::vector<T> out;
  for (const auto& p : parts) {
    require_rank4("concat-batch", p);
    if (Shape(p.shape().begin() + 1, p.shape().end()) != inner) {
      throw ShapeError("concat-batch: shape mismatch " + to_string(parts[0].shape()) + " vs " + to_string(p.shape()));
    }
    B += p.dim(0);
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  std::vector<const BasicTensor<T>*> ins;
  for (const auto& p : parts) ins.push_back(&p);
  Tape<T>* tape = common_tape(ins);
  Shape shape{B, inner[0], inner[1], inner[2]};
  if (!tape) return BasicTensor<T>(shape, std::move(out));
  std::vector<int> nodes;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    nodes.push_back(p.tracked() ? p.node() : -1);
    sizes.push_back(static_cast<std::size_t>(p.size()));
  }
  return tape->record("concat-batch", ins, shape, std::move(out),
                      [nodes, sizes](std::span<const T> g, GradSink<T>& sink) {
                        std::size_t off = 0;
                        for (std::size_t k = 0; k < nodes.size(); ++k) {
                          accumulate(sink, nodes[k], g.subspan(off, sizes[k]));
                          off += sizes[k];
                        }
                      });
}

template <typename T>
BasicTensor<T> slice_batch(const BasicTensor<T>& x, int index) {
  require_rank4("slice-batch", x);
  if (index < 0 || index >= x.dim(0)) throw ShapeError("slice-batch: index out of range for " + to_string(x.shape()));
  const std::size_t per = static_cast<std::size_t>(x.size() / x.dim(0));
  std::vector<T> out(x.values().begin() + static_cast<std::ptrdiff_t>(index * per),
                     x.values().begin() + static_cast<std::ptrdiff_t>((index + 1) * per));
  Shape shape{1, x.dim(1), x.dim(2), x.dim(3)};
  if (!x.tracked()) return BasicTensor<T>(shape, std::move(out));
  return x.tape()->record("slice-batch", {&x}, shape, std::move(out),
                          [in = x.node(), per, index](std::span<const T> g, GradSink<T>& sink) {
                            if (!sink.wants(in)) return;
                            auto dst = sink.slot(in);
                            for (std::size_t i = 0; i < per; ++i) dst[index * per + i] += g[i];
                          });
}

const std::vector<std::string>& op_names() {
  static const std::vector<std::string> names{
      "add",         "subtract",   "multiply",      "scalar-scale", "concat-channels", "slice-channels",
      "pad-spatial", "absolute",   "leaky-relu",    "relu",         "sigmoid",         "tanh",
      "sum",         "mean",       "bilinear-resize", "space-to-depth", "depth-to-space"};
  return names;
}

template <typename T>
BasicTensor<T> eval(const OpDesc& op, const std::vector<BasicTensor<T>>& in) {
  auto arity = [&](std::size_t n) {
    if (in.size() != n) {
      throw ShapeError(op.name + ": expected " + std::to_string(n) + " inputs, got " + std::to_string(in.size()));
    }
  };
  const std::string& n = op.name;
  if (n == "add") return arity(2), add(in[0], in[1]);
  if (n == "subtract") return arity(2), sub(in[0], in[1]);
  if (n == "multiply") return arity(2), mul(in[0], in[1]);
  if (n == "scalar-scale") return arity(1), scale(in[0], op.alpha);
  if (n == "concat-channels") return concat_channels(in);
  if (n == "slice-channels") return arity(1), slice_channels(in[0], op.begin, op.count);
  if (n == "pad-spatial") return arity(1), pad_spatial(in[0], op.pad);
  if (n == "absolute") return arity(1), abs(in[0]);
  if (n == "leaky-relu") return arity(1), leaky_relu(in[0], op.alpha);
  if (n == "relu") return arity(1), relu(in[0]);
  if (n == "sigmoid") return arity(1), sigmoid(in[0]);
  if (n == "tanh") return arity(1), tanh(in[0]);
  if (n == "sum") return arity(1), sum(in[0]);
  if (n == "mean") return arity(1), mean(in[0]);
  if (n == "bilinear-resize") return arity(1), resize_bilinear(in[0], op.alpha);
  if (n == "space-to-depth") return arity(1), space_to_depth(in[0], op.block);
  if (n == "depth-to-space") return arity(1), depth_to_space(in[0], op.block);
  throw Error("unknown op descriptor '" + n + "'");
}

#define BLURVID_INSTANTIATE_OPS(T)                                                        \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);              \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);              \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);              \
  template BasicTensor<T> scale(const BasicTensor<T>&, double);                           \
  template BasicTensor<T> abs(const BasicTensor<T>&);                                     \
  template BasicTensor<T> leaky_relu(const BasicTensor<T>&, double);                      \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                    \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                 \
  template BasicTensor<T> tanh(const BasicTensor<T>&);                                    \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                     \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                    \
  template BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>&);            \
  template BasicTensor<T> slice_channels(const BasicTensor<T>&, int, int);                \
  template BasicTensor<T> pad_spatial(const BasicTensor<T>&, int);                        \
  template BasicTensor<T> resize_bilinear(const BasicTensor<T>&, double);                 \
  template BasicTensor<T> space_to_depth(const BasicTensor<T>&, int);                     \
  template BasicTensor<T> depth_to_space(const BasicTensor<T>&, int);                     \
  template BasicTensor<T> concat_batch(const std::vector<BasicTensor<T>>&);               \
  template BasicTensor<T> slice_batch(const BasicTensor<T>&, int);                        \
  template BasicTensor<T> eval(const OpDesc&, const std::vector<BasicTensor<T>>&);

BLURVID_INSTANTIATE_OPS(float)
BLURVID_INSTANTIATE_OPS(double)

}  // namespace blurvid
