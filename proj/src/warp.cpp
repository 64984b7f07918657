#include "blurvid/warp.hpp"

#include <algorithm>
#include <cmath>

#include "blurvid/ops.hpp"

namespace blurvid {

template <typename T>
BasicTensor<T> make_grid(int height, int width) {
  std::vector<T> v(static_cast<std::size_t>(2) * height * width);
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      v[static_cast<std::size_t>(y) * width + x] = static_cast<T>(x);
      v[plane + static_cast<std::size_t>(y) * width + x] = static_cast<T>(y);
    }
  return BasicTensor<T>({1, 2, height, width}, std::move(v));
}

namespace {

template <typename T, bool kAbsolute>
BasicTensor<T> sample_impl(const char* name, const BasicTensor<T>& image, const BasicTensor<T>& flow) {
  if (image.rank() != 4 || flow.rank() != 4 || flow.dim(1) != 2 || flow.dim(0) != image.dim(0) ||
      flow.dim(2) != image.dim(2) || flow.dim(3) != image.dim(3)) {
    throw ShapeError(std::string(name) + ": image " + to_string(image.shape()) + " and flow " +
                     to_string(flow.shape()) + " do not match");
  }
  const int B = image.dim(0), C = image.dim(1), H = image.dim(2), W = image.dim(3);
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  const auto& img = image.values();
  const auto& fl = flow.values();
  std::vector<T> out(img.size());
  const T xmax = static_cast<T>(W - 1), ymax = static_cast<T>(H - 1);

  for (int b = 0; b < B; ++b) {
    const T* u = fl.data() + static_cast<std::size_t>(b) * 2 * plane;
    const T* v = u + plane;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * W + x;
        const T sx = std::clamp((kAbsolute ? T(0) : static_cast<T>(x)) + u[p], T(0), xmax);
        const T sy = std::clamp((kAbsolute ? T(0) : static_cast<T>(y)) + v[p], T(0), ymax);
        const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
        const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
        const T ax = sx - x0, ay = sy - y0;
        for (int c = 0; c < C; ++c) {
          const T* s = img.data() + (static_cast<std::size_t>(b) * C + c) * plane;
          const T top = s[y0 * W + x0] * (T(1) - ax) + s[y0 * W + x1] * ax;
          const T bot = s[y1 * W + x0] * (T(1) - ax) + s[y1 * W + x1] * ax;
          out[(static_cast<std::size_t>(b) * C + c) * plane + p] = top * (T(1) - ay) + bot * ay;
        }
      }
  }

  Tape<T>* tape = common_tape({&image, &flow});
  if (!tape) return BasicTensor<T>(image.shape(), std::move(out));
  const int ni = image.tracked() ? image.node() : -1, nf = flow.tracked() ? flow.node() : -1;
  return tape->record(
      name, {&image, &flow}, image.shape(), std::move(out),
      [is = image.storage(), fs = flow.storage(), B, C, H, W, plane, ni, nf, xmax, ymax](std::span<const T> g,
                                                                                        GradSink<T>& sink) {
        const bool want_img = sink.wants(ni), want_flow = sink.wants(nf);
        T* dimg = want_img ? sink.slot(ni).data() : nullptr;
        T* dflow = want_flow ? sink.slot(nf).data() : nullptr;
        for (int b = 0; b < B; ++b) {
          const T* u = fs->data() + static_cast<std::size_t>(b) * 2 * plane;
          const T* v = u + plane;
          for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
              const std::size_t p = static_cast<std::size_t>(y) * W + x;
              const T rx = (kAbsolute ? T(0) : static_cast<T>(x)) + u[p];
              const T ry = (kAbsolute ? T(0) : static_cast<T>(y)) + v[p];
              const T sx = std::clamp(rx, T(0), xmax), sy = std::clamp(ry, T(0), ymax);
              // clamped coordinates do not move with the flow
              const bool free_x = rx > T(0) && rx < xmax, free_y = ry > T(0) && ry < ymax;
              const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
              const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
              const T ax = sx - x0, ay = sy - y0;
              T gu = 0, gv = 0;
              for (int c = 0; c < C; ++c) {
                const std::size_t base = (static_cast<std::size_t>(b) * C + c) * plane;
                const T go = g[base + p];
                if (want_img) {
                  T* d = dimg + base;
                  d[y0 * W + x0] += go * (T(1) - ax) * (T(1) - ay);
                  d[y0 * W + x1] += go * ax * (T(1) - ay);
                  d[y1 * W + x0] += go * (T(1) - ax) * ay;
                  d[y1 * W + x1] += go * ax * ay;
                }
                if (want_flow) {
                  const T* s = is->data() + base;
                  const T v00 = s[y0 * W + x0], v01 = s[y0 * W + x1], v10 = s[y1 * W + x0], v11 = s[y1 * W + x1];
                  if (free_x) gu += go * ((v01 - v00) * (T(1) - ay) + (v11 - v10) * ay);
                  if (free_y) gv += go * ((v10 - v00) * (T(1) - ax) + (v11 - v01) * ax);
                }
              }
              if (want_flow) {
                dflow[static_cast<std::size_t>(b) * 2 * plane + p] += gu;
                dflow[static_cast<std::size_t>(b) * 2 * plane + plane + p] += gv;
              }
            }
        }
      });
}

}  // namespace

template <typename T>
BasicTensor<T> warp_bilinear(const BasicTensor<T>& image, const BasicTensor<T>& flow) {
  return sample_impl<T, false>("warp", image, flow);
}

template <typename T>
BasicTensor<T> sample_bilinear(const BasicTensor<T>& image, const BasicTensor<T>& coords) {
  return sample_impl<T, true>("sample", image, coords);
}

template <typename T>
BasicTensor<T> upsample_flow(const BasicTensor<T>& flow) {
  if (flow.rank() != 4 || flow.dim(1) != 2) throw ShapeError("upsample_flow: expected (B,2,H,W), got " + to_string(flow.shape()));
  return scale(resize_bilinear(flow, 2.0), 2.0);
}

template <typename T>
Pyramid<T> image_pyramid(const BasicTensor<T>& image) {
  Pyramid<T> p;
  p[kPyramidLevels - 1] = image;
  for (int j = kPyramidLevels - 2; j >= 0; --j) p[j] = resize_bilinear(p[j + 1], 0.5);
  return p;
}

#define BLURVID_INSTANTIATE_WARP(T)                                                    \
  template BasicTensor<T> make_grid<T>(int, int);                                      \
  template BasicTensor<T> warp_bilinear(const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> sample_bilinear(const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> upsample_flow(const BasicTensor<T>&);                        \
  template Pyramid<T> image_pyramid(const BasicTensor<T>&);

BLURVID_INSTANTIATE_WARP(float)
BLURVID_INSTANTIATE_WARP(double)

}  // namespace blurvid
