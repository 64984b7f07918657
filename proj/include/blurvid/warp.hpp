#pragma once

// Per-pixel spatial transformer: backward warping with bilinear sampling.
//
// Flows are (B,2,H,W) in pixel units of their own resolution; channel 0 is
// the horizontal displacement, channel 1 the vertical one. Sampling
// coordinates are clamped to the image, so every output pixel is a convex
// combination of input pixels.

#include <array>

#include "blurvid/tensor.hpp"

namespace blurvid {

// Identity sampling coordinates, shape (1,2,H,W): x index in channel 0,
// y index in channel 1.
template <typename T>
BasicTensor<T> make_grid(int height, int width);

// output(p) = image sampled at p + flow(p). Differentiable in image and flow.
template <typename T>
BasicTensor<T> warp_bilinear(const BasicTensor<T>& image, const BasicTensor<T>& flow);

// output(p) = image sampled at the absolute coordinates coords(p).
template <typename T>
BasicTensor<T> sample_bilinear(const BasicTensor<T>& image, const BasicTensor<T>& coords);

// 2x bilinear resize with displacements doubled.
template <typename T>
BasicTensor<T> upsample_flow(const BasicTensor<T>& flow);

// Fractions 1/8, 1/4, 1/2, 1 of full resolution.
inline constexpr int kPyramidLevels = 4;

template <typename T>
using Pyramid = std::array<BasicTensor<T>, kPyramidLevels>;

// Image pyramid by repeated 2x box averaging; level 3 is the input.
template <typename T>
Pyramid<T> image_pyramid(const BasicTensor<T>& image);

}  // namespace blurvid
