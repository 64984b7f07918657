#pragma once

// Differentiable tensor operations. Every op records a node on the tape of
// its tracked inputs; ops on detached inputs are plain evaluations.

#include <string>
#include <vector>

#include "blurvid/tensor.hpp"

namespace blurvid {

// Elementwise, identical shapes.
template <typename T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> scale(const BasicTensor<T>& a, double factor);

template <typename T> BasicTensor<T> abs(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> leaky_relu(const BasicTensor<T>& x, double slope = 0.2);
template <typename T> BasicTensor<T> relu(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> sigmoid(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> tanh(const BasicTensor<T>& x);

// Reductions to shape (1); accumulation in double.
template <typename T> BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> mean(const BasicTensor<T>& x);

// Channel ops on rank-4 (B,C,H,W) tensors.
template <typename T> BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& parts);
template <typename T> BasicTensor<T> slice_channels(const BasicTensor<T>& x, int begin, int count);
// Zero padding of `pad` pixels on every spatial side.
template <typename T> BasicTensor<T> pad_spatial(const BasicTensor<T>& x, int pad);

// Bilinear resize by `factor` (output extent = round(extent * factor)),
// half-pixel centers (align-corners false), clamped at the edges. A factor
// of 0.5 is an exact 2x2 box average.
template <typename T> BasicTensor<T> resize_bilinear(const BasicTensor<T>& x, double factor);

// (B,C,H,W) -> (B,C*b*b,H/b,W/b); channel index = c*b*b + dy*b + dx.
template <typename T> BasicTensor<T> space_to_depth(const BasicTensor<T>& x, int block);
template <typename T> BasicTensor<T> depth_to_space(const BasicTensor<T>& x, int block);

// Batch stacking of (1,C,H,W) tensors along axis 0, and the reverse.
template <typename T> BasicTensor<T> concat_batch(const std::vector<BasicTensor<T>>& parts);
template <typename T> BasicTensor<T> slice_batch(const BasicTensor<T>& x, int index);

// Generic dispatcher over the named elementwise/structural ops.
struct OpDesc {
  std::string name;     // add, subtract, multiply, scalar-scale, concat-channels, slice-channels,
                        // pad-spatial, absolute, leaky-relu, relu, sigmoid, tanh, sum, mean,
                        // bilinear-resize, space-to-depth, depth-to-space
  double alpha = 0.0;   // slope, scale factor or resize factor
  int block = 2;
  int begin = 0;
  int count = 0;
  int pad = 0;
};

const std::vector<std::string>& op_names();

template <typename T>
BasicTensor<T> eval(const OpDesc& op, const std::vector<BasicTensor<T>>& inputs);

}  // namespace blurvid
