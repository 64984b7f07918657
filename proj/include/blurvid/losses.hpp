#pragma once

// Training objectives and evaluation metrics.
//
// Every L1 norm is a per-element mean, so loss magnitudes do not depend on
// resolution. Frame pyramids are indexed coarse to fine (1/8 ... 1).

#include <array>
#include <vector>

#include "blurvid/models.hpp"

namespace blurvid {

enum class DataTerm { kReconstruction, kOrderInvariant };

struct LossConfig {
  double mu = 0.02;
  std::array<double, kPyramidLevels> lambda{0.1, 0.2, 0.4, 1.0};
  DataTerm mode = DataTerm::kReconstruction;

  void validate() const;
};

// L_j = sum_n mean |pred[n][j] - gt[n][j]|
template <typename T>
std::array<BasicTensor<T>, kPyramidLevels> data_loss_l1(const std::vector<Pyramid<T>>& pred,
                                                        const std::vector<Pyramid<T>>& gt);

// Anisotropic total variation with forward differences (zero past the last
// row/column), summed over channels and divided by the element count.
template <typename T>
BasicTensor<T> tv_loss(const BasicTensor<T>& flow);

// Pairs frame n with its mirror N-1-n (0-based):
//   mean| |p_n + p_m| - |g_n + g_m| | + mean| |p_n - p_m| - |g_n - g_m| |
// summed over pairs; for odd N the central frame adds mean|p_c - g_c|.
template <typename T>
BasicTensor<T> order_invariant_loss(const std::vector<BasicTensor<T>>& pred, const std::vector<BasicTensor<T>>& gt);

template <typename T>
std::array<BasicTensor<T>, kPyramidLevels> order_invariant_losses(const std::vector<Pyramid<T>>& pred,
                                                                  const std::vector<Pyramid<T>>& gt);

template <typename T>
struct LossTerms {
  BasicTensor<T> total;
  std::array<double, kPyramidLevels> data{};  // L_j
  std::array<double, kPyramidLevels> tv{};    // sum_n TV(f_{n,j})
};

// sum_j lambda_j [ L_j + mu * sum_n TV(f_{n,j}) ]
template <typename T>
LossTerms<T> total_loss(const PredictionSet<T>& pred, const std::vector<Pyramid<T>>& gt, const LossConfig& cfg);

// 10 log10(1 / MSE); +infinity for identical inputs.
double psnr(const Tensor& a, const Tensor& b);

// Frames reversed in time.
template <typename T>
std::vector<BasicTensor<T>> reversed(std::vector<BasicTensor<T>> frames);

}  // namespace blurvid
