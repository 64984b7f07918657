#pragma once

// The four networks of the blurred-image-to-video pipeline:
//   RVE  recurrent video encoder   frames -> ConvLSTM state
//   RVD  recurrent video decoder   state + central frame -> per-step flow
//                                  pyramids and warped frames
//   BIE  blurred image encoder     (blurred, sharp) -> RVD initial state
//   DM   deblurring module         blurred -> sharp central frame
//
// Parameter names are prefixed by the network ("rve.", "rvd.", "bie.", "dm.").

#include <cstdint>
#include <string>
#include <vector>

#include "blurvid/layers.hpp"
#include "blurvid/warp.hpp"

namespace blurvid {

struct ModelConfig {
  int frames = 5;
  int height = 64;
  int width = 64;
  // RVE/RVD block widths are base * (1, 2, 4, 8); the ConvLSTM has base * 8
  // channels. 16 reproduces the full-width networks.
  int base_channels = 4;
  // DM widths: level l has dm_base * (l + 1) channels.
  int dm_base = 16;
  int dm_growth = 16;
  int dm_rdb_layers = 4;
  int dm_rdbs_per_level = 2;
  double dm_residual_scale = 0.1;
  // When set, the BIE predicts the RVD cell state with a second head instead
  // of leaving it at zero.
  bool bie_predicts_cell = false;
  // Initial-weight gain of the four flow heads.
  double flow_head_gain = 0.1;

  int hidden() const { return base_channels * 8; }
  int center_index() const { return frames / 2; }

  static ModelConfig desk();
  static ModelConfig full();
  void validate() const;
};

template <typename T>
struct PredictionSet {
  std::vector<Pyramid<T>> flows;   // flows[n][j], (B,2,H/2^(3-j),W/2^(3-j))
  std::vector<Pyramid<T>> frames;  // frames[n][j] = warp(center pyramid[j], flows[n][j])
  ConvLstmState<T> final_state;
};

ParamSpecs rve_params(const ModelConfig& cfg);
ParamSpecs rvd_params(const ModelConfig& cfg);
ParamSpecs bie_params(const ModelConfig& cfg);
ParamSpecs dm_params(const ModelConfig& cfg);

// Per-network trainable parameter counts, keyed "rve", "rvd", "bie", "dm".
std::vector<std::pair<std::string, std::int64_t>> parameter_counts(const ModelConfig& cfg);

// Zeroes the flow-head weights and biases of the decoder.
void zero_flow_heads(ParamMap<float>& p);

void check_divisible(int height, int width, int by, const char* what);

// frames: N tensors (B,3,H,W).
template <typename T>
ConvLstmState<T> rve_forward(const ParamMap<T>& p, const ModelConfig& cfg, const std::vector<BasicTensor<T>>& frames);

// Rolls the decoder for `steps` time steps from `init`, warping `center`.
template <typename T>
PredictionSet<T> rvd_rollout(const ParamMap<T>& p, const ModelConfig& cfg, const ConvLstmState<T>& init,
                             const BasicTensor<T>& center, int steps);

template <typename T>
ConvLstmState<T> bie_forward(const ParamMap<T>& p, const ModelConfig& cfg, const BasicTensor<T>& blurred,
                             const BasicTensor<T>& sharp, const NormContext& norm);

// Each color plane runs through the same trunk. `inference` clamps to [0,1].
template <typename T>
BasicTensor<T> dm_forward(const ParamMap<T>& p, const ModelConfig& cfg, const BasicTensor<T>& blurred,
                          bool inference = false);

}  // namespace blurvid
