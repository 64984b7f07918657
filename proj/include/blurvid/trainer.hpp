#pragma once

// Adam, the training stages and checkpoint persistence.
//
//   autoencoder  RVE + RVD, reconstruction loss
//   bie          BIE from scratch, RVD fine-tuned at a reduced rate,
//                order-invariant loss; RVE is not used
//   dm           deblurring module, L1 against the central frame
//
// Checkpoint file (all integers little-endian):
//   "BAMV" u32 version u32 entry_count
//   entry: u16 name_len, name bytes, u8 rank, u32 dims[rank], f32 payload
//   footer: u64 iteration, u64 seed
// Entries hold parameters and buffers by name, Adam moments as
// "adam.m.<name>" / "adam.v.<name>" and the configuration as "meta.<key>".

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "blurvid/datagen.hpp"
#include "blurvid/losses.hpp"
#include "blurvid/models.hpp"

namespace blurvid {

// ---- Adam -----------------------------------------------------------------

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  ParamMap<float> m;
  ParamMap<float> v;
};

// One bias-corrected Adam update of the parameters named in `grads`;
// `step` is the 1-based update count. Missing moments start at zero.
// Throws on a non-finite gradient, naming the parameter.
void adam_step(ParamMap<float>& params, const std::map<std::string, Tensor>& grads, AdamMoments& moments,
               std::uint64_t step, double lr, const AdamOptions& opt = {});

// Rescales `grads` in place so their global L2 norm is at most `max_norm`;
// returns the norm before clipping.
double clip_global_norm(std::map<std::string, Tensor>& grads, double max_norm);

// ---- checkpoints ------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public Error {
 public:
  using Error::Error;
};
class BadMagicError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class TruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class VersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct Checkpoint {
  std::map<std::string, Tensor> entries;
  std::uint64_t iteration = 0;
  std::uint64_t seed = 0;
};

std::vector<std::uint8_t> serialize(const Checkpoint& ck);
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---- training state ---------------------------------------------------------

enum class Stage { kAutoencoder, kBie, kDm };

const char* stage_name(Stage s);
Stage parse_stage(const std::string& name);

struct TrainState {
  Stage stage = Stage::kAutoencoder;
  ModelConfig model;
  ParamMap<float> params;        // trainable parameters and buffers
  std::set<std::string> buffers; // names in `params` that are not trained
  AdamMoments moments;
  std::uint64_t iteration = 0;   // completed updates
  std::uint64_t seed = 0;
};

Checkpoint to_checkpoint(const TrainState& s);
TrainState from_checkpoint(const Checkpoint& ck);
ModelConfig model_from_checkpoint(const Checkpoint& ck);

// Copies every parameter of `target` whose name starts with `prefix` from
// the checkpoint; a missing entry or differing shape throws naming it.
void restore_params(ParamMap<float>& target, const Checkpoint& ck, const std::string& prefix);

TrainState init_autoencoder(const ModelConfig& model, std::uint64_t seed);
// BIE from scratch; RVD copied from a stage-1 checkpoint, which must match
// `model`.
TrainState init_bie(const ModelConfig& model, const Checkpoint& stage1, std::uint64_t seed);
TrainState init_dm(const ModelConfig& model, std::uint64_t seed);

// ---- training ---------------------------------------------------------------

struct TrainConfig {
  Stage stage = Stage::kAutoencoder;
  double lr = 1e-4;
  double rvd_lr = 2e-5;  // stage bie only
  int batch = 10;
  int iterations = 1000;  // total budget, counting resumed updates
  std::uint64_t seed = 1;
  LossConfig loss;
  bool augment = true;
  double clip_norm = 10.0;
  // When > 0 the TV weight ramps linearly from 0 to loss.mu over this many
  // iterations. Zero flows are a stable point of the TV penalty, so a ramp
  // lets motion-dependent flows form first on multi-sequence data.
  int tv_warmup = 0;

  void validate() const;
};

// Per-stage defaults (batch 16 and L1 for dm; order-invariant loss for bie).
TrainConfig default_train_config(Stage stage);

struct TrainHooks {
  std::ostream* log = nullptr;  // "iter loss lr components..." per logged iteration
  int log_every = 1;
  int checkpoint_every = 0;
  std::function<void(const TrainState&)> on_checkpoint;
};

struct TrainResult {
  TrainState state;
  std::vector<double> losses;  // one per performed update
};

// Validates the config and data, then runs updates until
// state.iteration == cfg.iterations.
TrainResult train(const TrainConfig& cfg, TrainState state, const std::vector<BlurPair>& data,
                  const TrainHooks& hooks = {});

TrainResult train_autoencoder(const TrainConfig& cfg, const ModelConfig& model, const std::vector<BlurPair>& data,
                              const TrainHooks& hooks = {});
TrainResult train_bie(const TrainConfig& cfg, const Checkpoint& stage1, const std::vector<BlurPair>& data,
                      const TrainHooks& hooks = {});
TrainResult train_dm(const TrainConfig& cfg, const ModelConfig& model, const std::vector<BlurPair>& data,
                     const TrainHooks& hooks = {});

// Dataset indices used at `iteration`: a per-epoch permutation drawn from
// `seed`, so every pair is visited once per epoch.
std::vector<int> sample_indices(std::uint64_t seed, std::uint64_t iteration, int batch, int count);

// Throws if the pairs are empty or do not match the model's frame count and
// resolution.
void check_dataset(const std::vector<BlurPair>& data, const ModelConfig& model);

// ---- evaluation -------------------------------------------------------------

std::vector<Pyramid<float>> frame_pyramids(const std::vector<Tensor>& frames);

struct Reconstruction {
  PredictionSet<float> pred;
  std::vector<Tensor> frames;  // finest scale
};

Reconstruction reconstruct_autoencoder(const TrainState& ae, const VideoSequence& video);
// `sharp` is the central frame fed to the BIE (ground truth or DM output).
// Batch normalization uses batch statistics when `norm` is kTrain.
Reconstruction reconstruct_from_blur(const TrainState& bie, const Tensor& blurred, const Tensor& sharp,
                                     NormMode norm = NormMode::kEval);
Tensor deblur(const TrainState& dm, const Tensor& blurred);

// Finest-scale order-invariant error between predicted and true frames.
double order_invariant_error(const std::vector<Tensor>& pred, const std::vector<Tensor>& gt);
// Mean finest-scale per-pixel L1 over frames.
double mean_l1(const std::vector<Tensor>& pred, const std::vector<Tensor>& gt);

}  // namespace blurvid
