#pragma once

// Synthetic sharp video: textured sprites moving over a smooth background,
// blur by frame averaging, flip/zoom augmentation and dataset persistence.
//
// Dataset layout:
//   <root>/manifest.json
//   <root>/seq_%05d/frame_%02d.png
//   <root>/seq_%05d/blur.png

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "blurvid/tensor.hpp"

namespace blurvid {

enum class SpriteShape { kDisc, kSquare };

struct Sprite {
  SpriteShape shape = SpriteShape::kDisc;
  double radius = 6.0;
  std::uint64_t texture_seed = 1;
  double x = 0, y = 0;    // pixels, position at frame 0
  double vx = 0, vy = 0;  // pixels / frame
  double ax = 0, ay = 0;  // pixels / frame^2

  double x_at(double t) const { return x + vx * t + 0.5 * ax * t * t; }
  double y_at(double t) const { return y + vy * t + 0.5 * ay * t * t; }
};

struct SceneSpec {
  int height = 64;
  int width = 64;
  int frames = 5;
  // 0 renders a black background.
  std::uint64_t background_seed = 1;
  std::vector<Sprite> sprites;

  // Throws if a trajectory leaves the canvas (closer than one radius to the
  // border) or moves more than min(H,W)/8 pixels between frames.
  void validate() const;
};

struct VideoSequence {
  std::vector<Tensor> frames;  // each (1,3,H,W), values in [0,1]
  int center_index() const { return static_cast<int>(frames.size()) / 2; }
  const Tensor& center() const { return frames.at(static_cast<std::size_t>(center_index())); }
};

struct BlurPair {
  Tensor blurred;  // (1,3,H,W)
  VideoSequence source;
  std::optional<SceneSpec> scene;  // present for generated data
  std::uint64_t seed = 0;
};

struct SceneOptions {
  int min_sprites = 1;
  int max_sprites = 3;
  double max_speed = 2.0;  // pixels / frame
};

// Random valid scene; a pure function of its arguments.
SceneSpec random_scene(std::uint64_t seed, int size, int frames, const SceneOptions& opt = {});

// Renders the scene with sub-pixel sprite positions (bilinear splat).
// Textures are drawn from streams keyed by `seed` and the texture seeds.
VideoSequence synth_sequence(const SceneSpec& spec, std::uint64_t seed);

// blurred = arithmetic mean of the frames.
BlurPair form_blur(const VideoSequence& video);

struct AugmentParams {
  bool flip = false;
  double zoom = 1.0;  // magnification about the image center
};

// Flip with probability 1/2, zoom drawn from [0.2, 2] and clipped to [1, 2]
// so the zoomed crop covers the canvas.
AugmentParams draw_augment(std::uint64_t seed);
BlurPair augment(const BlurPair& pair, const AugmentParams& params);
BlurPair augment(const BlurPair& pair, std::uint64_t seed);

// Mean of the sprite velocities (pixels/frame); zero for static scenes.
double mean_sprite_speed(const SceneSpec& spec);

nlohmann::json to_json(const SceneSpec& spec);
SceneSpec scene_from_json(const nlohmann::json& j);

inline constexpr int kDatasetVersion = 1;

void write_dataset(const std::vector<BlurPair>& pairs, const std::filesystem::path& dir);
std::vector<BlurPair> read_dataset(const std::filesystem::path& dir);

// Generates `count` scenes from consecutive seeds; `threads` > 1 renders
// sequences in parallel with identical results.
std::vector<BlurPair> synth_dataset(int count, int frames, int size, std::uint64_t seed, int threads = 1,
                                    const SceneOptions& opt = {});

}  // namespace blurvid
