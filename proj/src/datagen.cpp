#include "blurvid/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <thread>

#include "blurvid/image_io.hpp"

namespace blurvid {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined key
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

struct SpritePatch {
  int R = 0;                 // patch is (2R+1)^2, centered on the sprite position
  std::vector<double> rgb;   // premultiplied color, 3 planes
  std::vector<double> alpha;
};

SpritePatch make_patch(const Sprite& s, std::uint64_t seed) {
  std::mt19937_64 rng(mix(seed, s.texture_seed));
  double base[3], amp[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = uniform(rng, 0.15, 0.85);
    amp[c] = uniform(rng, 0.05, 0.2);
  }
  const double theta = uniform(rng, 0, std::numbers::pi);
  const double period = uniform(rng, 3.0, 6.0);
  const double phase = uniform(rng, 0, 2 * std::numbers::pi);

  SpritePatch p;
  p.R = static_cast<int>(std::ceil(s.radius)) + 1;
  const int S = 2 * p.R + 1;
  p.rgb.assign(static_cast<std::size_t>(3) * S * S, 0.0);
  p.alpha.assign(static_cast<std::size_t>(S) * S, 0.0);
  auto cover = [&](double d) { return std::clamp(s.radius + 0.5 - d, 0.0, 1.0); };
  for (int v = 0; v < S; ++v)
    for (int u = 0; u < S; ++u) {
      const double du = u - p.R, dv = v - p.R;
      const double a = s.shape == SpriteShape::kDisc ? cover(std::hypot(du, dv))
                                                     : std::min(cover(std::abs(du)), cover(std::abs(dv)));
      const std::size_t i = static_cast<std::size_t>(v) * S + u;
      p.alpha[i] = a;
      const double stripe = std::sin(2 * std::numbers::pi * (du * std::cos(theta) + dv * std::sin(theta)) / period + phase);
      for (int c = 0; c < 3; ++c) {
        p.rgb[c * S * S + i] = a * std::clamp(base[c] + amp[c] * stripe, 0.0, 1.0);
      }
    }
  return p;
}

std::vector<double> render_background(const SceneSpec& spec, std::uint64_t seed) {
  const int H = spec.height, W = spec.width;
  std::vector<double> img(static_cast<std::size_t>(3) * H * W, 0.0);
  if (spec.background_seed == 0) return img;
  std::mt19937_64 rng(mix(seed, spec.background_seed));
  for (int c = 0; c < 3; ++c) {
    const double level = uniform(rng, 0.3, 0.7);
    double a[3], fx[3], fy[3], ph[3];
    for (int k = 0; k < 3; ++k) {
      a[k] = uniform(rng, 0.03, 0.1);
      fx[k] = uniform(rng, -2.0, 2.0);
      fy[k] = uniform(rng, -2.0, 2.0);
      ph[k] = uniform(rng, 0, 2 * std::numbers::pi);
    }
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double v = level;
        for (int k = 0; k < 3; ++k) {
          v += a[k] * std::sin(2 * std::numbers::pi * (fx[k] * x / W + fy[k] * y / H) + ph[k]);
        }
        img[(static_cast<std::size_t>(c) * H + y) * W + x] = std::clamp(v, 0.0, 1.0);
      }
  }
  return img;
}

// Composites one sprite at a fractional position over `img`.
void splat(std::vector<double>& img, int H, int W, const SpritePatch& p, double px, double py) {
  const int S = 2 * p.R + 1;
  const int ix = static_cast<int>(std::floor(px)), iy = static_cast<int>(std::floor(py));
  const double fx = px - ix, fy = py - iy;
  // accumulate premultiplied color and coverage on a local window
  const int L = S + 1;
  std::vector<double> acc(static_cast<std::size_t>(4) * L * L, 0.0);
  const double w[2][2] = {{(1 - fx) * (1 - fy), fx * (1 - fy)}, {(1 - fx) * fy, fx * fy}};
  for (int v = 0; v < S; ++v)
    for (int u = 0; u < S; ++u) {
      const std::size_t i = static_cast<std::size_t>(v) * S + u;
      for (int oy = 0; oy < 2; ++oy)
        for (int ox = 0; ox < 2; ++ox) {
          const std::size_t o = static_cast<std::size_t>(v + oy) * L + u + ox;
          acc[o] += w[oy][ox] * p.alpha[i];
          for (int c = 0; c < 3; ++c) acc[(c + 1) * L * L + o] += w[oy][ox] * p.rgb[c * S * S + i];
        }
    }
  for (int v = 0; v < L; ++v)
    for (int u = 0; u < L; ++u) {
      const int y = iy - p.R + v, x = ix - p.R + u;
      if (y < 0 || y >= H || x < 0 || x >= W) continue;
      const std::size_t o = static_cast<std::size_t>(v) * L + u;
      const double a = std::min(acc[o], 1.0);
      for (int c = 0; c < 3; ++c) {
        double& dst = img[(static_cast<std::size_t>(c) * H + y) * W + x];
        dst = dst * (1 - a) + acc[(c + 1) * L * L + o];
      }
    }
}

Tensor to_tensor(const std::vector<double>& img, int H, int W) {
  std::vector<float> v(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) v[i] = static_cast<float>(std::clamp(img[i], 0.0, 1.0));
  return Tensor({1, 3, H, W}, std::move(v));
}

// Bilinear sample of a (1,C,H,W) plane set at real coordinates, edge clamped.
Tensor resample(const Tensor& img, bool flip, double zoom) {
  const int C = img.dim(1), H = img.dim(2), W = img.dim(3);
  const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
  std::vector<float> out(static_cast<std::size_t>(img.size()));
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double xs0 = flip ? (W - 1 - x) : x;
      const double sx = std::clamp(cx + (xs0 - cx) / zoom, 0.0, W - 1.0);
      const double sy = std::clamp(cy + (y - cy) / zoom, 0.0, H - 1.0);
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
      const double ax = sx - x0, ay = sy - y0;
      for (int c = 0; c < C; ++c) {
        auto at = [&](int yy, int xx) { return static_cast<double>(img[(static_cast<std::int64_t>(c) * H + yy) * W + xx]); };
        const double v = (at(y0, x0) * (1 - ax) + at(y0, x1) * ax) * (1 - ay) + (at(y1, x0) * (1 - ax) + at(y1, x1) * ax) * ay;
        out[(static_cast<std::size_t>(c) * H + y) * W + x] = static_cast<float>(v);
      }
    }
  return Tensor(img.shape(), std::move(out));
}

}  // namespace

void SceneSpec::validate() const {
  if (height < 1 || width < 1 || frames < 1) throw Error("scene: canvas and frame count must be positive");
  const double max_step = std::min(height, width) / 8.0;
  for (std::size_t i = 0; i < sprites.size(); ++i) {
    const auto& s = sprites[i];
    if (!(s.radius > 0)) throw Error("scene: sprite " + std::to_string(i) + " has non-positive radius");
    for (int t = 0; t < frames; ++t) {
      const double x = s.x_at(t), y = s.y_at(t);
      if (x < s.radius || x > width - 1 - s.radius || y < s.radius || y > height - 1 - s.radius) {
        throw Error("scene: sprite " + std::to_string(i) + " trajectory exits the canvas at frame " + std::to_string(t));
      }
      if (t > 0 && std::hypot(x - s.x_at(t - 1), y - s.y_at(t - 1)) > max_step) {
        throw Error("scene: sprite " + std::to_string(i) + " moves more than " + std::to_string(max_step) +
                    " px between frames");
      }
    }
  }
}

SceneSpec random_scene(std::uint64_t seed, int size, int frames, const SceneOptions& opt) {
  std::mt19937_64 rng(mix(seed, 0x5CE7E));
  SceneSpec s;
  s.height = s.width = size;
  s.frames = frames;
  s.background_seed = mix(seed, 0xB6) | 1;
  const int count = opt.min_sprites + static_cast<int>(rng() % static_cast<std::uint64_t>(opt.max_sprites - opt.min_sprites + 1));
  const double span = std::max(frames - 1, 0);
  const double max_speed = std::min(opt.max_speed, size / 8.0);
  for (int k = 0; k < count; ++k) {
    Sprite sp;
    sp.shape = (rng() & 1) ? SpriteShape::kDisc : SpriteShape::kSquare;
    sp.radius = uniform(rng, size / 10.0, size / 6.0);
    sp.texture_seed = rng();
    double speed = uniform(rng, 0.0, max_speed);
    const double angle = uniform(rng, 0, 2 * std::numbers::pi);
    // keep the whole trajectory at least one radius inside the canvas
    const double room = size - 1 - 2 * sp.radius;
    if (speed * span > room) speed = room / std::max(span, 1.0);
    sp.vx = speed * std::cos(angle);
    sp.vy = speed * std::sin(angle);
    const double lo_x = sp.radius + std::max(0.0, -sp.vx * span), hi_x = size - 1 - sp.radius - std::max(0.0, sp.vx * span);
    const double lo_y = sp.radius + std::max(0.0, -sp.vy * span), hi_y = size - 1 - sp.radius - std::max(0.0, sp.vy * span);
    sp.x = uniform(rng, lo_x, std::max(lo_x, hi_x));
    sp.y = uniform(rng, lo_y, std::max(lo_y, hi_y));
    s.sprites.push_back(sp);
  }
  s.validate();
  return s;
}

VideoSequence synth_sequence(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto background = render_background(spec, seed);
  std::vector<SpritePatch> patches;
  for (const auto& s : spec.sprites) patches.push_back(make_patch(s, seed));
  VideoSequence v;
  for (int t = 0; t < spec.frames; ++t) {
    auto img = background;
    for (std::size_t k = 0; k < spec.sprites.size(); ++k) {
      splat(img, spec.height, spec.width, patches[k], spec.sprites[k].x_at(t), spec.sprites[k].y_at(t));
    }
    v.frames.push_back(to_tensor(img, spec.height, spec.width));
  }
  return v;
}

BlurPair form_blur(const VideoSequence& video) {
  if (video.frames.empty()) throw Error("form_blur: empty sequence");
  const auto& first = video.frames.front();
  std::vector<double> acc(static_cast<std::size_t>(first.size()), 0.0);
  for (const auto& f : video.frames) {
    if (f.shape() != first.shape()) throw ShapeError("form_blur: frame " + to_string(f.shape()) + " vs " + to_string(first.shape()));
    for (std::int64_t i = 0; i < f.size(); ++i) acc[static_cast<std::size_t>(i)] += f[i];
  }
  std::vector<float> out(acc.size());
  const double n = static_cast<double>(video.frames.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / n);
  BlurPair p;
  p.blurred = Tensor(first.shape(), std::move(out));
  p.source = video;
  return p;
}

AugmentParams draw_augment(std::uint64_t seed) {
  std::mt19937_64 rng(mix(seed, 0xA06));
  AugmentParams a;
  a.flip = (rng() & 1) != 0;
  a.zoom = std::clamp(uniform(rng, 0.2, 2.0), 1.0, 2.0);
  return a;
}

BlurPair augment(const BlurPair& pair, const AugmentParams& params) {
  if (!(params.zoom >= 1.0 && params.zoom <= 2.0)) throw Error("augment: zoom must lie in [1, 2]");
  BlurPair out = pair;
  if (!params.flip && params.zoom == 1.0) return out;
  out.blurred = resample(pair.blurred, params.flip, params.zoom);
  for (auto& f : out.source.frames) f = resample(f, params.flip, params.zoom);
  out.scene.reset();  // sprite coordinates no longer describe the frames
  return out;
}

BlurPair augment(const BlurPair& pair, std::uint64_t seed) { return augment(pair, draw_augment(seed)); }

double mean_sprite_speed(const SceneSpec& spec) {
  if (spec.sprites.empty()) return 0.0;
  double s = 0;
  for (const auto& sp : spec.sprites) s += std::hypot(sp.vx, sp.vy);
  return s / static_cast<double>(spec.sprites.size());
}

nlohmann::json to_json(const SceneSpec& spec) {
  nlohmann::json j;
  j["height"] = spec.height;
  j["width"] = spec.width;
  j["frames"] = spec.frames;
  j["background_seed"] = spec.background_seed;
  j["sprites"] = nlohmann::json::array();
  for (const auto& s : spec.sprites) {
    j["sprites"].push_back({{"shape", s.shape == SpriteShape::kDisc ? "disc" : "square"},
                            {"radius", s.radius},
                            {"texture_seed", s.texture_seed},
                            {"position", {s.x, s.y}},
                            {"velocity", {s.vx, s.vy}},
                            {"acceleration", {s.ax, s.ay}}});
  }
  return j;
}

SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec s;
  s.height = j.at("height").get<int>();
  s.width = j.at("width").get<int>();
  s.frames = j.at("frames").get<int>();
  s.background_seed = j.at("background_seed").get<std::uint64_t>();
  for (const auto& e : j.at("sprites")) {
    Sprite sp;
    const auto shape = e.at("shape").get<std::string>();
    if (shape != "disc" && shape != "square") throw Error("scene: unknown sprite shape '" + shape + "'");
    sp.shape = shape == "disc" ? SpriteShape::kDisc : SpriteShape::kSquare;
    sp.radius = e.at("radius").get<double>();
    sp.texture_seed = e.at("texture_seed").get<std::uint64_t>();
    sp.x = e.at("position").at(0).get<double>();
    sp.y = e.at("position").at(1).get<double>();
    sp.vx = e.at("velocity").at(0).get<double>();
    sp.vy = e.at("velocity").at(1).get<double>();
    if (e.contains("acceleration")) {
      sp.ax = e.at("acceleration").at(0).get<double>();
      sp.ay = e.at("acceleration").at(1).get<double>();
    }
    s.sprites.push_back(sp);
  }
  return s;
}

namespace {

std::string seq_dir(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seq_%05zu", i);
  return buf;
}

std::string frame_file(std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%02zu.png", n);
  return buf;
}

}  // namespace

void write_dataset(const std::vector<BlurPair>& pairs, const fs::path& dir) {
  if (pairs.empty()) throw Error("write_dataset: no pairs");
  const std::size_t N = pairs.front().source.frames.size();
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["version"] = kDatasetVersion;
  manifest["frames"] = N;
  manifest["count"] = pairs.size();
  manifest["height"] = pairs.front().blurred.dim(2);
  manifest["width"] = pairs.front().blurred.dim(3);
  manifest["sequences"] = nlohmann::json::array();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (p.source.frames.size() != N) throw Error("write_dataset: sequences have different frame counts");
    const fs::path sub = dir / seq_dir(i);
    fs::create_directories(sub);
    for (std::size_t n = 0; n < N; ++n) write_png(sub / frame_file(n), p.source.frames[n]);
    write_png(sub / "blur.png", p.blurred);
    nlohmann::json entry{{"dir", seq_dir(i)}, {"seed", p.seed}};
    entry["scene"] = p.scene ? to_json(*p.scene) : nlohmann::json(nullptr);
    manifest["sequences"].push_back(entry);
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error("cannot write '" + (dir / "manifest.json").string() + "'");
  out << manifest.dump(2) << '\n';
}

std::vector<BlurPair> read_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("dataset directory '" + dir.string() + "' does not exist");
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) {
    if (fs::is_empty(dir)) throw Error("empty dataset: '" + dir.string() + "' contains no manifest or sequences");
    throw Error("missing manifest '" + mpath.string() + "'");
  }
  nlohmann::json m;
  try {
    std::ifstream in(mpath);
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("corrupt manifest '" + mpath.string() + "': " + e.what());
  }
  std::vector<BlurPair> pairs;
  try {
    if (m.at("version").get<int>() != kDatasetVersion) {
      throw Error("manifest '" + mpath.string() + "': unsupported version " + m.at("version").dump());
    }
    const auto N = m.at("frames").get<std::size_t>();
    const auto count = m.at("count").get<std::size_t>();
    const auto& seqs = m.at("sequences");
    if (count == 0) throw Error("empty dataset: manifest '" + mpath.string() + "' lists no sequences");
    if (seqs.size() != count) {
      throw Error("manifest '" + mpath.string() + "': count " + std::to_string(count) + " but " +
                  std::to_string(seqs.size()) + " sequence entries");
    }
    for (const auto& e : seqs) {
      const fs::path sub = dir / e.at("dir").get<std::string>();
      std::size_t on_disk = 0;
      if (fs::is_directory(sub)) {
        for (const auto& f : fs::directory_iterator(sub)) {
          const auto name = f.path().filename().string();
          if (name.rfind("frame_", 0) == 0 && f.path().extension() == ".png") ++on_disk;
        }
      }
      if (on_disk != N) {
        throw Error("sequence '" + sub.string() + "': manifest says " + std::to_string(N) + " frames, found " +
                    std::to_string(on_disk));
      }
      BlurPair p;
      for (std::size_t n = 0; n < N; ++n) p.source.frames.push_back(read_png(sub / frame_file(n)));
      p.blurred = read_png(sub / "blur.png");
      p.seed = e.at("seed").get<std::uint64_t>();
      if (!e.at("scene").is_null()) p.scene = scene_from_json(e.at("scene"));
      pairs.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("corrupt manifest '" + mpath.string() + "': " + e.what());
  }
  return pairs;
}

std::vector<BlurPair> synth_dataset(int count, int frames, int size, std::uint64_t seed, int threads,
                                    const SceneOptions& opt) {
  if (count < 1) throw Error("synth: count must be >= 1");
  std::vector<BlurPair> pairs(static_cast<std::size_t>(count));
  auto work = [&](int begin, int step) {
    for (int i = begin; i < count; i += step) {
      const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
      auto spec = random_scene(s, size, frames, opt);
      auto pair = form_blur(synth_sequence(spec, s));
      pair.scene = spec;
      pair.seed = s;
      pairs[static_cast<std::size_t>(i)] = std::move(pair);
    }
  };
  threads = std::clamp(threads, 1, count);
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }
  return pairs;
}

}  // namespace blurvid
