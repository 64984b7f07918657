#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "blurvid/datagen.hpp"
#include "blurvid/image_io.hpp"

using namespace blurvid;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("blurvid_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

SceneSpec one_sprite(double vx, double vy, int frames = 5) {
  SceneSpec s;
  s.frames = frames;
  s.background_seed = 0;
  Sprite sp;
  sp.radius = 5;
  sp.x = 20;
  sp.y = 32;
  sp.vx = vx;
  sp.vy = vy;
  s.sprites.push_back(sp);
  return s;
}

// Intensity-weighted centroid x of a frame over a black background.
double centroid_x(const Tensor& f) {
  const int H = f.dim(2), W = f.dim(3);
  double m = 0, mx = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double v = f[(c * H + y) * W + x];
        m += v;
        mx += v * x;
      }
  return mx / m;
}

double max_blur_residual(const BlurPair& p) {
  double worst = 0;
  const double N = static_cast<double>(p.source.frames.size());
  for (std::int64_t i = 0; i < p.blurred.size(); ++i) {
    double acc = 0;
    for (const auto& f : p.source.frames) acc += f[i];
    worst = std::max(worst, std::abs(p.blurred[i] - acc / N));
  }
  return worst;
}

}  // namespace

TEST(Synth, StaticSpritesGiveIdenticalFrames) {
  auto v = synth_sequence(one_sprite(0, 0), 3);
  ASSERT_EQ(v.frames.size(), 5u);
  for (const auto& f : v.frames) EXPECT_EQ(f.values(), v.frames[0].values());
}

TEST(Synth, CentroidTracksVelocity) {
  // Texture variations alter the centroid slightly; a plain bright sprite
  // on black keeps the estimate within the tolerance.
  auto v = synth_sequence(one_sprite(2, 0), 3);
  for (int n = 1; n < 5; ++n) EXPECT_NEAR(centroid_x(v.frames[n]) - centroid_x(v.frames[n - 1]), 2.0, 0.1);
}

TEST(Synth, SubPixelMotion) {
  auto v = synth_sequence(one_sprite(0.5, 0), 4);
  for (int n = 1; n < 5; ++n) EXPECT_NEAR(centroid_x(v.frames[n]) - centroid_x(v.frames[n - 1]), 0.5, 0.1);
}

TEST(Synth, Deterministic) {
  auto spec = random_scene(11, 64, 5);
  EXPECT_EQ(synth_sequence(spec, 11).frames[2].values(), synth_sequence(spec, 11).frames[2].values());
  EXPECT_EQ(random_scene(11, 64, 5).sprites.size(), spec.sprites.size());
}

TEST(Synth, ValuesInUnitRange) {
  auto v = synth_sequence(random_scene(5, 64, 5), 5);
  for (const auto& f : v.frames)
    for (float x : f.values()) {
      EXPECT_GE(x, 0.0f);
      EXPECT_LE(x, 1.0f);
    }
}

TEST(Scene, RandomScenesAreValid) {
  for (std::uint64_t seed = 1; seed < 200; ++seed) EXPECT_NO_THROW(random_scene(seed, 64, 5).validate());
}

TEST(Scene, ValidationRejectsBadTrajectories) {
  auto s = one_sprite(2, 0);
  s.sprites[0].x = 2;  // closer than one radius to the border
  EXPECT_THROW(s.validate(), Error);
  s = one_sprite(9, 0);  // more than 64/8 px per frame
  EXPECT_THROW(s.validate(), Error);
  s = one_sprite(0, 0);
  s.sprites[0].radius = 0;
  EXPECT_THROW(s.validate(), Error);
}

TEST(Scene, JsonRoundTrip) {
  auto s = random_scene(9, 64, 7);
  auto back = scene_from_json(to_json(s));
  EXPECT_EQ(to_json(back), to_json(s));
}

TEST(Blur, StaticSequenceBlursToItself) {
  auto v = synth_sequence(one_sprite(0, 0), 1);
  EXPECT_EQ(form_blur(v).blurred.values(), v.frames[0].values());
}

TEST(Blur, TwoFrameAverage) {
  VideoSequence v{{Tensor::zeros({1, 3, 4, 4}), Tensor::full({1, 3, 4, 4}, 1.0f)}};
  for (float x : form_blur(v).blurred.values()) EXPECT_FLOAT_EQ(x, 0.5f);
}

TEST(Blur, MatchesScalarAverage) {
  auto p = form_blur(synth_sequence(random_scene(3, 64, 7), 3));
  EXPECT_LE(max_blur_residual(p), 1e-6);
}

TEST(Blur, RejectsMixedShapes) {
  VideoSequence v{{Tensor::zeros({1, 3, 4, 4}), Tensor::zeros({1, 3, 4, 8})}};
  EXPECT_THROW(form_blur(v), ShapeError);
}

TEST(Augment, IdentityParams) {
  auto p = form_blur(synth_sequence(random_scene(4, 64, 5), 4));
  auto q = augment(p, AugmentParams{false, 1.0});
  EXPECT_EQ(q.blurred.values(), p.blurred.values());
  EXPECT_EQ(q.source.frames[3].values(), p.source.frames[3].values());
}

TEST(Augment, FlipIsInvolution) {
  auto p = form_blur(synth_sequence(random_scene(5, 64, 5), 5));
  auto q = augment(augment(p, AugmentParams{true, 1.0}), AugmentParams{true, 1.0});
  EXPECT_EQ(q.blurred.values(), p.blurred.values());
  for (std::size_t n = 0; n < p.source.frames.size(); ++n) EXPECT_EQ(q.source.frames[n].values(), p.source.frames[n].values());
}

TEST(Augment, FlipMirrorsColumns) {
  auto p = form_blur(synth_sequence(random_scene(6, 64, 5), 6));
  auto q = augment(p, AugmentParams{true, 1.0});
  EXPECT_EQ(q.blurred[5], p.blurred[63 - 5]);
}

TEST(Augment, BlurStaysTheMeanOfFrames) {
  auto p = form_blur(synth_sequence(random_scene(7, 64, 5), 7));
  for (std::uint64_t seed = 1; seed <= 20; ++seed) EXPECT_LE(max_blur_residual(augment(p, seed)), 1e-5);
}

TEST(Augment, DrawnZoomIsClipped) {
  int zoomed = 0, flipped = 0;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    auto a = draw_augment(seed);
    EXPECT_GE(a.zoom, 1.0);
    EXPECT_LE(a.zoom, 2.0);
    zoomed += a.zoom > 1.0;
    flipped += a.flip;
  }
  EXPECT_GT(zoomed, 50);
  EXPECT_GT(flipped, 60);
  EXPECT_LT(flipped, 140);
}

TEST(Augment, RejectsZoomOutsideRange) {
  auto p = form_blur(synth_sequence(random_scene(8, 64, 5), 8));
  EXPECT_THROW(augment(p, AugmentParams{false, 0.5}), Error);
}

TEST(Dataset, WriteReadRoundTrip) {
  auto dir = scratch("roundtrip");
  auto pairs = synth_dataset(3, 5, 32, 100);
  write_dataset(pairs, dir);
  auto back = read_dataset(dir);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    ASSERT_EQ(back[i].source.frames.size(), 5u);
    for (std::size_t n = 0; n < 5; ++n)
      for (std::int64_t k = 0; k < pairs[i].source.frames[n].size(); ++k)
        EXPECT_LE(std::abs(back[i].source.frames[n][k] - pairs[i].source.frames[n][k]), 0.5f / 255 + 1e-6f);
    EXPECT_EQ(back[i].seed, pairs[i].seed);
    ASSERT_TRUE(back[i].scene.has_value());
    EXPECT_EQ(to_json(*back[i].scene), to_json(*pairs[i].scene));
  }
  fs::remove_all(dir);
}

TEST(Dataset, EmptyDirectory) {
  auto dir = scratch("empty");
  fs::create_directories(dir);
  try {
    read_dataset(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("empty dataset"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(Dataset, MissingDirectory) { EXPECT_THROW(read_dataset(scratch("nowhere")), Error); }

TEST(Dataset, MissingFrameFile) {
  auto dir = scratch("missing");
  write_dataset(synth_dataset(2, 5, 32, 1), dir);
  fs::remove(dir / "seq_00001" / "frame_04.png");
  try {
    read_dataset(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("seq_00001"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(Dataset, CorruptManifest) {
  auto dir = scratch("corrupt");
  write_dataset(synth_dataset(1, 3, 32, 1), dir);
  std::ofstream(dir / "manifest.json") << "{ not json";
  EXPECT_THROW(read_dataset(dir), Error);
  fs::remove_all(dir);
}

TEST(Dataset, ThreadedSynthesisMatchesSerial) {
  auto a = synth_dataset(4, 5, 32, 9, 1);
  auto b = synth_dataset(4, 5, 32, 9, 3);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a[i].blurred.values(), b[i].blurred.values());
}

TEST(Png, RoundTripWithinQuantization) {
  auto dir = scratch("png");
  fs::create_directories(dir);
  auto f = synth_sequence(random_scene(2, 32, 3), 2).frames[1];
  write_png(dir / "a.png", f);
  auto g = read_png(dir / "a.png");
  ASSERT_EQ(g.shape(), f.shape());
  for (std::int64_t i = 0; i < f.size(); ++i) EXPECT_LE(std::abs(g[i] - f[i]), 0.5f / 255 + 1e-6f);
  EXPECT_THROW(read_png(dir / "missing.png"), Error);
  fs::remove_all(dir);
}
