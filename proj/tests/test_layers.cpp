#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "blurvid/gradcheck.hpp"
#include "blurvid/layers.hpp"
#include "blurvid/ops.hpp"

using namespace blurvid;

namespace {

Tensor random_tensor(Shape s, unsigned seed, float lo = -1, float hi = 1) {
  std::mt19937 g(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(static_cast<std::size_t>(numel(s)));
  for (auto& e : v) e = u(g);
  return Tensor(std::move(s), std::move(v));
}

ParamMap<float> zeroed(const ParamSpecs& specs) {
  ParamMap<float> p;
  for (const auto& s : specs) p.emplace(s.name, Tensor::zeros(s.shape));
  return p;
}

void expect_near(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

// Direct nested-loop convolution with zero padding.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int O = w.dim(0), K = w.dim(2);
  const int Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - K) / stride + 1;
  std::vector<float> out(static_cast<std::size_t>(B) * O * Ho * Wo);
  for (int n = 0; n < B; ++n)
    for (int o = 0; o < O; ++o)
      for (int y = 0; y < Ho; ++y)
        for (int xo = 0; xo < Wo; ++xo) {
          double acc = b[o];
          for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < K; ++ky)
              for (int kx = 0; kx < K; ++kx) {
                const int iy = y * stride - pad + ky, ix = xo * stride - pad + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += static_cast<double>(w[((o * C + c) * K + ky) * K + kx]) * x[((n * C + c) * H + iy) * W + ix];
              }
          out[((static_cast<std::size_t>(n) * O + o) * Ho + y) * Wo + xo] = static_cast<float>(acc);
        }
  return Tensor({B, O, Ho, Wo}, std::move(out));
}

}  // namespace

// ---- conv / deconv ------------------------------------------------------------

TEST(Conv2d, IdentityKernelCopiesInput) {
  auto x = random_tensor({1, 3, 5, 5}, 1);
  std::vector<float> w(9, 0.0f);
  for (int c = 0; c < 3; ++c) w[c * 3 + c] = 1.0f;
  auto y = conv2d(x, Tensor({3, 3, 1, 1}, w), Tensor::zeros({3}), 1, 0);
  EXPECT_EQ(y.values(), x.values());
}

TEST(Conv2d, StrideTwoHalvesExtent) {
  auto y = conv2d(Tensor::zeros({1, 2, 64, 64}), Tensor::zeros({4, 2, 3, 3}), Tensor::zeros({4}), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 4, 32, 32}));
}

TEST(Conv2d, MatchesNestedLoopOracle) {
  for (int stride : {1, 2}) {
    auto x = random_tensor({2, 2, 5, 5}, 2);
    auto w = random_tensor({3, 2, 3, 3}, 3);
    auto b = random_tensor({3}, 4);
    expect_near(conv2d(x, w, b, stride, 1), naive_conv(x, w, b, stride, 1), 1e-5);
  }
}

TEST(Conv2d, ChannelMismatchThrows) {
  EXPECT_THROW(conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), Tensor::zeros({1}), 1, 1),
               ShapeError);
}

TEST(Deconv2d, DoublesExtent) {
  auto y = deconv2d(Tensor::zeros({1, 4, 16, 16}), Tensor::zeros({4, 2, 4, 4}), Tensor::zeros({2}), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 32, 32}));
}

TEST(Deconv2d, ZeroWeightsGiveBias) {
  auto y = deconv2d(random_tensor({1, 3, 4, 4}, 1), Tensor::zeros({3, 2, 4, 4}), Tensor({2}, {0.5f, -1.5f}), 2, 1);
  for (int i = 0; i < 64; ++i) EXPECT_EQ(y[i], 0.5f);
  for (int i = 64; i < 128; ++i) EXPECT_EQ(y[i], -1.5f);
}

TEST(Deconv2d, IsAdjointOfConv) {
  // <conv(x), y> == <x, deconv(y)> with shared weights and zero bias.
  auto x = random_tensor({1, 2, 8, 8}, 5).cast<double>();
  auto y = random_tensor({1, 3, 4, 4}, 6).cast<double>();
  auto w = random_tensor({3, 2, 4, 4}, 7).cast<double>();
  const double lhs = sum(mul(conv2d(x, w, TensorD::zeros({3}), 2, 1), y)).item();
  const double rhs = sum(mul(x, deconv2d(y, w, TensorD::zeros({2}), 2, 1))).item();
  EXPECT_NEAR(lhs, rhs, 1e-9);
}

TEST(Deconv2d, DeconvThenConvGradcheck) {
  std::mt19937 g(1);
  auto rnd = [&](Shape s) {
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> v(static_cast<std::size_t>(numel(s)));
    for (auto& e : v) e = u(g);
    return TensorD(std::move(s), std::move(v));
  };
  ScalarFn<double> f = [](const std::vector<TensorD>& in) {
    auto y = deconv2d(in[0], in[1], in[2], 2, 1);
    return sum(mul(conv2d(y, in[3], in[4], 1, 1), conv2d(y, in[3], in[4], 1, 1)));
  };
  EXPECT_LE(gradcheck(f, {rnd({1, 2, 3, 3}), rnd({2, 3, 4, 4}), rnd({3}), rnd({2, 3, 3, 3}), rnd({2})}), 1e-3);
}

// ---- ConvLSTM -------------------------------------------------------------------

TEST(ConvLstm, ZeroEverythingStaysZero) {
  ParamSpecs s;
  declare_convlstm(s, "l", 3, 4);
  auto p = zeroed(s);
  auto st = convlstm_step(p, "l", Tensor::zeros({1, 3, 4, 4}), zero_state<float>(1, 4, 4, 4));
  for (float v : st.h.values()) EXPECT_EQ(v, 0.0f);
  for (float v : st.c.values()) EXPECT_EQ(v, 0.0f);
}

TEST(ConvLstm, SaturatedForgetGateKeepsCell) {
  ParamSpecs s;
  declare_convlstm(s, "l", 2, 3);
  auto p = zeroed(s);
  std::vector<float> b(12, 0.0f);
  for (int k = 3; k < 6; ++k) b[k] = 10.0f;  // gate order i, f, o, g
  p["l.b"] = Tensor({12}, b);
  ConvLstmState<float> st{random_tensor({1, 3, 4, 4}, 1), random_tensor({1, 3, 4, 4}, 2)};
  auto next = convlstm_step(p, "l", random_tensor({1, 2, 4, 4}, 3), st);
  // i = sigmoid(0) = 0.5 but g = tanh(0) = 0, so c' = sigmoid(10) * c.
  for (std::int64_t i = 0; i < st.c.size(); ++i) EXPECT_NEAR(next.c[i], st.c[i], 1e-4 * std::abs(st.c[i]) + 1e-6);
}

TEST(ConvLstm, DeclaredShapes) {
  ParamSpecs s;
  declare_convlstm(s, "l", 5, 7);
  EXPECT_EQ(s[0].shape, (Shape{28, 12, 3, 3}));
  EXPECT_EQ(s[1].shape, (Shape{28}));
  auto p = initialize(s, 1);
  // Forget-gate slice starts at 1.
  for (int k = 0; k < 28; ++k) EXPECT_EQ(p.at("l.b")[k], (k >= 7 && k < 14) ? 1.0f : 0.0f);
}

TEST(ConvLstm, StepGradcheck) {
  ParamSpecs s;
  declare_convlstm(s, "l", 2, 2);
  auto init = cast_params<float, double>(initialize(s, 3));
  std::vector<TensorD> in{random_tensor({1, 2, 3, 3}, 4).cast<double>(), random_tensor({1, 2, 3, 3}, 5).cast<double>(),
                          random_tensor({1, 2, 3, 3}, 6).cast<double>(), init.at("l.w"), init.at("l.b")};
  const auto wy = random_tensor({1, 2, 3, 3}, 7).cast<double>();
  ScalarFn<double> f = [&](const std::vector<TensorD>& x) {
    ParamMap<double> p{{"l.w", x[3]}, {"l.b", x[4]}};
    auto st = convlstm_step(p, "l", x[0], {x[1], x[2]});
    return add(sum(mul(st.h, wy)), sum(st.c));
  };
  GradcheckOptions o;
  o.epsilon = 1e-5;
  EXPECT_LE(gradcheck(f, in, o), 1e-3);
}

// ---- residual blocks ----------------------------------------------------------------

TEST(ResBlock, ZeroWeightsAreIdentity) {
  ParamSpecs s;
  declare_resblock(s, "r", 32);
  auto x = random_tensor({1, 32, 16, 16}, 1);
  auto y = resblock(zeroed(s), "r", x);
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_EQ(y.values(), x.values());
}

TEST(Rdb, ZeroWeightsAreIdentity) {
  ParamSpecs s;
  declare_rdb(s, "d", {8, 4, 3});
  auto x = random_tensor({1, 8, 6, 6}, 2);
  EXPECT_EQ(rdb(zeroed(s), "d", x, {8, 4, 3}, 0.1).values(), x.values());
}

TEST(Rdb, FusionSeesAllFeatures) {
  ParamSpecs s;
  declare_rdb(s, "d", {16, 8, 3});
  for (const auto& spec : s) {
    if (spec.name == "d.fuse.w") {
      EXPECT_EQ(spec.shape, (Shape{16, 40, 1, 1}));
    }
    if (spec.name == "d.layer2.w") {
      EXPECT_EQ(spec.shape, (Shape{8, 32, 3, 3}));
    }
  }
}

TEST(Rdb, ResidualScaleMultipliesBranch) {
  ParamSpecs s;
  declare_rdb(s, "d", {2, 2, 2});
  auto p = initialize(s, 4);
  p["d.fuse.b"] = Tensor::full({2}, 0.3f);
  auto x = random_tensor({1, 2, 4, 4}, 5);
  auto full = rdb(p, "d", x, {2, 2, 2}, 1.0);
  auto tenth = rdb(p, "d", x, {2, 2, 2}, 0.1);
  for (std::int64_t i = 0; i < x.size(); ++i) EXPECT_NEAR(tenth[i] - x[i], 0.1f * (full[i] - x[i]), 1e-5);
}

TEST(Bottleneck, ProjectsChannels) {
  ParamSpecs s;
  declare_bottleneck(s, "b", 128, 64);
  auto y = bottleneck(initialize(s, 1), "b", random_tensor({1, 128, 8, 8}, 1));
  EXPECT_EQ(y.shape(), (Shape{1, 64, 8, 8}));
}

TEST(Bottleneck, IdentityWeightsCopy) {
  ParamSpecs s;
  declare_bottleneck(s, "b", 4, 4);
  auto p = zeroed(s);
  std::vector<float> w(16, 0.0f);
  for (int c = 0; c < 4; ++c) w[c * 4 + c] = 1.0f;
  p["b.w"] = Tensor({4, 4, 1, 1}, w);
  auto x = random_tensor({1, 4, 5, 5}, 2);
  EXPECT_EQ(bottleneck(p, "b", x).values(), x.values());
}

TEST(Params, MissingParameterIsNamed) {
  ParamMap<float> p;
  try {
    conv(p, "enc.block1", Tensor::zeros({1, 1, 2, 2}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("enc.block1.w"), std::string::npos);
  }
}

TEST(Params, InitializationIsSeeded) {
  ParamSpecs s;
  declare_conv(s, "c", 3, 4, 3);
  EXPECT_EQ(initialize(s, 7).at("c.w").values(), initialize(s, 7).at("c.w").values());
  EXPECT_NE(initialize(s, 7).at("c.w").values(), initialize(s, 8).at("c.w").values());
  EXPECT_EQ(count_parameters(s), 4 * 3 * 9 + 4);
}

// ---- batch normalization ----------------------------------------------------------------

TEST(BatchNorm, ConstantChannelNormalizesToZero) {
  std::vector<float> v(2 * 2 * 3 * 3);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (i / 9) % 2 ? 4.0f : -2.0f;  // constant per channel
  auto out = batchnorm(Tensor({2, 2, 3, 3}, v), Tensor::full({2}, 1.0f), Tensor::zeros({2}), Tensor::zeros({2}),
                       Tensor::full({2}, 1.0f), NormMode::kTrain);
  for (float y : out.y.values()) EXPECT_NEAR(y, 0.0f, 1e-6);
  EXPECT_NEAR(out.batch_mean[0], -2.0, 1e-9);
  EXPECT_NEAR(out.batch_mean[1], 4.0, 1e-9);
}

TEST(BatchNorm, UnitVarianceInputPassesThrough) {
  // Per-channel values with zero mean and unit (biased) variance.
  std::vector<float> v{1, -1, 1, -1, -1, 1, -1, 1};
  auto out = batchnorm(Tensor({2, 1, 2, 2}, v), Tensor::full({1}, 1.0f), Tensor::zeros({1}), Tensor::zeros({1}),
                       Tensor::full({1}, 1.0f), NormMode::kTrain);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(out.y[static_cast<std::int64_t>(i)], v[i], 1e-5);
}

TEST(BatchNorm, EvalUsesRunningStatistics) {
  auto x = random_tensor({1, 2, 3, 3}, 3);
  auto out = batchnorm(x, Tensor({2}, {2.0f, 1.0f}), Tensor({2}, {0.5f, 0.0f}), Tensor({2}, {1.0f, -1.0f}),
                       Tensor({2}, {4.0f, 1.0f}), NormMode::kEval);
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(out.y[i], 2.0f * (x[i] - 1.0f) / std::sqrt(4.0f + 1e-5f) + 0.5f, 1e-5);
  for (int i = 9; i < 18; ++i) EXPECT_NEAR(out.y[i], (x[i] + 1.0f) / std::sqrt(1.0f + 1e-5f), 1e-5);
}

TEST(BatchNorm, EvalBeforeTrainingThrows) {
  ParamSpecs s;
  declare_batchnorm(s, "bn", 2);
  auto p = initialize(s, 1);
  EXPECT_THROW(batchnorm(p, "bn", random_tensor({1, 2, 2, 2}, 1), NormContext{NormMode::kEval}), Error);
}

TEST(BatchNorm, TrainModeReportsMomentumUpdates) {
  ParamSpecs s;
  declare_batchnorm(s, "bn", 1);
  auto p = initialize(s, 1);
  BufferUpdates up;
  NormContext ctx{NormMode::kTrain, 0.1, &up};
  batchnorm(p, "bn", Tensor({1, 1, 2, 2}, {1, 2, 3, 4}), ctx);
  ASSERT_TRUE(up.count("bn.running_mean"));
  EXPECT_NEAR(up.at("bn.running_mean")[0], 0.1 * 2.5, 1e-6);
  // unbiased variance of {1,2,3,4} is 5/3
  EXPECT_NEAR(up.at("bn.running_var")[0], 0.9 + 0.1 * 5.0 / 3.0, 1e-6);
}

TEST(BatchNorm, Gradcheck) {
  auto x = random_tensor({2, 2, 3, 3}, 4).cast<double>();
  auto gamma = TensorD({2}, {1.3, 0.7});
  auto beta = TensorD({2}, {0.1, -0.2});
  const auto wy = random_tensor({2, 2, 3, 3}, 5).cast<double>();
  ScalarFn<double> f = [&](const std::vector<TensorD>& in) {
    return sum(mul(batchnorm(in[0], in[1], in[2], TensorD::zeros({2}), TensorD::full({2}, 1.0), NormMode::kTrain).y, wy));
  };
  EXPECT_LE(gradcheck(f, {x, gamma, beta}), 1e-3);
}
