#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "lungseg/nn/network.hpp"

using namespace lungseg;
using namespace lungseg::nn;

namespace {

// Independent parameter-count oracle: the encoder layer table written out
// branch by branch, every conv unit contributing k_h*k_w*in*out weights plus
// a batch-norm scale and shift per output channel.
struct CountOracle {
  WidthMultiplier w;
  std::size_t total = 0;
  std::size_t encoder = 0;

  std::size_t s(std::size_t c) const { return w.scale(c); }
  std::size_t unit(std::size_t in, std::size_t out, std::size_t kh, std::size_t kw) {
    const std::size_t n = kh * kw * in * out + 2 * out;
    encoder += n;
    return out;
  }

  std::size_t inception_a(std::size_t in, std::size_t pool) {
    const std::size_t b1 = unit(in, s(64), 1, 1);
    const std::size_t b5 = unit(unit(in, s(48), 1, 1), s(64), 5, 5);
    const std::size_t b3 = unit(unit(unit(in, s(64), 1, 1), s(96), 3, 3), s(96), 3, 3);
    const std::size_t bp = unit(in, s(pool), 1, 1);
    return b1 + b5 + b3 + bp;
  }
  std::size_t reduction_b(std::size_t in) {
    const std::size_t b3 = unit(in, s(384), 3, 3);
    const std::size_t bd = unit(unit(unit(in, s(64), 1, 1), s(96), 3, 3), s(96), 3, 3);
    return b3 + bd + in;
  }
  std::size_t inception_c(std::size_t in, std::size_t c7) {
    const std::size_t b1 = unit(in, s(192), 1, 1);
    const std::size_t b7 = unit(unit(unit(in, s(c7), 1, 1), s(c7), 1, 7), s(192), 7, 1);
    std::size_t d = unit(in, s(c7), 1, 1);
    d = unit(d, s(c7), 7, 1);
    d = unit(d, s(c7), 1, 7);
    d = unit(d, s(c7), 7, 1);
    d = unit(d, s(192), 1, 7);
    const std::size_t bp = unit(in, s(192), 1, 1);
    return b1 + b7 + d + bp;
  }
  std::size_t reduction_d(std::size_t in) {
    const std::size_t b3 = unit(unit(in, s(192), 1, 1), s(320), 3, 3);
    std::size_t b7 = unit(in, s(192), 1, 1);
    b7 = unit(b7, s(192), 1, 7);
    b7 = unit(b7, s(192), 7, 1);
    b7 = unit(b7, s(192), 3, 3);
    return b3 + b7 + in;
  }
  std::size_t inception_e(std::size_t in) {
    const std::size_t b1 = unit(in, s(320), 1, 1);
    const std::size_t m = unit(in, s(384), 1, 1);
    const std::size_t b3 = unit(m, s(384), 1, 3) + unit(m, s(384), 3, 1);
    const std::size_t dm = unit(unit(in, s(448), 1, 1), s(384), 3, 3);
    const std::size_t bd = unit(dm, s(384), 1, 3) + unit(dm, s(384), 3, 1);
    const std::size_t bp = unit(in, s(192), 1, 1);
    return b1 + b3 + bd + bp;
  }

  CountOracle(WidthMultiplier width, std::array<std::size_t, 5> dec) : w(width) {
    std::size_t c = unit(3, s(32), 3, 3);
    c = unit(c, s(32), 3, 3);
    const std::size_t s1 = unit(c, s(64), 3, 3);
    c = unit(s1, s(80), 1, 1);
    const std::size_t s2 = unit(c, s(192), 3, 3);
    c = inception_a(s2, 32);
    c = inception_a(c, 64);
    const std::size_t s3 = inception_a(c, 64);
    c = reduction_b(s3);
    for (std::size_t c7 : {128, 160, 160, 192}) c = inception_c(c, c7);
    const std::size_t s4 = c;
    c = reduction_d(s4);
    c = inception_e(c);
    c = inception_e(c);
    EXPECT_EQ((std::array<std::size_t, 4>{s1, s2, s3, s4}), (std::array<std::size_t, 4>{s(64), s(192), s(288), s(768)}));
    EXPECT_EQ(c, s(2048));

    const std::array<std::size_t, 5> skips{s4, s3, s2, s1, 3};
    std::size_t decoder = 0, in = c;
    for (std::size_t k = 0; k < 5; ++k) {
      const std::size_t d = s(dec[k]);
      decoder += in * d * 4 + d;                            // transposed conv with bias
      decoder += 9 * (d + skips[k]) * d + 2 * d;            // first conv unit
      decoder += 9 * d * d + 2 * d;                         // second conv unit
      in = d;
    }
    decoder += in + 1;  // 1x1 head with bias
    total = encoder + decoder;
  }
};

NetworkConfig toy(std::size_t h = 64, std::size_t w = 64) {
  NetworkConfig c;
  c.input_height = h;
  c.input_width = w;
  c.width = WidthMultiplier::parse("1/8");
  return c;
}

template <typename T>
Tensor<T> random_batch(std::size_t b, std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Tensor<T> x({b, 3, h, w});
  for (auto& v : x.storage()) v = static_cast<T>(u(rng));
  return x;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::BadWeights;
}

}  // namespace

TEST(Width, RoundsHalfUpWithFloorOfOne) {
  const auto eighth = WidthMultiplier::parse("1/8");
  EXPECT_EQ(eighth.scale(64), 8u);
  EXPECT_EQ(eighth.scale(4), 1u);   // 0.5 rounds up
  EXPECT_EQ(eighth.scale(3), 1u);   // floor of one
  EXPECT_EQ(eighth.scale(12), 2u);  // 1.5 rounds up
  EXPECT_EQ(WidthMultiplier::parse("0.25").scale(288), 72u);
  EXPECT_EQ(WidthMultiplier::parse("1").scale(2048), 2048u);
  EXPECT_EQ(eighth.str(), "1/8");
  EXPECT_THROW(WidthMultiplier::parse("x"), Error);
}

TEST(Config, RejectsBadInputs) {
  auto c = toy(48, 64);
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidConfig);
  c = toy();
  c.width = WidthMultiplier{3, 2};
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidConfig);
  c = toy();
  c.decoder_channels[2] = 0;
  EXPECT_EQ(code_of([&] { Network<float> n(c); }), ErrorCode::InvalidConfig);
}

TEST(Count, SingleConvolution) {
  // 3 -> 8 channels, 3x3, no bias: 216 weights plus 8 scales and 8 shifts.
  EXPECT_EQ(3u * 8 * 3 * 3 + 8 + 8, 232u);
  const Network<float> net(toy());
  const auto id = net.parameters().find("encoder.Conv2d_1a_3x3.conv.weight");
  ASSERT_TRUE(id.has_value());
  EXPECT_EQ(net.parameters()[*id].value.dims(), (Dims{4, 3, 3, 3}));
}

TEST(Count, MatchesLayerTableAtSeveralWidths) {
  for (const char* w : {"1/8", "1/4", "1"}) {
    SCOPED_TRACE(w);
    NetworkConfig c = toy(32, 32);
    c.width = WidthMultiplier::parse(w);
    const Network<float> net(c);
    const CountOracle oracle(c.width, c.decoder_channels);
    const ParameterCount got = count_parameters(net);
    EXPECT_EQ(got.total, oracle.total);
    EXPECT_EQ(got.trainable, oracle.total - oracle.encoder);
    std::size_t enc = 0;
    for (const auto& p : net.parameters())
      if (p.encoder && p.role == ParamRole::Weight) enc += p.value.size();
    EXPECT_EQ(enc, oracle.encoder);
  }
}

TEST(Count, FullWidthFigures) {
  NetworkConfig c = toy(32, 32);
  c.width = WidthMultiplier{};
  const Network<float> net(c);
  EXPECT_EQ(count_parameters(net).total, 37427905u);
  c.freeze_encoder = false;
  const Network<float> open(c);
  EXPECT_EQ(count_parameters(open).trainable, 37427905u);
}

TEST(Shapes, EncoderAndDecoderExtents) {
  for (std::size_t h : {32u, 64u, 96u}) {
    for (std::size_t w : {32u, 64u, 96u}) {
      for (std::size_t b : {1u, 2u}) {
        SCOPED_TRACE(std::to_string(b) + "x" + std::to_string(h) + "x" + std::to_string(w));
        const Network<float> net(toy(h, w));
        const auto x = random_batch<float>(b, h, w, 1);
        const ShapeTrace t = net.trace_shapes(x);
        const auto& taps = net.taps();
        for (std::size_t k = 0; k < 4; ++k)
          EXPECT_EQ(t.encoder[k], (Dims{b, taps.skip[k], h >> (k + 1), w >> (k + 1)}));
        EXPECT_EQ(t.encoder[4], (Dims{b, taps.bottleneck, h / 32, w / 32}));
        for (std::size_t k = 0; k < 5; ++k) {
          EXPECT_EQ(t.decoder[k][2], h >> (4 - k));
          EXPECT_EQ(t.decoder[k][3], w >> (4 - k));
          EXPECT_EQ(t.concat_channels[k], t.up_channels[k] + t.skip_channels[k]);
        }
        EXPECT_EQ(t.skip_channels[4], 3u);
        const auto y = net.forward(x);
        EXPECT_EQ(y.dims(), (Dims{b, 1, h, w}));
        for (float p : y.values()) {
          ASSERT_GE(p, 0.0f);
          ASSERT_LE(p, 1.0f);
        }
      }
    }
  }
}

TEST(Shapes, TapsAtFullWidth) {
  NetworkConfig c = toy(32, 32);
  c.width = WidthMultiplier{};
  const Network<float> net(c);
  EXPECT_EQ(net.taps().skip, (std::array<std::size_t, 4>{64, 192, 288, 768}));
  EXPECT_EQ(net.taps().bottleneck, 2048u);
}

TEST(Shapes, WrongInputIsRejected) {
  const Network<float> net(toy());
  EXPECT_EQ(code_of([&] { net.forward(random_batch<float>(1, 32, 64, 1)); }), ErrorCode::ShapeMismatch);
  EXPECT_EQ(code_of([&] { net.forward(Tensor<float>({1, 1, 64, 64})); }), ErrorCode::ShapeMismatch);
  EXPECT_EQ(code_of([&] { net.forward(Tensor<float>({0, 3, 64, 64})); }), ErrorCode::ShapeMismatch);
}

TEST(Determinism, SeedFixesWeightsAndOutputs) {
  NetworkConfig c = toy();
  c.seed = 11;
  const Network<float> a(c), b(c);
  const auto x = random_batch<float>(2, 64, 64, 4);
  EXPECT_EQ(a.forward(x), b.forward(x));
  EXPECT_EQ(a.forward(x), a.forward(x));
  c.seed = 12;
  const Network<float> other(c);
  EXPECT_NE(a.forward(x), other.forward(x));
}

TEST(Determinism, FloatAndDoubleAgree) {
  const Network<float> f(toy());
  const Network<double> d(toy());
  const auto x = random_batch<double>(1, 64, 64, 5);
  const auto yf = f.forward(x.cast<float>());
  const auto yd = d.forward(x);
  for (std::size_t i = 0; i < yd.size(); ++i) ASSERT_NEAR(yf[i], yd[i], 1e-4);
}

TEST(Inference, BatchEqualsSingles) {
  const Network<float> net(toy());
  const auto x = random_batch<float>(3, 64, 64, 6);
  const auto all = net.forward(x);
  const std::size_t n = 3 * 64 * 64;
  for (std::size_t b = 0; b < 3; ++b) {
    Tensor<float> one({1, 3, 64, 64}, std::vector<float>(x.data() + b * n, x.data() + (b + 1) * n));
    const auto y = net.forward(one);
    for (std::size_t i = 0; i < y.size(); ++i) ASSERT_NEAR(y[i], all[b * 64 * 64 + i], 1e-5);
  }
}

TEST(Freeze, FrozenEncoderGetsNoGradients) {
  Network<float> net(toy());
  const auto x = random_batch<float>(2, 64, 64, 7);
  std::vector<std::uint8_t> y(2 * 64 * 64);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = (i % 64) < 30;
  std::set<std::string> encoder_names;
  for (const auto& p : net.parameters())
    if (p.encoder) encoder_names.insert(p.name);
  ASSERT_FALSE(encoder_names.empty());

  const auto frozen = net.gradients(x, y);
  EXPECT_FALSE(net.encoder_trainable());
  for (const auto& name : frozen.gradients.names()) EXPECT_EQ(encoder_names.count(name), 0u) << name;
  for (const auto& u : frozen.running_stats) EXPECT_FALSE(net.parameters()[u.mean].encoder);

  net.set_encoder_frozen(false);
  const auto open = net.gradients(x, y);
  std::size_t enc = 0;
  for (const auto& name : open.gradients.names()) enc += encoder_names.count(name);
  EXPECT_GT(enc, 0u);
  EXPECT_EQ(count_parameters(net).trainable, count_parameters(net).total);
}

// Gradient check at a generic point. Zero-initialised shifts put many ReLU
// inputs exactly on the kink, so biases and running means are jittered first;
// coordinates whose three step sizes disagree are non-smooth and skipped.
class GradientCheck : public ::testing::TestWithParam<std::tuple<bool, bool>> {};

TEST_P(GradientCheck, AnalyticMatchesCentralDifferences) {
  const auto [frozen, training] = GetParam();
  NetworkConfig c = toy(32, 32);
  c.freeze_encoder = frozen;
  Network<double> net(c);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> jitter(0, 0.1);
  for (auto& p : net.parameters()) {
    if (p.name.ends_with("bias") || p.name.ends_with("running_mean"))
      for (auto& v : p.value.storage()) v += jitter(rng);
  }
  const auto x = random_batch<double>(2, 32, 32, 3);
  std::vector<std::uint8_t> y(2 * 32 * 32);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = (i % 32) < 14;

  const auto lg = net.gradients(x, y, training);
  auto& params = net.parameters();
  std::size_t checked = 0, skipped = 0;
  double worst = 0;
  for (ParamId id = 0; id < params.size(); ++id) {
    auto& p = params[id];
    if (!p.learnable()) continue;
    const Tensor<double>* g = lg.gradients.find(p.name);
    ASSERT_NE(g, nullptr) << p.name;
    for (int k = 0; k < 2; ++k) {
      const std::size_t j = rng() % p.value.size();
      const double v0 = p.value[j];
      double fd[3];
      const double steps[3] = {1e-5, 1e-6, 1e-7};
      for (int q = 0; q < 3; ++q) {
        p.value[j] = v0 + steps[q];
        const double up = net.loss(x, y, training);
        p.value[j] = v0 - steps[q];
        const double down = net.loss(x, y, training);
        p.value[j] = v0;
        fd[q] = (up - down) / (2 * steps[q]);
      }
      const double scale = std::max({std::abs(fd[0]), std::abs(fd[1]), std::abs(fd[2]), 1e-7});
      if (std::abs(fd[0] - fd[1]) > 1e-4 * scale || std::abs(fd[1] - fd[2]) > 1e-4 * scale) {
        ++skipped;
        continue;
      }
      const double rel = std::abs(fd[1] - (*g)[j]) / std::max({std::abs(fd[1]), std::abs((*g)[j]), 1e-12});
      worst = std::max(worst, rel);
      ++checked;
      EXPECT_LT(rel, 1e-3) << p.name << "[" << j << "] analytic " << (*g)[j] << " fd " << fd[1];
    }
  }
  EXPECT_GE(checked, 50u) << "skipped " << skipped;
  RecordProperty("worst_relative_error", std::to_string(worst));
}

INSTANTIATE_TEST_SUITE_P(Modes, GradientCheck,
                         ::testing::Values(std::make_tuple(true, true), std::make_tuple(false, true),
                                           std::make_tuple(false, false)));

TEST(RunningStats, MomentumBlend) {
  Network<float> net(toy());
  net.set_encoder_frozen(false);
  const auto x = random_batch<float>(2, 64, 64, 8);
  std::vector<std::uint8_t> y(2 * 64 * 64, 0);
  const auto lg = net.gradients(x, y);
  ASSERT_FALSE(lg.running_stats.empty());
  const auto& u = lg.running_stats.front();
  const auto before = net.parameters()[u.mean].value;
  net.apply_running_stats(lg.running_stats, 0.1);
  const auto& after = net.parameters()[u.mean].value;
  for (std::size_t i = 0; i < after.size(); ++i)
    EXPECT_NEAR(after[i], 0.9f * before[i] + 0.1f * u.batch_mean[i], 1e-6);
}
