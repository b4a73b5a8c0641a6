#include <gtest/gtest.h>

#include <cmath>

#include "lungseg/train/loss.hpp"
#include "lungseg/train/optim.hpp"

using namespace lungseg;
using namespace lungseg::train;

TEST(Bce, ValuesAndClamp) {
  const std::vector<double> p{0.5, 0.9, 0.0, 1.0};
  const std::vector<std::uint8_t> y{1, 0, 0, 1};
  EXPECT_NEAR(bce_loss<double>(std::span(p).subspan(0, 1), std::span(y).subspan(0, 1)), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_loss<double>(std::span(p).subspan(1, 1), std::span(y).subspan(1, 1)), -std::log(0.1), 1e-12);
  // Perfect predictions hit the clamp and cost -log(1 - 1e-7) each.
  EXPECT_NEAR(bce_loss<double>(std::span(p).subspan(2, 2), std::span(y).subspan(2, 2)), -std::log1p(-1e-7), 1e-15);
  const std::vector<double> worst{1.0};
  const std::vector<std::uint8_t> zero{0};
  EXPECT_NEAR(bce_loss<double>(worst, zero), -std::log(1e-7), 1e-9);
  EXPECT_THROW(bce_loss<double>(worst, y), Error);
}

TEST(Bce, LogitGradient) {
  const std::vector<double> p{0.25, 0.75, 0.0};
  const std::vector<std::uint8_t> y{1, 1, 0};
  std::vector<double> g(3);
  bce_logit_gradient<double>(p, y, g);
  EXPECT_DOUBLE_EQ(g[0], -0.75 / 3);
  EXPECT_DOUBLE_EQ(g[1], -0.25 / 3);
  EXPECT_EQ(g[2], 0.0);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  std::vector<double> w{0.5, -1.5, 3.0};
  const std::vector<double> g(3, 0.0);
  AdamMoments m;
  for (std::uint64_t t = 1; t <= 5; ++t) adam_update<double>(w, g, m, t, 0.001);
  EXPECT_EQ(w, (std::vector<double>{0.5, -1.5, 3.0}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> w{0.5, 0.5, 0.5};
  const std::vector<double> g{1.0, -0.25, 1e-3};
  AdamMoments m;
  adam_update<double>(w, g, m, 1, 0.001);
  // Bias correction makes m_hat = g and v_hat = g^2 on the first step.
  EXPECT_NEAR(w[0], 0.5 - 0.001 / (1 + 1e-8), 1e-15);
  EXPECT_NEAR(w[1], 0.5 + 0.001 * 0.25 / (0.25 + 1e-8), 1e-15);
  EXPECT_NEAR(w[2], 0.5 - 0.001 * 1e-3 / (1e-3 + 1e-8), 1e-15);
  EXPECT_NEAR(m.m[0], 0.1, 1e-15);
  EXPECT_NEAR(m.v[0], 0.001, 1e-15);
}

TEST(Adam, SecondStepHandComputed) {
  std::vector<double> w{0.0};
  AdamMoments m;
  adam_update<double>(w, std::vector<double>{1.0}, m, 1, 0.01);
  adam_update<double>(w, std::vector<double>{0.5}, m, 2, 0.01);
  // m2 = 0.14, v2 = 0.001249; corrections 1 - 0.81 and 1 - 0.998001.
  const double m_hat = 0.14 / 0.19, v_hat = 0.001249 / 0.001999;
  const double expected = -0.01 / (1 + 1e-8) - 0.01 * m_hat / (std::sqrt(v_hat) + 1e-8);
  EXPECT_NEAR(w[0], expected, 1e-14);
}

TEST(Adam, FloatParametersUseDoubleMoments) {
  std::vector<float> w{1.0f};
  AdamMoments m;
  for (std::uint64_t t = 1; t <= 100; ++t) adam_update<float>(w, std::vector<float>{2.0f}, m, t, 0.001);
  // Constant gradients give a unit step direction every time.
  EXPECT_NEAR(w[0], 1.0f - 0.1f, 1e-5);
}

TEST(Plateau, HalvesAfterPatienceAndFloors) {
  PlateauScheduler s(0.001, {});
  EXPECT_EQ(s.update(1.0), 0.001);
  EXPECT_EQ(s.update(1.0), 0.001);
  EXPECT_EQ(s.update(1.0), 0.001);
  EXPECT_EQ(s.update(1.0), 0.0005);
  EXPECT_EQ(s.update(1.0), 0.0005);
  EXPECT_EQ(s.update(1.0), 0.0005);
  EXPECT_EQ(s.update(1.0), 0.00025);

  PlateauScheduler f(3e-6, {});
  std::vector<double> lrs;
  for (int i = 0; i < 16; ++i) lrs.push_back(f.update(2.0));
  EXPECT_NEAR(lrs[3], 1.5e-6, 1e-18);
  EXPECT_EQ(lrs[6], 1e-6);
  EXPECT_EQ(lrs[15], 1e-6);
}

TEST(Plateau, ImprovementsBelowMinDeltaDoNotCount) {
  PlateauScheduler s(0.001, {});
  s.update(1.0);
  s.update(0.99996);
  s.update(0.99992);
  EXPECT_EQ(s.update(0.99991), 0.0005);
  PlateauScheduler t(0.001, {});
  t.update(1.0);
  t.update(1.0);
  t.update(1.0);
  EXPECT_EQ(t.update(0.9), 0.001);  // a real improvement resets the counter
  EXPECT_EQ(t.update(0.9), 0.001);
}

TEST(EarlyStop, StopsAtSixthEpochOnFlatLoss) {
  EarlyStopping e(5, 1e-4);
  for (int epoch = 1; epoch <= 5; ++epoch) EXPECT_FALSE(e.update(1.0)) << epoch;
  EXPECT_TRUE(e.update(1.0));
}

TEST(EarlyStop, ImprovementResets) {
  EarlyStopping e(5, 1e-4);
  EXPECT_FALSE(e.update(1.0));
  EXPECT_TRUE(e.improved());
  for (int i = 0; i < 4; ++i) EXPECT_FALSE(e.update(1.0));
  EXPECT_FALSE(e.update(0.5));
  EXPECT_TRUE(e.improved());
  EXPECT_EQ(e.best(), 0.5);
  for (int i = 0; i < 4; ++i) EXPECT_FALSE(e.update(0.6));
  EXPECT_TRUE(e.update(0.6));
}
