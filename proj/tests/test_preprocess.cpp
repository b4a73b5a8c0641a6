#include <gtest/gtest.h>

#include <random>

#include "lungseg/preprocess.hpp"
#include "support.hpp"

using namespace lungseg;
using namespace lungseg::preprocess;

namespace {

CtVolume row(std::vector<std::int16_t> v) {
  const std::size_t n = v.size();
  return CtVolume(lungseg::testing::make_geometry(n, 1, 1), std::move(v));
}

}  // namespace

TEST(Calibrate, OnlyBoundaryValueChanges) {
  const CtVolume out = calibrate_boundary(row({-3000, -1000, 400, -2999, -3001, 0}));
  EXPECT_EQ(std::vector<std::int16_t>(out.voxels().begin(), out.voxels().end()),
            (std::vector<std::int16_t>{-1000, -1000, 400, -2999, -3001, 0}));
}

TEST(Clip, ConfinesToWindow) {
  const WindowedVolume out = clip_window(row({500, -1200, 37, 400, -1000, 32767, -32768}));
  EXPECT_EQ(std::vector<std::int16_t>(out.voxels().begin(), out.voxels().end()),
            (std::vector<std::int16_t>{400, -1000, 37, 400, -1000, 400, -1000}));
}

TEST(Clip, GeometryIsPreserved) {
  const CtVolume v(lungseg::testing::make_geometry(2, 3, 4), std::vector<std::int16_t>(24, 900));
  EXPECT_EQ(window(v).geometry(), v.geometry());
}

TEST(Clip, PropertyIdempotentAndMonotone) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> hu(-32768, 32767);
  std::vector<std::int16_t> v(100000);
  for (auto& x : v) x = static_cast<std::int16_t>(hu(rng));
  const WindowedVolume once = clip_window(row(v));
  const WindowedVolume twice = clip_window(once);
  EXPECT_EQ(once, twice);
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    const auto a = std::min(v[i], v[i + 1]), b = std::max(v[i], v[i + 1]);
    ASSERT_LE(clip_value(a), clip_value(b));
  }
  for (auto x : once.voxels()) {
    ASSERT_GE(x, kWindowLow);
    ASSERT_LE(x, kWindowHigh);
  }
}

TEST(Windowed, RejectsOutOfWindowVoxels) {
  EXPECT_THROW(WindowedVolume(lungseg::testing::make_geometry(1, 1, 1), {401}), Error);
}

TEST(Normalize, AffineEndpointsAndMidpoint) {
  EXPECT_EQ(normalize_value(-1000), 0.0f);
  EXPECT_EQ(normalize_value(400), 1.0f);
  EXPECT_NEAR(normalize_value(0), 5.0 / 7.0, 1e-7);
  EXPECT_NEAR(normalize_value(-300), 0.5, 1e-7);
}

TEST(Normalize, OutOfWindowIsAnError) {
  try {
    normalize_value(401);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutOfWindow);
  }
  const std::vector<std::int16_t> bad{0, -1001};
  EXPECT_THROW(normalize(bad, 1, 2), Error);
}

TEST(Normalize, InverseRecoversHounsfieldUnits) {
  for (int v = kWindowLow; v <= kWindowHigh; ++v) {
    const float p = normalize_value(static_cast<std::int16_t>(v));
    ASSERT_GE(p, 0.0f);
    ASSERT_LE(p, 1.0f);
    ASSERT_NEAR(denormalize_value(p), v, 1e-3);
  }
}

TEST(Normalize, VolumeKeepsSliceLayout) {
  std::vector<std::int16_t> v{-1000, 400, -300, 0, 400, 400};
  const NormalizedVolume n = normalize(WindowedVolume(lungseg::testing::make_geometry(3, 1, 2), v));
  ASSERT_EQ(n.voxels.size(), 6u);
  EXPECT_EQ(n.slice(1)[1], 1.0f);
  EXPECT_EQ(n.slice(0)[0], 0.0f);
  const NormalizedSlice s = normalize(std::span<const std::int16_t>(v).subspan(0, 3), 1, 3);
  EXPECT_EQ(s.height, 1u);
  EXPECT_EQ(s.width, 3u);
  EXPECT_EQ(s.pixels[1], 1.0f);
}

TEST(Pipeline, HistogramHasNoMassOutsideWindow) {
  const auto scan = lungseg::testing::synthetic_scan(32, 4, 1, 1, 2, 3);
  const WindowedVolume w = window(scan.ct);
  std::size_t padding = 0;
  for (auto v : scan.ct.voxels()) padding += v == -3000;
  ASSERT_GT(padding, 0u);
  std::size_t air = 0;
  for (auto v : w.voxels()) {
    ASSERT_GE(v, kWindowLow);
    ASSERT_LE(v, kWindowHigh);
    air += v == -1000;
  }
  EXPECT_GE(air, padding);
}
