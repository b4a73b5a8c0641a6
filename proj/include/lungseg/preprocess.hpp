#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lungseg/volume.hpp"

namespace lungseg::preprocess {

inline constexpr std::int16_t kBoundaryHu = -3000;
inline constexpr std::int16_t kWindowLow = -1000;
inline constexpr std::int16_t kWindowHigh = 400;

/// CT volume whose voxels lie in [kWindowLow, kWindowHigh].
class WindowedVolume : public CtVolume {
 public:
  WindowedVolume() = default;
  WindowedVolume(Geometry geometry, std::vector<std::int16_t> voxels);
};

/// Single 2-D slice of network-ready intensities in [0, 1].
struct NormalizedSlice {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;
};

/// Stack of normalized slices with the geometry of the source volume.
struct NormalizedVolume {
  Geometry geometry;
  std::vector<float> voxels;

  std::span<const float> slice(std::size_t z) const {
    return std::span<const float>(voxels).subspan(z * geometry.slice_size(), geometry.slice_size());
  }
};

constexpr std::int16_t calibrate_value(std::int16_t v) {
  return v == kBoundaryHu ? kWindowLow : v;
}

constexpr std::int16_t clip_value(std::int16_t v) {
  return v < kWindowLow ? kWindowLow : (v > kWindowHigh ? kWindowHigh : v);
}

/// Out-of-scanner padding (-3000 HU) becomes air (-1000 HU); nothing else changes.
CtVolume calibrate_boundary(const CtVolume& volume);

/// Clamps every voxel to the [-1000, 400] HU window.
WindowedVolume clip_window(const CtVolume& volume);

/// calibrate_boundary followed by clip_window.
WindowedVolume window(const CtVolume& volume);

/// (v + 1000) / 1400. Throws OutOfWindow outside [-1000, 400].
float normalize_value(std::int16_t v);
double denormalize_value(float p);

NormalizedSlice normalize(std::span<const std::int16_t> slice, std::size_t height, std::size_t width);
NormalizedVolume normalize(const WindowedVolume& volume);

}  // namespace lungseg::preprocess
