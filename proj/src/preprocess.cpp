#include "lungseg/preprocess.hpp"

#include <algorithm>
#include <string>

namespace lungseg::preprocess {

namespace {
constexpr double kWindowSpan = static_cast<double>(kWindowHigh) - kWindowLow;
}

WindowedVolume::WindowedVolume(Geometry geometry, std::vector<std::int16_t> voxels)
    : CtVolume(std::move(geometry), std::move(voxels)) {
  for (std::int16_t v : this->voxels()) {
    if (v < kWindowLow || v > kWindowHigh) {
      fail(ErrorCode::OutOfWindow, "voxel " + std::to_string(v) + " outside [-1000, 400]");
    }
  }
}

CtVolume calibrate_boundary(const CtVolume& volume) {
  auto in = volume.voxels();
  std::vector<std::int16_t> out(in.size());
  std::transform(in.begin(), in.end(), out.begin(), calibrate_value);
  return CtVolume(volume.geometry(), std::move(out));
}

WindowedVolume clip_window(const CtVolume& volume) {
  auto in = volume.voxels();
  std::vector<std::int16_t> out(in.size());
  std::transform(in.begin(), in.end(), out.begin(), clip_value);
  return WindowedVolume(volume.geometry(), std::move(out));
}

WindowedVolume window(const CtVolume& volume) { return clip_window(calibrate_boundary(volume)); }

float normalize_value(std::int16_t v) {
  if (v < kWindowLow || v > kWindowHigh) {
    fail(ErrorCode::OutOfWindow, "value " + std::to_string(v) + " outside [-1000, 400]");
  }
  return static_cast<float>((static_cast<double>(v) - kWindowLow) / kWindowSpan);
}

double denormalize_value(float p) { return static_cast<double>(p) * kWindowSpan + kWindowLow; }

NormalizedSlice normalize(std::span<const std::int16_t> slice, std::size_t height, std::size_t width) {
  if (slice.size() != height * width) {
    fail(ErrorCode::ShapeMismatch, "slice length does not match height x width");
  }
  NormalizedSlice out{height, width, std::vector<float>(slice.size())};
  std::transform(slice.begin(), slice.end(), out.pixels.begin(), normalize_value);
  return out;
}

NormalizedVolume normalize(const WindowedVolume& volume) {
  auto in = volume.voxels();
  NormalizedVolume out{volume.geometry(), std::vector<float>(in.size())};
  std::transform(in.begin(), in.end(), out.voxels.begin(), normalize_value);
  return out;
}

}  // namespace lungseg::preprocess
