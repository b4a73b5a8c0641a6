#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lungseg::app {

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kTruePositive{0, 0, 255};
inline constexpr Rgb kFalsePositive{255, 0, 0};
inline constexpr Rgb kFalseNegative{0, 255, 0};

/// Row-major interleaved 8-bit RGB.
struct OverlayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  Rgb at(std::size_t y, std::size_t x) const {
    const std::size_t i = 3 * (y * width + x);
    return {pixels[i], pixels[i + 1], pixels[i + 2]};
  }
};

struct OverlayCounts {
  std::size_t true_positive = 0;
  std::size_t false_positive = 0;
  std::size_t false_negative = 0;
  std::size_t background = 0;
  std::size_t other = 0;  // neither a class colour nor gray; always 0 for rendered images
};

/// Windowed HU in [-1000, 400] to 0..255, rounded to nearest.
std::uint8_t gray_level(std::int16_t windowed);

/// TP blue, prediction-only red, truth-only green, otherwise the gray level of
/// the windowed slice. ShapeMismatch unless all three spans hold height*width values.
OverlayImage render_overlay(std::span<const std::int16_t> windowed, std::span<const std::uint8_t> pred,
                            std::span<const std::uint8_t> truth, std::size_t height, std::size_t width);

OverlayCounts count_classes(const OverlayImage& image);

/// Binary PPM: "P6\n<w> <h>\n255\n" followed by the pixel bytes.
std::vector<std::uint8_t> encode_ppm(const OverlayImage& image);
void write_ppm(const OverlayImage& image, const std::filesystem::path& path);

}  // namespace lungseg::app
