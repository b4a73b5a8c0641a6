#include "lungseg/app/overlay.hpp"

#include <algorithm>
#include <fstream>
#include <string>

#include "lungseg/error.hpp"
#include "lungseg/preprocess.hpp"

namespace lungseg::app {

std::uint8_t gray_level(std::int16_t windowed) {
  if (windowed < preprocess::kWindowLow || windowed > preprocess::kWindowHigh) {
    fail(ErrorCode::OutOfWindow, "value " + std::to_string(windowed) + " lies outside the display window");
  }
  constexpr int span = preprocess::kWindowHigh - preprocess::kWindowLow;
  return static_cast<std::uint8_t>(((windowed - preprocess::kWindowLow) * 255 + span / 2) / span);
}

OverlayImage render_overlay(std::span<const std::int16_t> windowed, std::span<const std::uint8_t> pred,
                            std::span<const std::uint8_t> truth, std::size_t height, std::size_t width) {
  const std::size_t n = height * width;
  if (windowed.size() != n || pred.size() != n || truth.size() != n) {
    fail(ErrorCode::ShapeMismatch, "overlay inputs must all hold " + std::to_string(n) + " pixels");
  }
  OverlayImage img;
  img.height = height;
  img.width = width;
  img.pixels.resize(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool s = pred[i] != 0, g = truth[i] != 0;
    Rgb c;
    if (s && g) {
      c = kTruePositive;
    } else if (s) {
      c = kFalsePositive;
    } else if (g) {
      c = kFalseNegative;
    } else {
      const std::uint8_t v = gray_level(windowed[i]);
      c = {v, v, v};
    }
    std::copy(c.begin(), c.end(), img.pixels.begin() + static_cast<std::ptrdiff_t>(3 * i));
  }
  return img;
}

OverlayCounts count_classes(const OverlayImage& image) {
  OverlayCounts out;
  for (std::size_t i = 0; i + 2 < image.pixels.size(); i += 3) {
    const Rgb c{image.pixels[i], image.pixels[i + 1], image.pixels[i + 2]};
    if (c == kTruePositive) {
      ++out.true_positive;
    } else if (c == kFalsePositive) {
      ++out.false_positive;
    } else if (c == kFalseNegative) {
      ++out.false_negative;
    } else if (c[0] == c[1] && c[1] == c[2]) {
      ++out.background;
    } else {
      ++out.other;
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_ppm(const OverlayImage& image) {
  const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

void write_ppm(const OverlayImage& image, const std::filesystem::path& path) {
  const auto bytes = encode_ppm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoError, "short write to " + path.string());
}

}  // namespace lungseg::app
