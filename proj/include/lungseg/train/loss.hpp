#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>

#include "lungseg/error.hpp"

namespace lungseg::train {

inline constexpr double kBceEpsilon = 1e-7;

/// Mean binary cross-entropy over all pixels; p is clamped to [eps, 1 - eps]
/// before the logarithms.
template <typename T>
double bce_loss(std::span<const T> p, std::span<const std::uint8_t> y) {
  if (p.size() != y.size() || p.empty()) {
    fail(ErrorCode::ShapeMismatch, "prediction and target sizes differ");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(static_cast<double>(p[i]), kBceEpsilon, 1.0 - kBceEpsilon);
    sum -= y[i] ? std::log(pc) : std::log1p(-pc);
  }
  return sum / static_cast<double>(p.size());
}

/// d(bce_loss)/d(logit) for sigmoid outputs p: (p - y) / N, and zero where the
/// clamp is active.
template <typename T>
void bce_logit_gradient(std::span<const T> p, std::span<const std::uint8_t> y, std::span<T> out) {
  if (p.size() != y.size() || p.size() != out.size()) {
    fail(ErrorCode::ShapeMismatch, "prediction and target sizes differ");
  }
  const double n = static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = static_cast<double>(p[i]);
    const bool clamped = pi < kBceEpsilon || pi > 1.0 - kBceEpsilon;
    out[i] = clamped ? T(0) : static_cast<T>((pi - y[i]) / n);
  }
}

}  // namespace lungseg::train
