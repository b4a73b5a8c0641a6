#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lungseg/nn/layers.hpp"
#include "lungseg/nn/params.hpp"
#include "lungseg/nn/tensor.hpp"

namespace lungseg::nn {

/// Rational channel multiplier. Channel count c becomes max(1, round(c * num / den)),
/// rounding half up, in exact integer arithmetic.
struct WidthMultiplier {
  std::uint32_t num = 1;
  std::uint32_t den = 1;

  std::size_t scale(std::size_t channels) const;
  /// Accepts "1", "1/8", "0.25".
  static WidthMultiplier parse(std::string_view text);
  std::string str() const;
};

struct NetworkConfig {
  std::size_t input_height = 512;
  std::size_t input_width = 512;
  WidthMultiplier width;
  std::array<std::size_t, 5> decoder_channels{512, 256, 128, 64, 32};
  bool freeze_encoder = true;
  std::uint64_t seed = 0;

  /// InvalidConfig unless both input sides are positive multiples of 32 and
  /// the multiplier lies in (0, 1].
  void validate() const;
};

/// Channel counts of the encoder taps at the configured width.
struct EncoderTaps {
  std::array<std::size_t, 4> skip{};  // S1..S4 at H/2, H/4, H/8, H/16
  std::size_t bottleneck = 0;         // H/32
};

/// Spatial extents seen during one forward pass, for contract checks.
struct ShapeTrace {
  std::array<Dims, 5> encoder;      // S1..S4, bottleneck
  std::array<Dims, 5> decoder;      // stage outputs, coarse to fine
  std::array<std::size_t, 5> concat_channels{};
  std::array<std::size_t, 5> up_channels{};
  std::array<std::size_t, 5> skip_channels{};
};

template <typename T>
struct LossAndGradients {
  double loss = 0.0;
  GradientSet<T> gradients;
  std::vector<StatUpdate<T>> running_stats;
};

/// Inception-encoder U-Net. Input (B, 3, H, W) in [0, 1]; output (B, 1, H, W)
/// sigmoid probabilities.
///
/// Encoder (same padding throughout, names follow the usual InceptionV3 layout):
///   S1  Conv2d_1a_3x3 (s2), Conv2d_2a_3x3, Conv2d_2b_3x3            -> 64 ch  @ H/2
///   S2  max-pool, Conv2d_3b_1x1, Conv2d_4a_3x3                       -> 192 ch @ H/4
///   S3  max-pool, Mixed_5b..5d (Inception-A)                         -> 288 ch @ H/8
///   S4  Mixed_6a (reduction), Mixed_6b..6e (factorised 7x7)          -> 768 ch @ H/16
///   B   Mixed_7a (reduction), Mixed_7b..7c (expanded 3x3)            -> 2048 ch @ H/32
/// Decoder stage k: 2x2 transposed conv, concat with S4, S3, S2, S1, then the
/// input image, then two 3x3 conv + BN + ReLU. Head: 1x1 conv + sigmoid.
template <typename T>
class Network {
 public:
  explicit Network(const NetworkConfig& cfg);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  const NetworkConfig& config() const { return cfg_; }
  ParameterStore<T>& parameters() { return params_; }
  const ParameterStore<T>& parameters() const { return params_; }
  const EncoderTaps& taps() const { return taps_; }

  /// Inference: batch-norm uses running statistics everywhere.
  Tensor<T> forward(const Tensor<T>& batch) const;
  /// training = true uses batch statistics in every unfrozen batch-norm layer.
  Tensor<T> forward(const Tensor<T>& batch, bool training) const;

  /// BCE of forward(batch, training) against targets (B*H*W values in {0, 1}).
  double loss(const Tensor<T>& batch, std::span<const std::uint8_t> targets, bool training) const;

  /// Exact gradients of the BCE loss for every learnable tensor. Frozen tensors
  /// get no entry; the encoder is not back-propagated at all when frozen.
  LossAndGradients<T> gradients(const Tensor<T>& batch, std::span<const std::uint8_t> targets,
                                bool training = true) const;

  /// Blends batch statistics into the running buffers: r = (1 - m) r + m b.
  void apply_running_stats(const std::vector<StatUpdate<T>>& updates, double momentum = 0.1);

  void set_encoder_frozen(bool frozen);
  bool encoder_trainable() const;

  ShapeTrace trace_shapes(const Tensor<T>& batch) const;
  std::vector<LayerInfo> layers() const;

 private:
  struct DecoderStage {
    std::unique_ptr<UpConv<T>> up;
    std::unique_ptr<Sequential<T>> convs;
    std::size_t up_channels = 0;
    std::size_t skip_channels = 0;
  };

  struct Pass {
    std::array<Tensor<T>, 4> skips;
    Tensor<T> probabilities;
    ShapeTrace trace;
  };

  void check_input(const Tensor<T>& batch) const;
  Pass run(const Tensor<T>& batch, Context<T>& ctx) const;

  NetworkConfig cfg_;
  ParameterStore<T> params_;
  EncoderTaps taps_;
  std::array<std::unique_ptr<Sequential<T>>, 5> encoder_;
  std::array<DecoderStage, 5> decoder_;
  std::unique_ptr<ConvUnit<T>> head_;
};

template <typename T>
Network<T> build_network(const NetworkConfig& cfg) {
  return Network<T>(cfg);
}

template <typename T>
ParameterCount count_parameters(const Network<T>& net) {
  return count_parameters(net.parameters());
}

}  // namespace lungseg::nn
