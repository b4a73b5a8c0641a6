#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "lungseg/nn/params.hpp"
#include "lungseg/nn/tensor.hpp"

namespace lungseg::nn {

enum class LayerKind {
  Convolution,
  TransposedConvolution,
  MaxPool,
  AveragePool,
  Concatenation,
  BatchNormalization,
  ReLU,
  Sigmoid,
};

std::string_view to_string(LayerKind kind);

struct LayerInfo {
  LayerKind kind;
  std::string name;
  std::size_t out_channels = 0;
};

/// Values a layer keeps from forward for use in backward.
template <typename T>
struct Saved {
  std::vector<Tensor<T>> tensors;
  std::vector<T> values;
  std::vector<std::uint32_t> indices;
  Dims dims;
  bool flag = false;
};

/// Running-statistics refresh produced by a training-mode batch-norm forward.
template <typename T>
struct StatUpdate {
  ParamId mean;
  ParamId var;
  std::vector<T> batch_mean;
  std::vector<T> batch_var;  // unbiased
};

/// Per-pass state. Layers push Saved records in forward order and pop them in
/// reverse during backward, so a Context must see exactly one backward per
/// recorded forward.
template <typename T>
struct Context {
  explicit Context(const ParameterStore<T>& p) : params(p) {}

  const ParameterStore<T>& params;
  bool training = false;
  bool record = false;
  std::vector<Saved<T>> tape;
  std::vector<StatUpdate<T>> stats;

  void push(Saved<T> s) {
    if (record) tape.push_back(std::move(s));
  }
  Saved<T> pop() {
    Saved<T> s = std::move(tape.back());
    tape.pop_back();
    return s;
  }
};

template <typename T>
class Module {
 public:
  virtual ~Module() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, Context<T>& ctx) const = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy, Context<T>& ctx, GradientSet<T>& grads, bool need_dx) const = 0;
  virtual std::size_t out_channels(std::size_t in_channels) const = 0;
  virtual void describe(std::vector<LayerInfo>& out) const = 0;
};

template <typename T>
using ModulePtr = std::unique_ptr<Module<T>>;

/// Deterministic weight initialisation stream. Values are rounded through
/// single precision so float and double networks built from one seed agree.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  double uniform01() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  template <typename T>
  void he_uniform(Tensor<T>& t, std::size_t fan_in);

 private:
  std::mt19937_64 rng_;
};

struct ConvOptions {
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  bool bias = false;
  bool batch_norm = true;
  bool relu = true;
};

/// Convolution, optionally followed by batch normalisation and ReLU.
/// Parameters: `<name>.conv.weight` (out, in, kh, kw), `<name>.conv.bias`,
/// `<name>.bn.weight`, `<name>.bn.bias`, `<name>.bn.running_mean`, `<name>.bn.running_var`.
template <typename T>
class ConvUnit final : public Module<T> {
 public:
  static constexpr double kBnEps = 1e-3;

  ConvUnit(ParameterStore<T>& store, Initializer& init, const std::string& name, std::size_t in,
           std::size_t out, ConvOptions opts, bool encoder);

  Tensor<T> forward(const Tensor<T>& x, Context<T>& ctx) const override;
  Tensor<T> backward(const Tensor<T>& dy, Context<T>& ctx, GradientSet<T>& grads, bool need_dx) const override;
  std::size_t out_channels(std::size_t) const override { return out_; }
  void describe(std::vector<LayerInfo>& out) const override;

 private:
  std::string name_;
  std::size_t out_;
  ConvOptions opts_;
  ParamId weight_{}, bias_{}, gamma_{}, beta_{}, mean_{}, var_{};
};

/// 2x2 stride-2 transposed convolution with bias. Weight layout (in, out, 2, 2).
template <typename T>
class UpConv final : public Module<T> {
 public:
  UpConv(ParameterStore<T>& store, Initializer& init, const std::string& name, std::size_t in, std::size_t out,
         bool encoder);

  Tensor<T> forward(const Tensor<T>& x, Context<T>& ctx) const override;
  Tensor<T> backward(const Tensor<T>& dy, Context<T>& ctx, GradientSet<T>& grads, bool need_dx) const override;
  std::size_t out_channels(std::size_t) const override { return out_; }
  void describe(std::vector<LayerInfo>& out) const override;

 private:
  std::string name_;
  std::size_t out_;
  ParamId weight_{}, bias_{};
};

template <typename T>
class MaxPool final : public Module<T> {
 public:
  MaxPool(std::string name, std::size_t kernel, std::size_t stride)
      : name_(std::move(name)), kernel_(kernel), stride_(stride) {}

  Tensor<T> forward(const Tensor<T>& x, Context<T>& ctx) const override;
  Tensor<T> backward(const Tensor<T>& dy, Context<T>& ctx, GradientSet<T>& grads, bool need_dx) const override;
  std::size_t out_channels(std::size_t in) const override { return in; }
  void describe(std::vector<LayerInfo>& out) const override;

 private:
  std::string name_;
  std::size_t kernel_, stride_;
};

template <typename T>
class AvgPool final : public Module<T> {
 public:
  AvgPool(std::string name, std::size_t kernel, std::size_t stride)
      : name_(std::move(name)), kernel_(kernel), stride_(stride) {}

  Tensor<T> forward(const Tensor<T>& x, Context<T>& ctx) const override;
  Tensor<T> backward(const Tensor<T>& dy, Context<T>& ctx, GradientSet<T>& grads, bool need_dx) const override;
  std::size_t out_channels(std::size_t in) const override { return in; }
  void describe(std::vector<LayerInfo>& out) const override;

 private:
  std::string name_;
  std::size_t kernel_, stride_;
};

template <typename T>
class Sequential final : public Module<T> {
 public:
  Sequential() = default;
  Sequential& add(ModulePtr<T> m) {
    children_.push_back(std::move(m));
    return *this;
  }

  Tensor<T> forward(const Tensor<T>& x, Context<T>& ctx) const override;
  Tensor<T> backward(const Tensor<T>& dy, Context<T>& ctx, GradientSet<T>& grads, bool need_dx) const override;
  std::size_t out_channels(std::size_t in) const override;
  void describe(std::vector<LayerInfo>& out) const override;

 private:
  std::vector<ModulePtr<T>> children_;
};

/// Parallel branches over one input, concatenated along channels.
template <typename T>
class Branches final : public Module<T> {
 public:
  Branches(std::string name, std::size_t in_channels) : name_(std::move(name)), in_(in_channels) {}
  Branches& add(ModulePtr<T> m) {
    children_.push_back(std::move(m));
    return *this;
  }

  Tensor<T> forward(const Tensor<T>& x, Context<T>& ctx) const override;
  Tensor<T> backward(const Tensor<T>& dy, Context<T>& ctx, GradientSet<T>& grads, bool need_dx) const override;
  std::size_t out_channels(std::size_t in) const override;
  void describe(std::vector<LayerInfo>& out) const override;

 private:
  std::string name_;
  std::size_t in_;
  std::vector<ModulePtr<T>> children_;
};

}  // namespace lungseg::nn
