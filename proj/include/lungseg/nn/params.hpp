#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lungseg/nn/tensor.hpp"

namespace lungseg::nn {

/// Weights are learnable; buffers (batch-norm running statistics) are state
/// that travels with the weights but never receives a gradient.
enum class ParamRole { Weight, Buffer };

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  ParamRole role = ParamRole::Weight;
  bool encoder = false;
  bool trainable = true;

  bool learnable() const { return role == ParamRole::Weight && trainable; }
};

using ParamId = std::size_t;

/// Ordered, uniquely named parameter tensors.
template <typename T>
class ParameterStore {
 public:
  ParamId add(std::string name, Dims dims, ParamRole role, bool encoder) {
    if (index_.count(name)) fail(ErrorCode::InvalidConfig, "duplicate parameter name " + name);
    index_.emplace(name, params_.size());
    Parameter<T> p;
    p.name = std::move(name);
    p.value = Tensor<T>(std::move(dims));
    p.role = role;
    p.encoder = encoder;
    p.trainable = role == ParamRole::Weight;
    params_.push_back(std::move(p));
    return params_.size() - 1;
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](ParamId id) { return params_[id]; }
  const Parameter<T>& operator[](ParamId id) const { return params_[id]; }

  std::optional<ParamId> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, ParamId> index_;
};

/// Gradient tensors for the learnable parameters of a store, zero-initialised.
/// Frozen tensors and buffers have no entry.
template <typename T>
class GradientSet {
 public:
  GradientSet() = default;
  explicit GradientSet(const ParameterStore<T>& store) : grads_(store.size()), present_(store.size(), false) {
    for (ParamId id = 0; id < store.size(); ++id) {
      const auto& p = store[id];
      names_.push_back(p.name);
      if (p.learnable()) {
        grads_[id] = Tensor<T>(p.value.dims());
        present_[id] = true;
      }
    }
  }

  Tensor<T>* get(ParamId id) { return present_[id] ? &grads_[id] : nullptr; }
  const Tensor<T>* get(ParamId id) const { return present_[id] ? &grads_[id] : nullptr; }

  const Tensor<T>* find(std::string_view name) const {
    for (ParamId id = 0; id < names_.size(); ++id) {
      if (present_[id] && names_[id] == name) return &grads_[id];
    }
    return nullptr;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (ParamId id = 0; id < names_.size(); ++id) {
      if (present_[id]) out.push_back(names_[id]);
    }
    return out;
  }

  std::size_t slots() const { return grads_.size(); }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> grads_;
  std::vector<bool> present_;
};

struct ParameterCount {
  std::size_t total = 0;
  std::size_t trainable = 0;
};

/// Sums element counts of weight tensors; buffers are not counted.
template <typename T>
ParameterCount count_parameters(const ParameterStore<T>& store) {
  ParameterCount c;
  for (const auto& p : store) {
    if (p.role != ParamRole::Weight) continue;
    c.total += p.value.size();
    if (p.trainable) c.trainable += p.value.size();
  }
  return c;
}

}  // namespace lungseg::nn
