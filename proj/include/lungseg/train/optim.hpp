#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lungseg/nn/params.hpp"

namespace lungseg::train {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First and second moment estimates for one tensor.
struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

/// One bias-corrected Adam update of `param` in place. `step` is the 1-based
/// update count after this step.
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, AdamMoments& moments, std::uint64_t step, double lr,
                 const AdamHyper& hyper = {});

/// Adam over every learnable tensor of a parameter store. Moments are kept in
/// double precision; tensors without a gradient are left untouched.
template <typename T>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamHyper hyper = {}) : hyper_(hyper) {}

  void step(nn::ParameterStore<T>& params, const nn::GradientSet<T>& grads, double lr);
  std::uint64_t steps() const { return step_; }

 private:
  AdamHyper hyper_;
  std::uint64_t step_ = 0;
  std::vector<AdamMoments> moments_;
};

/// Reduce-on-plateau: after `patience` consecutive reports without an
/// improvement larger than `min_delta`, lr <- max(lr * factor, min_lr) and the
/// counter restarts.
struct PlateauConfig {
  double factor = 0.5;
  std::size_t patience = 3;
  double min_delta = 1e-4;
  double min_lr = 1e-6;
};

class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, PlateauConfig cfg);

  /// Records one epoch's validation loss and returns the learning rate to use next.
  double update(double val_loss);
  double lr() const { return lr_; }

 private:
  PlateauConfig cfg_;
  double lr_;
  double best_;
  std::size_t wait_ = 0;
};

/// Signals a stop after `patience` consecutive non-improving epochs.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, double min_delta) : patience_(patience), min_delta_(min_delta) {}

  /// Returns true when training should stop after this epoch.
  bool update(double val_loss);
  bool improved() const { return improved_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  double min_delta_;
  double best_ = 0.0;
  bool has_best_ = false;
  bool improved_ = false;
  std::size_t wait_ = 0;
};

}  // namespace lungseg::train
