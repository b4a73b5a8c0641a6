#include "lungseg/train/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lungseg::train {

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, AdamMoments& moments, std::uint64_t step, double lr,
                 const AdamHyper& hyper) {
  if (param.size() != grad.size()) fail(ErrorCode::ShapeMismatch, "parameter and gradient sizes differ");
  if (moments.m.empty() && moments.v.empty()) {
    moments.m.assign(param.size(), 0.0);
    moments.v.assign(param.size(), 0.0);
  }
  if (moments.m.size() != param.size() || moments.v.size() != param.size()) {
    fail(ErrorCode::ShapeMismatch, "Adam state does not match the parameter");
  }
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = static_cast<double>(grad[i]);
    moments.m[i] = hyper.beta1 * moments.m[i] + (1.0 - hyper.beta1) * g;
    moments.v[i] = hyper.beta2 * moments.v[i] + (1.0 - hyper.beta2) * g * g;
    const double mhat = moments.m[i] / c1;
    const double vhat = moments.v[i] / c2;
    param[i] = static_cast<T>(static_cast<double>(param[i]) - lr * mhat / (std::sqrt(vhat) + hyper.epsilon));
  }
}

template <typename T>
void AdamOptimizer<T>::step(nn::ParameterStore<T>& params, const nn::GradientSet<T>& grads, double lr) {
  if (grads.slots() != params.size()) fail(ErrorCode::ShapeMismatch, "gradient set belongs to another network");
  moments_.resize(params.size());
  ++step_;
  for (nn::ParamId id = 0; id < params.size(); ++id) {
    const auto* g = grads.get(id);
    if (!g || !params[id].learnable()) continue;
    adam_update<T>(params[id].value.values(), g->values(), moments_[id], step_, lr, hyper_);
  }
}

PlateauScheduler::PlateauScheduler(double initial_lr, PlateauConfig cfg)
    : cfg_(cfg), lr_(initial_lr), best_(std::numeric_limits<double>::infinity()) {}

double PlateauScheduler::update(double val_loss) {
  if (val_loss < best_ - cfg_.min_delta) {
    best_ = val_loss;
    wait_ = 0;
    return lr_;
  }
  if (++wait_ >= cfg_.patience) {
    lr_ = std::max(lr_ * cfg_.factor, cfg_.min_lr);
    wait_ = 0;
  }
  return lr_;
}

bool EarlyStopping::update(double val_loss) {
  improved_ = !has_best_ || val_loss < best_ - min_delta_;
  if (improved_) {
    best_ = val_loss;
    has_best_ = true;
    wait_ = 0;
    return false;
  }
  return ++wait_ >= patience_;
}

template void adam_update(std::span<float>, std::span<const float>, AdamMoments&, std::uint64_t, double,
                          const AdamHyper&);
template void adam_update(std::span<double>, std::span<const double>, AdamMoments&, std::uint64_t, double,
                          const AdamHyper&);
template class AdamOptimizer<float>;
template class AdamOptimizer<double>;

}  // namespace lungseg::train
