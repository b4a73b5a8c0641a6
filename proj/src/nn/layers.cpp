#include "lungseg/nn/layers.hpp"

#include <cmath>

#include "lungseg/nn/ops.hpp"

namespace lungseg::nn {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Convolution: return "conv";
    case LayerKind::TransposedConvolution: return "upconv";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::AveragePool: return "avgpool";
    case LayerKind::Concatenation: return "concat";
    case LayerKind::BatchNormalization: return "batchnorm";
    case LayerKind::ReLU: return "relu";
    case LayerKind::Sigmoid: return "sigmoid";
  }
  return "?";
}

template <typename T>
void Initializer::he_uniform(Tensor<T>& t, std::size_t fan_in) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (T& v : t.storage()) {
    v = static_cast<T>(static_cast<float>((2.0 * uniform01() - 1.0) * limit));
  }
}

// ---------------------------------------------------------------------------
// ConvUnit

template <typename T>
ConvUnit<T>::ConvUnit(ParameterStore<T>& store, Initializer& init, const std::string& name, std::size_t in,
                      std::size_t out, ConvOptions opts, bool encoder)
    : name_(name), out_(out), opts_(opts) {
  weight_ = store.add(name + ".conv.weight", {out, in, opts.kernel_h, opts.kernel_w}, ParamRole::Weight, encoder);
  init.he_uniform(store[weight_].value, in * opts.kernel_h * opts.kernel_w);
  if (opts.bias) bias_ = store.add(name + ".conv.bias", {out}, ParamRole::Weight, encoder);
  if (opts.batch_norm) {
    gamma_ = store.add(name + ".bn.weight", {out}, ParamRole::Weight, encoder);
    beta_ = store.add(name + ".bn.bias", {out}, ParamRole::Weight, encoder);
    mean_ = store.add(name + ".bn.running_mean", {out}, ParamRole::Buffer, encoder);
    var_ = store.add(name + ".bn.running_var", {out}, ParamRole::Buffer, encoder);
    store[gamma_].value.fill(T(1));
    store[var_].value.fill(T(1));
  }
}

template <typename T>
Tensor<T> ConvUnit<T>::forward(const Tensor<T>& x, Context<T>& ctx) const {
  const auto& P = ctx.params;
  Saved<T> s;
  Tensor<T> y = ops::conv2d_forward(x, P[weight_].value, opts_.bias ? &P[bias_].value : nullptr, opts_.stride);
  if (ctx.record) s.tensors.push_back(x);

  if (opts_.batch_norm) {
    const T eps = static_cast<T>(kBnEps);
    const bool batch_mode = ctx.training && P[gamma_].trainable;
    std::vector<T> mean, var;
    if (batch_mode) {
      auto stats = ops::batch_stats(y);
      mean = stats.mean;
      var = stats.var;
      const double m = static_cast<double>(y.batch() * y.plane());
      std::vector<T> unbiased(var);
      if (m > 1) {
        for (T& v : unbiased) v = static_cast<T>(v * m / (m - 1));
      }
      ctx.stats.push_back({mean_, var_, stats.mean, std::move(unbiased)});
    } else {
      auto mv = P[mean_].value.values();
      auto vv = P[var_].value.values();
      mean.assign(mv.begin(), mv.end());
      var.assign(vv.begin(), vv.end());
    }
    Tensor<T> xhat;
    y = ops::batchnorm_forward(y, mean, var, P[gamma_].value, P[beta_].value, eps, ctx.record ? &xhat : nullptr);
    if (ctx.record) {
      s.tensors.push_back(std::move(xhat));
      s.values = std::move(var);
      s.flag = batch_mode;
    }
  }
  if (opts_.relu) {
    ops::relu_inplace(y);
    if (ctx.record) s.tensors.push_back(y);
  }
  ctx.push(std::move(s));
  return y;
}

template <typename T>
Tensor<T> ConvUnit<T>::backward(const Tensor<T>& dy_in, Context<T>& ctx, GradientSet<T>& grads,
                                bool need_dx) const {
  const auto& P = ctx.params;
  Saved<T> s = ctx.pop();
  Tensor<T> dy = dy_in;
  if (opts_.relu) ops::relu_backward_inplace(s.tensors.back(), dy);
  if (opts_.batch_norm) {
    const T eps = static_cast<T>(kBnEps);
    const Tensor<T>& xhat = s.tensors[1];
    dy = s.flag ? ops::batchnorm_backward_batch(xhat, s.values, P[gamma_].value, dy, eps, grads.get(gamma_),
                                                grads.get(beta_), true)
                : ops::batchnorm_backward_fixed(xhat, s.values, P[gamma_].value, dy, eps, grads.get(gamma_),
                                                grads.get(beta_), true);
  }
  return ops::conv2d_backward(s.tensors[0], P[weight_].value, dy, opts_.stride, grads.get(weight_),
                              opts_.bias ? grads.get(bias_) : nullptr, need_dx);
}

template <typename T>
void ConvUnit<T>::describe(std::vector<LayerInfo>& out) const {
  out.push_back({LayerKind::Convolution, name_, out_});
  if (opts_.batch_norm) out.push_back({LayerKind::BatchNormalization, name_ + ".bn", out_});
  if (opts_.relu) out.push_back({LayerKind::ReLU, name_ + ".relu", out_});
}

// ---------------------------------------------------------------------------
// UpConv

template <typename T>
UpConv<T>::UpConv(ParameterStore<T>& store, Initializer& init, const std::string& name, std::size_t in,
                  std::size_t out, bool encoder)
    : name_(name), out_(out) {
  weight_ = store.add(name + ".weight", {in, out, 2, 2}, ParamRole::Weight, encoder);
  init.he_uniform(store[weight_].value, in);
  bias_ = store.add(name + ".bias", {out}, ParamRole::Weight, encoder);
}

template <typename T>
Tensor<T> UpConv<T>::forward(const Tensor<T>& x, Context<T>& ctx) const {
  Saved<T> s;
  if (ctx.record) s.tensors.push_back(x);
  ctx.push(std::move(s));
  return ops::upconv2x2_forward(x, ctx.params[weight_].value, &ctx.params[bias_].value);
}

template <typename T>
Tensor<T> UpConv<T>::backward(const Tensor<T>& dy, Context<T>& ctx, GradientSet<T>& grads, bool need_dx) const {
  Saved<T> s = ctx.pop();
  return ops::upconv2x2_backward(s.tensors[0], ctx.params[weight_].value, dy, grads.get(weight_),
                                 grads.get(bias_), need_dx);
}

template <typename T>
void UpConv<T>::describe(std::vector<LayerInfo>& out) const {
  out.push_back({LayerKind::TransposedConvolution, name_, out_});
}

// ---------------------------------------------------------------------------
// Pools

template <typename T>
Tensor<T> MaxPool<T>::forward(const Tensor<T>& x, Context<T>& ctx) const {
  Saved<T> s;
  Tensor<T> y = ops::maxpool_forward(x, kernel_, stride_, ctx.record ? &s.indices : nullptr);
  s.dims = x.dims();
  ctx.push(std::move(s));
  return y;
}

template <typename T>
Tensor<T> MaxPool<T>::backward(const Tensor<T>& dy, Context<T>& ctx, GradientSet<T>&, bool) const {
  Saved<T> s = ctx.pop();
  return ops::maxpool_backward(s.dims, dy, s.indices);
}

template <typename T>
void MaxPool<T>::describe(std::vector<LayerInfo>& out) const {
  out.push_back({LayerKind::MaxPool, name_, 0});
}

template <typename T>
Tensor<T> AvgPool<T>::forward(const Tensor<T>& x, Context<T>& ctx) const {
  Saved<T> s;
  s.dims = x.dims();
  ctx.push(std::move(s));
  return ops::avgpool_forward(x, kernel_, stride_);
}

template <typename T>
Tensor<T> AvgPool<T>::backward(const Tensor<T>& dy, Context<T>& ctx, GradientSet<T>&, bool) const {
  Saved<T> s = ctx.pop();
  return ops::avgpool_backward(s.dims, dy, kernel_, stride_);
}

template <typename T>
void AvgPool<T>::describe(std::vector<LayerInfo>& out) const {
  out.push_back({LayerKind::AveragePool, name_, 0});
}

// ---------------------------------------------------------------------------
// Containers

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, Context<T>& ctx) const {
  Tensor<T> h = children_.front()->forward(x, ctx);
  for (std::size_t i = 1; i < children_.size(); ++i) h = children_[i]->forward(h, ctx);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& dy, Context<T>& ctx, GradientSet<T>& grads, bool need_dx) const {
  Tensor<T> d = dy;
  for (std::size_t i = children_.size(); i-- > 0;) {
    d = children_[i]->backward(d, ctx, grads, i > 0 || need_dx);
  }
  return d;
}

template <typename T>
std::size_t Sequential<T>::out_channels(std::size_t in) const {
  for (const auto& c : children_) in = c->out_channels(in);
  return in;
}

template <typename T>
void Sequential<T>::describe(std::vector<LayerInfo>& out) const {
  for (const auto& c : children_) c->describe(out);
}

template <typename T>
Tensor<T> Branches<T>::forward(const Tensor<T>& x, Context<T>& ctx) const {
  std::vector<Tensor<T>> outs;
  outs.reserve(children_.size());
  for (const auto& c : children_) outs.push_back(c->forward(x, ctx));
  std::vector<const Tensor<T>*> parts;
  Saved<T> s;
  for (const auto& o : outs) {
    parts.push_back(&o);
    s.indices.push_back(static_cast<std::uint32_t>(o.channels()));
  }
  ctx.push(std::move(s));
  return ops::concat_channels(parts);
}

template <typename T>
Tensor<T> Branches<T>::backward(const Tensor<T>& dy, Context<T>& ctx, GradientSet<T>& grads, bool need_dx) const {
  Saved<T> s = ctx.pop();
  std::vector<std::size_t> channels(s.indices.begin(), s.indices.end());
  auto parts = ops::split_channels(dy, channels);
  Tensor<T> dx;
  for (std::size_t i = children_.size(); i-- > 0;) {
    Tensor<T> d = children_[i]->backward(parts[i], ctx, grads, need_dx);
    if (need_dx) ops::add_inplace(dx, d);
  }
  return dx;
}

template <typename T>
std::size_t Branches<T>::out_channels(std::size_t in) const {
  std::size_t total = 0;
  for (const auto& c : children_) total += c->out_channels(in);
  return total;
}

template <typename T>
void Branches<T>::describe(std::vector<LayerInfo>& out) const {
  for (const auto& c : children_) c->describe(out);
  out.push_back({LayerKind::Concatenation, name_ + ".concat", out_channels(in_)});
}

template void Initializer::he_uniform(Tensor<float>&, std::size_t);
template void Initializer::he_uniform(Tensor<double>&, std::size_t);

template class ConvUnit<float>;
template class ConvUnit<double>;
template class UpConv<float>;
template class UpConv<double>;
template class MaxPool<float>;
template class MaxPool<double>;
template class AvgPool<float>;
template class AvgPool<double>;
template class Sequential<float>;
template class Sequential<double>;
template class Branches<float>;
template class Branches<double>;

}  // namespace lungseg::nn
