#pragma once

#include <cstdint>
#include <vector>

#include "lungseg/nn/tensor.hpp"

// Forward and backward kernels for the layers of the segmentation network.
// All spatial ops use "same" padding: output extent is ceil(in / stride) and
// the padding total max((out-1)*stride + k - in, 0) is split with the smaller
// half before the data.

namespace lungseg::nn::ops {

struct Padding {
  std::size_t out = 0;
  std::size_t before = 0;
};

Padding same_padding(std::size_t in, std::size_t kernel, std::size_t stride);

/// weight: (out, in, kh, kw). bias may be null.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                         std::size_t stride);

/// Accumulates into dweight / dbias (either may be null). Returns dx when
/// need_dx, otherwise an empty tensor.
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy,
                          std::size_t stride, Tensor<T>* dweight, Tensor<T>* dbias, bool need_dx);

/// 2x2 stride-2 transposed convolution. weight: (in, out, 2, 2).
template <typename T>
Tensor<T> upconv2x2_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias);

template <typename T>
Tensor<T> upconv2x2_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy,
                             Tensor<T>* dweight, Tensor<T>* dbias, bool need_dx);

/// 3x3 stride-2 max pooling; padded cells never win. argmax receives the flat
/// input index of each output.
template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& x, std::size_t kernel, std::size_t stride,
                          std::vector<std::uint32_t>* argmax);

template <typename T>
Tensor<T> maxpool_backward(const Dims& x_dims, const Tensor<T>& dy, const std::vector<std::uint32_t>& argmax);

/// Average pooling that divides by the count of in-bounds cells.
template <typename T>
Tensor<T> avgpool_forward(const Tensor<T>& x, std::size_t kernel, std::size_t stride);

template <typename T>
Tensor<T> avgpool_backward(const Dims& x_dims, const Tensor<T>& dy, std::size_t kernel, std::size_t stride);

/// Per-channel statistics computed over (batch, height, width).
template <typename T>
struct BatchStats {
  std::vector<T> mean;
  std::vector<T> var;  // biased
};

template <typename T>
BatchStats<T> batch_stats(const Tensor<T>& x);

/// y = gamma * (x - mean) / sqrt(var + eps) + beta. Writes xhat when non-null.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const std::vector<T>& mean, const std::vector<T>& var,
                            const Tensor<T>& gamma, const Tensor<T>& beta, T eps, Tensor<T>* xhat);

/// Gradient when mean/var are the batch statistics of x.
template <typename T>
Tensor<T> batchnorm_backward_batch(const Tensor<T>& xhat, const std::vector<T>& var, const Tensor<T>& gamma,
                                   const Tensor<T>& dy, T eps, Tensor<T>* dgamma, Tensor<T>* dbeta, bool need_dx);

/// Gradient when mean/var are fixed running statistics.
template <typename T>
Tensor<T> batchnorm_backward_fixed(const Tensor<T>& xhat, const std::vector<T>& var, const Tensor<T>& gamma,
                                   const Tensor<T>& dy, T eps, Tensor<T>* dgamma, Tensor<T>* dbeta, bool need_dx);

template <typename T>
void relu_inplace(Tensor<T>& x);

/// dy masked by y > 0, in place.
template <typename T>
void relu_backward_inplace(const Tensor<T>& y, Tensor<T>& dy);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

/// Concatenation along channels.
template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts);

/// Inverse of concat_channels for gradients.
template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& x, const std::vector<std::size_t>& channels);

template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& x);

}  // namespace lungseg::nn::ops
