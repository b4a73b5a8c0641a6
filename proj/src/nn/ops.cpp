#include "lungseg/nn/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>

namespace lungseg::nn {

std::string format_dims(const Dims& dims) {
  std::string out = "(";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(dims[i]);
  }
  return out + ")";
}

namespace ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

void require_rank4(const Dims& d, const char* what) {
  if (d.size() != 4) fail(ErrorCode::ShapeMismatch, std::string(what) + " must be rank 4, got " + format_dims(d));
}

struct ConvGeometry {
  std::size_t channels, height, width, kh, kw, stride;
  Padding py, px;
  std::size_t rows() const { return channels * kh * kw; }
  std::size_t cols() const { return py.out * px.out; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1; }
};

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t oh = g.py.out, ow = g.px.out;
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = x + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj, ++row) {
        T* out = col + row * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.py.before);
          T* line = out + oy * ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(line, line + ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.px.before);
            line[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* x) {
  const std::size_t oh = g.py.out, ow = g.px.out;
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = x + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj, ++row) {
        const T* in = col + row * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.py.before);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * g.width;
          const T* line = in + oy * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.px.before);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) dst[ix] += line[ox];
          }
        }
      }
    }
  }
}

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& x, const Tensor<T>& weight, std::size_t stride) {
  require_rank4(x.dims(), "conv input");
  require_rank4(weight.dims(), "conv weight");
  if (weight.dim(1) != x.channels()) {
    fail(ErrorCode::ShapeMismatch, "conv expects " + std::to_string(weight.dim(1)) + " input channels, got " +
                                       std::to_string(x.channels()));
  }
  ConvGeometry g{x.channels(), x.height(), x.width(), weight.dim(2), weight.dim(3), stride, {}, {}};
  g.py = same_padding(g.height, g.kh, stride);
  g.px = same_padding(g.width, g.kw, stride);
  return g;
}

}  // namespace

Padding same_padding(std::size_t in, std::size_t kernel, std::size_t stride) {
  Padding p;
  p.out = (in + stride - 1) / stride;
  const std::ptrdiff_t total = static_cast<std::ptrdiff_t>((p.out - 1) * stride + kernel) -
                               static_cast<std::ptrdiff_t>(in);
  p.before = total > 0 ? static_cast<std::size_t>(total) / 2 : 0;
  return p;
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias, std::size_t stride) {
  const ConvGeometry g = conv_geometry(x, weight, stride);
  const std::size_t batch = x.batch(), out_ch = weight.dim(0), K = g.rows(), P = g.cols();
  Tensor<T> y({batch, out_ch, g.py.out, g.px.out});
  ConstMapMat<T> w(weight.data(), static_cast<Eigen::Index>(out_ch), static_cast<Eigen::Index>(K));
  std::vector<T> col(g.pointwise() ? 0 : K * P);
  for (std::size_t n = 0; n < batch; ++n) {
    const T* xn = x.data() + n * g.channels * g.height * g.width;
    const T* cols = xn;
    if (!g.pointwise()) {
      im2col(xn, g, col.data());
      cols = col.data();
    }
    ConstMapMat<T> c(cols, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
    MapMat<T> yn(y.data() + n * out_ch * P, static_cast<Eigen::Index>(out_ch), static_cast<Eigen::Index>(P));
    yn.noalias() = w * c;
    if (bias) {
      for (std::size_t o = 0; o < out_ch; ++o) yn.row(static_cast<Eigen::Index>(o)).array() += (*bias)[o];
    }
  }
  return y;
}

template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, std::size_t stride,
                          Tensor<T>* dweight, Tensor<T>* dbias, bool need_dx) {
  const ConvGeometry g = conv_geometry(x, weight, stride);
  const std::size_t batch = x.batch(), out_ch = weight.dim(0), K = g.rows(), P = g.cols();
  if (dy.dims() != Dims{batch, out_ch, g.py.out, g.px.out}) {
    fail(ErrorCode::ShapeMismatch, "conv gradient has dims " + format_dims(dy.dims()));
  }
  ConstMapMat<T> w(weight.data(), static_cast<Eigen::Index>(out_ch), static_cast<Eigen::Index>(K));
  Tensor<T> dx;
  if (need_dx) dx = Tensor<T>(x.dims());
  std::vector<T> col(g.pointwise() ? 0 : K * P);
  std::vector<T> dcol(need_dx && !g.pointwise() ? K * P : 0);
  for (std::size_t n = 0; n < batch; ++n) {
    const T* xn = x.data() + n * g.channels * g.height * g.width;
    ConstMapMat<T> dyn(dy.data() + n * out_ch * P, static_cast<Eigen::Index>(out_ch), static_cast<Eigen::Index>(P));
    if (dweight) {
      const T* cols = xn;
      if (!g.pointwise()) {
        im2col(xn, g, col.data());
        cols = col.data();
      }
      ConstMapMat<T> c(cols, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
      MapMat<T> dw(dweight->data(), static_cast<Eigen::Index>(out_ch), static_cast<Eigen::Index>(K));
      dw.noalias() += dyn * c.transpose();
    }
    if (dbias) {
      for (std::size_t o = 0; o < out_ch; ++o) (*dbias)[o] += dyn.row(static_cast<Eigen::Index>(o)).sum();
    }
    if (need_dx) {
      T* dxn = dx.data() + n * g.channels * g.height * g.width;
      if (g.pointwise()) {
        MapMat<T> d(dxn, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
        d.noalias() = w.transpose() * dyn;
      } else {
        MapMat<T> d(dcol.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
        d.noalias() = w.transpose() * dyn;
        col2im_add(dcol.data(), g, dxn);
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> upconv2x2_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias) {
  require_rank4(x.dims(), "upconv input");
  if (weight.rank() != 4 || weight.dim(0) != x.channels() || weight.dim(2) != 2 || weight.dim(3) != 2) {
    fail(ErrorCode::ShapeMismatch, "upconv weight " + format_dims(weight.dims()) + " does not fit input " +
                                       format_dims(x.dims()));
  }
  const std::size_t batch = x.batch(), cin = x.channels(), cout = weight.dim(1), h = x.height(), w = x.width();
  const std::size_t P = h * w;
  Tensor<T> y({batch, cout, 2 * h, 2 * w});
  ConstMapMat<T> wm(weight.data(), static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(cout * 4));
  RowMat<T> z(static_cast<Eigen::Index>(cout * 4), static_cast<Eigen::Index>(P));
  for (std::size_t n = 0; n < batch; ++n) {
    ConstMapMat<T> xn(x.data() + n * cin * P, static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(P));
    z.noalias() = wm.transpose() * xn;
    for (std::size_t co = 0; co < cout; ++co) {
      const T b = bias ? (*bias)[co] : T(0);
      for (std::size_t a = 0; a < 2; ++a) {
        for (std::size_t bb = 0; bb < 2; ++bb) {
          const T* zr = z.data() + (co * 4 + a * 2 + bb) * P;
          for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) y.at(n, co, 2 * i + a, 2 * j + bb) = zr[i * w + j] + b;
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> upconv2x2_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, Tensor<T>* dweight,
                             Tensor<T>* dbias, bool need_dx) {
  const std::size_t batch = x.batch(), cin = x.channels(), cout = weight.dim(1), h = x.height(), w = x.width();
  const std::size_t P = h * w;
  if (dy.dims() != Dims{batch, cout, 2 * h, 2 * w}) {
    fail(ErrorCode::ShapeMismatch, "upconv gradient has dims " + format_dims(dy.dims()));
  }
  ConstMapMat<T> wm(weight.data(), static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(cout * 4));
  Tensor<T> dx;
  if (need_dx) dx = Tensor<T>(x.dims());
  RowMat<T> dz(static_cast<Eigen::Index>(cout * 4), static_cast<Eigen::Index>(P));
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t a = 0; a < 2; ++a) {
        for (std::size_t bb = 0; bb < 2; ++bb) {
          T* zr = dz.data() + (co * 4 + a * 2 + bb) * P;
          for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) zr[i * w + j] = dy.at(n, co, 2 * i + a, 2 * j + bb);
          }
        }
      }
      if (dbias) (*dbias)[co] += dz.block(static_cast<Eigen::Index>(co * 4), 0, 4, static_cast<Eigen::Index>(P)).sum();
    }
    ConstMapMat<T> xn(x.data() + n * cin * P, static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(P));
    if (dweight) {
      MapMat<T> dw(dweight->data(), static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(cout * 4));
      dw.noalias() += xn * dz.transpose();
    }
    if (need_dx) {
      MapMat<T> dxn(dx.data() + n * cin * P, static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(P));
      dxn.noalias() = wm * dz;
    }
  }
  return dx;
}

template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& x, std::size_t kernel, std::size_t stride,
                          std::vector<std::uint32_t>* argmax) {
  require_rank4(x.dims(), "max-pool input");
  const Padding py = same_padding(x.height(), kernel, stride), px = same_padding(x.width(), kernel, stride);
  const std::size_t planes = x.batch() * x.channels(), H = x.height(), W = x.width();
  Tensor<T> y({x.batch(), x.channels(), py.out, px.out});
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t o = 0;
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * H * W;
    for (std::size_t oy = 0; oy < py.out; ++oy) {
      for (std::size_t ox = 0; ox < px.out; ++ox, ++o) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t ki = 0; ki < kernel; ++ki) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ki) - static_cast<std::ptrdiff_t>(py.before);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t kj = 0; kj < kernel; ++kj) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kj) - static_cast<std::ptrdiff_t>(px.before);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
            const std::size_t idx = base + static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix);
            if (x[idx] > best) {
              best = x[idx];
              best_idx = idx;
            }
          }
        }
        y[o] = best;
        if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(best_idx);
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> maxpool_backward(const Dims& x_dims, const Tensor<T>& dy, const std::vector<std::uint32_t>& argmax) {
  Tensor<T> dx(x_dims);
  for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax[o]] += dy[o];
  return dx;
}

template <typename T>
Tensor<T> avgpool_forward(const Tensor<T>& x, std::size_t kernel, std::size_t stride) {
  require_rank4(x.dims(), "avg-pool input");
  const Padding py = same_padding(x.height(), kernel, stride), px = same_padding(x.width(), kernel, stride);
  const std::size_t planes = x.batch() * x.channels(), H = x.height(), W = x.width();
  Tensor<T> y({x.batch(), x.channels(), py.out, px.out});
  std::size_t o = 0;
  for (std::size_t p = 0; p < planes; ++p) {
    const T* plane = x.data() + p * H * W;
    for (std::size_t oy = 0; oy < py.out; ++oy) {
      for (std::size_t ox = 0; ox < px.out; ++ox, ++o) {
        T sum = 0;
        std::size_t count = 0;
        for (std::size_t ki = 0; ki < kernel; ++ki) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ki) - static_cast<std::ptrdiff_t>(py.before);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t kj = 0; kj < kernel; ++kj) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kj) - static_cast<std::ptrdiff_t>(px.before);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
            sum += plane[static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)];
            ++count;
          }
        }
        y[o] = sum / static_cast<T>(count);
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> avgpool_backward(const Dims& x_dims, const Tensor<T>& dy, std::size_t kernel, std::size_t stride) {
  Tensor<T> dx(x_dims);
  const std::size_t H = x_dims[2], W = x_dims[3], planes = x_dims[0] * x_dims[1];
  const Padding py = same_padding(H, kernel, stride), px = same_padding(W, kernel, stride);
  std::size_t o = 0;
  for (std::size_t p = 0; p < planes; ++p) {
    T* plane = dx.data() + p * H * W;
    for (std::size_t oy = 0; oy < py.out; ++oy) {
      const auto y0 = static_cast<std::ptrdiff_t>(oy * stride) - static_cast<std::ptrdiff_t>(py.before);
      const std::size_t ylo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(y0, 0));
      const std::size_t yhi = static_cast<std::size_t>(
          std::min<std::ptrdiff_t>(y0 + static_cast<std::ptrdiff_t>(kernel), static_cast<std::ptrdiff_t>(H)));
      for (std::size_t ox = 0; ox < px.out; ++ox, ++o) {
        const auto x0 = static_cast<std::ptrdiff_t>(ox * stride) - static_cast<std::ptrdiff_t>(px.before);
        const std::size_t xlo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(x0, 0));
        const std::size_t xhi = static_cast<std::size_t>(
            std::min<std::ptrdiff_t>(x0 + static_cast<std::ptrdiff_t>(kernel), static_cast<std::ptrdiff_t>(W)));
        const T share = dy[o] / static_cast<T>((yhi - ylo) * (xhi - xlo));
        for (std::size_t iy = ylo; iy < yhi; ++iy) {
          for (std::size_t ix = xlo; ix < xhi; ++ix) plane[iy * W + ix] += share;
        }
      }
    }
  }
  return dx;
}

template <typename T>
BatchStats<T> batch_stats(const Tensor<T>& x) {
  const std::size_t C = x.channels(), P = x.plane(), N = x.batch();
  BatchStats<T> s{std::vector<T>(C, T(0)), std::vector<T>(C, T(0))};
  const double count = static_cast<double>(N * P);
  for (std::size_t c = 0; c < C; ++c) {
    double sum = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* p = x.data() + (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) sum += p[i];
    }
    const double mean = sum / count;
    double sq = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* p = x.data() + (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) sq += (p[i] - mean) * (p[i] - mean);
    }
    s.mean[c] = static_cast<T>(mean);
    s.var[c] = static_cast<T>(sq / count);
  }
  return s;
}

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const std::vector<T>& mean, const std::vector<T>& var,
                            const Tensor<T>& gamma, const Tensor<T>& beta, T eps, Tensor<T>* xhat) {
  const std::size_t C = x.channels(), P = x.plane(), N = x.batch();
  Tensor<T> y(x.dims());
  if (xhat) *xhat = Tensor<T>(x.dims());
  for (std::size_t c = 0; c < C; ++c) {
    const T inv = T(1) / std::sqrt(var[c] + eps);
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) {
        const T h = (x[off + i] - mean[c]) * inv;
        if (xhat) (*xhat)[off + i] = h;
        y[off + i] = gamma[c] * h + beta[c];
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> batchnorm_backward_batch(const Tensor<T>& xhat, const std::vector<T>& var, const Tensor<T>& gamma,
                                   const Tensor<T>& dy, T eps, Tensor<T>* dgamma, Tensor<T>* dbeta, bool need_dx) {
  const std::size_t C = xhat.channels(), P = xhat.plane(), N = xhat.batch();
  const T M = static_cast<T>(N * P);
  Tensor<T> dx;
  if (need_dx) dx = Tensor<T>(xhat.dims());
  for (std::size_t c = 0; c < C; ++c) {
    T sum_dy = 0, sum_dy_xhat = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) {
        sum_dy += dy[off + i];
        sum_dy_xhat += dy[off + i] * xhat[off + i];
      }
    }
    if (dgamma) (*dgamma)[c] += sum_dy_xhat;
    if (dbeta) (*dbeta)[c] += sum_dy;
    if (!need_dx) continue;
    const T scale = gamma[c] / std::sqrt(var[c] + eps) / M;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) {
        dx[off + i] = scale * (M * dy[off + i] - sum_dy - xhat[off + i] * sum_dy_xhat);
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> batchnorm_backward_fixed(const Tensor<T>& xhat, const std::vector<T>& var, const Tensor<T>& gamma,
                                   const Tensor<T>& dy, T eps, Tensor<T>* dgamma, Tensor<T>* dbeta, bool need_dx) {
  const std::size_t C = xhat.channels(), P = xhat.plane(), N = xhat.batch();
  Tensor<T> dx;
  if (need_dx) dx = Tensor<T>(xhat.dims());
  for (std::size_t c = 0; c < C; ++c) {
    const T scale = gamma[c] / std::sqrt(var[c] + eps);
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) {
        if (dgamma) (*dgamma)[c] += dy[off + i] * xhat[off + i];
        if (dbeta) (*dbeta)[c] += dy[off + i];
        if (need_dx) dx[off + i] = dy[off + i] * scale;
      }
    }
  }
  return dx;
}

template <typename T>
void relu_inplace(Tensor<T>& x) {
  for (T& v : x.storage()) v = v > T(0) ? v : T(0);
}

template <typename T>
void relu_backward_inplace(const Tensor<T>& y, Tensor<T>& dy) {
  for (std::size_t i = 0; i < dy.size(); ++i) {
    if (!(y[i] > T(0))) dy[i] = T(0);
  }
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T v = x[i];
    // split on sign to avoid overflow of exp
    y[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  }
  return y;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
  const Tensor<T>& first = *parts.front();
  const std::size_t N = first.batch(), P = first.plane();
  std::size_t C = 0;
  for (const Tensor<T>* p : parts) {
    if (p->batch() != N || p->height() != first.height() || p->width() != first.width()) {
      fail(ErrorCode::ShapeMismatch, "concatenation of " + format_dims(p->dims()) + " with " +
                                         format_dims(first.dims()));
    }
    C += p->channels();
  }
  Tensor<T> y({N, C, first.height(), first.width()});
  for (std::size_t n = 0; n < N; ++n) {
    T* dst = y.data() + n * C * P;
    for (const Tensor<T>* p : parts) {
      const std::size_t len = p->channels() * P;
      const T* src = p->data() + n * len;
      std::copy(src, src + len, dst);
      dst += len;
    }
  }
  return y;
}

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& x, const std::vector<std::size_t>& channels) {
  const std::size_t N = x.batch(), P = x.plane(), C = x.channels();
  std::vector<Tensor<T>> out;
  out.reserve(channels.size());
  std::size_t offset = 0;
  for (std::size_t ch : channels) {
    Tensor<T> part({N, ch, x.height(), x.width()});
    for (std::size_t n = 0; n < N; ++n) {
      const T* src = x.data() + (n * C + offset) * P;
      std::copy(src, src + ch * P, part.data() + n * ch * P);
    }
    offset += ch;
    out.push_back(std::move(part));
  }
  if (offset != C) fail(ErrorCode::ShapeMismatch, "channel split does not cover the tensor");
  return out;
}

template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& x) {
  if (acc.empty()) {
    acc = x;
    return;
  }
  if (acc.dims() != x.dims()) fail(ErrorCode::ShapeMismatch, "gradient accumulation shape mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) acc[i] += x[i];
}

#define LUNGSEG_INSTANTIATE_OPS(T)                                                                          \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, std::size_t);     \
  template Tensor<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,     \
                                     Tensor<T>*, Tensor<T>*, bool);                                         \
  template Tensor<T> upconv2x2_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);              \
  template Tensor<T> upconv2x2_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*,   \
                                        Tensor<T>*, bool);                                                  \
  template Tensor<T> maxpool_forward(const Tensor<T>&, std::size_t, std::size_t, std::vector<std::uint32_t>*); \
  template Tensor<T> maxpool_backward(const Dims&, const Tensor<T>&, const std::vector<std::uint32_t>&);    \
  template Tensor<T> avgpool_forward(const Tensor<T>&, std::size_t, std::size_t);                          \
  template Tensor<T> avgpool_backward(const Dims&, const Tensor<T>&, std::size_t, std::size_t);            \
  template BatchStats<T> batch_stats(const Tensor<T>&);                                                     \
  template Tensor<T> batchnorm_forward(const Tensor<T>&, const std::vector<T>&, const std::vector<T>&,      \
                                       const Tensor<T>&, const Tensor<T>&, T, Tensor<T>*);                  \
  template Tensor<T> batchnorm_backward_batch(const Tensor<T>&, const std::vector<T>&, const Tensor<T>&,    \
                                              const Tensor<T>&, T, Tensor<T>*, Tensor<T>*, bool);           \
  template Tensor<T> batchnorm_backward_fixed(const Tensor<T>&, const std::vector<T>&, const Tensor<T>&,    \
                                              const Tensor<T>&, T, Tensor<T>*, Tensor<T>*, bool);           \
  template void relu_inplace(Tensor<T>&);                                                                   \
  template void relu_backward_inplace(const Tensor<T>&, Tensor<T>&);                                        \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                             \
  template Tensor<T> concat_channels(const std::vector<const Tensor<T>*>&);                                 \
  template std::vector<Tensor<T>> split_channels(const Tensor<T>&, const std::vector<std::size_t>&);        \
  template void add_inplace(Tensor<T>&, const Tensor<T>&);

LUNGSEG_INSTANTIATE_OPS(float)
LUNGSEG_INSTANTIATE_OPS(double)

}  // namespace ops
}  // namespace lungseg::nn
