// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gersp/core/parallel.hpp"
#include "gersp/core/tensor.hpp"

namespace gersp {

template <typename Real>
struct ParamRef {
  std::string name;
  Tensor<Real>* value;
  Tensor<Real>* grad;
};

template <typename Real>
struct StateRef {
  std::string name;
  Tensor<Real>* value;
};

enum class BnMode {
  train,        // batch statistics; running stats updated
  group_stats,  // batch statistics; running stats untouched
  eval,         // running statistics
};

namespace detail {

template <typename Real>
using EMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using EMap = Eigen::Map<EMat<Real>>;
template <typename Real>
using ECMap = Eigen::Map<const EMat<Real>>;

template <typename Real>
void im2col(const Real* x, std::size_t cin, std::size_t h, std::size_t w,
            std::size_t k, std::size_t stride, std::size_t pad,
            std::size_t ho, std::size_t wo, Real* cols) {
  const std::size_t n = ho * wo;
  for (std::size_t c = 0; c < cin; ++c) {
    const Real* xc = x + c * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        Real* row = cols + ((c * k + ky) * k + kx) * n;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            for (std::size_t ox = 0; ox < wo; ++ox) row[oy * wo + ox] = Real(0);
            continue;
          }
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            row[oy * wo + ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w))
                                    ? Real(0)
                                    : xc[static_cast<std::size_t>(iy) * w +
                                         static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

template <typename Real>
void col2im_add(const Real* cols, std::size_t cin, std::size_t h, std::size_t w,
                std::size_t k, std::size_t stride, std::size_t pad,
                std::size_t ho, std::size_t wo, Real* x) {
  const std::size_t n = ho * wo;
  for (std::size_t c = 0; c < cin; ++c) {
    Real* xc = x + c * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const Real* row = cols + ((c * k + ky) * k + kx) * n;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            xc[static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)] +=
                row[oy * wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 2D convolution, square kernel, no bias (a batch-norm shift follows every
/// convolution in this backbone).
template <typename Real>
class Conv2d {
public:
  Conv2d() = default;
  Conv2d(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride,
         std::size_t pad)
      : cin_(cin), cout_(cout), k_(k), stride_(stride), pad_(pad),
        weight_({cout, cin, k, k}), grad_({cout, cin, k, k}) {}

  struct Cache {
    Tensor<Real> x;
  };

  Tensor<Real> forward(const Tensor<Real>& x, Cache* cache) const {
    const std::size_t b = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t ho = (h + 2 * pad_ - k_) / stride_ + 1;
    const std::size_t wo = (w + 2 * pad_ - k_) / stride_ + 1;
    Tensor<Real> y({b, cout_, ho, wo});
    const std::size_t kk = cin_ * k_ * k_;
    const std::size_t n = ho * wo;
    detail::ECMap<Real> wm(weight_.data(), cout_, kk);
    parallel_for(b, [&](std::size_t i) {
      std::vector<Real> cols(kk * n);
      detail::im2col(x.data() + i * cin_ * h * w, cin_, h, w, k_, stride_, pad_, ho, wo,
                     cols.data());
      detail::ECMap<Real> cm(cols.data(), kk, n);
      detail::EMap<Real> ym(y.data() + i * cout_ * n, cout_, n);
      ym.noalias() = wm * cm;
    });
    if (cache) cache->x = x;
    return y;
  }

  /// Accumulates the weight gradient (per-image partials reduced in batch
  /// order, so results do not depend on the worker count) and returns dx.
  Tensor<Real> backward(const Tensor<Real>& dy, const Cache& cache) {
    const Tensor<Real>& x = cache.x;
    const std::size_t b = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t ho = dy.dim(2), wo = dy.dim(3);
    const std::size_t kk = cin_ * k_ * k_;
    const std::size_t n = ho * wo;

    Tensor<Real> dx({b, cin_, h, w});
    std::vector<Tensor<Real>> dw_partial(b);
    detail::ECMap<Real> wm(weight_.data(), cout_, kk);
    parallel_for(b, [&](std::size_t i) {
      std::vector<Real> cols(kk * n);
      detail::im2col(x.data() + i * cin_ * h * w, cin_, h, w, k_, stride_, pad_, ho, wo,
                     cols.data());
      detail::ECMap<Real> cm(cols.data(), kk, n);
      detail::ECMap<Real> dym(dy.data() + i * cout_ * n, cout_, n);

      dw_partial[i] = Tensor<Real>({cout_, cin_, k_, k_});
      detail::EMap<Real> dwm(dw_partial[i].data(), cout_, kk);
      dwm.noalias() = dym * cm.transpose();

      std::vector<Real> dcols(kk * n);
      detail::EMap<Real> dcm(dcols.data(), kk, n);
      dcm.noalias() = wm.transpose() * dym;
      detail::col2im_add(dcols.data(), cin_, h, w, k_, stride_, pad_, ho, wo,
                         dx.data() + i * cin_ * h * w);
    });
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < grad_.numel(); ++j) grad_[j] += dw_partial[i][j];
    return dx;
  }

  Tensor<Real>& weight() { return weight_; }
  const Tensor<Real>& weight() const { return weight_; }
  std::size_t fan_in() const { return cin_ * k_ * k_; }

  void collect_params(const std::string& prefix, std::vector<ParamRef<Real>>& out) {
    out.push_back({prefix + "/W", &weight_, &grad_});
  }

private:
  std::size_t cin_ = 0, cout_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
  Tensor<Real> weight_, grad_;
};

/// Batch normalization over (B,H,W) per channel.
template <typename Real>
class BatchNorm2d {
public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t c, Real momentum = Real(0.1), Real eps = Real(1e-5))
      : c_(c), momentum_(momentum), eps_(eps), gamma_({c}), beta_({c}),
        ggamma_({c}), gbeta_({c}), running_mean_({c}), running_var_({c}) {
    gamma_.fill(Real(1));
    running_var_.fill(Real(1));
  }

  struct Cache {
    Tensor<Real> xhat;
    std::vector<Real> invstd;
  };

  Tensor<Real> forward(const Tensor<Real>& x, BnMode mode, Cache* cache) {
    const std::size_t b = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t hw = h * w;
    const std::size_t n = b * hw;
    Tensor<Real> y({b, c_, h, w});

    std::vector<Real> mean(c_), invstd(c_);
    if (mode == BnMode::eval) {
      for (std::size_t c = 0; c < c_; ++c) {
        mean[c] = running_mean_[c];
        invstd[c] = Real(1) / std::sqrt(running_var_[c] + eps_);
      }
    } else {
      // Serial batch-order reduction keeps statistics bit-stable.
      for (std::size_t c = 0; c < c_; ++c) {
        double sum = 0;
        for (std::size_t i = 0; i < b; ++i) {
          const Real* xc = x.data() + (i * c_ + c) * hw;
          for (std::size_t p = 0; p < hw; ++p) sum += static_cast<double>(xc[p]);
        }
        const double mu = sum / static_cast<double>(n);
        double sq = 0;
        for (std::size_t i = 0; i < b; ++i) {
          const Real* xc = x.data() + (i * c_ + c) * hw;
          for (std::size_t p = 0; p < hw; ++p) {
            const double d = static_cast<double>(xc[p]) - mu;
            sq += d * d;
          }
        }
        const double var = sq / static_cast<double>(n);
        mean[c] = static_cast<Real>(mu);
        invstd[c] = static_cast<Real>(1.0 / std::sqrt(var + static_cast<double>(eps_)));
        if (mode == BnMode::train) {
          const double unbiased = n > 1 ? sq / static_cast<double>(n - 1) : var;
          running_mean_[c] = static_cast<Real>(
              (1.0 - static_cast<double>(momentum_)) * static_cast<double>(running_mean_[c]) +
              static_cast<double>(momentum_) * mu);
          running_var_[c] = static_cast<Real>(
              (1.0 - static_cast<double>(momentum_)) * static_cast<double>(running_var_[c]) +
              static_cast<double>(momentum_) * unbiased);
        }
      }
    }

    const bool keep = cache && mode != BnMode::eval;
    if (keep) {
      cache->xhat = Tensor<Real>({b, c_, h, w});
      cache->invstd = invstd;
    }
    parallel_for(b, [&](std::size_t i) {
      for (std::size_t c = 0; c < c_; ++c) {
        const Real* xc = x.data() + (i * c_ + c) * hw;
        Real* yc = y.data() + (i * c_ + c) * hw;
        Real* xh = keep ? cache->xhat.data() + (i * c_ + c) * hw : nullptr;
        const Real mu = mean[c], is = invstd[c], g = gamma_[c], bb = beta_[c];
        for (std::size_t p = 0; p < hw; ++p) {
          const Real xhat = (xc[p] - mu) * is;
          if (xh) xh[p] = xhat;
          yc[p] = g * xhat + bb;
        }
      }
    });
    return y;
  }

  /// Train-mode backward (statistics depend on the input).
  Tensor<Real> backward(const Tensor<Real>& dy, const Cache& cache) {
    const std::size_t b = dy.dim(0), h = dy.dim(2), w = dy.dim(3);
    const std::size_t hw = h * w;
    const double n = static_cast<double>(b * hw);
    Tensor<Real> dx({b, c_, h, w});

    for (std::size_t c = 0; c < c_; ++c) {
      double sum_dy = 0, sum_dy_xhat = 0;
      for (std::size_t i = 0; i < b; ++i) {
        const Real* dyc = dy.data() + (i * c_ + c) * hw;
        const Real* xh = cache.xhat.data() + (i * c_ + c) * hw;
        for (std::size_t p = 0; p < hw; ++p) {
          sum_dy += static_cast<double>(dyc[p]);
          sum_dy_xhat += static_cast<double>(dyc[p]) * static_cast<double>(xh[p]);
        }
      }
      ggamma_[c] += static_cast<Real>(sum_dy_xhat);
      gbeta_[c] += static_cast<Real>(sum_dy);

      const double g = static_cast<double>(gamma_[c]);
      const double is = static_cast<double>(cache.invstd[c]);
      const double scale = g * is / n;
      for (std::size_t i = 0; i < b; ++i) {
        const Real* dyc = dy.data() + (i * c_ + c) * hw;
        const Real* xh = cache.xhat.data() + (i * c_ + c) * hw;
        Real* dxc = dx.data() + (i * c_ + c) * hw;
        for (std::size_t p = 0; p < hw; ++p)
          dxc[p] = static_cast<Real>(
              scale * (n * static_cast<double>(dyc[p]) - sum_dy -
                       static_cast<double>(xh[p]) * sum_dy_xhat));
      }
    }
    return dx;
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<Real>>& out) {
    out.push_back({prefix + "/gamma", &gamma_, &ggamma_});
    out.push_back({prefix + "/beta", &beta_, &gbeta_});
  }
  void collect_state(const std::string& prefix, std::vector<StateRef<Real>>& out) {
    out.push_back({prefix + "/running_mean", &running_mean_});
    out.push_back({prefix + "/running_var", &running_var_});
  }

  Tensor<Real>& running_mean() { return running_mean_; }
  Tensor<Real>& running_var() { return running_var_; }

private:
  std::size_t c_ = 0;
  Real momentum_ = Real(0.1);
  Real eps_ = Real(1e-5);
  Tensor<Real> gamma_, beta_, ggamma_, gbeta_;
  Tensor<Real> running_mean_, running_var_;
};

template <typename Real>
inline Tensor<Real> relu(const Tensor<Real>& x) {
  Tensor<Real> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > Real(0) ? x[i] : Real(0);
  return y;
}

/// dx = dy where the forward output was positive.
template <typename Real>
inline Tensor<Real> relu_backward(const Tensor<Real>& dy, const Tensor<Real>& y) {
  Tensor<Real> dx(dy.shape());
  for (std::size_t i = 0; i < dy.numel(); ++i)
    dx[i] = y[i] > Real(0) ? dy[i] : Real(0);
  return dx;
}

/// 3x3/stride-2/pad-1 max pooling (the wide-stem configuration).
template <typename Real>
class MaxPool2d {
public:
  struct Cache {
    std::vector<std::uint32_t> argmax;  // input HW offset per output element
    std::size_t in_h = 0, in_w = 0;
  };

  static Tensor<Real> forward(const Tensor<Real>& x, Cache* cache) {
    const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t ho = (h + 2 - 3) / 2 + 1, wo = (w + 2 - 3) / 2 + 1;
    Tensor<Real> y({b, c, ho, wo});
    if (cache) {
      cache->argmax.assign(b * c * ho * wo, 0);
      cache->in_h = h;
      cache->in_w = w;
    }
    parallel_for(b, [&](std::size_t i) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const Real* xc = x.data() + (i * c + ch) * h * w;
        Real* yc = y.data() + (i * c + ch) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy)
          for (std::size_t ox = 0; ox < wo; ++ox) {
            Real best = -std::numeric_limits<Real>::infinity();
            std::uint32_t best_idx = 0;
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * 2 + ky) - 1;
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * 2 + kx) - 1;
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h) || ix < 0 ||
                    ix >= static_cast<std::ptrdiff_t>(w))
                  continue;
                const Real v = xc[static_cast<std::size_t>(iy) * w +
                                  static_cast<std::size_t>(ix)];
                if (v > best) {
                  best = v;
                  best_idx = static_cast<std::uint32_t>(iy * static_cast<std::ptrdiff_t>(w) + ix);
                }
              }
            yc[oy * wo + ox] = best;
            if (cache)
              cache->argmax[((i * c + ch) * ho + oy) * wo + ox] = best_idx;
          }
      }
    });
    return y;
  }

  static Tensor<Real> backward(const Tensor<Real>& dy, const Cache& cache) {
    const std::size_t b = dy.dim(0), c = dy.dim(1), ho = dy.dim(2), wo = dy.dim(3);
    Tensor<Real> dx({b, c, cache.in_h, cache.in_w});
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) {
        Real* dxc = dx.data() + (i * c + ch) * cache.in_h * cache.in_w;
        const Real* dyc = dy.data() + (i * c + ch) * ho * wo;
        const std::uint32_t* am = cache.argmax.data() + (i * c + ch) * ho * wo;
        for (std::size_t p = 0; p < ho * wo; ++p) dxc[am[p]] += dyc[p];
      }
    return dx;
  }
};

/// Spatial mean over HxW: {B,C,H,W} -> {B,C}.
template <typename Real>
inline Tensor<Real> global_avg_pool(const Tensor<Real>& x) {
  const std::size_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<Real> y({b, c});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0;
      const Real* xc = x.data() + (i * c + ch) * hw;
      for (std::size_t p = 0; p < hw; ++p) s += static_cast<double>(xc[p]);
      y(i, ch) = static_cast<Real>(s / static_cast<double>(hw));
    }
  return y;
}

template <typename Real>
inline Tensor<Real> global_avg_pool_backward(const Tensor<Real>& dy, std::size_t h,
                                             std::size_t w) {
  const std::size_t b = dy.dim(0), c = dy.dim(1), hw = h * w;
  Tensor<Real> dx({b, c, h, w});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const Real g = dy(i, ch) / static_cast<Real>(hw);
      Real* dxc = dx.data() + (i * c + ch) * hw;
      for (std::size_t p = 0; p < hw; ++p) dxc[p] = g;
    }
  return dx;
}

/// Fully connected layer with bias: y = x W^T + b.
template <typename Real>
class Linear {
public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out)
      : in_(in), out_(out), weight_({out, in}), bias_({out}),
        gweight_({out, in}), gbias_({out}) {}

  struct Cache {
    Tensor<Real> x;
  };

  Tensor<Real> forward(const Tensor<Real>& x, Cache* cache) const {
    const std::size_t b = x.dim(0);
    Tensor<Real> y({b, out_});
    detail::ECMap<Real> xm(x.data(), b, in_);
    detail::ECMap<Real> wm(weight_.data(), out_, in_);
    detail::EMap<Real> ym(y.data(), b, out_);
    ym.noalias() = xm * wm.transpose();
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t o = 0; o < out_; ++o) y(i, o) += bias_[o];
    if (cache) cache->x = x;
    return y;
  }

  Tensor<Real> backward(const Tensor<Real>& dy, const Cache& cache) {
    const std::size_t b = dy.dim(0);
    detail::ECMap<Real> dym(dy.data(), b, out_);
    detail::ECMap<Real> xm(cache.x.data(), b, in_);
    detail::EMap<Real> gwm(gweight_.data(), out_, in_);
    gwm.noalias() += dym.transpose() * xm;
    for (std::size_t o = 0; o < out_; ++o) {
      double s = 0;
      for (std::size_t i = 0; i < b; ++i) s += static_cast<double>(dy(i, o));
      gbias_[o] += static_cast<Real>(s);
    }
    Tensor<Real> dx({b, in_});
    detail::EMap<Real> dxm(dx.data(), b, in_);
    detail::ECMap<Real> wm(weight_.data(), out_, in_);
    dxm.noalias() = dym * wm;
    return dx;
  }

  Tensor<Real>& weight() { return weight_; }
  Tensor<Real>& bias() { return bias_; }
  const Tensor<Real>& weight() const { return weight_; }
  const Tensor<Real>& bias() const { return bias_; }
  std::size_t fan_in() const { return in_; }
  std::size_t out_dim() const { return out_; }

  void collect_params(const std::string& prefix, std::vector<ParamRef<Real>>& out) {
    out.push_back({prefix + "/W", &weight_, &gweight_});
    out.push_back({prefix + "/b", &bias_, &gbias_});
  }

private:
  std::size_t in_ = 0, out_ = 0;
  Tensor<Real> weight_, bias_, gweight_, gbias_;
};

}  // namespace gersp
