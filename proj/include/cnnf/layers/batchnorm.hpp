#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cnnf/layers/common.hpp"
#include "cnnf/tensor.hpp"

namespace cnnf {

// Per-channel batch normalization over (N, H, W).
//
// Running statistics: the first train-mode batch seeds running_mean/var with
// its own statistics; later batches blend them in as
//   running <- (1 - stat_momentum) * running + stat_momentum * batch
// Running variance uses the unbiased estimate; normalization uses the biased one.
template <class T>
struct BnParams {
  Tensor4<T> gamma;  // (1,1,1,C)
  Tensor4<T> beta;
  Tensor4<T> running_mean;
  Tensor4<T> running_var;
  double epsilon = 1e-5;
  double stat_momentum = 0.1;
  std::uint64_t stat_updates = 0;

  static BnParams identity(std::size_t channels) {
    BnParams p;
    p.gamma = Tensor4<T>({1, 1, 1, channels}, T(1));
    p.beta = Tensor4<T>({1, 1, 1, channels}, T(0));
    p.running_mean = Tensor4<T>({1, 1, 1, channels}, T(0));
    p.running_var = Tensor4<T>({1, 1, 1, channels}, T(1));
    return p;
  }

  std::size_t channels() const noexcept { return gamma.c(); }

  void validate(std::size_t input_channels) const {
    const Shape4 s{1, 1, 1, input_channels};
    if (gamma.shape() != s || beta.shape() != s || running_mean.shape() != s || running_var.shape() != s)
      throw ShapeError("batchnorm: parameter vectors must have " + std::to_string(input_channels) + " channels");
    if (!(epsilon > 0.0)) throw InvalidArgument("batchnorm: epsilon must be > 0");
    if (!(stat_momentum > 0.0 && stat_momentum < 1.0))
      throw InvalidArgument("batchnorm: stat_momentum must be in (0, 1)");
  }
};

template <class T>
struct BnGrads {
  Tensor4<T> gamma;
  Tensor4<T> beta;
};

template <class T>
struct BnCache {
  Mode mode = Mode::eval;
  Tensor4<T> xhat;
  std::vector<T> inv_std;
};

// Train mode mutates p's running statistics; eval mode leaves p untouched.
template <class T>
Tensor4<T> batchnorm(const Tensor4<T>& input, BnParams<T>& p, Mode mode, BnCache<T>* cache = nullptr) {
  const std::size_t c = input.c();
  p.validate(c);
  const std::size_t m = input.size() / c;
  const T eps = static_cast<T>(p.epsilon);
  Tensor4<T> out(input.shape());
  Tensor4<T> xhat(input.shape());
  std::vector<T> inv_std(c);

  if (mode == Mode::train) {
    if (m < 2)
      throw DegenerateVarianceError("batchnorm: train mode needs at least 2 values per channel, got " +
                                    std::to_string(m));
    std::vector<double> mean(c, 0.0), var(c, 0.0);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < c; ++k) mean[k] += input[j * c + k];
    for (auto& v : mean) v /= static_cast<double>(m);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < c; ++k) {
        const double d = input[j * c + k] - mean[k];
        var[k] += d * d;
      }
    for (auto& v : var) v /= static_cast<double>(m);
    for (std::size_t k = 0; k < c; ++k) inv_std[k] = static_cast<T>(1.0 / std::sqrt(var[k] + p.epsilon));
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < c; ++k) {
        const T xh = (input[j * c + k] - static_cast<T>(mean[k])) * inv_std[k];
        xhat[j * c + k] = xh;
        out[j * c + k] = p.gamma[k] * xh + p.beta[k];
      }
    const double unbias = static_cast<double>(m) / static_cast<double>(m - 1);
    for (std::size_t k = 0; k < c; ++k) {
      if (p.stat_updates == 0) {
        p.running_mean[k] = static_cast<T>(mean[k]);
        p.running_var[k] = static_cast<T>(var[k] * unbias);
      } else {
        const double mom = p.stat_momentum;
        p.running_mean[k] = static_cast<T>((1.0 - mom) * p.running_mean[k] + mom * mean[k]);
        p.running_var[k] = static_cast<T>((1.0 - mom) * p.running_var[k] + mom * var[k] * unbias);
      }
    }
    ++p.stat_updates;
  } else {
    for (std::size_t k = 0; k < c; ++k) inv_std[k] = T(1) / std::sqrt(p.running_var[k] + eps);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < c; ++k) {
        const T xh = (input[j * c + k] - p.running_mean[k]) * inv_std[k];
        xhat[j * c + k] = xh;
        out[j * c + k] = p.gamma[k] * xh + p.beta[k];
      }
  }
  if (cache) {
    cache->mode = mode;
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

// Pure eval-mode forward; usable on a const parameter record.
template <class T>
Tensor4<T> batchnorm_eval(const Tensor4<T>& input, const BnParams<T>& p) {
  BnParams<T> copy = p;
  return batchnorm(input, copy, Mode::eval);
}

template <class T>
Tensor4<T> batchnorm_backward(const Tensor4<T>& grad_out, const BnCache<T>& cache, const BnParams<T>& p,
                              BnGrads<T>* grads, bool want_input_grad = true) {
  if (cache.xhat.empty()) throw StateError("batchnorm backward: no cached forward");
  if (grad_out.shape() != cache.xhat.shape()) throw ShapeError("batchnorm backward: grad shape mismatch");
  const std::size_t c = grad_out.c();
  const std::size_t m = grad_out.size() / c;
  std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t k = 0; k < c; ++k) {
      sum_g[k] += grad_out[j * c + k];
      sum_gx[k] += static_cast<double>(grad_out[j * c + k]) * cache.xhat[j * c + k];
    }
  if (grads) {
    grads->gamma = Tensor4<T>({1, 1, 1, c});
    grads->beta = Tensor4<T>({1, 1, 1, c});
    for (std::size_t k = 0; k < c; ++k) {
      grads->gamma[k] = static_cast<T>(sum_gx[k]);
      grads->beta[k] = static_cast<T>(sum_g[k]);
    }
  }
  Tensor4<T> grad_in;
  if (!want_input_grad) return grad_in;
  grad_in = Tensor4<T>(grad_out.shape());
  if (cache.mode == Mode::eval) {
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < c; ++k) grad_in[j * c + k] = grad_out[j * c + k] * p.gamma[k] * cache.inv_std[k];
    return grad_in;
  }
  // dx = gamma * inv_std / m * (m*g - sum(g) - xhat * sum(g*xhat))
  const double md = static_cast<double>(m);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t k = 0; k < c; ++k) {
      const double v = md * grad_out[j * c + k] - sum_g[k] - cache.xhat[j * c + k] * sum_gx[k];
      grad_in[j * c + k] = static_cast<T>(static_cast<double>(p.gamma[k]) * cache.inv_std[k] / md * v);
    }
  return grad_in;
}

}  // namespace cnnf
