#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "cnnf/tensor.hpp"

namespace cnnf {

// Cross-channel local response normalization:
//   out_k = in_k / (k + alpha/n * sum_{j in window(k)} in_j^2)^beta
// with a window of n channels centred on k, clipped at the channel edges.
struct LrnParams {
  std::size_t depth = 5;
  double k = 2.0;
  double alpha = 1e-4;
  double beta = 0.75;

  void validate() const {
    if (depth < 1 || depth % 2 == 0) throw InvalidArgument("lrn: depth must be an odd positive integer");
    if (!(k > 0.0)) throw InvalidArgument("lrn: k must be > 0");
    if (!(beta > 0.0)) throw InvalidArgument("lrn: beta must be > 0");
  }
};

template <class T>
struct LrnCache {
  Tensor4<T> input;
  std::vector<T> scale;  // the bracketed denominator base, per element
};

template <class T>
Tensor4<T> lrn(const Tensor4<T>& input, const LrnParams& p, LrnCache<T>* cache = nullptr) {
  p.validate();
  const std::size_t c = input.c();
  const std::size_t half = p.depth / 2;
  const T coeff = static_cast<T>(p.alpha / static_cast<double>(p.depth));
  const T kc = static_cast<T>(p.k);
  const T beta = static_cast<T>(p.beta);
  Tensor4<T> out(input.shape());
  std::vector<T> scale(input.size());
  const std::size_t positions = input.size() / c;
  for (std::size_t pos = 0; pos < positions; ++pos) {
    const T* x = input.data().data() + pos * c;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t lo = ch >= half ? ch - half : 0;
      const std::size_t hi = std::min(c - 1, ch + half);
      T sum = T(0);
      for (std::size_t j = lo; j <= hi; ++j) sum += x[j] * x[j];
      const T s = kc + coeff * sum;
      scale[pos * c + ch] = s;
      out[pos * c + ch] = x[ch] * std::pow(s, -beta);
    }
  }
  if (cache) {
    cache->input = input;
    cache->scale = std::move(scale);
  }
  return out;
}

// d in_i = g_i s_i^-beta - (2 alpha beta / n) in_i sum_{j : i in window(j)} g_j in_j s_j^(-beta-1)
template <class T>
Tensor4<T> lrn_backward(const Tensor4<T>& grad_out, const LrnCache<T>& cache, const LrnParams& p) {
  const Tensor4<T>& input = cache.input;
  if (input.empty()) throw StateError("lrn backward: no cached forward");
  if (grad_out.shape() != input.shape()) throw ShapeError("lrn backward: grad shape mismatch");
  const std::size_t c = input.c();
  const std::size_t half = p.depth / 2;
  const T beta = static_cast<T>(p.beta);
  const T factor = static_cast<T>(2.0 * p.alpha * p.beta / static_cast<double>(p.depth));
  Tensor4<T> grad_in(input.shape());
  std::vector<T> t(c);
  const std::size_t positions = input.size() / c;
  for (std::size_t pos = 0; pos < positions; ++pos) {
    const T* x = input.data().data() + pos * c;
    const T* g = grad_out.data().data() + pos * c;
    const T* s = cache.scale.data() + pos * c;
    for (std::size_t j = 0; j < c; ++j) t[j] = g[j] * x[j] * std::pow(s[j], -beta - T(1));
    for (std::size_t i = 0; i < c; ++i) {
      const std::size_t lo = i >= half ? i - half : 0;
      const std::size_t hi = std::min(c - 1, i + half);
      T acc = T(0);
      for (std::size_t j = lo; j <= hi; ++j) acc += t[j];
      grad_in[pos * c + i] = g[i] * std::pow(s[i], -beta) - factor * x[i] * acc;
    }
  }
  return grad_in;
}

}  // namespace cnnf
