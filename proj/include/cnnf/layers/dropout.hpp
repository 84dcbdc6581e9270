#pragma once

#include <cstdint>
#include <vector>

#include "cnnf/layers/common.hpp"
#include "cnnf/rng.hpp"
#include "cnnf/tensor.hpp"

namespace cnnf {

// Inverted dropout: kept elements are scaled by 1/(1-rate) in train mode, so
// eval mode is the identity. The mask of a forward call is a pure function of
// (seed, step, element index), which lets a pass be replayed exactly.
struct DropoutConfig {
  double rate = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(rate >= 0.0 && rate < 1.0)) throw InvalidArgument("dropout: rate must be in [0, 1)");
  }
};

template <class T>
struct DropoutCache {
  std::vector<T> mask;  // 0 or 1/(1-rate) per element; empty means identity
};

template <class T>
std::vector<T> dropout_mask(std::size_t count, const DropoutConfig& cfg, std::uint64_t step) {
  cfg.validate();
  const T keep_scale = static_cast<T>(1.0 / (1.0 - cfg.rate));
  std::vector<T> mask(count);
  for (std::size_t i = 0; i < count; ++i)
    mask[i] = counter_uniform(cfg.seed, step, i) >= cfg.rate ? keep_scale : T(0);
  return mask;
}

template <class T>
Tensor4<T> dropout_with_mask(const Tensor4<T>& input, std::vector<T> mask, DropoutCache<T>* cache = nullptr) {
  if (mask.size() != input.size()) throw ShapeError("dropout: mask size mismatch");
  Tensor4<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] * mask[i];
  if (cache) cache->mask = std::move(mask);
  return out;
}

template <class T>
Tensor4<T> dropout(const Tensor4<T>& input, const DropoutConfig& cfg, Mode mode, std::uint64_t step,
                   DropoutCache<T>* cache = nullptr) {
  cfg.validate();
  if (mode == Mode::eval || cfg.rate == 0.0) {
    if (cache) cache->mask.clear();
    return input;
  }
  return dropout_with_mask(input, dropout_mask<T>(input.size(), cfg, step), cache);
}

template <class T>
Tensor4<T> dropout_backward(const Tensor4<T>& grad_out, const DropoutCache<T>& cache) {
  if (cache.mask.empty()) return grad_out;
  if (cache.mask.size() != grad_out.size()) throw ShapeError("dropout backward: grad size mismatch");
  Tensor4<T> grad_in(grad_out.shape());
  for (std::size_t i = 0; i < grad_out.size(); ++i) grad_in[i] = grad_out[i] * cache.mask[i];
  return grad_in;
}

}  // namespace cnnf
