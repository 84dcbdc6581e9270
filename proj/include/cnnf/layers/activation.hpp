#pragma once

#include "cnnf/tensor.hpp"

namespace cnnf {

template <class T>
struct ReluCache {
  Tensor4<T> input;
};

template <class T>
Tensor4<T> relu(const Tensor4<T>& input, ReluCache<T>* cache = nullptr) {
  Tensor4<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  if (cache) cache->input = input;
  return out;
}

// Subgradient at exactly zero is zero.
template <class T>
Tensor4<T> relu_backward(const Tensor4<T>& grad_out, const ReluCache<T>& cache) {
  if (cache.input.empty()) throw StateError("relu backward: no cached forward");
  if (grad_out.shape() != cache.input.shape()) throw ShapeError("relu backward: grad shape mismatch");
  Tensor4<T> grad_in(grad_out.shape());
  for (std::size_t i = 0; i < grad_out.size(); ++i) grad_in[i] = cache.input[i] > T(0) ? grad_out[i] : T(0);
  return grad_in;
}

}  // namespace cnnf
