#pragma once

#include <string>

#include "cnnf/layers/common.hpp"
#include "cnnf/tensor.hpp"

namespace cnnf {

// Weights are stored (1, 1, in_features, out_features); the input is flattened
// per batch row, so a (n, 6, 6, 256) activation feeds in_features = 9216.
template <class T>
struct FcParams {
  Tensor4<T> weights;
  Tensor4<T> bias;  // (1,1,1,out_features)

  std::size_t in_features() const noexcept { return weights.w(); }
  std::size_t out_features() const noexcept { return weights.c(); }

  void validate() const {
    if (weights.n() != 1 || weights.h() != 1) throw ShapeError("fc: weights must be (1,1,in,out)");
    if (bias.shape() != Shape4{1, 1, 1, out_features()}) throw ShapeError("fc: bias shape mismatch");
  }
};

template <class T>
struct FcGrads {
  Tensor4<T> weights;
  Tensor4<T> bias;
};

template <class T>
struct FcCache {
  Tensor4<T> input;
};

inline Shape4 fully_connected_output_shape(Shape4 in, std::size_t in_features, std::size_t out_features) {
  const std::size_t features = in.h * in.w * in.c;
  if (features != in_features)
    throw ShapeError("fc: input has " + std::to_string(features) + " features, layer expects " +
                     std::to_string(in_features));
  return {in.n, 1, 1, out_features};
}

template <class T>
Tensor4<T> fully_connected(const Tensor4<T>& input, const FcParams<T>& p, FcCache<T>* cache = nullptr) {
  p.validate();
  const Shape4 os = fully_connected_output_shape(input.shape(), p.in_features(), p.out_features());
  Tensor4<T> out(os);
  for (std::size_t i = 0; i < os.n; ++i) {
    auto row = out.item(i);
    std::copy(p.bias.data().begin(), p.bias.data().end(), row.begin());
  }
  detail::gemm_nn(os.n, p.out_features(), p.in_features(), input.data().data(), p.weights.data().data(),
                  out.data().data());
  if (cache) cache->input = input;
  return out;
}

template <class T>
Tensor4<T> fully_connected_backward(const Tensor4<T>& grad_out, const FcCache<T>& cache, const FcParams<T>& p,
                                    FcGrads<T>* grads, bool want_input_grad = true) {
  const Tensor4<T>& input = cache.input;
  if (input.empty()) throw StateError("fc backward: no cached forward");
  const std::size_t n = input.n();
  if (grad_out.shape() != Shape4{n, 1, 1, p.out_features()}) throw ShapeError("fc backward: grad shape mismatch");
  if (grads) {
    grads->weights = Tensor4<T>(p.weights.shape());
    grads->bias = Tensor4<T>(p.bias.shape());
    detail::gemm_tn(p.in_features(), p.out_features(), n, input.data().data(), grad_out.data().data(),
                    grads->weights.data().data());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t o = 0; o < p.out_features(); ++o) grads->bias[o] += grad_out(i, 0, 0, o);
  }
  Tensor4<T> grad_in;
  if (want_input_grad) {
    grad_in = Tensor4<T>(input.shape());
    detail::gemm_nt(n, p.in_features(), p.out_features(), grad_out.data().data(), p.weights.data().data(),
                    grad_in.data().data());
  }
  return grad_in;
}

}  // namespace cnnf
