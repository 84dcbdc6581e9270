#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cnnf/tensor.hpp"

namespace cnnf {

struct PoolParams {
  std::size_t window = 2;
  std::size_t stride = 2;
};

struct PoolCache {
  Shape4 input_shape{};
  std::vector<std::uint32_t> argmax;  // flat input offset per output element
};

inline Shape4 maxpool_output_shape(Shape4 in, const PoolParams& p) {
  if (p.window < 1 || p.stride < 1) throw ShapeError("maxpool: window and stride must be >= 1");
  if (p.window > in.h || p.window > in.w)
    throw ShapeError("maxpool: window " + std::to_string(p.window) + " larger than input " +
                     std::to_string(in.h) + "x" + std::to_string(in.w));
  return {in.n, (in.h - p.window) / p.stride + 1, (in.w - p.window) / p.stride + 1, in.c};
}

// Ties resolve to the first element in row-major window scan order.
template <class T>
Tensor4<T> maxpool(const Tensor4<T>& input, const PoolParams& p, PoolCache* cache = nullptr) {
  const Shape4 os = maxpool_output_shape(input.shape(), p);
  Tensor4<T> out(os);
  if (cache) {
    cache->input_shape = input.shape();
    cache->argmax.assign(out.size(), 0);
  }
  std::size_t o = 0;
  for (std::size_t i = 0; i < os.n; ++i)
    for (std::size_t oy = 0; oy < os.h; ++oy)
      for (std::size_t ox = 0; ox < os.w; ++ox)
        for (std::size_t k = 0; k < os.c; ++k, ++o) {
          std::size_t best = input.offset(i, oy * p.stride, ox * p.stride, k);
          for (std::size_t dy = 0; dy < p.window; ++dy)
            for (std::size_t dx = 0; dx < p.window; ++dx) {
              const std::size_t idx = input.offset(i, oy * p.stride + dy, ox * p.stride + dx, k);
              if (input[idx] > input[best]) best = idx;
            }
          out[o] = input[best];
          if (cache) cache->argmax[o] = static_cast<std::uint32_t>(best);
        }
  return out;
}

template <class T>
Tensor4<T> maxpool_backward(const Tensor4<T>& grad_out, const PoolCache& cache) {
  if (cache.argmax.empty()) throw StateError("maxpool backward: no cached forward");
  if (grad_out.size() != cache.argmax.size()) throw ShapeError("maxpool backward: grad size mismatch");
  Tensor4<T> grad_in(cache.input_shape);
  for (std::size_t o = 0; o < grad_out.size(); ++o) grad_in[cache.argmax[o]] += grad_out[o];
  return grad_in;
}

}  // namespace cnnf
