#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "cnnf/layers/common.hpp"
#include "cnnf/tensor.hpp"

namespace cnnf {

// Cross-correlation (no kernel flip). Weights are stored (kh, kw, c_in, c_out),
// which is exactly a row-major [kh*kw*c_in x c_out] matrix for the im2col GEMM.
template <class T>
struct ConvParams {
  Tensor4<T> weights;
  Tensor4<T> bias;  // (1,1,1,c_out)
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t kh() const noexcept { return weights.n(); }
  std::size_t kw() const noexcept { return weights.h(); }
  std::size_t c_in() const noexcept { return weights.w(); }
  std::size_t c_out() const noexcept { return weights.c(); }

  void validate() const {
    if (weights.empty()) throw ShapeError("conv: empty weight tensor");
    if (stride < 1) throw ShapeError("conv: stride must be >= 1");
    if (bias.shape() != Shape4{1, 1, 1, c_out()})
      throw ShapeError("conv: bias shape " + bias.shape().to_string() + " does not match c_out " +
                       std::to_string(c_out()));
  }
};

template <class T>
struct ConvGrads {
  Tensor4<T> weights;
  Tensor4<T> bias;
};

template <class T>
struct ConvCache {
  Tensor4<T> input;
};

inline Shape4 conv2d_output_shape(Shape4 in, std::size_t kh, std::size_t kw, std::size_t c_in,
                                  std::size_t c_out, std::size_t stride, std::size_t pad) {
  if (in.c != c_in)
    throw ShapeError("conv: input has " + std::to_string(in.c) + " channels, kernel expects " +
                     std::to_string(c_in));
  if (stride < 1) throw ShapeError("conv: stride must be >= 1");
  const std::size_t ph = in.h + 2 * pad, pw = in.w + 2 * pad;
  if (ph < kh || pw < kw)
    throw ShapeError("conv: padded input " + std::to_string(ph) + "x" + std::to_string(pw) +
                     " smaller than kernel " + std::to_string(kh) + "x" + std::to_string(kw));
  return {in.n, (ph - kh) / stride + 1, (pw - kw) / stride + 1, c_out};
}

template <class T>
Shape4 conv2d_output_shape(Shape4 in, const ConvParams<T>& p) {
  return conv2d_output_shape(in, p.kh(), p.kw(), p.c_in(), p.c_out(), p.stride, p.pad);
}

namespace detail {

// Gathers one image into a [oh*ow x kh*kw*c] patch matrix; padding reads as zero.
template <class T>
void im2col(std::span<const T> img, const Shape4& in, const Shape4& out, std::size_t kh, std::size_t kw,
            std::size_t stride, std::size_t pad, std::vector<T>& cols) {
  const std::size_t c = in.c;
  const std::size_t row_len = kh * kw * c;
  cols.assign(out.h * out.w * row_len, T(0));
  for (std::size_t oy = 0; oy < out.h; ++oy) {
    for (std::size_t ox = 0; ox < out.w; ++ox) {
      T* row = cols.data() + (oy * out.w + ox) * row_len;
      for (std::size_t dy = 0; dy < kh; ++dy) {
        const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * stride + dy) - static_cast<std::ptrdiff_t>(pad);
        if (y < 0 || y >= static_cast<std::ptrdiff_t>(in.h)) continue;
        for (std::size_t dx = 0; dx < kw; ++dx) {
          const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * stride + dx) - static_cast<std::ptrdiff_t>(pad);
          if (x < 0 || x >= static_cast<std::ptrdiff_t>(in.w)) continue;
          const T* src = img.data() + (static_cast<std::size_t>(y) * in.w + static_cast<std::size_t>(x)) * c;
          std::copy(src, src + c, row + (dy * kw + dx) * c);
        }
      }
    }
  }
}

// Scatter-adds a patch matrix back onto one image.
template <class T>
void col2im(const std::vector<T>& cols, const Shape4& in, const Shape4& out, std::size_t kh, std::size_t kw,
            std::size_t stride, std::size_t pad, std::span<T> img) {
  const std::size_t c = in.c;
  const std::size_t row_len = kh * kw * c;
  for (std::size_t oy = 0; oy < out.h; ++oy) {
    for (std::size_t ox = 0; ox < out.w; ++ox) {
      const T* row = cols.data() + (oy * out.w + ox) * row_len;
      for (std::size_t dy = 0; dy < kh; ++dy) {
        const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * stride + dy) - static_cast<std::ptrdiff_t>(pad);
        if (y < 0 || y >= static_cast<std::ptrdiff_t>(in.h)) continue;
        for (std::size_t dx = 0; dx < kw; ++dx) {
          const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * stride + dx) - static_cast<std::ptrdiff_t>(pad);
          if (x < 0 || x >= static_cast<std::ptrdiff_t>(in.w)) continue;
          T* dst = img.data() + (static_cast<std::size_t>(y) * in.w + static_cast<std::size_t>(x)) * c;
          const T* src = row + (dy * kw + dx) * c;
          for (std::size_t k = 0; k < c; ++k) dst[k] += src[k];
        }
      }
    }
  }
}

}  // namespace detail

template <class T>
Tensor4<T> conv2d(const Tensor4<T>& input, const ConvParams<T>& p, ConvCache<T>* cache = nullptr) {
  p.validate();
  const Shape4 out_shape = conv2d_output_shape(input.shape(), p);
  Tensor4<T> out(out_shape);
  const std::size_t pixels = out_shape.h * out_shape.w;
  const std::size_t patch = p.kh() * p.kw() * p.c_in();
  std::vector<T> cols;
  for (std::size_t i = 0; i < input.n(); ++i) {
    detail::im2col(input.item(i), input.shape(), out_shape, p.kh(), p.kw(), p.stride, p.pad, cols);
    auto dst = out.item(i);
    for (std::size_t px = 0; px < pixels; ++px)
      std::copy(p.bias.data().begin(), p.bias.data().end(), dst.begin() + px * p.c_out());
    detail::gemm_nn(pixels, p.c_out(), patch, cols.data(), p.weights.data().data(), dst.data());
  }
  if (cache) cache->input = input;
  return out;
}

// Returns grad wrt input when want_input_grad, otherwise an empty tensor.
// Parameter grads are written into *grads when non-null.
template <class T>
Tensor4<T> conv2d_backward(const Tensor4<T>& grad_out, const ConvCache<T>& cache, const ConvParams<T>& p,
                           ConvGrads<T>* grads, bool want_input_grad = true) {
  const Tensor4<T>& input = cache.input;
  if (input.empty()) throw StateError("conv backward: no cached forward");
  const Shape4 out_shape = conv2d_output_shape(input.shape(), p);
  if (grad_out.shape() != out_shape)
    throw ShapeError("conv backward: grad shape " + grad_out.shape().to_string() + " expected " +
                     out_shape.to_string());
  const std::size_t pixels = out_shape.h * out_shape.w;
  const std::size_t patch = p.kh() * p.kw() * p.c_in();

  Tensor4<T> grad_in;
  if (want_input_grad) grad_in = Tensor4<T>(input.shape());
  if (grads) {
    grads->weights = Tensor4<T>(p.weights.shape());
    grads->bias = Tensor4<T>(p.bias.shape());
  }
  std::vector<T> cols, dcols;
  for (std::size_t i = 0; i < input.n(); ++i) {
    auto g = grad_out.item(i);
    if (grads) {
      detail::im2col(input.item(i), input.shape(), out_shape, p.kh(), p.kw(), p.stride, p.pad, cols);
      detail::gemm_tn(patch, p.c_out(), pixels, cols.data(), g.data(), grads->weights.data().data());
      auto db = grads->bias.data();
      for (std::size_t px = 0; px < pixels; ++px)
        for (std::size_t o = 0; o < p.c_out(); ++o) db[o] += g[px * p.c_out() + o];
    }
    if (want_input_grad) {
      dcols.assign(pixels * patch, T(0));
      detail::gemm_nt(pixels, patch, p.c_out(), g.data(), p.weights.data().data(), dcols.data());
      detail::col2im(dcols, input.shape(), out_shape, p.kh(), p.kw(), p.stride, p.pad, grad_in.item(i));
    }
  }
  return grad_in;
}

}  // namespace cnnf
