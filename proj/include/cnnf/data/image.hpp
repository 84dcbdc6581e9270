#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "cnnf/tensor.hpp"

namespace cnnf {

// Images are (1, h, w, 3) tensors holding 8-bit intensities in [0, 255] until
// mean subtraction.
using Image = Tensor4<float>;

inline constexpr std::size_t kInputSize = 224;

namespace detail {

// Keys cubic convolution kernel with a = -0.5.
inline double cubic_weight(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

struct Taps {
  std::array<std::size_t, 4> index;
  std::array<double, 4> weight;
};

// Pixel-centre mapping src = (dst + 0.5) * in/out - 0.5 with edge replication.
inline std::vector<Taps> cubic_taps(std::size_t in, std::size_t out) {
  std::vector<Taps> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    const double base = std::floor(src);
    const double t = src - base;
    for (int j = 0; j < 4; ++j) {
      const long idx = static_cast<long>(base) + j - 1;
      taps[o].index[j] = static_cast<std::size_t>(std::clamp<long>(idx, 0, static_cast<long>(in) - 1));
      taps[o].weight[j] = cubic_weight(t - (j - 1));
    }
  }
  return taps;
}

inline void check_image(const Image& img, const char* op) {
  if (img.empty() || img.n() != 1) throw InvalidImageError(std::string(op) + ": expected a single (1,h,w,c) image");
}

}  // namespace detail

// Separable bicubic interpolation; results are rounded to whole intensity
// levels and clamped to [0, 255].
inline Image resize_bicubic(const Image& img, std::size_t out_h, std::size_t out_w) {
  if (img.empty() || img.h() == 0 || img.w() == 0) throw InvalidImageError("resize: zero-dimension image");
  detail::check_image(img, "resize");
  if (out_h == 0 || out_w == 0) throw InvalidImageError("resize: zero target dimension");
  const std::size_t c = img.c();
  const auto tx = detail::cubic_taps(img.w(), out_w);
  const auto ty = detail::cubic_taps(img.h(), out_h);

  std::vector<double> tmp(img.h() * out_w * c);
  for (std::size_t y = 0; y < img.h(); ++y)
    for (std::size_t x = 0; x < out_w; ++x)
      for (std::size_t k = 0; k < c; ++k) {
        double acc = 0.0;
        for (int j = 0; j < 4; ++j) acc += tx[x].weight[j] * img(0, y, tx[x].index[j], k);
        tmp[(y * out_w + x) * c + k] = acc;
      }
  Image out({1, out_h, out_w, c});
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t x = 0; x < out_w; ++x)
      for (std::size_t k = 0; k < c; ++k) {
        double acc = 0.0;
        for (int j = 0; j < 4; ++j) acc += ty[y].weight[j] * tmp[(ty[y].index[j] * out_w + x) * c + k];
        out(0, y, x, k) = static_cast<float>(std::clamp(std::nearbyint(acc), 0.0, 255.0));
      }
  return out;
}

inline Image resize_to_224(const Image& img) { return resize_bicubic(img, kInputSize, kInputSize); }

// Clockwise rotation by a right angle; an exact pixel permutation.
inline Image rotate(const Image& img, int angle) {
  detail::check_image(img, "rotate");
  if (angle != 90 && angle != 180 && angle != 270)
    throw InvalidArgument("rotate: unsupported angle " + std::to_string(angle) + " (expected 90, 180 or 270)");
  const std::size_t h = img.h(), w = img.w(), c = img.c();
  const bool swap = angle != 180;
  Image out({1, swap ? w : h, swap ? h : w, c});
  for (std::size_t y = 0; y < out.h(); ++y)
    for (std::size_t x = 0; x < out.w(); ++x) {
      std::size_t sy, sx;
      if (angle == 90) {
        sy = h - 1 - x;
        sx = y;
      } else if (angle == 180) {
        sy = h - 1 - y;
        sx = w - 1 - x;
      } else {
        sy = x;
        sx = w - 1 - y;
      }
      for (std::size_t k = 0; k < c; ++k) out(0, y, x, k) = img(0, sy, sx, k);
    }
  return out;
}

// Mirror left-right.
inline Image flip_h(const Image& img) {
  detail::check_image(img, "flip_h");
  Image out(img.shape());
  for (std::size_t y = 0; y < img.h(); ++y)
    for (std::size_t x = 0; x < img.w(); ++x)
      for (std::size_t k = 0; k < img.c(); ++k) out(0, y, x, k) = img(0, y, img.w() - 1 - x, k);
  return out;
}

// Mirror top-bottom.
inline Image flip_v(const Image& img) {
  detail::check_image(img, "flip_v");
  Image out(img.shape());
  for (std::size_t y = 0; y < img.h(); ++y)
    for (std::size_t x = 0; x < img.w(); ++x)
      for (std::size_t k = 0; k < img.c(); ++k) out(0, y, x, k) = img(0, img.h() - 1 - y, x, k);
  return out;
}

}  // namespace cnnf
