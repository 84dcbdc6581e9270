#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>

#include "cnnf/data/image.hpp"
#include "cnnf/optimizer.hpp"

namespace cnnf {

struct Rgb {
  std::uint8_t r, g, b;
};

namespace detail {

// 5x7 glyphs, one byte per row, bit 4 is the leftmost column.
inline const std::array<std::uint8_t, 7>* glyph(char ch) {
  struct G {
    char c;
    std::array<std::uint8_t, 7> rows;
  };
  static const G table[] = {
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}}, {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'a', {0x00, 0x00, 0x0E, 0x01, 0x0F, 0x11, 0x0F}}, {'c', {0x00, 0x00, 0x0E, 0x10, 0x10, 0x11, 0x0E}},
      {'e', {0x00, 0x00, 0x0E, 0x11, 0x1F, 0x10, 0x0E}}, {'h', {0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x11}},
      {'i', {0x04, 0x00, 0x0C, 0x04, 0x04, 0x04, 0x0E}}, {'l', {0x0C, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'n', {0x00, 0x00, 0x16, 0x19, 0x11, 0x11, 0x11}}, {'o', {0x00, 0x00, 0x0E, 0x11, 0x11, 0x11, 0x0E}},
      {'p', {0x00, 0x00, 0x1E, 0x11, 0x1E, 0x10, 0x10}}, {'r', {0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10}},
      {'t', {0x08, 0x08, 0x1C, 0x08, 0x08, 0x09, 0x06}}, {'v', {0x00, 0x00, 0x11, 0x11, 0x11, 0x0A, 0x04}},
  };
  for (const auto& g : table)
    if (g.c == ch) return &g.rows;
  return nullptr;
}

class Canvas {
public:
  Canvas(std::size_t w, std::size_t h) : img_({1, h, w, 3}) { std::fill(img_.data().begin(), img_.data().end(), 255.0f); }

  void pixel(long x, long y, Rgb c) {
    if (x < 0 || y < 0 || x >= long(img_.w()) || y >= long(img_.h())) return;
    img_(0, std::size_t(y), std::size_t(x), 0) = c.r;
    img_(0, std::size_t(y), std::size_t(x), 1) = c.g;
    img_(0, std::size_t(y), std::size_t(x), 2) = c.b;
  }
  void rect(long x0, long y0, long x1, long y1, Rgb c) {
    for (long y = y0; y <= y1; ++y)
      for (long x = x0; x <= x1; ++x) pixel(x, y, c);
  }
  // Bresenham, drawn twice offset for a 2 px stroke when thick.
  void line(long x0, long y0, long x1, long y1, Rgb c, bool thick = false) {
    const long dx = std::labs(x1 - x0), dy = -std::labs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    for (;;) {
      pixel(x0, y0, c);
      if (thick) pixel(x0, y0 + 1, c);
      if (x0 == x1 && y0 == y1) break;
      const long e2 = 2 * err;
      if (e2 >= dy) err += dy, x0 += sx;
      if (e2 <= dx) err += dx, y0 += sy;
    }
  }
  void text(long x, long y, const std::string& s, Rgb c) {
    for (char ch : s) {
      if (const auto* g = glyph(ch))
        for (long r = 0; r < 7; ++r)
          for (long b = 0; b < 5; ++b)
            if ((*g)[std::size_t(r)] & (0x10 >> b)) pixel(x + b, y + r, c);
      x += 6;
    }
  }
  static long text_width(const std::string& s) { return long(s.size()) * 6; }

  Image take() && { return std::move(img_); }

private:
  Image img_;
};

}  // namespace detail

struct PlotStyle {
  std::size_t width = 640;
  std::size_t height = 400;
  Rgb train{31, 119, 180};
  Rgb val{214, 39, 40};
};

// Train and validation top-1 error against epoch, as an RGB image.
inline Image render_curves(std::span<const EpochRecord> history, const PlotStyle& style = {}) {
  if (history.empty()) throw InvalidArgument("render_curves: empty history");
  detail::Canvas cv(style.width, style.height);
  const long left = 56, right = long(style.width) - 16, top = 16, bottom = long(style.height) - 40;
  const Rgb axis{0, 0, 0}, grid{225, 225, 225};

  double x_lo = double(history.front().epoch), x_hi = double(history.back().epoch);
  double y_max = 0.0;
  for (const auto& r : history) {
    x_lo = std::min(x_lo, double(r.epoch));
    x_hi = std::max(x_hi, double(r.epoch));
    for (double v : {r.train_top1_error, r.val_top1_error})
      if (std::isfinite(v)) y_max = std::max(y_max, v);
  }
  if (x_hi == x_lo) x_lo -= 1.0, x_hi += 1.0;
  const double y_hi = std::max(0.1, std::ceil(y_max * 10.0 - 1e-9) / 10.0);
  auto px = [&](double e) { return left + long(std::lround((e - x_lo) / (x_hi - x_lo) * double(right - left))); };
  auto py = [&](double v) { return bottom - long(std::lround(v / y_hi * double(bottom - top))); };

  char buf[32];
  const int y_ticks = 5;
  for (int i = 0; i <= y_ticks; ++i) {
    const double v = y_hi * i / y_ticks;
    const long y = py(v);
    cv.line(left, y, right, y, grid);
    std::snprintf(buf, sizeof buf, "%.2f", v);
    cv.text(left - 6 - detail::Canvas::text_width(buf), y - 3, buf, axis);
  }
  const int x_ticks = int(std::min<double>(8.0, x_hi - x_lo));
  for (int i = 0; i <= x_ticks; ++i) {
    const double e = x_lo + (x_hi - x_lo) * i / std::max(1, x_ticks);
    const long x = px(e);
    cv.line(x, bottom, x, bottom + 4, axis);
    std::snprintf(buf, sizeof buf, "%.0f", e);
    cv.text(x - detail::Canvas::text_width(buf) / 2, bottom + 8, buf, axis);
  }
  cv.line(left, top, left, bottom, axis);
  cv.line(left, bottom, right, bottom, axis);
  cv.text((left + right) / 2 - detail::Canvas::text_width("epoch") / 2, bottom + 22, "epoch", axis);
  cv.text(4, top - 12 < 0 ? 2 : top - 12, "top-1 error", axis);

  auto series = [&](auto get, Rgb c) {
    for (std::size_t i = 0; i < history.size(); ++i) {
      const long x = px(double(history[i].epoch)), y = py(get(history[i]));
      if (i > 0) cv.line(px(double(history[i - 1].epoch)), py(get(history[i - 1])), x, y, c, true);
      if (history.size() <= 50) cv.rect(x - 1, y - 1, x + 1, y + 1, c);
    }
  };
  series([](const EpochRecord& r) { return r.train_top1_error; }, style.train);
  series([](const EpochRecord& r) { return r.val_top1_error; }, style.val);

  const long lx = right - 90, ly = top + 6;
  cv.rect(lx - 6, ly - 6, right - 4, ly + 30, Rgb{255, 255, 255});
  cv.line(lx, ly + 3, lx + 18, ly + 3, style.train, true);
  cv.text(lx + 24, ly, "train", axis);
  cv.line(lx, ly + 19, lx + 18, ly + 19, style.val, true);
  cv.text(lx + 24, ly + 16, "val", axis);
  return std::move(cv).take();
}

}  // namespace cnnf
