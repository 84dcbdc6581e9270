#pragma once

#include <filesystem>
#include <string>

#include "cnnf/data/dataset.hpp"
#include "cnnf/data/image_io.hpp"
#include "cnnf/rng.hpp"

namespace cnnf::testkit {

// An h x w RGB image whose class shows as a bright diagonal stripe in one of
// seven orientations/colours, plus seeded noise.
inline Image class_image(int label, std::size_t side, std::uint64_t seed) {
  Image img({1, side, side, 3});
  Rng rng(seed);
  const std::size_t channel = std::size_t(label) % 3;
  const std::size_t period = 2 + std::size_t(label) / 3 * 2;
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x)
      for (std::size_t k = 0; k < 3; ++k) {
        double v = 60.0 + 30.0 * rng.uniform();
        if (k == channel && (x + y) % period == 0) v += 150.0;
        img(0, y, x, k) = static_cast<float>(v);
      }
  return img;
}

// root/<class>/<i>.png for every food-state class.
inline void write_class_tree(const std::filesystem::path& root, std::size_t per_class, std::size_t side,
                             std::uint64_t seed) {
  const auto& names = food_state_names();
  for (std::size_t c = 0; c < names.size(); ++c) {
    std::filesystem::create_directories(root / names[c]);
    for (std::size_t i = 0; i < per_class; ++i)
      write_png(root / names[c] / (std::to_string(i) + ".png"),
                class_image(int(c), side, derive_seed(seed, c * 1000 + i)));
  }
}

}  // namespace cnnf::testkit
