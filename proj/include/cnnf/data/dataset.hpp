#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cnnf/data/image.hpp"
#include "cnnf/data/image_io.hpp"
#include "cnnf/rng.hpp"

namespace cnnf {

// The seven food states, codes 0..6 in this (alphabetical) order.
enum class ClassLabel : int { creamy = 0, diced, grated, juiced, julienne, sliced, whole };

inline const std::vector<std::string>& food_state_names() {
  static const std::vector<std::string> names = {"creamy", "diced", "grated", "juiced", "julienne", "sliced", "whole"};
  return names;
}

enum class Provenance { original, augmented, oversampled };
enum class Transform { none, flip_h, rot90, rot180, rot270 };

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::original: return "original";
    case Provenance::augmented: return "augmented";
    case Provenance::oversampled: return "oversampled-copy";
  }
  return "?";
}

inline Provenance parse_provenance(const std::string& s) {
  if (s == "original") return Provenance::original;
  if (s == "augmented") return Provenance::augmented;
  if (s == "oversampled-copy") return Provenance::oversampled;
  throw ParseError("unknown provenance '" + s + "'");
}

inline std::string to_string(Transform t) {
  switch (t) {
    case Transform::none: return "none";
    case Transform::flip_h: return "flip_h";
    case Transform::rot90: return "rot90";
    case Transform::rot180: return "rot180";
    case Transform::rot270: return "rot270";
  }
  return "?";
}

inline Transform parse_transform(const std::string& s) {
  for (Transform t : {Transform::none, Transform::flip_h, Transform::rot90, Transform::rot180, Transform::rot270})
    if (to_string(t) == s) return t;
  throw ParseError("unknown transform '" + s + "'");
}

inline Image apply_transform(const Image& img, Transform t) {
  switch (t) {
    case Transform::none: return img;
    case Transform::flip_h: return flip_h(img);
    case Transform::rot90: return rotate(img, 90);
    case Transform::rot180: return rotate(img, 180);
    case Transform::rot270: return rotate(img, 270);
  }
  return img;
}

struct Sample {
  std::string id;      // unique; originals use their path relative to the dataset root
  std::string source;  // relative path of the file the pixels came from
  int label = 0;
  Provenance provenance = Provenance::original;
  Transform transform = Transform::none;
  Image image;
};

struct Dataset {
  std::vector<std::string> class_names = food_state_names();
  std::vector<Sample> samples;
  std::optional<Image> mean;

  std::size_t size() const noexcept { return samples.size(); }
  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(class_names.size(), 0);
    for (const auto& s : samples) ++counts.at(static_cast<std::size_t>(s.label));
    return counts;
  }
};

struct LoadReport {
  std::size_t loaded = 0;
  std::vector<std::string> skipped;   // "path: reason"
  std::vector<std::string> warnings;
};

struct LoadOptions {
  std::vector<std::string> class_names = food_state_names();
  std::optional<std::size_t> resize_to;  // square output size, e.g. 224
};

inline int class_index(const std::vector<std::string>& names, const std::string& name) {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw LabelError("unknown class '" + name + "'");
  return static_cast<int>(it - names.begin());
}

// Reads root/<class>/<file>. Files are visited in sorted path order; files that
// fail to decode are skipped and recorded in the report.
inline Dataset load_dataset(const std::filesystem::path& root, const LoadOptions& opts = {},
                            LoadReport* report = nullptr) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DataError(root.string() + ": not a directory");
  LoadReport local;
  LoadReport& rep = report ? *report : local;
  Dataset ds;
  ds.class_names = opts.class_names;

  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    const std::string cls = dir.filename().string();
    auto it = std::find(ds.class_names.begin(), ds.class_names.end(), cls);
    if (it == ds.class_names.end()) throw LabelError(dir.string() + ": directory names unknown class '" + cls + "'");
    const int label = static_cast<int>(it - ds.class_names.begin());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) rep.warnings.push_back(dir.string() + ": class '" + cls + "' has no images");
    for (const auto& f : files) {
      const std::string rel = cls + "/" + f.filename().string();
      try {
        Image img = read_image(f);
        if (opts.resize_to) img = resize_bicubic(img, *opts.resize_to, *opts.resize_to);
        ds.samples.push_back({rel, rel, label, Provenance::original, Transform::none, std::move(img)});
        ++rep.loaded;
      } catch (const InvalidImageError& e) {
        rep.skipped.push_back(f.string() + ": " + e.what());
      }
    }
  }
  for (std::size_t c = 0; c < ds.class_names.size(); ++c)
    if (!fs::is_directory(root / ds.class_names[c]))
      rep.warnings.push_back("class '" + ds.class_names[c] + "' has no directory");
  return ds;
}

struct AugmentConfig {
  std::vector<Transform> transforms = {Transform::flip_h, Transform::rot90, Transform::rot180, Transform::rot270};
  // Total output size including the originals; unset keeps every transformed copy.
  std::optional<std::size_t> target_size;
  std::uint64_t seed = 0;
};

// Each original is followed by its selected transformed copies. With a target
// size, the copies are a seeded uniform subset of all (source, transform) pairs.
inline Dataset augment(const Dataset& ds, const AugmentConfig& cfg) {
  std::vector<std::size_t> sources;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    if (ds.samples[i].provenance == Provenance::original) sources.push_back(i);
  const std::size_t per = cfg.transforms.size();
  const std::size_t candidates = sources.size() * per;

  std::vector<char> chosen(candidates, 1);
  if (cfg.target_size) {
    const std::size_t target = *cfg.target_size;
    if (target < ds.samples.size() || target - ds.samples.size() > candidates)
      throw InvalidArgument("augment: target size " + std::to_string(target) + " unreachable from " +
                            std::to_string(ds.samples.size()) + " samples and " + std::to_string(candidates) +
                            " candidate copies");
    std::vector<std::size_t> order(candidates);
    for (std::size_t i = 0; i < candidates; ++i) order[i] = i;
    Rng rng(cfg.seed);
    rng.shuffle(std::span<std::size_t>(order));
    std::fill(chosen.begin(), chosen.end(), 0);
    for (std::size_t i = 0; i < target - ds.samples.size(); ++i) chosen[order[i]] = 1;
  }

  Dataset out;
  out.class_names = ds.class_names;
  out.samples.reserve(cfg.target_size.value_or(ds.samples.size() + candidates));
  std::size_t s = 0;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& src = ds.samples[i];
    out.samples.push_back(src);
    if (src.provenance != Provenance::original) continue;
    for (std::size_t t = 0; t < per; ++t) {
      if (!chosen[s * per + t]) continue;
      Sample copy;
      copy.id = src.id + "#" + to_string(cfg.transforms[t]);
      copy.source = src.source;
      copy.label = src.label;
      copy.provenance = Provenance::augmented;
      copy.transform = cfg.transforms[t];
      copy.image = apply_transform(src.image, cfg.transforms[t]);
      out.samples.push_back(std::move(copy));
    }
    ++s;
  }
  return out;
}

// Pads every class up to the largest class count with seeded draws (with
// replacement) from that class. Copies are appended class by class.
inline Dataset oversample_balance(const Dataset& ds, std::uint64_t seed) {
  const auto counts = ds.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] == 0) throw BalanceError("oversample_balance: class '" + ds.class_names[c] + "' has no samples");
  const std::size_t target = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  Dataset out = ds;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == target) continue;
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
      if (static_cast<std::size_t>(ds.samples[i].label) == c) members.push_back(i);
    Rng rng(derive_seed(seed, c));
    for (std::size_t k = 0; k < target - counts[c]; ++k) {
      Sample copy = ds.samples[members[rng.index(members.size())]];
      copy.id += "#dup" + std::to_string(k);
      copy.provenance = Provenance::oversampled;
      out.samples.push_back(std::move(copy));
    }
  }
  return out;
}

struct ManifestEntry {
  std::string id;
  std::string path;  // source file, relative to the dataset root
  std::string label;
  Provenance provenance = Provenance::original;
  Transform transform = Transform::none;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct SplitManifest {
  std::uint64_t seed = 0;
  double train_fraction = 0.9;
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> val;
  std::vector<ManifestEntry> test;
  std::vector<std::string> warnings;

  friend bool operator==(const SplitManifest& a, const SplitManifest& b) {
    return a.seed == b.seed && a.train_fraction == b.train_fraction && a.train == b.train && a.val == b.val &&
           a.test == b.test;
  }
};

inline ManifestEntry entry_of(const Sample& s, const std::vector<std::string>& names) {
  return {s.id, s.source, names.at(static_cast<std::size_t>(s.label)), s.provenance, s.transform};
}

inline std::vector<ManifestEntry> entries_of(const Dataset& ds) {
  std::vector<ManifestEntry> out;
  out.reserve(ds.samples.size());
  for (const auto& s : ds.samples) out.push_back(entry_of(s, ds.class_names));
  return out;
}

// Stratified split: within each class a seeded shuffle, then the first
// round(train_fraction * count) go to train. A class with fewer than two
// samples sends everything to train and records a warning. Entries keep
// dataset order within each split.
inline SplitManifest split(const Dataset& ds, double train_fraction = 0.9, std::uint64_t seed = 0) {
  if (ds.samples.empty()) throw DataError("split: dataset is empty");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw InvalidArgument("split: train fraction must be in (0, 1]");
  SplitManifest m;
  m.seed = seed;
  m.train_fraction = train_fraction;
  std::vector<char> is_train(ds.samples.size(), 0);
  for (std::size_t c = 0; c < ds.class_names.size(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
      if (static_cast<std::size_t>(ds.samples[i].label) == c) members.push_back(i);
    if (members.empty()) continue;
    std::size_t n_train;
    if (members.size() < 2) {
      m.warnings.push_back("class '" + ds.class_names[c] + "' has fewer than 2 samples; all go to train");
      n_train = members.size();
    } else {
      n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(members.size())));
    }
    Rng rng(derive_seed(seed, c));
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t k = 0; k < n_train; ++k) is_train[members[k]] = 1;
  }
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    (is_train[i] ? m.train : m.val).push_back(entry_of(ds.samples[i], ds.class_names));
  return m;
}

// Materializes the samples named by entries, in entry order.
inline Dataset select(const Dataset& ds, const std::vector<ManifestEntry>& entries) {
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) by_id.emplace(ds.samples[i].id, i);
  Dataset out;
  out.class_names = ds.class_names;
  out.samples.reserve(entries.size());
  for (const auto& e : entries) {
    auto it = by_id.find(e.id);
    if (it == by_id.end()) throw DataError("manifest entry '" + e.id + "' not found in dataset");
    out.samples.push_back(ds.samples[it->second]);
  }
  return out;
}

// No augmented or oversampled entries outside train; no source file shared
// between train and val/test; no duplicate ids anywhere.
inline void check_no_leakage(const SplitManifest& m) {
  std::set<std::string> ids, train_sources;
  for (const auto* list : {&m.train, &m.val, &m.test})
    for (const auto& e : *list)
      if (!ids.insert(e.id).second) throw DataError("manifest: duplicate id '" + e.id + "'");
  for (const auto& e : m.train) train_sources.insert(e.path);
  for (const auto* list : {&m.val, &m.test})
    for (const auto& e : *list) {
      if (e.provenance != Provenance::original)
        throw DataError("manifest: " + to_string(e.provenance) + " sample '" + e.id + "' outside the train split");
      if (train_sources.count(e.path)) throw DataError("manifest: source '" + e.path + "' appears in train and val/test");
    }
}

enum class MeanMode { per_pixel, per_channel };

// Mean over the given (training) images, accumulated in double in sample order.
// per_pixel yields (1,h,w,c); per_channel yields (1,1,1,c).
inline Image compute_mean(const std::vector<Sample>& train, MeanMode mode = MeanMode::per_pixel) {
  if (train.empty()) throw DataError("compute_mean: no training samples");
  const Shape4 shape = train.front().image.shape();
  std::vector<double> acc(shape.count(), 0.0);
  for (const auto& s : train) {
    if (s.image.shape() != shape) throw ShapeError("compute_mean: image '" + s.id + "' has shape " + s.image.shape().to_string());
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s.image[i];
  }
  const double n = static_cast<double>(train.size());
  if (mode == MeanMode::per_channel) {
    std::vector<double> ch(shape.c, 0.0);
    for (std::size_t i = 0; i < acc.size(); ++i) ch[i % shape.c] += acc[i];
    const double m = n * static_cast<double>(shape.h * shape.w);
    Image mean({1, 1, 1, shape.c});
    for (std::size_t k = 0; k < shape.c; ++k) mean[k] = static_cast<float>(ch[k] / m);
    return mean;
  }
  Image mean(shape);
  for (std::size_t i = 0; i < acc.size(); ++i) mean[i] = static_cast<float>(acc[i] / n);
  return mean;
}

inline Image subtract_mean(const Image& img, const Image& mean) {
  Image out = img;
  if (mean.shape() == img.shape()) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= mean[i];
  } else if (mean.shape() == Shape4{1, 1, 1, img.c()}) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= mean[i % img.c()];
  } else {
    throw ShapeError("subtract_mean: mean shape " + mean.shape().to_string() + " does not fit image " +
                     img.shape().to_string());
  }
  return out;
}

inline void subtract_mean(Dataset& ds, const Image& mean) {
  for (auto& s : ds.samples) s.image = subtract_mean(s.image, mean);
}

// Seeded permutation for one epoch, cut into batches; the last may be partial.
inline std::vector<std::vector<std::size_t>> batch_order(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                         std::uint64_t epoch) {
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(derive_seed(seed, epoch));
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t b = 0; b < n; b += batch_size)
    batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(b),
                         perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, b + batch_size)));
  return batches;
}

template <class T = float>
struct Batch {
  Tensor4<T> images;
  std::vector<int> labels;
  std::vector<std::size_t> indices;
};

template <class T = float>
Batch<T> assemble_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw DataError("assemble_batch: empty batch");
  const Shape4 s = samples.at(indices.front()).image.shape();
  Batch<T> b;
  b.images = Tensor4<T>({indices.size(), s.h, s.w, s.c});
  b.indices = indices;
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const Sample& smp = samples.at(indices[j]);
    if (smp.image.shape() != s) throw ShapeError("assemble_batch: sample '" + smp.id + "' has a different shape");
    auto dst = b.images.item(j);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(smp.image[i]);
    b.labels.push_back(smp.label);
  }
  return b;
}

template <class T = float>
std::vector<Batch<T>> make_batches(const std::vector<Sample>& samples, std::size_t batch_size, std::uint64_t seed,
                                   std::uint64_t epoch) {
  std::vector<Batch<T>> out;
  for (const auto& idx : batch_order(samples.size(), batch_size, seed, epoch)) out.push_back(assemble_batch<T>(samples, idx));
  return out;
}

}  // namespace cnnf
