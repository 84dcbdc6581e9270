#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cnnf/error.hpp"
#include "cnnf/optimizer.hpp"
#include "cnnf/tensor.hpp"

namespace cnnf {

// Row-wise argmax; ties go to the lowest class index.
template <class T>
std::vector<int> argmax_rows(const Tensor4<T>& logits) {
  const std::size_t k = logits.h() * logits.w() * logits.c();
  std::vector<int> out(logits.n());
  for (std::size_t i = 0; i < logits.n(); ++i) {
    auto row = logits.item(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (row[j] > row[best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

template <class T>
double top1_error(const Tensor4<T>& logits, std::span<const int> labels) {
  if (logits.n() != labels.size())
    throw ShapeError("top1_error: " + std::to_string(logits.n()) + " rows but " + std::to_string(labels.size()) +
                     " labels");
  const auto pred = argmax_rows(logits);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] != labels[i]) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

// Counts are indexed [predicted][true]: a row sum is everything predicted as a
// class (precision's denominator), a column sum is everything truly in a class
// (recall's denominator).
class ConfusionMatrix {
public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<std::string> class_names)
      : names_(std::move(class_names)), counts_(names_.size() * names_.size(), 0) {}

  std::size_t num_classes() const noexcept { return names_.size(); }
  const std::vector<std::string>& class_names() const noexcept { return names_; }

  std::uint64_t count(std::size_t predicted, std::size_t truth) const { return counts_.at(predicted * num_classes() + truth); }
  void set(std::size_t predicted, std::size_t truth, std::uint64_t v) { counts_.at(predicted * num_classes() + truth) = v; }

  void accumulate(int predicted, int truth) {
    const int k = static_cast<int>(num_classes());
    if (predicted < 0 || predicted >= k || truth < 0 || truth >= k)
      throw LabelError("confusion matrix: label pair (" + std::to_string(predicted) + ", " + std::to_string(truth) +
                       ") outside [0, " + std::to_string(k) + ")");
    ++counts_[static_cast<std::size_t>(predicted) * num_classes() + static_cast<std::size_t>(truth)];
  }

  void accumulate(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size()) throw ShapeError("confusion matrix: prediction/label length mismatch");
    for (std::size_t i = 0; i < predicted.size(); ++i) accumulate(predicted[i], truth[i]);
  }

  // Partial matrices over disjoint samples merge to the sequential result.
  ConfusionMatrix& merge(const ConfusionMatrix& other) {
    if (other.names_ != names_) throw ShapeError("confusion matrix: merging matrices over different classes");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    return *this;
  }

  std::uint64_t row_sum(std::size_t predicted) const {
    std::uint64_t s = 0;
    for (std::size_t t = 0; t < num_classes(); ++t) s += count(predicted, t);
    return s;
  }
  std::uint64_t col_sum(std::size_t truth) const {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < num_classes(); ++p) s += count(p, truth);
    return s;
  }
  std::uint64_t trace() const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < num_classes(); ++i) s += count(i, i);
    return s;
  }
  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto v : counts_) s += v;
    return s;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
  std::vector<std::string> names_;
  std::vector<std::uint64_t> counts_;
};

// nullopt marks an empty denominator ("n/a"), never 0.
inline std::vector<std::optional<double>> precision_per_class(const ConfusionMatrix& cm) {
  std::vector<std::optional<double>> out(cm.num_classes());
  for (std::size_t i = 0; i < cm.num_classes(); ++i)
    if (auto d = cm.row_sum(i)) out[i] = static_cast<double>(cm.count(i, i)) / static_cast<double>(d);
  return out;
}

inline std::vector<std::optional<double>> recall_per_class(const ConfusionMatrix& cm) {
  std::vector<std::optional<double>> out(cm.num_classes());
  for (std::size_t j = 0; j < cm.num_classes(); ++j)
    if (auto d = cm.col_sum(j)) out[j] = static_cast<double>(cm.count(j, j)) / static_cast<double>(d);
  return out;
}

inline std::optional<double> overall_accuracy(const ConfusionMatrix& cm) {
  const auto t = cm.total();
  if (t == 0) return std::nullopt;
  return static_cast<double>(cm.trace()) / static_cast<double>(t);
}

struct EvalReport {
  ConfusionMatrix confusion;
  std::vector<std::optional<double>> precision;
  std::vector<std::optional<double>> recall;
  std::optional<double> accuracy;
  std::uint64_t sample_count = 0;
};

inline EvalReport make_report(ConfusionMatrix cm) {
  EvalReport r;
  r.precision = precision_per_class(cm);
  r.recall = recall_per_class(cm);
  r.accuracy = overall_accuracy(cm);
  r.sample_count = cm.total();
  r.confusion = std::move(cm);
  return r;
}

// Percent with three decimals and trailing zeros dropped: 0.5 -> "50%", 88/119 -> "73.95%".
inline std::string format_percent(std::optional<double> ratio) {
  if (!ratio) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", 100.0 * *ratio);
  std::string s = buf;
  s.erase(s.find_last_not_of('0') + 1);
  if (s.back() == '.') s.pop_back();
  return s + "%";
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  cells.push_back(cur);
  return cells;
}

inline std::string pad_right(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }
inline std::string pad_left(const std::string& s, std::size_t w) { return s.size() >= w ? s : std::string(w - s.size(), ' ') + s; }

}  // namespace detail

inline constexpr const char* kPrecisionHeader = "Producer Accuracy (Precision)";
inline constexpr const char* kRecallHeader = "User Accuracy (Recall)";

inline std::string emit_report_text(const EvalReport& r) {
  const auto& cm = r.confusion;
  const std::size_t k = cm.num_classes();
  std::size_t label_w = std::string(kRecallHeader).size();
  std::size_t cell_w = 8;
  for (const auto& n : cm.class_names()) {
    label_w = std::max(label_w, n.size());
    cell_w = std::max(cell_w, n.size());
  }
  for (std::size_t j = 0; j < k; ++j) cell_w = std::max(cell_w, format_percent(r.recall[j]).size());
  label_w += 2;
  cell_w += 2;

  std::ostringstream os;
  os << detail::pad_right("", label_w);
  for (const auto& n : cm.class_names()) os << detail::pad_left(n, cell_w);
  os << "  " << kPrecisionHeader << "\n";
  for (std::size_t p = 0; p < k; ++p) {
    os << detail::pad_right(cm.class_names()[p], label_w);
    for (std::size_t t = 0; t < k; ++t) os << detail::pad_left(std::to_string(cm.count(p, t)), cell_w);
    os << "  " << format_percent(r.precision[p]) << "\n";
  }
  os << detail::pad_right(kRecallHeader, label_w);
  for (std::size_t t = 0; t < k; ++t) os << detail::pad_left(format_percent(r.recall[t]), cell_w);
  os << "\n\n";
  os << "Overall accuracy: " << format_percent(r.accuracy) << " (" << cm.trace() << "/" << cm.total() << ")\n";
  os << "Samples: " << r.sample_count << "\n";
  return os.str();
}

// Header row of class names with a trailing precision column, one row per
// predicted class, and a recall footer row.
inline std::string emit_report_csv(const EvalReport& r) {
  const auto& cm = r.confusion;
  const std::size_t k = cm.num_classes();
  std::ostringstream os;
  os << "predicted\\true";
  for (const auto& n : cm.class_names()) os << "," << n;
  os << ",precision\n";
  for (std::size_t p = 0; p < k; ++p) {
    os << cm.class_names()[p];
    for (std::size_t t = 0; t < k; ++t) os << "," << cm.count(p, t);
    os << "," << format_percent(r.precision[p]) << "\n";
  }
  os << "recall";
  for (std::size_t t = 0; t < k; ++t) os << "," << format_percent(r.recall[t]);
  os << ",\n";
  return os.str();
}

inline std::string emit_report(const EvalReport& r, const std::string& format) {
  if (format == "text") return emit_report_text(r);
  if (format == "csv") return emit_report_csv(r);
  throw FormatError("unsupported report format '" + format + "' (expected text or csv)");
}

inline ConfusionMatrix parse_confusion_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) { throw ParseError("confusion csv line " + std::to_string(lineno) + ": " + why); };

  if (!std::getline(is, line)) throw ParseError("confusion csv: empty input");
  ++lineno;
  auto header = detail::split_csv_line(line);
  if (header.size() < 3 || header.back() != "precision") fail("header must end with a precision column");
  std::vector<std::string> names(header.begin() + 1, header.end() - 1);
  const std::size_t k = names.size();
  ConfusionMatrix cm(names);
  for (std::size_t p = 0; p < k; ++p) {
    if (!std::getline(is, line)) {
      ++lineno;
      fail("missing row for predicted class '" + names[p] + "'");
    }
    ++lineno;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != k + 2) fail("expected " + std::to_string(k + 2) + " cells, got " + std::to_string(cells.size()));
    if (cells[0] != names[p]) fail("row label '" + cells[0] + "' does not match class '" + names[p] + "'");
    for (std::size_t t = 0; t < k; ++t) {
      const std::string& c = cells[t + 1];
      if (c.empty() || c.find_first_not_of("0123456789") != std::string::npos) fail("count '" + c + "' is not a nonnegative integer");
      cm.set(p, t, std::stoull(c));
    }
  }
  if (!std::getline(is, line)) {
    ++lineno;
    fail("missing recall footer row");
  }
  ++lineno;
  if (detail::split_csv_line(line).front() != "recall") fail("footer row must start with 'recall'");
  return cm;
}

inline std::string format_g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline constexpr const char* kCurvesHeader = "epoch,train_top1,val_top1,lr";

inline std::string emit_curves(std::span<const EpochRecord> history) {
  std::ostringstream os;
  os << kCurvesHeader << "\n";
  for (const auto& r : history)
    os << r.epoch << "," << format_g6(r.train_top1_error) << "," << format_g6(r.val_top1_error) << "," << format_g6(r.lr)
       << "\n";
  return os.str();
}

inline std::vector<EpochRecord> parse_curves(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw ParseError("curves csv: empty input");
  const auto header = detail::split_csv_line(line);
  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError("curves csv: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ce = column("epoch"), ct = column("train_top1"), cv = column("val_top1"), cl = column("lr");
  std::vector<EpochRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("curves csv line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                       " cells, got " + std::to_string(cells.size()));
    auto number = [&](std::size_t col) {
      const std::string& c = cells[col];
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(c, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != c.size())
        throw ParseError("curves csv line " + std::to_string(lineno) + ": column '" + header[col] + "' value '" + c +
                         "' is not a number");
      return v;
    };
    EpochRecord r;
    const double e = number(ce);
    if (e < 0 || e != static_cast<double>(static_cast<std::size_t>(e)))
      throw ParseError("curves csv line " + std::to_string(lineno) + ": epoch must be a nonnegative integer");
    r.epoch = static_cast<std::size_t>(e);
    r.train_top1_error = number(ct);
    r.val_top1_error = number(cv);
    r.lr = number(cl);
    out.push_back(r);
  }
  return out;
}

}  // namespace cnnf
