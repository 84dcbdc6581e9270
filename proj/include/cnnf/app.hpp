#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cnnf/checkpoint.hpp"
#include "cnnf/config.hpp"
#include "cnnf/data/dataset.hpp"
#include "cnnf/data/image_io.hpp"
#include "cnnf/data/manifest.hpp"
#include "cnnf/metrics.hpp"
#include "cnnf/plot.hpp"
#include "cnnf/trainer.hpp"

namespace cnnf::app {

enum ExitCode : int { ok = 0, other = 1, config = 2, data = 3, training = 4, format = 5 };

// Maps an in-flight exception onto its exit code. Call inside a catch block.
inline int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const ConfigError&) {
    return config;
  } catch (const DataError&) {
    return data;
  } catch (const LabelError&) {
    return data;
  } catch (const DivergenceError&) {
    return training;
  } catch (const FormatError&) {
    return format;
  } catch (const ImportError&) {
    return format;
  } catch (...) {
    return other;
  }
}

// $CNNF_OUT_DIR, when set and non-empty, replaces the requested directory.
inline std::filesystem::path resolve_out_dir(const std::filesystem::path& requested) {
  if (const char* env = std::getenv("CNNF_OUT_DIR"); env && *env) return env;
  return requested;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) { write_file_atomic(path, text); }

inline std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

inline constexpr const char* kDatasetFile = "dataset.cnnf";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kConfigEcho = "config.ini";

namespace detail {

inline std::string counts_line(const std::string& label, const std::vector<std::size_t>& counts) {
  std::ostringstream os;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%-16s", label.c_str());
  os << buf;
  std::size_t total = 0;
  for (auto c : counts) {
    std::snprintf(buf, sizeof buf, "%10zu", c);
    os << buf;
    total += c;
  }
  std::snprintf(buf, sizeof buf, "%10zu\n", total);
  os << buf;
  return os.str();
}

inline std::string counts_header(const std::vector<std::string>& names) {
  std::ostringstream os;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%-16s", "stage");
  os << buf;
  for (const auto& n : names) {
    std::snprintf(buf, sizeof buf, "%10s", n.c_str());
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "%10s\n", "total");
  os << buf;
  return os.str();
}

template <class T>
std::vector<double> labels_as_f64(const std::vector<T>& labels) {
  return std::vector<double>(labels.begin(), labels.end());
}

inline void put_set(Checkpoint& ck, const std::string& prefix, const LabeledSet<float>& set) {
  ck.put(make_record(prefix + ".images", set.images));
  const auto labels = labels_as_f64(set.labels);
  ck.put(make_record<double>(prefix + ".labels", labels, {static_cast<std::uint32_t>(labels.size())}));
}

inline LabeledSet<float> get_set(const Checkpoint& ck, const std::string& prefix) {
  LabeledSet<float> s;
  s.images = record_tensor<float>(ck.at(prefix + ".images"));
  for (double v : record_values<double>(ck.at(prefix + ".labels"))) s.labels.push_back(static_cast<int>(v));
  if (s.labels.size() != s.images.n()) throw FormatError(prefix + ": label count does not match image count");
  return s;
}

}  // namespace detail

struct PrepareOptions {
  std::filesystem::path data_root;
  std::filesystem::path out_dir;
  Config config;
};

struct PrepareResult {
  SplitManifest manifest;
  std::vector<std::size_t> train_counts;
  std::vector<std::size_t> val_counts;
  std::filesystem::path out_dir;
};

// load -> resize -> split -> augment(train) -> oversample(train) -> mean.
inline PrepareResult cmd_prepare(const PrepareOptions& opt, std::ostream& log = std::cout) {
  const RunConfig rc = resolve(opt.config);
  const auto out = resolve_out_dir(opt.out_dir);
  std::filesystem::create_directories(out);

  LoadOptions lo;
  lo.resize_to = rc.arch.input_size;
  LoadReport lr;
  Dataset ds = load_dataset(opt.data_root, lo, &lr);
  if (ds.samples.empty()) throw DataError(opt.data_root.string() + ": no decodable images found");
  for (const auto& s : lr.skipped) log << "skipped " << s << "\n";
  for (const auto& w : lr.warnings) log << "warning: " << w << "\n";

  SplitManifest m = split(ds, rc.train_fraction, derive_seed(rc.seed, 0x51));
  Dataset train_ds = select(ds, m.train);
  Dataset val_ds = select(ds, m.val);
  const auto split_counts = train_ds.class_counts();
  if (rc.augment) train_ds = augment(train_ds, rc.augment_cfg);
  const auto augmented_counts = train_ds.class_counts();
  if (rc.oversample) train_ds = oversample_balance(train_ds, derive_seed(rc.seed, 0xb0));
  m.train = entries_of(train_ds);
  check_no_leakage(m);
  if (val_ds.samples.empty()) throw DataError("validation split is empty; each class needs at least two images");

  const Image mean = compute_mean(train_ds.samples, rc.mean_mode);
  subtract_mean(train_ds, mean);
  subtract_mean(val_ds, mean);

  Checkpoint cache;
  detail::put_set(cache, "train", stack_samples<float>(train_ds.samples));
  detail::put_set(cache, "val", stack_samples<float>(val_ds.samples));
  cache.put(make_record("data.mean", mean));
  save_file(out / kDatasetFile, cache);
  write_text(out / kManifestFile, manifest_to_string(m));
  write_text(out / kConfigEcho, opt.config.dump());

  PrepareResult res{m, train_ds.class_counts(), val_ds.class_counts(), out};
  std::string report = detail::counts_header(ds.class_names);
  report += detail::counts_line("loaded", ds.class_counts());
  report += detail::counts_line("train split", split_counts);
  report += detail::counts_line("augmented", augmented_counts);
  report += detail::counts_line("balanced", res.train_counts);
  report += detail::counts_line("val", res.val_counts);
  for (const auto& w : m.warnings) report += "warning: " + w + "\n";
  write_text(out / "class_counts.txt", report);
  log << report;
  return res;
}

struct TrainOptions {
  std::filesystem::path data_dir;  // output of prepare
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> pretrained;
  std::optional<std::filesystem::path> resume;
  Config config;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::optional<ImportReport> import_report;
  std::filesystem::path out_dir;
};

// The fine-tuning network: CNN-F with a 1000-way head, swapped for a K-way
// head, optionally seeded from pretrained records, batch norm inserted and
// the listed layers frozen.
inline Network<float> build_finetune_network(const RunConfig& rc, const Checkpoint* pretrained,
                                             std::optional<ImportReport>* report = nullptr) {
  Architecture base = rc.arch;
  base.num_classes = 1000;
  auto net = build_network<float>(base, rc.seed, rc.init_variance);
  net = replace_head(std::move(net), rc.arch.num_classes, rc.init_variance, derive_seed(rc.seed, 0xfc8));
  if (pretrained) {
    auto r = import_pretrained(net, *pretrained, Strictness::lenient);
    if (report) *report = std::move(r);
  }
  if (rc.batchnorm) net = insert_batchnorm(std::move(net), *rc.batchnorm);
  return set_trainable(std::move(net), rc.freeze, false);
}

inline TrainResult cmd_train(const TrainOptions& opt, std::ostream& log = std::cout) {
  const RunConfig rc = resolve(opt.config);
  const auto out = resolve_out_dir(opt.out_dir);
  std::filesystem::create_directories(out);

  const Checkpoint cache = load_file(opt.data_dir / kDatasetFile);
  const auto train_set = detail::get_set(cache, "train");
  const auto val_set = detail::get_set(cache, "val");
  const Tensor4<float> mean = record_tensor<float>(cache.at("data.mean"));

  TrainResult res;
  res.out_dir = out;
  Network<float> net;
  TrainState<float> state;
  std::vector<EpochRecord> history;
  if (opt.resume) {
    const auto ck = load_file(*opt.resume);
    net = network_from_checkpoint<float>(ck);
    auto st = train_state_from_checkpoint<float>(ck);
    if (!st) throw FormatError(opt.resume->string() + ": checkpoint has no training state");
    state = std::move(*st);
    if (std::filesystem::exists(out / "history.csv")) {
      history = parse_curves(read_text(out / "history.csv"));
      if (history.size() > state.epoch) history.resize(state.epoch);
    }
    log << "resuming after epoch " << state.epoch << "\n";
  } else {
    std::optional<Checkpoint> pre;
    if (opt.pretrained) pre = load_file(*opt.pretrained);
    net = build_finetune_network(rc, pre ? &*pre : nullptr, &res.import_report);
    if (res.import_report) {
      std::string text;
      for (const auto& n : res.import_report->imported) text += "imported " + n + "\n";
      for (const auto& n : res.import_report->skipped) text += "skipped " + n + "\n";
      write_text(out / "import_report.txt", text);
      log << text;
    }
    state.seed = derive_seed(rc.seed, 0x7a);
    state.schedule = rc.schedule;
    save_file(out / "initial.cnnf", make_checkpoint(net, &state, &mean));
  }
  if (train_set.images.h() != net.input_shape().h)
    throw DataError("prepared images are " + std::to_string(train_set.images.h()) + " px but the network expects " +
                    std::to_string(net.input_shape().h) + "; re-run prepare with the same arch");
  write_text(out / kConfigEcho, opt.config.dump());
  log << net.describe();

  double best_seen = state.schedule.best_val_error;
  auto on_epoch = [&](const EpochRecord& r, Network<float>& n, const TrainState<float>& st) {
    history.push_back(r);
    write_text(out / "history.csv", emit_curves(history));
    char line[128];
    std::snprintf(line, sizeof line, "epoch %zu  train_top1 %.4f  val_top1 %.4f  lr %g\n", r.epoch, r.train_top1_error,
                  r.val_top1_error, r.lr);
    log << line << std::flush;
    if (r.val_top1_error < best_seen) {
      best_seen = r.val_top1_error;
      save_file(out / "best.cnnf", make_checkpoint(n, &st, &mean));
    }
  };
  train(net, train_set, val_set, rc.sgd, state, EpochCallback<float>(on_epoch));
  save_file(out / "final.cnnf", make_checkpoint(net, &state, &mean));
  res.history = std::move(history);
  return res;
}

struct EvalOptions {
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> test_dir;
  std::optional<std::filesystem::path> predictions;  // "true,predicted" CSV instead of a model
  std::filesystem::path out_dir;
};

// CSV with a "true,predicted" header; cells are class names or indices.
inline ConfusionMatrix parse_predictions(const std::string& text, const std::vector<std::string>& names) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw ParseError("predictions csv: empty input");
  const auto header = cnnf::detail::split_csv_line(line);
  auto column = [&](const std::string& n) {
    auto it = std::find(header.begin(), header.end(), n);
    if (it == header.end()) throw ParseError("predictions csv: missing column '" + n + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ct = column("true"), cp = column("predicted");
  ConfusionMatrix cm(names);
  std::size_t lineno = 1;
  auto label = [&](const std::string& cell) {
    if (auto it = std::find(names.begin(), names.end(), cell); it != names.end())
      return static_cast<int>(it - names.begin());
    if (!cell.empty() && cell.find_first_not_of("0123456789") == std::string::npos) {
      const auto v = std::stoul(cell);
      if (v < names.size()) return static_cast<int>(v);
    }
    throw ParseError("predictions csv line " + std::to_string(lineno) + ": unknown class '" + cell + "'");
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = cnnf::detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("predictions csv line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                       " cells");
    cm.accumulate(label(cells[cp]), label(cells[ct]));
  }
  return cm;
}

inline EvalReport cmd_eval(const EvalOptions& opt, std::ostream& log = std::cout) {
  const auto out = resolve_out_dir(opt.out_dir);
  const auto& names = food_state_names();
  ConfusionMatrix cm(names);
  if (opt.predictions) {
    cm = parse_predictions(read_text(*opt.predictions), names);
  } else {
    if (!opt.checkpoint || !opt.test_dir) throw ConfigError("eval needs --checkpoint and --test-dir, or --predictions");
    const auto ck = load_file(*opt.checkpoint);
    const auto net = network_from_checkpoint<float>(ck);
    const auto mean = mean_from_checkpoint(ck);
    if (!mean) throw FormatError(opt.checkpoint->string() + ": checkpoint has no data.mean record");
    if (!std::filesystem::is_directory(*opt.test_dir)) throw DataError(opt.test_dir->string() + ": not a directory");
    LoadOptions lo;
    lo.resize_to = net.input_shape().h;
    LoadReport lr;
    Dataset ds = load_dataset(*opt.test_dir, lo, &lr);
    for (const auto& s : lr.skipped) log << "skipped " << s << "\n";
    if (ds.samples.empty()) throw DataError(opt.test_dir->string() + ": test set is empty");
    subtract_mean(ds, *mean);
    const auto set = stack_samples<float>(ds.samples);
    const auto pred = argmax_rows(predict_logits(net, set.images));
    cm.accumulate(std::span<const int>(pred), std::span<const int>(set.labels));
  }
  const EvalReport r = make_report(std::move(cm));
  if (r.sample_count == 0) throw DataError("no samples to evaluate");
  std::filesystem::create_directories(out);
  const std::string text = emit_report(r, "text");
  write_text(out / "eval_report.txt", text);
  write_text(out / "eval_report.csv", emit_report(r, "csv"));
  log << text;
  return r;
}

struct ReportOptions {
  std::filesystem::path history_csv;
  std::filesystem::path output;  // PNG path
};

inline std::vector<EpochRecord> cmd_report(const ReportOptions& opt, std::ostream& log = std::cout) {
  const auto history = parse_curves(read_text(opt.history_csv));
  if (history.empty()) throw ParseError(opt.history_csv.string() + ": no epochs in history");
  auto path = opt.output;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_png(path, render_curves(history));
  log << "wrote " << path.string() << " (" << history.size() << " epochs)\n";
  return history;
}

}  // namespace cnnf::app
