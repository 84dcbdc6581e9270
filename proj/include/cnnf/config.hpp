#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cnnf/data/dataset.hpp"
#include "cnnf/error.hpp"
#include "cnnf/network.hpp"
#include "cnnf/optimizer.hpp"

namespace cnnf {

// Flat "section.key" -> value map. Files use INI-style text:
//
//   seed = 7
//   [sgd]
//   lr = 0.001
//
// '#' and ';' start comments. Every key must be one of the known keys.
class Config {
public:
  using Map = std::map<std::string, std::string>;

  static const Map& defaults() {
    static const Map d = {
        {"seed", "0"},
        {"arch", "cnnf"},
        {"mini.input", "32"},
        {"mini.width_divisor", "8"},
        {"split.train_fraction", "0.9"},
        {"augment.enabled", "true"},
        {"augment.transforms", "flip_h,rot90,rot180,rot270"},
        {"augment.target_size", ""},
        {"balance.oversample", "true"},
        {"mean.mode", "per_pixel"},
        {"sgd.lr", "0.001"},
        {"sgd.momentum", "0.5"},
        {"sgd.weight_decay", "0.0005"},
        {"sgd.batch_size", "50"},
        {"sgd.epochs", "400"},
        {"schedule.decay_factor", "10"},
        {"schedule.patience", "10"},
        {"schedule.min_lr", "1e-06"},
        {"model.init_variance", "0.01"},
        {"model.batchnorm", "after_lrn"},
        {"model.freeze", "conv1,conv2,conv3,conv4,conv5"},
    };
    return d;
  }

  Config() : values_(defaults()) {}

  static Config parse(const std::string& text, const std::string& origin = "config") {
    Config c;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto cut = line.find_first_of("#;");
      if (cut != std::string::npos) line.erase(cut);
      line = trim(line);
      if (line.empty()) continue;
      const std::string where = origin + ":" + std::to_string(lineno);
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        if (section.empty()) throw ConfigError(where + ": empty section name");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError(where + ": missing key");
      c.set((section.empty() ? "" : section + ".") + key, trim(line.substr(eq + 1)), where);
    }
    return c;
  }

  static Config load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string() + ": cannot open config file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
  }

  void set(const std::string& key, const std::string& value, const std::string& where = "override") {
    if (!defaults().count(key)) throw ConfigError(where + ": unknown config key '" + key + "'");
    values_[key] = value;
  }

  // "key=value" as given on the command line.
  void apply_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "': expected key=value");
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)), "override '" + kv + "'");
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  double real(const std::string& key) const {
    const auto& s = str(key);
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': '" + s + "' is not a number");
    }
  }

  std::uint64_t u64(const std::string& key) const {
    const auto& s = str(key);
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw ConfigError("config key '" + key + "': '" + s + "' is not a non-negative integer");
    return v;
  }

  bool boolean(const std::string& key) const {
    const auto& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("config key '" + key + "': '" + s + "' is not a boolean");
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ','))
      if (auto t = trim(item); !t.empty()) out.push_back(t);
    return out;
  }

  // Canonical text form: sorted keys grouped by section. parse(dump()) == *this.
  std::string dump() const {
    std::ostringstream os;
    std::string current;
    for (const auto& [k, v] : values_)
      if (k.find('.') == std::string::npos) os << k << " = " << v << "\n";
    for (const auto& [k, v] : values_) {
      const auto dot = k.find('.');
      if (dot == std::string::npos) continue;
      const std::string sec = k.substr(0, dot);
      if (sec != current) {
        os << "\n[" << sec << "]\n";
        current = sec;
      }
      os << k.substr(dot + 1) << " = " << v << "\n";
    }
    return os.str();
  }

  const Map& values() const noexcept { return values_; }
  friend bool operator==(const Config&, const Config&) = default;

private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  Map values_;
};

// Typed view of a Config, validated as a whole.
struct RunConfig {
  std::uint64_t seed = 0;
  Architecture arch = cnnf_architecture(7);
  double train_fraction = 0.9;
  bool augment = true;
  AugmentConfig augment_cfg;
  bool oversample = true;
  MeanMode mean_mode = MeanMode::per_pixel;
  SGDConfig sgd;
  LRSchedule schedule;
  double init_variance = 1e-2;
  std::optional<BnPlacement> batchnorm = BnPlacement::after_lrn;
  std::set<std::string> freeze;
};

inline RunConfig resolve(const Config& c) {
  RunConfig r;
  r.seed = c.u64("seed");
  const std::size_t k = food_state_names().size();
  const std::string& arch = c.str("arch");
  try {
    // mini.* is checked even when unused so a bad file fails early.
    const auto mini = mini_architecture(k, c.u64("mini.input"), c.u64("mini.width_divisor"));
    if (arch == "cnnf")
      r.arch = cnnf_architecture(k);
    else if (arch == "mini")
      r.arch = mini;
    else
      throw ConfigError("arch must be 'cnnf' or 'mini', got '" + arch + "'");
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  r.train_fraction = c.real("split.train_fraction");
  if (!(r.train_fraction > 0.0 && r.train_fraction < 1.0)) throw ConfigError("split.train_fraction must be in (0, 1)");
  r.augment = c.boolean("augment.enabled");
  r.augment_cfg.transforms.clear();
  for (const auto& t : c.list("augment.transforms")) {
    try {
      r.augment_cfg.transforms.push_back(parse_transform(t));
    } catch (const ParseError& e) {
      throw ConfigError(std::string("augment.transforms: ") + e.what());
    }
  }
  if (!c.str("augment.target_size").empty()) r.augment_cfg.target_size = c.u64("augment.target_size");
  r.augment_cfg.seed = derive_seed(r.seed, 0xa0);
  r.oversample = c.boolean("balance.oversample");
  const auto& mm = c.str("mean.mode");
  if (mm == "per_pixel")
    r.mean_mode = MeanMode::per_pixel;
  else if (mm == "per_channel")
    r.mean_mode = MeanMode::per_channel;
  else
    throw ConfigError("mean.mode must be per_pixel or per_channel");
  r.sgd.lr = c.real("sgd.lr");
  r.sgd.momentum = c.real("sgd.momentum");
  r.sgd.weight_decay = c.real("sgd.weight_decay");
  r.sgd.batch_size = c.u64("sgd.batch_size");
  r.sgd.epochs = c.u64("sgd.epochs");
  try {
    r.sgd.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  r.schedule.lr = r.sgd.lr;
  r.schedule.decay_factor = c.real("schedule.decay_factor");
  r.schedule.patience_epochs = c.u64("schedule.patience");
  r.schedule.min_lr = c.real("schedule.min_lr");
  if (!(r.schedule.decay_factor > 1.0)) throw ConfigError("schedule.decay_factor must be > 1");
  if (r.schedule.patience_epochs < 1) throw ConfigError("schedule.patience must be >= 1");
  if (!(r.schedule.min_lr > 0.0 && r.schedule.min_lr <= r.sgd.lr)) throw ConfigError("schedule.min_lr must be in (0, sgd.lr]");
  r.init_variance = c.real("model.init_variance");
  if (!(r.init_variance > 0.0)) throw ConfigError("model.init_variance must be > 0");
  const auto& bn = c.str("model.batchnorm");
  if (bn == "after_lrn")
    r.batchnorm = BnPlacement::after_lrn;
  else if (bn == "replace_lrn")
    r.batchnorm = BnPlacement::replace_lrn;
  else if (bn == "none")
    r.batchnorm = std::nullopt;
  else
    throw ConfigError("model.batchnorm must be after_lrn, replace_lrn or none");
  for (const auto& n : c.list("model.freeze")) r.freeze.insert(n);
  return r;
}

}  // namespace cnnf
