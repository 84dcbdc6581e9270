#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cnnf/network.hpp"
#include "cnnf/optimizer.hpp"
#include "cnnf/weights_io.hpp"

namespace cnnf {

// Network structure is stored as the f64 record "meta.structure" with one row
// of kStructureWidth values per layer:
//   [kind, name index, trainable, p0 .. p6]
//   conv     kh, kw, c_in, c_out, stride, pad
//   fc       in, out
//   lrn      depth, k, alpha, beta
//   pool     window, stride
//   bn       channels, epsilon, momentum, stat_updates
//   dropout  rate, seed high 32 bits, seed low 32 bits
// Layer names are kind prefix + index ("conv1", "dropout6"), so any network
// whose names follow that pattern round-trips. "meta.input" holds (h, w, c).
inline constexpr std::size_t kStructureWidth = 10;

namespace detail {

inline std::size_t name_index(const std::string& name, LayerKind k) {
  const std::string prefix = kind_name(k);
  std::size_t idx = 0;
  if (name.size() <= prefix.size() || name.compare(0, prefix.size(), prefix) != 0)
    throw StructureError("layer '" + name + "' cannot be serialized: expected a name like " + prefix + "N");
  const char* first = name.data() + prefix.size();
  const char* last = name.data() + name.size();
  auto [p, ec] = std::from_chars(first, last, idx);
  if (ec != std::errc() || p != last)
    throw StructureError("layer '" + name + "' cannot be serialized: expected a name like " + prefix + "N");
  return idx;
}

inline double hi32(std::uint64_t v) { return static_cast<double>(v >> 32); }
inline double lo32(std::uint64_t v) { return static_cast<double>(v & 0xffffffffu); }
inline std::uint64_t join32(double hi, double lo) {
  return (static_cast<std::uint64_t>(hi) << 32) | static_cast<std::uint64_t>(lo);
}

inline std::size_t as_size(double v, const char* what) {
  if (!(v >= 0.0) || v != static_cast<double>(static_cast<std::uint64_t>(v)))
    throw StructureError(std::string("meta.structure: bad ") + what);
  return static_cast<std::size_t>(v);
}

}  // namespace detail

template <class T>
TensorRecord encode_structure(const Network<T>& net) {
  std::vector<double> rows;
  for (const auto& l : net.layers()) {
    std::array<double, kStructureWidth> r{};
    r[0] = static_cast<double>(static_cast<int>(l.kind()));
    r[1] = static_cast<double>(detail::name_index(l.name, l.kind()));
    r[2] = l.trainable ? 1.0 : 0.0;
    double* p = r.data() + 3;
    switch (l.kind()) {
      case LayerKind::conv: {
        const auto& c = std::get<ConvParams<T>>(l.params);
        p[0] = double(c.kh()), p[1] = double(c.kw()), p[2] = double(c.c_in()), p[3] = double(c.c_out());
        p[4] = double(c.stride), p[5] = double(c.pad);
        break;
      }
      case LayerKind::fc: {
        const auto& f = std::get<FcParams<T>>(l.params);
        p[0] = double(f.in_features()), p[1] = double(f.out_features());
        break;
      }
      case LayerKind::lrn: {
        const auto& n = std::get<LrnParams>(l.params);
        p[0] = double(n.depth), p[1] = n.k, p[2] = n.alpha, p[3] = n.beta;
        break;
      }
      case LayerKind::maxpool: {
        const auto& q = std::get<PoolParams>(l.params);
        p[0] = double(q.window), p[1] = double(q.stride);
        break;
      }
      case LayerKind::batchnorm: {
        const auto& b = std::get<BnParams<T>>(l.params);
        p[0] = double(b.channels()), p[1] = b.epsilon, p[2] = b.stat_momentum;
        p[3] = double(b.stat_updates);
        break;
      }
      case LayerKind::dropout: {
        const auto& d = std::get<DropoutConfig>(l.params);
        p[0] = d.rate, p[1] = detail::hi32(d.seed), p[2] = detail::lo32(d.seed);
        break;
      }
      case LayerKind::relu: break;
    }
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return make_record<double>("meta.structure", rows,
                             {static_cast<std::uint32_t>(net.layers().size()), static_cast<std::uint32_t>(kStructureWidth)});
}

// Rebuilds the layer list with zero-filled parameter tensors; fill them with
// load_parameters().
template <class T>
Network<T> decode_structure(const Checkpoint& ck) {
  const auto& rec = ck.at("meta.structure");
  if (rec.dims.size() != 2 || rec.dims[1] != kStructureWidth)
    throw StructureError("meta.structure: expected (layers, " + std::to_string(kStructureWidth) + ") rows");
  const auto rows = record_values<double>(rec);
  const auto input = record_values<double>(ck.at("meta.input"));
  if (input.size() != 3) throw StructureError("meta.input: expected (h, w, c)");
  std::vector<LayerSpec<T>> layers;
  for (std::size_t i = 0; i < rec.dims[0]; ++i) {
    const double* r = rows.data() + i * kStructureWidth;
    const double* p = r + 3;
    const int kind = static_cast<int>(r[0]);
    if (kind < 1 || kind > 7 || r[0] != kind) throw StructureError("meta.structure: unknown layer kind in row " + std::to_string(i));
    const auto k = static_cast<LayerKind>(kind);
    LayerSpec<T> l;
    l.name = kind_name(k) + std::to_string(detail::as_size(r[1], "layer index"));
    l.trainable = r[2] != 0.0;
    switch (k) {
      case LayerKind::conv: {
        ConvParams<T> c;
        c.weights = zeros<T>({detail::as_size(p[0], "kernel"), detail::as_size(p[1], "kernel"),
                              detail::as_size(p[2], "channels"), detail::as_size(p[3], "channels")});
        c.bias = zeros<T>({1, 1, 1, detail::as_size(p[3], "channels")});
        c.stride = detail::as_size(p[4], "stride");
        c.pad = detail::as_size(p[5], "pad");
        l.params = std::move(c);
        break;
      }
      case LayerKind::fc: {
        FcParams<T> f;
        f.weights = zeros<T>({1, 1, detail::as_size(p[0], "features"), detail::as_size(p[1], "features")});
        f.bias = zeros<T>({1, 1, 1, detail::as_size(p[1], "features")});
        l.params = std::move(f);
        break;
      }
      case LayerKind::lrn: l.params = LrnParams{detail::as_size(p[0], "depth"), p[1], p[2], p[3]}; break;
      case LayerKind::maxpool: l.params = PoolParams{detail::as_size(p[0], "window"), detail::as_size(p[1], "stride")}; break;
      case LayerKind::batchnorm: {
        auto b = BnParams<T>::identity(detail::as_size(p[0], "channels"));
        b.epsilon = p[1];
        b.stat_momentum = p[2];
        b.stat_updates = detail::as_size(p[3], "stat updates");
        l.params = std::move(b);
        break;
      }
      case LayerKind::dropout: l.params = DropoutConfig{p[0], detail::join32(p[1], p[2])}; break;
      case LayerKind::relu: l.params = ReluParams{}; break;
    }
    layers.push_back(std::move(l));
  }
  return Network<T>({1, detail::as_size(input[0], "input"), detail::as_size(input[1], "input"),
                     detail::as_size(input[2], "input")},
                    std::move(layers));
}

template <class T>
std::vector<TensorRecord> parameter_records(Network<T>& net) {
  std::vector<TensorRecord> out;
  for (const auto& p : net.parameters()) out.push_back(make_record(p.name, *p.tensor));
  return out;
}

// Copies every parameter from same-named records; any absent or mis-shaped
// record is an error and nothing is modified.
template <class T>
void load_parameters(Network<T>& net, const Checkpoint& ck) {
  std::vector<std::pair<Tensor4<T>*, Tensor4<T>>> staged;
  for (const auto& p : net.parameters()) {
    const auto* r = ck.find(p.name);
    if (!r) throw ImportError("checkpoint has no record for parameter '" + p.name + "'");
    auto t = record_tensor<T>(*r);
    if (t.shape() != p.tensor->shape())
      throw ImportError("parameter '" + p.name + "': record shape " + t.shape().to_string() + " does not match " +
                        p.tensor->shape().to_string());
    staged.emplace_back(p.tensor, std::move(t));
  }
  for (auto& [dst, src] : staged) *dst = std::move(src);
  net.clear_cache();
}

// Everything needed to continue a run exactly where it stopped.
template <class T>
struct TrainState {
  std::size_t epoch = 0;      // completed epochs
  std::uint64_t step = 0;     // completed mini-batches, drives dropout masks
  std::uint64_t seed = 0;
  LRSchedule schedule{};
  VelocityState<T> velocity;
};

template <class T>
Checkpoint make_checkpoint(Network<T>& net, const TrainState<T>* state = nullptr, const Tensor4<float>* mean = nullptr) {
  Checkpoint ck;
  ck.put(encode_structure(net));
  const auto& in = net.input_shape();
  const std::vector<double> input = {double(in.h), double(in.w), double(in.c)};
  ck.put(make_record<double>("meta.input", input, {3}));
  for (auto& r : parameter_records(net)) ck.put(std::move(r));
  if (state) {
    const std::vector<double> meta = {double(state->epoch),
                                      detail::hi32(state->step),
                                      detail::lo32(state->step),
                                      detail::hi32(state->seed),
                                      detail::lo32(state->seed)};
    ck.put(make_record<double>("meta.epoch_step_seed", meta, {5}));
    const auto& s = state->schedule;
    const std::vector<double> sched = {s.lr, s.decay_factor, double(s.patience_epochs), s.min_lr, s.best_val_error,
                                       double(s.epochs_since_best)};
    ck.put(make_record<double>("meta.schedule", sched, {6}));
    for (const auto& [name, v] : state->velocity) ck.put(make_record("velocity." + name, v));
  }
  if (mean) ck.put(make_record("data.mean", *mean));
  return ck;
}

template <class T>
Network<T> network_from_checkpoint(const Checkpoint& ck) {
  auto net = decode_structure<T>(ck);
  load_parameters(net, ck);
  return net;
}

template <class T>
std::optional<TrainState<T>> train_state_from_checkpoint(const Checkpoint& ck) {
  const auto* m = ck.find("meta.epoch_step_seed");
  if (!m) return std::nullopt;
  const auto v = record_values<double>(*m);
  const auto s = record_values<double>(ck.at("meta.schedule"));
  if (v.size() != 5 || s.size() != 6) throw StructureError("checkpoint training metadata is malformed");
  TrainState<T> st;
  st.epoch = detail::as_size(v[0], "epoch");
  st.step = detail::join32(v[1], v[2]);
  st.seed = detail::join32(v[3], v[4]);
  st.schedule = LRSchedule{s[0], s[1], detail::as_size(s[2], "patience"), s[3], s[4], detail::as_size(s[5], "plateau count")};
  const std::string prefix = "velocity.";
  for (const auto& r : ck.records)
    if (r.name.compare(0, prefix.size(), prefix) == 0) st.velocity.emplace(r.name.substr(prefix.size()), record_tensor<T>(r));
  return st;
}

inline std::optional<Tensor4<float>> mean_from_checkpoint(const Checkpoint& ck) {
  if (const auto* r = ck.find("data.mean")) return record_tensor<float>(*r);
  return std::nullopt;
}

enum class Strictness { strict, lenient };

struct ImportReport {
  std::vector<std::string> imported;
  std::vector<std::string> skipped;  // "name: reason"
};

// Copies name-matched parameter records into net. Strict mode rejects any
// missing or mis-shaped parameter before touching the network; lenient mode
// copies what fits and lists the rest.
template <class T>
ImportReport import_pretrained(Network<T>& net, const std::vector<TensorRecord>& records, Strictness mode) {
  auto find = [&](const std::string& n) -> const TensorRecord* {
    for (const auto& r : records)
      if (r.name == n) return &r;
    return nullptr;
  };
  ImportReport report;
  std::vector<std::pair<Tensor4<T>*, Tensor4<T>>> staged;
  for (const auto& p : net.parameters()) {
    const auto* r = find(p.name);
    const std::string layer = p.name.substr(0, p.name.find('.'));
    if (!r) {
      if (mode == Strictness::strict)
        throw ImportError("layer '" + layer + "': no pretrained record for '" + p.name + "'");
      report.skipped.push_back(p.name + ": no record");
      continue;
    }
    auto t = record_tensor<T>(*r);
    if (t.shape() != p.tensor->shape()) {
      const std::string why = "record " + t.shape().to_string() + " vs parameter " + p.tensor->shape().to_string();
      if (mode == Strictness::strict) throw ImportError("layer '" + layer + "': shape conflict for '" + p.name + "', " + why);
      report.skipped.push_back(p.name + ": " + why);
      continue;
    }
    staged.emplace_back(p.tensor, std::move(t));
    report.imported.push_back(p.name);
  }
  for (auto& [dst, src] : staged) *dst = std::move(src);
  net.clear_cache();
  return report;
}

template <class T>
ImportReport import_pretrained(Network<T>& net, const Checkpoint& ck, Strictness mode) {
  return import_pretrained(net, ck.records, mode);
}

}  // namespace cnnf
