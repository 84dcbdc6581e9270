#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "cnnf/layers/activation.hpp"
#include "cnnf/layers/batchnorm.hpp"
#include "cnnf/layers/conv.hpp"
#include "cnnf/layers/dropout.hpp"
#include "cnnf/layers/fully_connected.hpp"
#include "cnnf/layers/lrn.hpp"
#include "cnnf/layers/pool.hpp"

namespace cnnf {

struct ReluParams {};

enum class LayerKind : int { conv = 1, relu = 2, lrn = 3, maxpool = 4, batchnorm = 5, fc = 6, dropout = 7 };

inline const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::lrn: return "lrn";
    case LayerKind::maxpool: return "pool";
    case LayerKind::batchnorm: return "bn";
    case LayerKind::fc: return "fc";
    case LayerKind::dropout: return "dropout";
  }
  return "?";
}

// Alternative order matches LayerKind values minus one.
template <class T>
using LayerParams = std::variant<ConvParams<T>, ReluParams, LrnParams, PoolParams, BnParams<T>, FcParams<T>, DropoutConfig>;

template <class T>
struct LayerSpec {
  std::string name;
  LayerParams<T> params;
  bool trainable = true;

  LayerKind kind() const noexcept { return static_cast<LayerKind>(params.index() + 1); }
  bool has_parameters() const noexcept {
    const auto k = kind();
    return k == LayerKind::conv || k == LayerKind::fc || k == LayerKind::batchnorm;
  }
};

// A named parameter tensor. Buffers (BN running statistics) are serialized but never trained.
template <class T>
struct ParamRef {
  std::string name;
  Tensor4<T>* tensor;
  bool trainable;
  bool buffer;
};

template <class T>
using Gradients = std::map<std::string, Tensor4<T>>;

// Topology knobs shared by the full CNN-F and its scaled-down test fixture.
struct ConvStage {
  std::size_t filters;
  std::size_t kernel;
  std::size_t stride;
  std::size_t pad;
  bool lrn;
  bool pool;
};

struct Architecture {
  std::string name = "cnnf";
  std::size_t input_size = 224;
  std::size_t input_channels = 3;
  std::array<ConvStage, 5> convs{};
  std::size_t fc_width = 4096;
  std::size_t num_classes = 1000;
  LrnParams lrn{};
  PoolParams pool{};
  double dropout_rate = 0.5;
};

inline Architecture cnnf_architecture(std::size_t num_classes = 1000) {
  Architecture a;
  a.convs = {{{64, 11, 4, 0, true, true},
              {256, 5, 1, 2, true, true},
              {256, 3, 1, 1, false, false},
              {256, 3, 1, 1, false, false},
              {256, 3, 1, 1, false, true}}};
  a.num_classes = num_classes;
  return a;
}

// Same layer kinds and order as CNN-F with channel widths divided by
// width_divisor (8 by default). conv1's kernel and stride shrink with the input
// so that all three 2x2 pools still fit: 32 -> 14 -> 7 -> 7 -> 3 -> 3 -> 1 and
// 16 -> 14 -> 7 -> 7 -> 3 -> 3 -> 1.
inline Architecture mini_architecture(std::size_t num_classes = 7, std::size_t input_size = 32,
                                      std::size_t width_divisor = 8) {
  if (input_size != 32 && input_size != 16) throw InvalidArgument("mini architecture supports inputs 32 or 16");
  if (width_divisor == 0 || 64 % width_divisor != 0) throw InvalidArgument("mini width divisor must divide 64");
  Architecture a;
  a.name = "mini";
  a.input_size = input_size;
  const std::size_t c1 = 64 / width_divisor, c = 256 / width_divisor;
  const std::size_t k1 = input_size == 32 ? 5 : 3, s1 = input_size == 32 ? 2 : 1;
  a.convs = {{{c1, k1, s1, 0, true, true},
              {c, 5, 1, 2, true, true},
              {c, 3, 1, 1, false, false},
              {c, 3, 1, 1, false, false},
              {c, 3, 1, 1, false, true}}};
  a.fc_width = 4096 / width_divisor;
  a.num_classes = num_classes;
  return a;
}

namespace detail {
inline std::string layer_name(const char* prefix, std::size_t idx) { return prefix + std::to_string(idx); }
}  // namespace detail

template <class T>
class Network {
public:
  Network() = default;
  Network(Shape4 input_shape, std::vector<LayerSpec<T>> layers) : input_shape_(input_shape), layers_(std::move(layers)) {
    std::set<std::string> seen;
    for (const auto& l : layers_)
      if (!seen.insert(l.name).second) throw StructureError("duplicate layer name '" + l.name + "'");
    output_shapes(Shape4{1, input_shape_.h, input_shape_.w, input_shape_.c});
  }

  // Per-sample input shape; n is ignored.
  const Shape4& input_shape() const noexcept { return input_shape_; }
  std::size_t num_classes() const {
    const Shape4 last = output_shapes(Shape4{1, input_shape_.h, input_shape_.w, input_shape_.c}).back();
    return last.c;
  }

  const std::vector<LayerSpec<T>>& layers() const noexcept { return layers_; }
  std::vector<LayerSpec<T>>& layers() noexcept { return layers_; }

  std::optional<std::size_t> index_of(const std::string& name) const {
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (layers_[i].name == name) return i;
    return std::nullopt;
  }
  LayerSpec<T>& layer(const std::string& name) {
    auto idx = index_of(name);
    if (!idx) throw NameError("no layer named '" + name + "'");
    return layers_[*idx];
  }
  const LayerSpec<T>& layer(const std::string& name) const {
    auto idx = index_of(name);
    if (!idx) throw NameError("no layer named '" + name + "'");
    return layers_[*idx];
  }

  // Output shape after every layer, computed from shapes alone.
  std::vector<Shape4> output_shapes(Shape4 in) const {
    std::vector<Shape4> shapes;
    shapes.reserve(layers_.size());
    Shape4 s = in;
    for (const auto& l : layers_) {
      s = layer_output_shape(l, s);
      shapes.push_back(s);
    }
    return shapes;
  }

  std::size_t learnable_layer_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_)
      if (l.kind() == LayerKind::conv || l.kind() == LayerKind::fc) ++n;
    return n;
  }

  std::vector<ParamRef<T>> parameters() {
    std::vector<ParamRef<T>> refs;
    for (auto& l : layers_) {
      if (auto* p = std::get_if<ConvParams<T>>(&l.params)) {
        refs.push_back({l.name + ".weight", &p->weights, l.trainable, false});
        refs.push_back({l.name + ".bias", &p->bias, l.trainable, false});
      } else if (auto* f = std::get_if<FcParams<T>>(&l.params)) {
        refs.push_back({l.name + ".weight", &f->weights, l.trainable, false});
        refs.push_back({l.name + ".bias", &f->bias, l.trainable, false});
      } else if (auto* b = std::get_if<BnParams<T>>(&l.params)) {
        refs.push_back({l.name + ".gamma", &b->gamma, l.trainable, false});
        refs.push_back({l.name + ".beta", &b->beta, l.trainable, false});
        refs.push_back({l.name + ".running_mean", &b->running_mean, false, true});
        refs.push_back({l.name + ".running_var", &b->running_var, false, true});
      }
    }
    return refs;
  }

  // Names of layers that own parameters and are flagged trainable.
  std::set<std::string> trainable_layers() const {
    std::set<std::string> out;
    for (const auto& l : layers_)
      if (l.has_parameters() && l.trainable) out.insert(l.name);
    return out;
  }

  // Records per-layer caches for a following backward(). step selects the dropout masks.
  Tensor4<T> forward(const Tensor4<T>& batch, Mode mode, std::uint64_t step = 0) {
    check_input(batch);
    caches_.assign(layers_.size(), {});
    Tensor4<T> x = batch;
    for (std::size_t i = 0; i < layers_.size(); ++i) x = run_layer(i, x, mode, step, &caches_[i]);
    has_cache_ = true;
    cache_mode_ = mode;
    return x;
  }

  // Eval-mode forward with no side effects.
  Tensor4<T> infer(const Tensor4<T>& batch) const {
    check_input(batch);
    Tensor4<T> x = batch;
    for (const auto& l : layers_) x = eval_layer(l, x);
    return x;
  }

  // Gradients for every trainable parameter given d(loss)/d(logits). Frozen layers
  // pass gradients through but get no entries; input grads below the lowest
  // trainable layer are never needed and are skipped.
  Gradients<T> backward(const Tensor4<T>& loss_grad) {
    if (!has_cache_) throw StateError("backward: no cached forward pass");
    std::size_t lowest = layers_.size();
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (layers_[i].has_parameters() && layers_[i].trainable) {
        lowest = i;
        break;
      }
    Gradients<T> grads;
    Tensor4<T> g = loss_grad;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      if (i < lowest) break;
      g = backward_layer(i, g, grads, /*want_input_grad=*/i > lowest);
    }
    return grads;
  }

  // Like backward(), but always propagates to the network input and returns it.
  Tensor4<T> backward_to_input(const Tensor4<T>& loss_grad, Gradients<T>* grads = nullptr) {
    if (!has_cache_) throw StateError("backward: no cached forward pass");
    Gradients<T> local;
    Gradients<T>& out = grads ? *grads : local;
    Tensor4<T> g = loss_grad;
    for (std::size_t i = layers_.size(); i-- > 0;) g = backward_layer(i, g, out, true);
    return g;
  }

  void clear_cache() noexcept {
    caches_.clear();
    has_cache_ = false;
  }

  // Human-readable structure table.
  std::string describe() const {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %-8s %-34s %-14s %s\n", "layer", "kind", "parameters", "output",
                  "trainable");
    os << line;
    Shape4 s{1, input_shape_.h, input_shape_.w, input_shape_.c};
    std::snprintf(line, sizeof line, "%-10s %-8s %-34s %zux%zux%zu\n", "input", "", "", s.h, s.w, s.c);
    os << line;
    for (const auto& l : layers_) {
      s = layer_output_shape(l, s);
      const std::string shape = std::to_string(s.h) + "x" + std::to_string(s.w) + "x" + std::to_string(s.c);
      std::snprintf(line, sizeof line, "%-10s %-8s %-34s %-14s %s\n", l.name.c_str(), kind_name(l.kind()),
                    describe_params(l).c_str(), shape.c_str(),
                    l.has_parameters() ? (l.trainable ? "yes" : "frozen") : "-");
      os << line;
    }
    return os.str();
  }

private:
  static Shape4 layer_output_shape(const LayerSpec<T>& l, Shape4 s) {
    switch (l.kind()) {
      case LayerKind::conv: return conv2d_output_shape(s, std::get<ConvParams<T>>(l.params));
      case LayerKind::maxpool: return maxpool_output_shape(s, std::get<PoolParams>(l.params));
      case LayerKind::fc: {
        const auto& p = std::get<FcParams<T>>(l.params);
        return fully_connected_output_shape(s, p.in_features(), p.out_features());
      }
      case LayerKind::batchnorm:
        if (std::get<BnParams<T>>(l.params).channels() != s.c)
          throw ShapeError("layer '" + l.name + "': batchnorm width does not match input channels");
        return s;
      default: return s;
    }
  }

  static std::string describe_params(const LayerSpec<T>& l) {
    char buf[96];
    switch (l.kind()) {
      case LayerKind::conv: {
        const auto& p = std::get<ConvParams<T>>(l.params);
        std::snprintf(buf, sizeof buf, "%zux%zux%zu stride %zu, pad %zu", p.c_out(), p.kh(), p.kw(), p.stride, p.pad);
        return buf;
      }
      case LayerKind::fc: {
        const auto& p = std::get<FcParams<T>>(l.params);
        std::snprintf(buf, sizeof buf, "%zu -> %zu", p.in_features(), p.out_features());
        return buf;
      }
      case LayerKind::lrn: {
        const auto& p = std::get<LrnParams>(l.params);
        std::snprintf(buf, sizeof buf, "n=%zu k=%g alpha=%g beta=%g", p.depth, p.k, p.alpha, p.beta);
        return buf;
      }
      case LayerKind::maxpool: {
        const auto& p = std::get<PoolParams>(l.params);
        std::snprintf(buf, sizeof buf, "max %zux%zu stride %zu", p.window, p.window, p.stride);
        return buf;
      }
      case LayerKind::batchnorm: {
        const auto& p = std::get<BnParams<T>>(l.params);
        std::snprintf(buf, sizeof buf, "%zu channels, eps %g", p.channels(), p.epsilon);
        return buf;
      }
      case LayerKind::dropout: {
        std::snprintf(buf, sizeof buf, "rate %g", std::get<DropoutConfig>(l.params).rate);
        return buf;
      }
      default: return "";
    }
  }

  void check_input(const Tensor4<T>& batch) const {
    const Shape4& s = batch.shape();
    if (s.h != input_shape_.h || s.w != input_shape_.w || s.c != input_shape_.c)
      throw ShapeError("network expects (n," + std::to_string(input_shape_.h) + "," + std::to_string(input_shape_.w) +
                       "," + std::to_string(input_shape_.c) + ") input, got " + s.to_string());
  }

  struct Cache {
    ConvCache<T> conv;
    ReluCache<T> relu;
    LrnCache<T> lrn;
    PoolCache pool;
    BnCache<T> bn;
    FcCache<T> fc;
    DropoutCache<T> dropout;
  };

  Tensor4<T> run_layer(std::size_t i, const Tensor4<T>& x, Mode mode, std::uint64_t step, Cache* c) {
    auto& l = layers_[i];
    switch (l.kind()) {
      case LayerKind::conv: return conv2d(x, std::get<ConvParams<T>>(l.params), &c->conv);
      case LayerKind::relu: return relu(x, &c->relu);
      case LayerKind::lrn: return lrn(x, std::get<LrnParams>(l.params), &c->lrn);
      case LayerKind::maxpool: return maxpool(x, std::get<PoolParams>(l.params), &c->pool);
      case LayerKind::batchnorm: return batchnorm(x, std::get<BnParams<T>>(l.params), mode, &c->bn);
      case LayerKind::fc: return fully_connected(x, std::get<FcParams<T>>(l.params), &c->fc);
      case LayerKind::dropout: return dropout(x, std::get<DropoutConfig>(l.params), mode, step, &c->dropout);
    }
    throw StructureError("unknown layer kind");
  }

  static Tensor4<T> eval_layer(const LayerSpec<T>& l, const Tensor4<T>& x) {
    switch (l.kind()) {
      case LayerKind::conv: return conv2d(x, std::get<ConvParams<T>>(l.params));
      case LayerKind::relu: return relu(x);
      case LayerKind::lrn: return lrn(x, std::get<LrnParams>(l.params));
      case LayerKind::maxpool: return maxpool(x, std::get<PoolParams>(l.params));
      case LayerKind::batchnorm: return batchnorm_eval(x, std::get<BnParams<T>>(l.params));
      case LayerKind::fc: return fully_connected(x, std::get<FcParams<T>>(l.params));
      case LayerKind::dropout: return x;
    }
    throw StructureError("unknown layer kind");
  }

  Tensor4<T> backward_layer(std::size_t i, const Tensor4<T>& g, Gradients<T>& grads, bool want_input) {
    auto& l = layers_[i];
    Cache& c = caches_[i];
    switch (l.kind()) {
      case LayerKind::conv: {
        const auto& p = std::get<ConvParams<T>>(l.params);
        ConvGrads<T> pg;
        auto gi = conv2d_backward(g, c.conv, p, l.trainable ? &pg : nullptr, want_input);
        if (l.trainable) {
          grads[l.name + ".weight"] = std::move(pg.weights);
          grads[l.name + ".bias"] = std::move(pg.bias);
        }
        return gi;
      }
      case LayerKind::fc: {
        const auto& p = std::get<FcParams<T>>(l.params);
        FcGrads<T> pg;
        auto gi = fully_connected_backward(g, c.fc, p, l.trainable ? &pg : nullptr, want_input);
        if (l.trainable) {
          grads[l.name + ".weight"] = std::move(pg.weights);
          grads[l.name + ".bias"] = std::move(pg.bias);
        }
        return gi;
      }
      case LayerKind::batchnorm: {
        const auto& p = std::get<BnParams<T>>(l.params);
        BnGrads<T> pg;
        auto gi = batchnorm_backward(g, c.bn, p, l.trainable ? &pg : nullptr, want_input);
        if (l.trainable) {
          grads[l.name + ".gamma"] = std::move(pg.gamma);
          grads[l.name + ".beta"] = std::move(pg.beta);
        }
        return gi;
      }
      case LayerKind::relu: return relu_backward(g, c.relu);
      case LayerKind::lrn: return lrn_backward(g, c.lrn, std::get<LrnParams>(l.params));
      case LayerKind::maxpool: return maxpool_backward(g, c.pool);
      case LayerKind::dropout: return dropout_backward(g, c.dropout);
    }
    throw StructureError("unknown layer kind");
  }

  Shape4 input_shape_{};
  std::vector<LayerSpec<T>> layers_;
  std::vector<Cache> caches_;
  bool has_cache_ = false;
  Mode cache_mode_ = Mode::eval;
};

// Weights ~ N(0, init_variance) with a per-layer seed; biases zero.
template <class T>
Network<T> build_network(const Architecture& a, std::uint64_t seed = 0, double init_variance = 1e-2) {
  if (a.num_classes < 2) throw InvalidArgument("num_classes must be >= 2");
  std::vector<LayerSpec<T>> layers;
  Shape4 s{1, a.input_size, a.input_size, a.input_channels};
  std::uint64_t salt = 0;
  for (std::size_t i = 0; i < a.convs.size(); ++i) {
    const auto& st = a.convs[i];
    const std::size_t idx = i + 1;
    ConvParams<T> p;
    p.weights = fill_gaussian<T>({st.kernel, st.kernel, s.c, st.filters}, 0.0, init_variance, derive_seed(seed, ++salt));
    p.bias = zeros<T>({1, 1, 1, st.filters});
    p.stride = st.stride;
    p.pad = st.pad;
    s = conv2d_output_shape(s, p);
    layers.push_back({detail::layer_name("conv", idx), std::move(p), true});
    layers.push_back({detail::layer_name("relu", idx), ReluParams{}, true});
    if (st.lrn) layers.push_back({detail::layer_name("lrn", idx), a.lrn, true});
    if (st.pool) {
      layers.push_back({detail::layer_name("pool", idx), a.pool, true});
      s = maxpool_output_shape(s, a.pool);
    }
  }
  std::size_t features = s.h * s.w * s.c;
  for (std::size_t idx = 6; idx <= 8; ++idx) {
    const std::size_t width = idx == 8 ? a.num_classes : a.fc_width;
    FcParams<T> p;
    p.weights = fill_gaussian<T>({1, 1, features, width}, 0.0, init_variance, derive_seed(seed, ++salt));
    p.bias = zeros<T>({1, 1, 1, width});
    layers.push_back({detail::layer_name("fc", idx), std::move(p), true});
    if (idx < 8) {
      layers.push_back({detail::layer_name("relu", idx), ReluParams{}, true});
      layers.push_back({detail::layer_name("dropout", idx), DropoutConfig{a.dropout_rate, derive_seed(seed, 1000 + idx)}, true});
    }
    features = width;
  }
  return Network<T>({1, a.input_size, a.input_size, a.input_channels}, std::move(layers));
}

template <class T>
Network<T> build_cnnf(std::size_t num_classes = 1000, std::uint64_t seed = 0, double init_variance = 1e-2) {
  return build_network<T>(cnnf_architecture(num_classes), seed, init_variance);
}

template <class T>
Network<T> build_mini_cnnf(std::size_t num_classes = 7, std::uint64_t seed = 0, std::size_t input_size = 32,
                           std::size_t width_divisor = 8, double init_variance = 1e-2) {
  return build_network<T>(mini_architecture(num_classes, input_size, width_divisor), seed, init_variance);
}

// Swaps fc8 for a fresh num_classes-wide layer, weights ~ N(0, init_variance), bias 0.
template <class T>
Network<T> replace_head(Network<T> net, std::size_t num_classes, double init_variance, std::uint64_t seed) {
  auto idx = net.index_of("fc8");
  if (!idx) throw StructureError("replace_head: network has no fc8 layer");
  if (num_classes < 2) throw InvalidArgument("replace_head: num_classes must be >= 2");
  auto& l = net.layers()[*idx];
  auto& old = std::get<FcParams<T>>(l.params);
  FcParams<T> p;
  p.weights = fill_gaussian<T>({1, 1, old.in_features(), num_classes}, 0.0, init_variance, seed);
  p.bias = zeros<T>({1, 1, 1, num_classes});
  l.params = std::move(p);
  net.clear_cache();
  return net;
}

enum class BnPlacement { after_lrn, replace_lrn };

// Inserts bn1 and bn2 after conv1's and conv2's normalization stage (just
// before their pool), initialized gamma=1, beta=0, running stats (0, 1).
template <class T>
Network<T> insert_batchnorm(Network<T> net, BnPlacement placement = BnPlacement::after_lrn) {
  auto& layers = net.layers();
  for (std::size_t stage : {1, 2}) {
    const std::string conv = detail::layer_name("conv", stage);
    auto ci = net.index_of(conv);
    if (!ci) throw StructureError("insert_batchnorm: network has no " + conv);
    const std::string bn = detail::layer_name("bn", stage);
    if (net.index_of(bn)) throw StructureError("insert_batchnorm: " + bn + " already present");
    const std::size_t channels = std::get<ConvParams<T>>(layers[*ci].params).c_out();
    // insertion point: right before the pool that follows the conv, else after its trailing relu/lrn
    std::size_t pos = *ci + 1;
    while (pos < layers.size() &&
           (layers[pos].kind() == LayerKind::relu || layers[pos].kind() == LayerKind::lrn))
      ++pos;
    if (placement == BnPlacement::replace_lrn) {
      for (std::size_t j = *ci + 1; j < pos; ++j)
        if (layers[j].kind() == LayerKind::lrn) {
          layers.erase(layers.begin() + static_cast<std::ptrdiff_t>(j));
          --pos;
          break;
        }
    }
    layers.insert(layers.begin() + static_cast<std::ptrdiff_t>(pos), LayerSpec<T>{bn, BnParams<T>::identity(channels), true});
  }
  net.clear_cache();
  return Network<T>(net.input_shape(), std::move(layers));
}

// Flags the named layers (non-)trainable. Unknown names are rejected before any change.
template <class T>
Network<T> set_trainable(Network<T> net, const std::set<std::string>& names, bool trainable = false) {
  for (const auto& n : names)
    if (!net.index_of(n)) throw NameError("set_trainable: no layer named '" + n + "'");
  for (auto& l : net.layers())
    if (names.count(l.name)) l.trainable = trainable;
  return net;
}

inline std::set<std::string> conv_layer_names() { return {"conv1", "conv2", "conv3", "conv4", "conv5"}; }

}  // namespace cnnf
