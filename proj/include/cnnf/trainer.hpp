#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "cnnf/checkpoint.hpp"
#include "cnnf/data/dataset.hpp"
#include "cnnf/layers/softmax.hpp"
#include "cnnf/metrics.hpp"
#include "cnnf/network.hpp"
#include "cnnf/optimizer.hpp"

namespace cnnf {

// Images stacked into one (n,h,w,c) tensor with a label per item.
template <class T>
struct LabeledSet {
  Tensor4<T> images;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }

  Tensor4<T> gather(std::span<const std::size_t> idx) const {
    const Shape4& s = images.shape();
    Tensor4<T> out({idx.size(), s.h, s.w, s.c});
    for (std::size_t j = 0; j < idx.size(); ++j) {
      auto src = images.item(idx[j]);
      std::copy(src.begin(), src.end(), out.item(j).begin());
    }
    return out;
  }
  std::vector<int> gather_labels(std::span<const std::size_t> idx) const {
    std::vector<int> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(labels.at(i));
    return out;
  }
};

template <class T>
LabeledSet<T> stack_samples(const std::vector<Sample>& samples) {
  if (samples.empty()) return {};
  std::vector<std::size_t> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  auto b = assemble_batch<T>(samples, all);
  return {std::move(b.images), std::move(b.labels)};
}

// Eval-mode logits for a whole set, chunk_size items at a time.
template <class T>
Tensor4<T> predict_logits(const Network<T>& net, const Tensor4<T>& images, std::size_t chunk_size = 64) {
  const std::size_t n = images.n();
  const std::size_t k = net.num_classes();
  Tensor4<T> out({n, 1, 1, k});
  std::vector<std::size_t> idx;
  for (std::size_t b = 0; b < n; b += chunk_size) {
    const std::size_t e = std::min(n, b + chunk_size);
    const Shape4& s = images.shape();
    Tensor4<T> chunk({e - b, s.h, s.w, s.c});
    std::copy(images.data().begin() + static_cast<std::ptrdiff_t>(b * s.h * s.w * s.c),
              images.data().begin() + static_cast<std::ptrdiff_t>(e * s.h * s.w * s.c), chunk.data().begin());
    const auto logits = net.infer(chunk);
    std::copy(logits.data().begin(), logits.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * k));
  }
  return out;
}

template <class T>
double evaluate_top1(const Network<T>& net, const LabeledSet<T>& set) {
  if (set.size() == 0) throw DataError("cannot evaluate on an empty set");
  return top1_error(predict_logits(net, set.images), std::span<const int>(set.labels));
}

// One SGD update on a mini-batch. Returns the batch loss.
template <class T>
T train_step(Network<T>& net, const Tensor4<T>& images, std::span<const int> labels, VelocityState<T>& velocity,
             const SGDConfig& cfg, double lr, std::uint64_t step) {
  const auto logits = net.forward(images, Mode::train, step);
  const auto sx = softmax_xent(logits, labels);
  if (!std::isfinite(static_cast<double>(sx.loss))) throw DivergenceError(0, 0, "non-finite training loss");
  const auto grads = net.backward(softmax_xent_backward(sx.probs, labels));
  for (const auto& [name, g] : grads)
    for (T v : g.data())
      if (!std::isfinite(static_cast<double>(v))) throw DivergenceError(0, 0, "non-finite gradient for " + name);
  apply_gradients(net, grads, velocity, cfg, lr);
  net.clear_cache();
  return sx.loss;
}

template <class T>
using EpochCallback = std::function<void(const EpochRecord&, Network<T>&, const TrainState<T>&)>;

// Runs epochs state.epoch+1 .. cfg.epochs. Each epoch shuffles with
// (state.seed, epoch), steps SGD per batch, then scores train and val in eval
// mode and feeds the val error to the plateau schedule. Resuming from a saved
// state reproduces an uninterrupted run exactly.
template <class T>
std::vector<EpochRecord> train(Network<T>& net, const LabeledSet<T>& train_set, const LabeledSet<T>& val_set,
                               const SGDConfig& cfg, TrainState<T>& state, const EpochCallback<T>& on_epoch = {}) {
  cfg.validate();
  if (train_set.size() == 0) throw DataError("training set is empty");
  if (val_set.size() == 0) throw DataError("validation set is empty");
  std::vector<EpochRecord> history;
  while (state.epoch < cfg.epochs) {
    const std::size_t epoch = state.epoch + 1;
    const double lr = state.schedule.lr;
    const auto batches = batch_order(train_set.size(), cfg.batch_size, state.seed, epoch);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto x = train_set.gather(batches[b]);
      const auto y = train_set.gather_labels(batches[b]);
      try {
        train_step(net, x, std::span<const int>(y), state.velocity, cfg, lr, state.step);
      } catch (const DivergenceError& e) {
        std::string what = e.what();
        what = what.substr(0, what.rfind(" (epoch"));
        throw DivergenceError(epoch, b + 1, what);
      }
      ++state.step;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_top1_error = evaluate_top1(net, train_set);
    rec.val_top1_error = evaluate_top1(net, val_set);
    schedule_update(state.schedule, rec.val_top1_error);
    state.epoch = epoch;
    history.push_back(rec);
    if (on_epoch) on_epoch(rec, net, state);
  }
  return history;
}

}  // namespace cnnf
