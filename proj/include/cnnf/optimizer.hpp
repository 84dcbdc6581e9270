#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <string>

#include "cnnf/network.hpp"

namespace cnnf {

// Defaults are the fine-tuning recipe: batch 50, momentum 0.5, 400 epochs,
// weight decay 5e-4, lr one decade below the 1e-2 pretraining rate.
struct SGDConfig {
  double lr = 1e-3;
  double momentum = 0.5;
  double weight_decay = 5e-4;
  std::size_t batch_size = 50;
  std::size_t epochs = 400;

  void validate() const {
    if (!(lr > 0.0)) throw InvalidArgument("sgd: lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("sgd: momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw InvalidArgument("sgd: weight_decay must be >= 0");
    if (batch_size < 1) throw InvalidArgument("sgd: batch_size must be >= 1");
    if (epochs < 1) throw InvalidArgument("sgd: epochs must be >= 1");
  }
};

// Plateau decay: when the validation error has gone patience_epochs consecutive
// epochs without a new best, lr <- max(lr / decay_factor, min_lr).
struct LRSchedule {
  double lr = 1e-3;
  double decay_factor = 10.0;
  std::size_t patience_epochs = 10;
  double min_lr = 1e-6;
  double best_val_error = std::numeric_limits<double>::infinity();
  std::size_t epochs_since_best = 0;
};

inline double schedule_update(LRSchedule& s, double epoch_val_error) {
  if (epoch_val_error < s.best_val_error) {
    s.best_val_error = epoch_val_error;
    s.epochs_since_best = 0;
    return s.lr;
  }
  if (++s.epochs_since_best >= s.patience_epochs) {
    s.lr = std::min(s.lr, std::max(s.lr / s.decay_factor, s.min_lr));
    s.epochs_since_best = 0;
  }
  return s.lr;
}

template <class T>
using VelocityState = std::map<std::string, Tensor4<T>>;

// v <- momentum * v - lr * (grad + weight_decay * param);  param <- param + v
template <class T>
void sgd_step(Tensor4<T>& param, const Tensor4<T>& grad, Tensor4<T>& velocity, const SGDConfig& cfg, double lr) {
  if (grad.shape() != param.shape() || velocity.shape() != param.shape())
    throw ShapeError("sgd_step: parameter " + param.shape().to_string() + ", gradient " + grad.shape().to_string() +
                     " and velocity " + velocity.shape().to_string() + " must match");
  const T mu = static_cast<T>(cfg.momentum);
  const T eta = static_cast<T>(lr);
  const T wd = static_cast<T>(cfg.weight_decay);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T v = mu * velocity[i] - eta * (grad[i] + wd * param[i]);
    velocity[i] = v;
    param[i] += v;
  }
}

template <class T>
void sgd_step(Tensor4<T>& param, const Tensor4<T>& grad, Tensor4<T>& velocity, const SGDConfig& cfg) {
  sgd_step(param, grad, velocity, cfg, cfg.lr);
}

// Applies one update to every trainable parameter that has a gradient entry.
// Velocities are created lazily at zero.
template <class T>
void apply_gradients(Network<T>& net, const Gradients<T>& grads, VelocityState<T>& velocity, const SGDConfig& cfg,
                     double lr) {
  for (auto& p : net.parameters()) {
    if (!p.trainable || p.buffer) continue;
    auto g = grads.find(p.name);
    if (g == grads.end()) continue;
    auto [it, inserted] = velocity.try_emplace(p.name, p.tensor->shape());
    sgd_step(*p.tensor, g->second, it->second, cfg, lr);
  }
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_top1_error = 0.0;
  double val_top1_error = 0.0;
  double lr = 0.0;
};

}  // namespace cnnf
