#pragma once

// Central-difference checks at f64 for every layer and the whole mini network.
// Each returns the largest norm-wise relative error over the tensors it checks.

#include <algorithm>
#include <tuple>

#include "cnnf/layers/activation.hpp"
#include "cnnf/layers/batchnorm.hpp"
#include "cnnf/layers/conv.hpp"
#include "cnnf/layers/dropout.hpp"
#include "cnnf/layers/fully_connected.hpp"
#include "cnnf/layers/lrn.hpp"
#include "cnnf/layers/pool.hpp"
#include "cnnf/layers/softmax.hpp"
#include "cnnf/network.hpp"
#include "support/gradcheck.hpp"

namespace cnnf::testkit {

inline double gradcheck_conv() {
  double worst = 0;
  for (auto [k, s, pad] : {std::tuple{3, 1, 1}, std::tuple{2, 2, 0}, std::tuple{3, 2, 1}}) {
    auto x = fill_gaussian<double>({2, 6, 6, 4}, 0, 1, 1);
    ConvParams<double> p{fill_gaussian<double>({std::size_t(k), std::size_t(k), 4, 3}, 0, 1, 2),
                         fill_gaussian<double>({1, 1, 1, 3}, 0, 1, 3), std::size_t(s), std::size_t(pad)};
    ConvCache<double> cache;
    const auto y = conv2d(x, p, &cache);
    const auto r = fill_gaussian<double>(y.shape(), 0, 1, 4);
    ConvGrads<double> g;
    const auto gx = conv2d_backward(r, cache, p, &g, true);
    auto loss = [&] { return dot(conv2d(x, p), r); };
    worst = std::max({worst, fd_rel_error(x, gx, loss), fd_rel_error(p.weights, g.weights, loss),
                      fd_rel_error(p.bias, g.bias, loss)});
  }
  return worst;
}

inline double gradcheck_maxpool() {
  auto x = fill_gaussian<double>({2, 6, 6, 4}, 0, 1, 5);
  PoolCache cache;
  const auto y = maxpool(x, {}, &cache);
  const auto r = fill_gaussian<double>(y.shape(), 0, 1, 6);
  const auto gx = maxpool_backward(r, cache);
  return fd_rel_error(x, gx, [&] { return dot(maxpool(x, {}), r); });
}

inline double gradcheck_lrn() {
  double worst = 0;
  // the larger alphas make the cross-channel term visible
  for (LrnParams p : {LrnParams{}, LrnParams{3, 1.0, 0.5, 0.75}, LrnParams{5, 2.0, 2.0, 0.6}}) {
    auto x = fill_gaussian<double>({2, 6, 6, 4}, 0, 1, 7);
    LrnCache<double> cache;
    const auto y = lrn(x, p, &cache);
    const auto r = fill_gaussian<double>(y.shape(), 0, 1, 8);
    const auto gx = lrn_backward(r, cache, p);
    worst = std::max(worst, fd_rel_error(x, gx, [&] { return dot(lrn(x, p), r); }));
  }
  return worst;
}

inline double gradcheck_relu() {
  auto x = fill_gaussian<double>({2, 6, 6, 4}, 0, 1, 9);
  for (auto& v : x.data())
    if (std::abs(v) < 0.01) v = 0.5;  // keep away from the kink
  ReluCache<double> cache;
  const auto y = relu(x, &cache);
  const auto r = fill_gaussian<double>(y.shape(), 0, 1, 10);
  const auto gx = relu_backward(r, cache);
  return fd_rel_error(x, gx, [&] { return dot(relu(x), r); });
}

inline double gradcheck_batchnorm_train() {
  auto x = fill_gaussian<double>({2, 6, 6, 4}, 1, 4, 11);
  auto p = BnParams<double>::identity(4);
  p.gamma = fill_gaussian<double>({1, 1, 1, 4}, 1, 0.25, 12);
  p.beta = fill_gaussian<double>({1, 1, 1, 4}, 0, 1, 13);
  BnCache<double> cache;
  auto scratch = p;
  const auto y = batchnorm(x, scratch, Mode::train, &cache);
  const auto r = fill_gaussian<double>(y.shape(), 0, 1, 14);
  BnGrads<double> g;
  const auto gx = batchnorm_backward(r, cache, p, &g, true);
  auto loss = [&] {
    auto q = p;
    return dot(batchnorm(x, q, Mode::train), r);
  };
  return std::max({fd_rel_error(x, gx, loss), fd_rel_error(p.gamma, g.gamma, loss), fd_rel_error(p.beta, g.beta, loss)});
}

inline double gradcheck_batchnorm_eval() {
  auto x = fill_gaussian<double>({1, 4, 4, 3}, 0, 1, 15);
  auto p = BnParams<double>::identity(3);
  p.running_mean = fill_gaussian<double>({1, 1, 1, 3}, 0, 1, 16);
  p.running_var = Tensor4<double>({1, 1, 1, 3}, std::vector<double>{0.5, 1.5, 2.0});
  p.gamma = fill_gaussian<double>({1, 1, 1, 3}, 1, 0.25, 17);
  BnCache<double> cache;
  const auto y = batchnorm(x, p, Mode::eval, &cache);
  const auto r = fill_gaussian<double>(y.shape(), 0, 1, 18);
  BnGrads<double> g;
  const auto gx = batchnorm_backward(r, cache, p, &g, true);
  auto loss = [&] { return dot(batchnorm_eval(x, p), r); };
  return std::max({fd_rel_error(x, gx, loss), fd_rel_error(p.gamma, g.gamma, loss), fd_rel_error(p.beta, g.beta, loss)});
}

inline double gradcheck_fully_connected() {
  auto x = fill_gaussian<double>({3, 2, 2, 4}, 0, 1, 19);
  FcParams<double> p{fill_gaussian<double>({1, 1, 16, 5}, 0, 1, 20), fill_gaussian<double>({1, 1, 1, 5}, 0, 1, 21)};
  FcCache<double> cache;
  const auto y = fully_connected(x, p, &cache);
  const auto r = fill_gaussian<double>(y.shape(), 0, 1, 22);
  FcGrads<double> g;
  const auto gx = fully_connected_backward(r, cache, p, &g, true);
  auto loss = [&] { return dot(fully_connected(x, p), r); };
  return std::max({fd_rel_error(x, gx, loss), fd_rel_error(p.weights, g.weights, loss), fd_rel_error(p.bias, g.bias, loss)});
}

inline double gradcheck_dropout() {
  auto x = fill_gaussian<double>({2, 6, 6, 4}, 0, 1, 23);
  const DropoutConfig cfg{0.5, 99};
  DropoutCache<double> cache;
  const auto y = dropout(x, cfg, Mode::train, 4, &cache);
  const auto r = fill_gaussian<double>(y.shape(), 0, 1, 24);
  const auto gx = dropout_backward(r, cache);
  return fd_rel_error(x, gx, [&] { return dot(dropout(x, cfg, Mode::train, 4), r); });
}

inline double gradcheck_softmax_xent() {
  auto z = fill_gaussian<double>({4, 1, 1, 7}, 0, 4, 25);
  const std::vector<int> labels{0, 6, 3, 3};
  const auto sx = softmax_xent(z, std::span<const int>(labels));
  const auto gz = softmax_xent_backward(sx.probs, std::span<const int>(labels));
  return fd_rel_error(z, gz, [&] { return softmax_xent(z, std::span<const int>(labels)).loss; });
}

struct NetworkGradcheck {
  double worst = 0;
  std::size_t tensors = 0;
};

// 16x16-input mini CNN-F with batch norm, all layers trainable, a fixed
// dropout step so every loss evaluation sees the same masks.
inline NetworkGradcheck gradcheck_mini_network() {
  auto net = insert_batchnorm(build_mini_cnnf<double>(7, 31, 16, 32, 0.25));
  const auto x = fill_gaussian<double>({2, 16, 16, 3}, 0, 1, 32);
  const std::vector<int> labels{2, 5};
  const std::uint64_t step = 3;
  auto loss = [&] {
    auto copy = net;  // train-mode BN would otherwise advance its running stats
    return softmax_xent(copy.forward(x, Mode::train, step), std::span<const int>(labels)).loss;
  };
  auto work = net;
  const auto sx = softmax_xent(work.forward(x, Mode::train, step), std::span<const int>(labels));
  const auto grads = work.backward(softmax_xent_backward(sx.probs, std::span<const int>(labels)));
  NetworkGradcheck res;
  for (auto& p : net.parameters()) {
    if (p.buffer) continue;
    const auto idx = sample_indices(p.tensor->size(), 24, res.tensors + 1);
    res.worst = std::max(res.worst, fd_rel_error(*p.tensor, grads.at(p.name), loss, idx));
    ++res.tensors;
  }
  return res;
}

}  // namespace cnnf::testkit
