#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "cnnf/tensor.hpp"

namespace cnnf {

template <class T>
struct SoftmaxXent {
  T loss = T(0);     // mean over the batch of -log p[label]
  Tensor4<T> probs;  // (n,1,1,K)
};

template <class T>
void check_logits(const Tensor4<T>& logits, std::size_t labels) {
  if (logits.h() != 1 || logits.w() != 1)
    throw ShapeError("softmax: logits must be (n,1,1,K), got " + logits.shape().to_string());
  if (labels != logits.n())
    throw ShapeError("softmax: " + std::to_string(labels) + " labels for batch of " + std::to_string(logits.n()));
}

template <class T>
SoftmaxXent<T> softmax_xent(const Tensor4<T>& logits, std::span<const int> labels) {
  check_logits(logits, labels.size());
  const std::size_t n = logits.n(), k = logits.c();
  SoftmaxXent<T> r;
  r.probs = Tensor4<T>(logits.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
      throw LabelError("softmax: label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(k) + ")");
    auto row = logits.item(i);
    auto prow = r.probs.item(i);
    const T mx = *std::max_element(row.begin(), row.end());
    T sum = T(0);
    for (std::size_t j = 0; j < k; ++j) {
      prow[j] = std::exp(row[j] - mx);
      sum += prow[j];
    }
    for (std::size_t j = 0; j < k; ++j) prow[j] /= sum;
    // log-sum-exp form keeps the loss finite when p[label] underflows
    total += -(static_cast<double>(row[static_cast<std::size_t>(labels[i])] - mx) - std::log(static_cast<double>(sum)));
  }
  r.loss = static_cast<T>(total / static_cast<double>(n));
  return r;
}

// Gradient of the mean loss wrt logits: (probs - onehot) / n.
template <class T>
Tensor4<T> softmax_xent_backward(const Tensor4<T>& probs, std::span<const int> labels) {
  check_logits(probs, labels.size());
  const std::size_t n = probs.n();
  Tensor4<T> grad = probs;
  const T inv_n = T(1) / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = grad.item(i);
    row[static_cast<std::size_t>(labels[i])] -= T(1);
    for (auto& v : row) v *= inv_n;
  }
  return grad;
}

}  // namespace cnnf
