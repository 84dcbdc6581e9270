#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "cnnf/network.hpp"
#include "cnnf/layers/softmax.hpp"
#include "cnnf/weights_io.hpp"

namespace cnnf {

// Reference forward/backward cases produced by an external generator, one
// weights-io file per case. Records:
//   case.layer      f64 [8]: kind, p0..p6 (kinds and p-slots as in meta.structure;
//                   kind 8 is softmax cross-entropy)
//   case.mode       f64 [1]: 0 eval, 1 train (batchnorm, dropout)
//   case.tolerance  f64 [1]: relative error bound
//   input, grad_output, labels, dropout.mask, param.<name>
//   expected.output, expected.grad_input, expected.grad.<name>, expected.loss
// All tensors share the dtype of "input".
inline constexpr int kGoldenSoftmaxXent = 8;

struct GoldenCheck {
  std::string tensor;
  double rel_error;
};

struct GoldenResult {
  std::string name;
  double tolerance = 0.0;
  std::vector<GoldenCheck> checks;

  bool passed() const {
    if (checks.empty()) return false;
    for (const auto& c : checks)
      if (!(c.rel_error <= tolerance)) return false;
    return true;
  }
};

// ||a - b|| / max(||b||, 1e-30); mismatched shapes count as infinite error.
template <class T>
double relative_error(const Tensor4<T>& actual, const Tensor4<T>& expected) {
  if (actual.shape() != expected.shape()) return INFINITY;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double d = double(actual[i]) - double(expected[i]);
    num += d * d;
    den += double(expected[i]) * double(expected[i]);
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-30);
}

template <class T>
GoldenResult run_golden_case(const Checkpoint& ck, const std::string& name = "golden") {
  GoldenResult res;
  res.name = name;
  const auto layer = record_values<double>(ck.at("case.layer"));
  if (layer.size() != 8) throw StructureError(name + ": case.layer must hold 8 values");
  res.tolerance = record_values<double>(ck.at("case.tolerance")).at(0);
  const Mode mode = ck.find("case.mode") && record_values<double>(ck.at("case.mode")).at(0) != 0.0 ? Mode::train : Mode::eval;
  const double* p = layer.data() + 1;
  auto tensor = [&](const std::string& n) { return record_tensor<T>(ck.at(n)); };
  auto check = [&](const std::string& n, const Tensor4<T>& actual) {
    if (ck.find(n)) res.checks.push_back({n, relative_error(actual, tensor(n))});
  };
  const auto input = tensor("input");
  const int kind = static_cast<int>(layer[0]);

  if (kind == kGoldenSoftmaxXent) {
    const auto lv = record_values<double>(ck.at("labels"));
    std::vector<int> labels(lv.begin(), lv.end());
    auto sx = softmax_xent(input, std::span<const int>(labels));
    if (ck.find("expected.loss")) {
      const double want = record_values<T>(ck.at("expected.loss")).at(0);
      res.checks.push_back({"expected.loss", std::abs(double(sx.loss) - want) / std::max(std::abs(want), 1e-30)});
    }
    check("expected.output", sx.probs);
    check("expected.grad_input", softmax_xent_backward(sx.probs, std::span<const int>(labels)));
    return res;
  }

  const bool has_grad = ck.find("grad_output") != nullptr;
  switch (static_cast<LayerKind>(kind)) {
    case LayerKind::conv: {
      ConvParams<T> cp{tensor("param.weight"), tensor("param.bias"), std::size_t(p[4]), std::size_t(p[5])};
      ConvCache<T> cache;
      check("expected.output", conv2d(input, cp, &cache));
      if (has_grad) {
        ConvGrads<T> g;
        check("expected.grad_input", conv2d_backward(tensor("grad_output"), cache, cp, &g, true));
        check("expected.grad.weight", g.weights);
        check("expected.grad.bias", g.bias);
      }
      break;
    }
    case LayerKind::fc: {
      FcParams<T> fp{tensor("param.weight"), tensor("param.bias")};
      FcCache<T> cache;
      check("expected.output", fully_connected(input, fp, &cache));
      if (has_grad) {
        FcGrads<T> g;
        check("expected.grad_input", fully_connected_backward(tensor("grad_output"), cache, fp, &g, true));
        check("expected.grad.weight", g.weights);
        check("expected.grad.bias", g.bias);
      }
      break;
    }
    case LayerKind::maxpool: {
      PoolParams pp{std::size_t(p[0]), std::size_t(p[1])};
      PoolCache cache;
      check("expected.output", maxpool(input, pp, &cache));
      if (has_grad) check("expected.grad_input", maxpool_backward(tensor("grad_output"), cache));
      break;
    }
    case LayerKind::lrn: {
      LrnParams lp{std::size_t(p[0]), p[1], p[2], p[3]};
      LrnCache<T> cache;
      check("expected.output", lrn(input, lp, &cache));
      if (has_grad) check("expected.grad_input", lrn_backward(tensor("grad_output"), cache, lp));
      break;
    }
    case LayerKind::relu: {
      ReluCache<T> cache;
      check("expected.output", relu(input, &cache));
      if (has_grad) check("expected.grad_input", relu_backward(tensor("grad_output"), cache));
      break;
    }
    case LayerKind::batchnorm: {
      BnParams<T> bp{tensor("param.gamma"), tensor("param.beta"), tensor("param.running_mean"),
                     tensor("param.running_var"), p[1], p[2], 0};
      if (ck.find("param.stat_updates")) bp.stat_updates = std::uint64_t(record_values<double>(ck.at("param.stat_updates")).at(0));
      BnCache<T> cache;
      check("expected.output", batchnorm(input, bp, mode, &cache));
      check("expected.running_mean", bp.running_mean);
      check("expected.running_var", bp.running_var);
      if (has_grad) {
        BnGrads<T> g;
        check("expected.grad_input", batchnorm_backward(tensor("grad_output"), cache, bp, &g, true));
        check("expected.grad.gamma", g.gamma);
        check("expected.grad.beta", g.beta);
      }
      break;
    }
    case LayerKind::dropout: {
      DropoutCache<T> cache;
      const auto mask = mode == Mode::train ? record_values<T>(ck.at("dropout.mask")) : std::vector<T>{};
      check("expected.output", mode == Mode::train ? dropout_with_mask(input, mask, &cache) : input);
      if (has_grad) check("expected.grad_input", dropout_backward(tensor("grad_output"), cache));
      break;
    }
    default: throw StructureError(name + ": unsupported golden layer kind " + std::to_string(kind));
  }
  return res;
}

// Runs a case file at the precision stored in its "input" record.
inline GoldenResult run_golden_file(const std::filesystem::path& path) {
  const auto ck = load_file(path);
  const std::string name = path.stem().string();
  return ck.at("input").dtype == DType::f64 ? run_golden_case<double>(ck, name) : run_golden_case<float>(ck, name);
}

}  // namespace cnnf
