#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sgce/tensor.hpp"

namespace sgce {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-parameter moments plus the shared step counter.
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;

  AdamState() = default;
  AdamState(AdamConfig cfg, std::span<const Tensor> params);
};

/// One bias-corrected Adam update using each parameter's accumulated grad.
/// A parameter without a grad buffer is treated as having zero gradient.
void adam_step(std::span<Tensor> params, AdamState& state);

/// Central-difference check of d f(x) / dx against reverse mode. Returns the
/// largest |a - n| / max(|a|, |n|, 1e-8) over the coordinates of x.
/// `x` must require grad; its values are restored on return.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor& x, double h = 1e-5);

}  // namespace sgce
