#include "sgce/optim.hpp"

#include <algorithm>
#include <cmath>

#include "sgce/error.hpp"

namespace sgce {

AdamState::AdamState(AdamConfig cfg, std::span<const Tensor> params) : config(cfg) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const auto& p : params) {
    m.emplace_back(p.numel(), 0.0);
    v.emplace_back(p.numel(), 0.0);
  }
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw Error(ErrorKind::ShapeMismatch, "adam_step: optimizer state does not match parameters");
  }
  const auto& cfg = state.config;
  if (!(cfg.learning_rate > 0.0)) throw Error(ErrorKind::InvalidConfig, "learning rate must be > 0");

  ++state.t;
  const double t = static_cast<double>(state.t);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto value = params[k].data();
    auto grad = params[k].grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != value.size() || v.size() != value.size() ||
        (!grad.empty() && grad.size() != value.size())) {
      throw Error(ErrorKind::ShapeMismatch, "adam_step: moment shape differs from parameter");
    }
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      value[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor& x, double h) {
  if (!x.requires_grad()) throw Error(ErrorKind::InvalidConfig, "grad_check: x must require grad");
  x.zero_grad();
  Tensor y = f(x);
  y.backward();
  const std::vector<double> analytic(x.grad().begin(), x.grad().end());

  NoGradGuard no_grad;
  auto values = x.data();
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double plus = f(x).item();
    values[i] = saved - h;
    const double minus = f(x).item();
    values[i] = saved;
    const double numeric = (plus - minus) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace sgce
