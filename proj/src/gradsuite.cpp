#include "sgce/gradsuite.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <random>

#include "sgce/losses.hpp"
#include "sgce/models.hpp"
#include "sgce/optim.hpp"
#include "sgce/tensor.hpp"

namespace sgce {

namespace {

using Rng = std::mt19937_64;

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0, bool grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

/// Values in +-[margin, 1], keeping kinked ops away from their kink.
Tensor away_from_zero(Rng& rng, Shape shape, double margin, bool grad) {
  std::uniform_real_distribution<double> mag(margin, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

/// Scalar probe sum(w * y) with fixed random weights so every output
/// element contributes an O(1) gradient.
Tensor probe(const Tensor& y, const Tensor& w) {
  return affine(mean(mul(y, w)), static_cast<double>(y.numel()), 0.0);
}

Shape random_nchw(Rng& rng, std::size_t max_c = 3, std::size_t min_hw = 1, std::size_t max_hw = 5) {
  return {pick(rng, 1, 2), pick(rng, 1, max_c), pick(rng, min_hw, max_hw), pick(rng, min_hw, max_hw)};
}

/// One check: `make` builds the variable and a function of it.
using Case = std::function<double(Rng&)>;

double check(const std::function<Tensor(const Tensor&)>& op, Tensor x, Rng& rng) {
  Tensor w;
  {
    NoGradGuard off;
    w = random_tensor(rng, op(x).shape());
  }
  return grad_check([&](const Tensor& v) { return probe(op(v), w); }, x);
}

// Fresh leaf that requires grad, holding a copy of t's values.
Tensor var(Tensor t) { return Tensor(t.shape(), std::vector<double>(t.data().begin(), t.data().end()), true); }

/// Smallest relu / leaky_relu input magnitude accepted at the base point of a
/// composite check; closer points are resampled since the network is not
/// differentiable there.
constexpr double kKinkMargin = 3e-4;

/// Small network in train mode, checked w.r.t. its input and one conv weight.
/// Weights are fan-in scaled rather than the N(0, 0.02) training init so
/// activations stay O(1) and gradients sit well above rounding noise.
template <class Net>
Case composite_case(std::size_t in_channels) {
  return [in_channels](Rng& rng) {
    ModelSpec spec;
    spec.image_size = 8;
    spec.base_width = 4;
    spec.n_residual_blocks = 1;
    Net net(spec);
    Tensor x;
    for (int attempt = 0;; ++attempt) {
      init_params(net, rng());
      for (auto& conv : net.convs()) {
        const double fan_in = static_cast<double>(conv.weight.numel() / conv.out_channels());
        std::normal_distribution<double> d(0.0, 1.0 / std::sqrt(fan_in));
        for (auto& w : conv.weight.data()) w = d(rng);
      }
      x = random_tensor(rng, {2, in_channels, 8, 8});
      KinkMonitor monitor;
      NoGradGuard off;
      net.forward(x, NormMode::Train);
      if (monitor.min_abs() >= kKinkMargin || attempt == 1000) break;
    }
    std::vector<std::size_t> small;
    for (std::size_t i = 0; i < net.convs().size(); ++i)
      if (net.convs()[i].weight.numel() <= 800) small.push_back(i);
    const std::size_t which = small[pick(rng, 0, small.size() - 1)];
    const double worst = check([&](const Tensor& v) { return net.forward(v, NormMode::Train); }, var(x), rng);
    const Tensor weight = net.convs()[which].weight;
    return std::max(worst, check([&](const Tensor&) { return net.forward(x, NormMode::Train); }, weight, rng));
  };
}

std::vector<std::pair<std::string, Case>> cases() {
  std::vector<std::pair<std::string, Case>> out;
  auto unary = [&](std::string name, std::function<Tensor(const Tensor&)> op, double margin) {
    out.emplace_back(std::move(name), [op, margin](Rng& rng) {
      return check(op, var(away_from_zero(rng, random_nchw(rng), margin, false)), rng);
    });
  };
  auto binary = [&](std::string name, std::function<Tensor(const Tensor&, const Tensor&)> op) {
    out.emplace_back(std::move(name), [op](Rng& rng) {
      const Shape s = random_nchw(rng);
      const Tensor other = random_tensor(rng, s);
      return check([&](const Tensor& x) { return op(x, other); }, var(random_tensor(rng, s)), rng);
    });
  };

  binary("add", add);
  binary("sub", sub);
  binary("mul", mul);
  unary("affine", [](const Tensor& x) { return affine(x, -1.7, 0.3); }, 0.0);
  unary("mean", [](const Tensor& x) { return affine(mean(x), 3.0, 0.0); }, 0.0);
  out.emplace_back("abs_mean", [](Rng& rng) {
    const Shape s = random_nchw(rng);
    const Tensor base = random_tensor(rng, s);
    const Tensor gap = away_from_zero(rng, s, 0.05, false);
    Tensor x = var(add(base, gap));
    return grad_check([&](const Tensor& v) { return abs_mean(v, base); }, x);
  });
  out.emplace_back("log_clamped", [](Rng& rng) {
    return check([](const Tensor& x) { return log_clamped(x, kLogClampEps); },
                 var(random_tensor(rng, random_nchw(rng), 0.05, 0.95)), rng);
  });
  unary("relu", relu, 0.01);
  unary("leaky_relu", [](const Tensor& x) { return leaky_relu(x, 0.2); }, 0.01);
  unary("tanh", tanh, 0.0);
  unary("sigmoid", sigmoid, 0.0);
  unary("reshape", [](const Tensor& x) { return reshape(x, Shape{x.numel()}); }, 0.0);
  out.emplace_back("concat_channels", [](Rng& rng) {
    const Shape s = random_nchw(rng);
    const Tensor other = random_tensor(rng, {s[0], pick(rng, 1, 3), s[2], s[3]});
    return check([&](const Tensor& x) { return concat_channels(other, x); }, var(random_tensor(rng, s)), rng);
  });
  out.emplace_back("channel_mix", [](Rng& rng) {
    const Shape s = random_nchw(rng);
    std::vector<double> weights(s[1]);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (auto& w : weights) w = d(rng);
    return check([&](const Tensor& x) { return channel_mix(x, weights); }, var(random_tensor(rng, s)), rng);
  });

  // Convolutions: one configuration checks input, weight and bias in turn.
  auto conv_case = [](bool transposed) {
    return [transposed](Rng& rng) {
      const std::size_t k = pick(rng, 1, 4);
      const int stride = static_cast<int>(pick(rng, 1, 2));
      const int pad = static_cast<int>(pick(rng, 0, k - 1));
      const std::size_t c = pick(rng, 1, 3), f = pick(rng, 1, 3);
      const std::size_t h = pick(rng, transposed ? 1 : k, 6), w = pick(rng, transposed ? 1 : k, 6);
      Shape in_shape{pick(rng, 1, 2), c, h, w};
      if (transposed) {
        // output size (h-1)s - 2p + k must be positive
        while ((static_cast<long>(in_shape[2]) - 1) * stride - 2 * pad + static_cast<long>(k) < 1 ||
               (static_cast<long>(in_shape[3]) - 1) * stride - 2 * pad + static_cast<long>(k) < 1) {
          ++in_shape[2];
          ++in_shape[3];
        }
      }
      const Tensor x = random_tensor(rng, in_shape);
      const Tensor wt = random_tensor(rng, transposed ? Shape{c, f, k, k} : Shape{f, c, k, k});
      const Tensor b = random_tensor(rng, {f});
      auto run = [&](const Tensor& a, const Tensor& ww, const Tensor& bb) {
        return transposed ? conv2d_transpose(a, ww, bb, stride, pad) : conv2d(a, ww, bb, stride, pad);
      };
      double worst = check([&](const Tensor& v) { return run(v, wt, b); }, var(x), rng);
      worst = std::max(worst, check([&](const Tensor& v) { return run(x, v, b); }, var(wt), rng));
      worst = std::max(worst, check([&](const Tensor& v) { return run(x, wt, v); }, var(b), rng));
      return worst;
    };
  };
  out.emplace_back("conv2d", conv_case(false));
  out.emplace_back("conv2d_transpose", conv_case(true));

  out.emplace_back("batch_norm", [](Rng& rng) {
    Shape s = random_nchw(rng, 3, 1, 4);
    if (s[0] * s[2] * s[3] < 3) s[2] = 2, s[3] = 2;
    BatchNorm bn(s[1]);
    bn.gamma = random_tensor(rng, {s[1]}, 0.5, 1.5);
    bn.beta = random_tensor(rng, {s[1]});
    const Tensor x = random_tensor(rng, s);
    const Tensor gamma = bn.gamma, beta = bn.beta;
    double worst = check([&](const Tensor& v) { return batch_norm(v, bn, NormMode::Train); }, var(x), rng);
    worst = std::max(worst, check([&](const Tensor& v) {
      bn.gamma = v;
      return batch_norm(x, bn, NormMode::Train);
    }, var(gamma), rng));
    bn.gamma = gamma;
    worst = std::max(worst, check([&](const Tensor& v) {
      bn.beta = v;
      return batch_norm(x, bn, NormMode::Train);
    }, var(beta), rng));
    bn.beta = beta;
    return std::max(worst, check([&](const Tensor& v) { return batch_norm(v, bn, NormMode::Eval); }, var(x), rng));
  });

  out.emplace_back("adv_loss_d", [](Rng& rng) {
    const Shape s = random_nchw(rng, 1);
    const Tensor real = random_tensor(rng, s, 0.05, 0.95);
    const Tensor fake = random_tensor(rng, s, 0.05, 0.95);
    Tensor r = var(real), f = var(fake);
    const double a = grad_check([&](const Tensor& v) { return adv_loss_d(v, fake); }, r);
    return std::max(a, grad_check([&](const Tensor& v) { return adv_loss_d(real, v); }, f));
  });
  out.emplace_back("adv_loss_g", [](Rng& rng) {
    Tensor f = var(random_tensor(rng, random_nchw(rng, 1), 0.05, 0.95));
    const double a = grad_check([](const Tensor& v) { return adv_loss_g(v, GanLoss::NonSaturating); }, f);
    return std::max(a, grad_check([](const Tensor& v) { return adv_loss_g(v, GanLoss::Minimax); }, f));
  });
  out.emplace_back("cycle_loss", [](Rng& rng) {
    const Shape s = {pick(rng, 1, 2), 3, pick(rng, 2, 6), pick(rng, 2, 6)};
    const Tensor x = random_tensor(rng, s);
    Tensor rec = var(add(x, away_from_zero(rng, s, 0.05, false)));
    return grad_check([&](const Tensor& v) { return cycle_loss(x, v); }, rec);
  });
  out.emplace_back("ske_loss", [](Rng& rng) {
    // The reconstruction's own skeleton is gradient-opaque, so perturbations
    // must not flip any pixel across the binarisation threshold.
    const Shape s = {pick(rng, 1, 2), 3, pick(rng, 4, 8), pick(rng, 4, 8)};
    const Tensor target = skeleton_mask(random_tensor(rng, s), kDefaultThreshold);
    std::uniform_real_distribution<double> ink(-1.0, -0.3), paper(0.3, 1.0);
    std::bernoulli_distribution is_ink(0.4);
    std::vector<double> v(shape_numel(s));
    const std::size_t plane = s[2] * s[3];
    for (std::size_t n = 0; n < s[0]; ++n)
      for (std::size_t p = 0; p < plane; ++p) {
        const bool dark = is_ink(rng);
        for (std::size_t c = 0; c < 3; ++c) v[(n * 3 + c) * plane + p] = dark ? ink(rng) : paper(rng);
      }
    Tensor rec(s, std::move(v), true);
    return grad_check([&](const Tensor& r) { return ske_loss(target, r, kDefaultThreshold); }, rec);
  });

  out.emplace_back("generator", composite_case<Generator>(4));
  out.emplace_back("discriminator", composite_case<Discriminator>(3));
  return out;
}

}  // namespace

std::vector<std::string> gradient_suite_ops() {
  std::vector<std::string> names;
  for (const auto& c : cases()) names.push_back(c.first);
  return names;
}

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, std::size_t configs,
                                                const std::string& only) {
  std::vector<GradCheckResult> results;
  std::uint64_t stream = 0;
  for (auto& [name, run] : cases()) {
    if (!only.empty() && name != only) {
      ++stream;
      continue;
    }
    GradCheckResult r{name, configs, 0.0};
    for (std::size_t i = 0; i < configs; ++i) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(i)};
      Rng rng(seq);
      r.max_error = std::max(r.max_error, run(rng));
    }
    ++stream;
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace sgce
