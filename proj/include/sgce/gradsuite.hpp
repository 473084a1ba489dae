#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sgce {

struct GradCheckResult {
  std::string op;
  std::size_t configs = 0;
  double max_error = 0.0;  ///< worst relative error over all configurations
};

inline constexpr double kGradTolerance = 1e-4;

/// Finite-difference check of every differentiable operator, the loss terms,
/// and small generator / discriminator composites, each over `configs`
/// random shapes and values drawn from `seed`. A non-empty `only` restricts
/// the run to the named check.
std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, std::size_t configs = 50,
                                                const std::string& only = "");

std::vector<std::string> gradient_suite_ops();

}  // namespace sgce
