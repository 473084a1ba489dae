#pragma once

#include <cstdint>
#include <string>

#include "sgce/image.hpp"
#include "sgce/tensor.hpp"

namespace sgce {

struct LossWeights {
  double cyc = 1.0;
  double ske = 0.001;
  bool operator==(const LossWeights&) const = default;
};

struct LossBreakdown {
  double adv_x = 0.0;
  double adv_y = 0.0;
  double cyc = 0.0;
  double ske = 0.0;
  double total = 0.0;

  bool all_finite() const noexcept;
  bool operator==(const LossBreakdown&) const = default;
};

/// Generator adversarial objective.
enum class GanLoss {
  NonSaturating,  ///< minimise -log D(fake)
  Minimax,        ///< minimise log(1 - D(fake))
};

/// How the skeleton-consistency term reaches the generator.
enum class SkeGrad {
  MaskedIntensity,  ///< gradient through ink intensity of retained skeleton pixels
  None,             ///< monitored value only
};

inline constexpr double kLogClampEps = 1e-7;

/// -(mean log D(real) + mean log(1 - D(fake))), scores clamped to [eps, 1-eps].
Tensor adv_loss_d(const Tensor& d_real, const Tensor& d_fake);
Tensor adv_loss_g(const Tensor& d_fake, GanLoss mode = GanLoss::NonSaturating);
/// Mean absolute difference.
Tensor cycle_loss(const Tensor& x, const Tensor& reconstructed);

/// Skeleton mask {0,1} of a batch of [-1,1] RGB images, shape [N,1,H,W].
Tensor skeleton_mask(const Tensor& rgb_batch, double threshold = kDefaultThreshold);

/// abs_mean(target_mask, M_rec * ink(reconstructed)) where M_rec is the
/// (gradient-opaque) skeleton of the reconstruction and ink = 1 - gray.
/// `target_mask` is the skeleton of the original, [N,1,H,W] in {0,1}.
Tensor ske_loss(const Tensor& target_mask, const Tensor& reconstructed,
                double threshold = kDefaultThreshold, SkeGrad mode = SkeGrad::MaskedIntensity);
/// Single-image convenience form.
Tensor ske_loss(const RasterImage& original, const Tensor& reconstructed,
                double threshold = kDefaultThreshold, SkeGrad mode = SkeGrad::MaskedIntensity);

/// adv_x + adv_y + w.cyc * cyc + w.ske * ske.
LossBreakdown total_loss(double adv_x, double adv_y, double cyc, double ske, const LossWeights& w);

/// Training log: header and one row per step.
inline constexpr const char* kLossLogHeader = "step,adv_x,adv_y,cyc,ske,total";
std::string format_log_row(std::uint64_t step, const LossBreakdown& b);
/// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace sgce
