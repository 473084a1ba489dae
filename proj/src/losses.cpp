#include "sgce/losses.hpp"

#include <array>
#include <charconv>
#include <cmath>

#include "sgce/error.hpp"
#include "sgce/expand.hpp"
#include "sgce/skeleton.hpp"

namespace sgce {

namespace {
constexpr std::array<double, 3> kLuma{0.299, 0.587, 0.114};
}

bool LossBreakdown::all_finite() const noexcept {
  return std::isfinite(adv_x) && std::isfinite(adv_y) && std::isfinite(cyc) && std::isfinite(ske) &&
         std::isfinite(total);
}

Tensor adv_loss_d(const Tensor& d_real, const Tensor& d_fake) {
  Tensor real_term = mean(log_clamped(d_real, kLogClampEps));
  Tensor fake_term = mean(log_clamped(affine(d_fake, -1.0, 1.0), kLogClampEps));
  return affine(add(real_term, fake_term), -1.0, 0.0);
}

Tensor adv_loss_g(const Tensor& d_fake, GanLoss mode) {
  if (mode == GanLoss::Minimax) return mean(log_clamped(affine(d_fake, -1.0, 1.0), kLogClampEps));
  return affine(mean(log_clamped(d_fake, kLogClampEps)), -1.0, 0.0);
}

Tensor cycle_loss(const Tensor& x, const Tensor& reconstructed) {
  return abs_mean(x, reconstructed);
}

Tensor skeleton_mask(const Tensor& rgb_batch, double threshold) {
  Tensor plane = skeleton_plane(rgb_batch, threshold);
  for (double& v : plane.data()) v = v > 0.0 ? 1.0 : 0.0;
  return plane;
}

Tensor ske_loss(const Tensor& target_mask, const Tensor& reconstructed, double threshold,
                SkeGrad mode) {
  if (reconstructed.ndim() != 4 || reconstructed.dim(1) != 3) {
    throw Error(ErrorKind::ShapeMismatch, "ske_loss expects [N,3,H,W] reconstruction");
  }
  const Shape expected{reconstructed.dim(0), 1, reconstructed.dim(2), reconstructed.dim(3)};
  if (target_mask.shape() != expected) {
    throw Error(ErrorKind::ShapeMismatch, "ske_loss: mask " + shape_string(target_mask.shape()) +
                                              ", expected " + shape_string(expected));
  }
  const Tensor source = mode == SkeGrad::None ? reconstructed.detach() : reconstructed;
  const Tensor rec_mask = skeleton_mask(source, threshold);
  // gray in [0,1] is 0.5 * mix + 0.5 for [-1,1] inputs, so ink = 0.5 - 0.5 * mix
  const Tensor ink = affine(channel_mix(source, kLuma), -0.5, 0.5);
  return abs_mean(target_mask, mul(rec_mask, ink));
}

Tensor ske_loss(const RasterImage& original, const Tensor& reconstructed, double threshold,
                SkeGrad mode) {
  const BinaryGrid s = ske(original, threshold);
  std::vector<double> mask(s.bits().begin(), s.bits().end());
  Tensor target(Shape{1, 1, static_cast<std::size_t>(s.height()), static_cast<std::size_t>(s.width())},
                std::move(mask));
  const Tensor rec =
      reconstructed.ndim() == 3
          ? reshape(reconstructed, Shape{1, reconstructed.dim(0), reconstructed.dim(1),
                                         reconstructed.dim(2)})
          : reconstructed;
  return ske_loss(target, rec, threshold, mode);
}

LossBreakdown total_loss(double adv_x, double adv_y, double cyc, double ske, const LossWeights& w) {
  LossBreakdown b{adv_x, adv_y, cyc, ske, 0.0};
  b.total = adv_x + adv_y + w.cyc * cyc + w.ske * ske;
  return b;
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf.data(), end);
}

std::string format_log_row(std::uint64_t step, const LossBreakdown& b) {
  return std::to_string(step) + "," + format_double(b.adv_x) + "," + format_double(b.adv_y) + "," +
         format_double(b.cyc) + "," + format_double(b.ske) + "," + format_double(b.total);
}

}  // namespace sgce
