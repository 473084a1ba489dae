#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sgce/container.hpp"
#include "sgce/data.hpp"
#include "sgce/image.hpp"
#include "sgce/losses.hpp"
#include "sgce/models.hpp"
#include "sgce/optim.hpp"

namespace sgce {

struct TrainConfig {
  std::uint64_t epochs = 1;
  std::uint64_t batch_size = 4;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  LossWeights weights;
  ModelSpec model = ModelSpec::desk();
  std::uint64_t seed = 0;
  double threshold = kDefaultThreshold;
  /// false: constant -1 fourth channel and no skeleton term (plain CycleGAN).
  bool sgce_enabled = true;
  std::uint64_t checkpoint_every = 0;  ///< 0 = only at the end
  std::uint64_t max_steps = 0;         ///< 0 = epochs * steps per epoch
  GanLoss gan_loss = GanLoss::NonSaturating;
  SkeGrad ske_grad = SkeGrad::MaskedIntensity;

  /// Throws InvalidConfig / InvalidSpec.
  void validate() const;
  /// Skeleton weight actually applied (0 when SGCE is disabled).
  double effective_ske_weight() const noexcept { return sgce_enabled ? weights.ske : 0.0; }
  bool operator==(const TrainConfig&) const = default;
};

enum class Direction { XtoY, YtoX };

/// Everything a training run mutates. G_y maps the source font x to the
/// target font y, G_x maps back; D_x / D_y judge the two domains.
struct TrainingState {
  TrainConfig config;
  Generator gen_x;
  Generator gen_y;
  Discriminator disc_x;
  Discriminator disc_y;
  AdamState opt_gen;   ///< over gen_x then gen_y parameters
  AdamState opt_disc;  ///< over disc_x then disc_y parameters
  std::uint64_t step = 0;
  std::mt19937_64 rng;

  /// Fresh networks initialised from config.seed.
  explicit TrainingState(const TrainConfig& cfg);

  std::vector<Tensor> generator_parameters() const;
  std::vector<Tensor> discriminator_parameters() const;
};

/// Input tensor for a generator: SGCE expansion, or the constant -1 channel
/// when SGCE is disabled.
Tensor generator_input(const TrainConfig& cfg, std::span<const RasterImage> images);
Tensor generator_input(const TrainConfig& cfg, const Tensor& rgb_batch);

/// [N,3,H,W] in [-1,1].
Tensor images_to_batch(std::span<const RasterImage> images);

/// One step: discriminators first, then both generators on the full
/// objective. Throws NonFiniteLoss (message carries the loss values).
LossBreakdown train_step(TrainingState& state, std::span<const RasterImage> batch_x,
                         std::span<const RasterImage> batch_y);

struct TrainOptions {
  std::filesystem::path log_path;         ///< CSV log; appended when resuming
  std::filesystem::path checkpoint_path;  ///< written on schedule and at the end
  std::function<void(std::uint64_t step, const LossBreakdown&)> on_step;
};

std::uint64_t steps_per_epoch(const TrainConfig& cfg, const GlyphDataset& data);
std::uint64_t total_steps(const TrainConfig& cfg, const GlyphDataset& data);

/// Runs (or continues, when state.step > 0) training until total_steps.
void train(TrainingState& state, const GlyphDataset& data, const TrainOptions& options = {});

Container to_checkpoint(const TrainingState& state);
TrainingState from_checkpoint(const Container& c);
TrainConfig config_from_checkpoint(const Container& c);

/// Eval-mode translation of each image; outputs are RGB in [0,1].
std::vector<RasterImage> generate(TrainingState& state, std::span<const RasterImage> images,
                                  Direction direction);

struct DiversityReport {
  double score = 0.0;  ///< clamped ratio in [0,1]
  double ratio = 0.0;  ///< unclamped generated / real mean pairwise distance
  double generated_mean_distance = 0.0;
  double real_mean_distance = 0.0;
  /// Groups of outputs linked by pairwise distance < 0.01, largest first.
  std::vector<std::vector<std::size_t>> duplicate_clusters;
};

inline constexpr double kDuplicateDistance = 0.01;

/// Mean pairwise mean-absolute distance between the generated images divided by
/// the same quantity over the real reference set. Values near 0 flag collapse.
DiversityReport diversity_diagnostic(std::span<const RasterImage> generated,
                                     std::span<const RasterImage> real);

/// Mean |a - b| over all unordered pairs.
double mean_pairwise_distance(std::span<const RasterImage> images);

}  // namespace sgce
