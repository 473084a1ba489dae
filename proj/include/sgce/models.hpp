#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sgce/tensor.hpp"

namespace sgce {

/// Architecture hyperparameters shared by the generator and discriminator.
///
/// Fixed layer conventions (not configurable):
///   generator     stem conv k7/s1/p3, two down convs k3/s2/p1, residual convs
///                 k3/s1/p1, two transposed convs k4/s2/p1, output conv k7/s1/p3
///   discriminator six hidden convs, k4/s2/p1 while the feature map is at least
///                 8 pixels wide and k3/s1/p1 after that; head convs k3/s1/p1
struct ModelSpec {
  int image_size = 32;
  int base_width = 8;
  int n_residual_blocks = 2;
  int generator_in_channels = 4;
  int discriminator_in_channels = 3;
  bool paper_scale = false;

  /// 128x128 input, width 64, nine residual blocks.
  static ModelSpec paper();
  /// 32x32 input, width 8, two residual blocks.
  static ModelSpec desk();

  /// Throws InvalidSpec.
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

using NamedTensor = std::pair<std::string, Tensor>;

struct Conv {
  Tensor weight;  // [out,in,k,k], or [in,out,k,k] when transposed
  Tensor bias;
  int stride = 1;
  int pad = 0;
  bool transposed = false;

  Conv() = default;
  Conv(std::size_t in, std::size_t out, std::size_t kernel, int stride, int pad,
       bool transposed = false);
  Tensor operator()(const Tensor& x) const;
  std::size_t in_channels() const { return weight.dim(transposed ? 0 : 1); }
  std::size_t out_channels() const { return weight.dim(transposed ? 1 : 0); }
  std::size_t kernel() const { return weight.dim(2); }
};

/// Common storage for a stack of convolutions and batch norms.
class Network {
 public:
  Network() = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;
  virtual ~Network() = default;

  virtual Tensor forward(const Tensor& x, NormMode mode) = 0;

  /// Trainable tensors in a fixed order.
  std::vector<Tensor> parameters() const;
  /// Parameters plus batch-norm running statistics, keyed by stable names.
  /// Returned tensors for running statistics are copies; use `load_state`
  /// to write them back.
  std::vector<NamedTensor> state() const;
  /// Copies values from `entries` (matched by name, with `prefix`) into this
  /// network. Throws MalformedContainer on missing names or shape mismatches.
  void load_state(const std::vector<NamedTensor>& entries, const std::string& prefix = "");

  std::size_t parameter_count() const;
  std::size_t conv_count() const noexcept { return convs_.size(); }
  std::size_t norm_count() const noexcept { return norms_.size(); }
  const std::vector<Conv>& convs() const noexcept { return convs_; }
  const std::vector<BatchNorm>& norms() const noexcept { return norms_; }
  std::vector<Conv>& convs() noexcept { return convs_; }
  std::vector<BatchNorm>& norms() noexcept { return norms_; }

  void zero_grad();

 protected:
  std::vector<Conv> convs_;
  std::vector<BatchNorm> norms_;
};

/// Encoder / residual trunk / decoder generator: [N,4,H,W] -> [N,3,H,W] in [-1,1].
class Generator : public Network {
 public:
  explicit Generator(const ModelSpec& spec);
  Tensor forward(const Tensor& x, NormMode mode) override;
  const ModelSpec& spec() const noexcept { return spec_; }

 private:
  ModelSpec spec_;
};

/// Patch discriminator: [N,3,H,W] -> [N,1,h,w] scores in (0,1). Eight convs.
class Discriminator : public Network {
 public:
  explicit Discriminator(const ModelSpec& spec);
  Tensor forward(const Tensor& x, NormMode mode) override;
  const ModelSpec& spec() const noexcept { return spec_; }

 private:
  ModelSpec spec_;
};

Generator build_generator(const ModelSpec& spec);
Discriminator build_discriminator(const ModelSpec& spec);

/// Conv weights ~ N(0, 0.02), biases 0, batch-norm gamma ~ N(1, 0.02),
/// beta 0, running stats reset. Deterministic in `seed`.
void init_params(Network& net, std::uint64_t seed);

}  // namespace sgce
