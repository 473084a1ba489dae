#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sgce {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward;
};

}  // namespace detail

/// Handle to a node of a reverse-mode computation graph. Copies share the
/// node; use `clone()` or `detach()` for an independent value.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor(Shape{1}, std::vector<double>{v}, requires_grad);
  }

  const Shape& shape() const noexcept { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t ndim() const noexcept { return node_->shape.size(); }
  std::size_t numel() const noexcept { return node_->value.size(); }

  std::span<double> data() noexcept { return node_->value; }
  std::span<const double> data() const noexcept { return node_->value; }
  /// Empty until a backward pass reaches this tensor (leaves: until created
  /// with requires_grad).
  std::span<double> grad() noexcept { return node_->grad; }
  std::span<const double> grad() const noexcept { return node_->grad; }

  double item() const;
  bool requires_grad() const noexcept { return node_->requires_grad; }
  bool is_leaf() const noexcept { return node_->is_leaf; }

  /// Seeds d(this)/d(this) = 1 and propagates; this must hold one element.
  /// Leaf gradients accumulate across calls until `zero_grad`.
  void backward();
  void zero_grad();

  /// Same values, no history, no grad.
  Tensor detach() const;
  /// Same values and requires_grad flag, fresh leaf.
  Tensor clone() const;

  detail::Node& node() noexcept { return *node_; }
  const detail::Node& node() const noexcept { return *node_; }
  const std::shared_ptr<detail::Node>& node_ptr() const noexcept { return node_; }

  /// Builds a non-leaf result; history is recorded only when grad mode is on
  /// and some parent requires grad.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> parents,
                            std::function<void(detail::Node&)> backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled() noexcept;

/// While alive, records the smallest |input| reaching relu / leaky_relu on
/// this thread. Gradient checks use it to reject points sitting on a kink.
class KinkMonitor {
 public:
  KinkMonitor();
  ~KinkMonitor();
  KinkMonitor(const KinkMonitor&) = delete;
  KinkMonitor& operator=(const KinkMonitor&) = delete;
  double min_abs() const noexcept;
};

namespace detail {
void note_kink_inputs(std::span<const double> values) noexcept;
}

// ---------------------------------------------------------------------------
// Operators. Shapes must match exactly except where noted; no broadcasting.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// scale * a + shift
Tensor affine(const Tensor& a, double scale, double shift);
Tensor mean(const Tensor& a);
/// mean(|a - b|); backward uses sign(0) = 0.
Tensor abs_mean(const Tensor& a, const Tensor& b);
/// log(clamp(a, eps, 1 - eps)); zero gradient where clamped.
Tensor log_clamped(const Tensor& a, double eps);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// Same values under a new shape with equal element count.
Tensor reshape(const Tensor& x, Shape shape);
/// NCHW + NCHW -> N(C1+C2)HW
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// NCHW -> N1HW, weighted sum over channels with constant weights.
Tensor channel_mix(const Tensor& x, std::span<const double> weights);

/// input [N,C,H,W], weight [F,C,k,k], bias [F]; cross-correlation, zero padding.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int pad);
/// input [N,C,H,W], weight [C,F,k,k], bias [F]; adjoint of conv2d w.r.t. its input
/// plus bias. Output size (H-1)*stride - 2*pad + k.
Tensor conv2d_transpose(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                        int pad);

enum class NormMode { Train, Eval };

/// Per-channel batch normalisation parameters and running statistics.
struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.9;  ///< weight kept on the old running value
  double eps = 1e-5;

  explicit BatchNorm(std::size_t channels = 0);
  std::size_t channels() const noexcept { return running_mean.size(); }
};

/// Train mode normalises with batch statistics (biased variance) and updates
/// the running statistics (unbiased variance); eval mode uses running stats.
Tensor batch_norm(const Tensor& input, BatchNorm& bn, NormMode mode);

}  // namespace sgce
