#include "sgce/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "sgce/error.hpp"

namespace sgce {

namespace {
thread_local bool g_grad_enabled = true;
thread_local int g_kink_monitors = 0;
thread_local double g_kink_min = std::numeric_limits<double>::infinity();
}

std::size_t shape_numel(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_mode_enabled() noexcept { return g_grad_enabled; }

KinkMonitor::KinkMonitor() {
  if (g_kink_monitors++ == 0) g_kink_min = std::numeric_limits<double>::infinity();
}
KinkMonitor::~KinkMonitor() { --g_kink_monitors; }
double KinkMonitor::min_abs() const noexcept { return g_kink_min; }

void detail::note_kink_inputs(std::span<const double> values) noexcept {
  if (g_kink_monitors == 0) return;
  for (double v : values) g_kink_min = std::min(g_kink_min, std::abs(v));
}

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) { node_->shape = {0}; }

Tensor::Tensor(Shape shape, double fill, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  node_->value.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
  if (requires_grad) node_->grad.assign(node_->value.size(), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (values.size() != shape_numel(shape)) {
    throw Error(ErrorKind::ShapeMismatch,
                "value count " + std::to_string(values.size()) + " vs shape " + shape_string(shape));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
  if (requires_grad) node_->grad.assign(node_->value.size(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1) throw Error(ErrorKind::ShapeMismatch, "item() on tensor " + shape_string(shape()));
  return node_->value[0];
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                           std::function<void(detail::Node&)> backward) {
  Tensor out(std::move(shape), std::move(values), false);
  const bool track =
      g_grad_enabled &&
      std::any_of(parents.begin(), parents.end(), [](const Tensor& p) { return p.requires_grad(); });
  if (track) {
    auto& node = *out.node_;
    node.requires_grad = true;
    node.is_leaf = false;
    node.parents.reserve(parents.size());
    for (auto& p : parents) node.parents.push_back(p.node_);
    node.backward = std::move(backward);
  }
  return out;
}

void Tensor::backward() {
  if (numel() != 1) {
    throw Error(ErrorKind::ShapeMismatch, "backward() requires a single-element tensor");
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order) {
    if (!n->is_leaf) {
      n->grad.assign(n->value.size(), 0.0);
    } else if (n->grad.size() != n->value.size()) {
      n->grad.assign(n->value.size(), 0.0);
    }
  }
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf && (*it)->backward) (*it)->backward(**it);
  }
}

void Tensor::zero_grad() {
  if (node_->requires_grad) node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->value, false); }

Tensor Tensor::clone() const { return Tensor(node_->shape, node_->value, node_->requires_grad); }

}  // namespace sgce
