#include "sgce/models.hpp"

#include <algorithm>
#include <map>
#include <random>

#include "sgce/error.hpp"

namespace sgce {

namespace {

constexpr double kLeakySlope = 0.2;
constexpr int kHiddenDiscriminatorLayers = 6;

}  // namespace

ModelSpec ModelSpec::paper() {
  ModelSpec s;
  s.image_size = 128;
  s.base_width = 64;
  s.n_residual_blocks = 9;
  s.paper_scale = true;
  return s;
}

ModelSpec ModelSpec::desk() { return ModelSpec{}; }

void ModelSpec::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorKind::InvalidSpec, why); };
  if (base_width < 4) fail("base width must be >= 4");
  if (n_residual_blocks < 1) fail("at least one residual block required");
  if (image_size < 8 || image_size % 4 != 0) fail("image size must be a multiple of 4 and >= 8");
  if (generator_in_channels < 1 || discriminator_in_channels < 1) fail("channel counts must be >= 1");
  if (paper_scale && (image_size != 128 || n_residual_blocks != 9 || generator_in_channels != 4)) {
    fail("paper scale requires 128x128 input, 9 residual blocks and 4 generator input channels");
  }
}

Conv::Conv(std::size_t in, std::size_t out, std::size_t kernel, int stride_, int pad_,
           bool transposed_)
    : weight(transposed_ ? Shape{in, out, kernel, kernel} : Shape{out, in, kernel, kernel}, 0.0,
             true),
      bias(Shape{out}, 0.0, true),
      stride(stride_),
      pad(pad_),
      transposed(transposed_) {}

Tensor Conv::operator()(const Tensor& x) const {
  return transposed ? conv2d_transpose(x, weight, bias, stride, pad)
                    : conv2d(x, weight, bias, stride, pad);
}

std::vector<Tensor> Network::parameters() const {
  std::vector<Tensor> out;
  for (const auto& c : convs_) {
    out.push_back(c.weight);
    out.push_back(c.bias);
  }
  for (const auto& n : norms_) {
    out.push_back(n.gamma);
    out.push_back(n.beta);
  }
  return out;
}

std::vector<NamedTensor> Network::state() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    out.emplace_back("conv" + std::to_string(i) + ".weight", convs_[i].weight);
    out.emplace_back("conv" + std::to_string(i) + ".bias", convs_[i].bias);
  }
  for (std::size_t i = 0; i < norms_.size(); ++i) {
    const auto& n = norms_[i];
    const std::string base = "bn" + std::to_string(i);
    out.emplace_back(base + ".gamma", n.gamma);
    out.emplace_back(base + ".beta", n.beta);
    out.emplace_back(base + ".running_mean", Tensor(Shape{n.channels()}, n.running_mean));
    out.emplace_back(base + ".running_var", Tensor(Shape{n.channels()}, n.running_var));
  }
  return out;
}

void Network::load_state(const std::vector<NamedTensor>& entries, const std::string& prefix) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : entries) by_name[name] = &t;
  auto fetch = [&](const std::string& name, const Shape& shape) -> std::span<const double> {
    auto it = by_name.find(prefix + name);
    if (it == by_name.end()) throw Error(ErrorKind::MalformedContainer, "missing tensor " + prefix + name);
    if (it->second->shape() != shape) {
      throw Error(ErrorKind::MalformedContainer, "shape mismatch for " + prefix + name + ": " +
                                                     shape_string(it->second->shape()) + " vs " +
                                                     shape_string(shape));
    }
    return it->second->data();
  };
  auto copy_into = [](std::span<const double> src, std::span<double> dst) {
    std::copy(src.begin(), src.end(), dst.begin());
  };
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    auto& c = convs_[i];
    copy_into(fetch("conv" + std::to_string(i) + ".weight", c.weight.shape()), c.weight.data());
    copy_into(fetch("conv" + std::to_string(i) + ".bias", c.bias.shape()), c.bias.data());
  }
  for (std::size_t i = 0; i < norms_.size(); ++i) {
    auto& n = norms_[i];
    const std::string base = "bn" + std::to_string(i);
    const Shape shape{n.channels()};
    copy_into(fetch(base + ".gamma", shape), n.gamma.data());
    copy_into(fetch(base + ".beta", shape), n.beta.data());
    copy_into(fetch(base + ".running_mean", shape), n.running_mean);
    copy_into(fetch(base + ".running_var", shape), n.running_var);
  }
}

std::size_t Network::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.numel();
  return total;
}

void Network::zero_grad() {
  for (auto& p : parameters()) p.zero_grad();
}

Generator::Generator(const ModelSpec& spec) : spec_(spec) {
  spec.validate();
  const auto w = static_cast<std::size_t>(spec.base_width);
  const auto in = static_cast<std::size_t>(spec.generator_in_channels);

  convs_.emplace_back(in, w, 7, 1, 3);
  norms_.emplace_back(w);
  convs_.emplace_back(w, 2 * w, 3, 2, 1);
  norms_.emplace_back(2 * w);
  convs_.emplace_back(2 * w, 4 * w, 3, 2, 1);
  norms_.emplace_back(4 * w);
  for (int b = 0; b < spec.n_residual_blocks; ++b) {
    for (int j = 0; j < 2; ++j) {
      convs_.emplace_back(4 * w, 4 * w, 3, 1, 1);
      norms_.emplace_back(4 * w);
    }
  }
  convs_.emplace_back(4 * w, 2 * w, 4, 2, 1, true);
  norms_.emplace_back(2 * w);
  convs_.emplace_back(2 * w, w, 4, 2, 1, true);
  norms_.emplace_back(w);
  convs_.emplace_back(w, 3, 7, 1, 3);
}

Tensor Generator::forward(const Tensor& x, NormMode mode) {
  if (x.ndim() != 4 || x.dim(1) != static_cast<std::size_t>(spec_.generator_in_channels)) {
    throw Error(ErrorKind::ShapeMismatch, "generator input " + shape_string(x.shape()));
  }
  if (x.dim(2) % 4 != 0 || x.dim(3) % 4 != 0) {
    throw Error(ErrorKind::ShapeMismatch, "generator input size must be a multiple of 4");
  }
  std::size_t c = 0, n = 0;
  auto block = [&](const Tensor& t) { return relu(batch_norm(convs_[c++](t), norms_[n++], mode)); };

  Tensor h = block(x);
  h = block(h);
  h = block(h);
  for (int b = 0; b < spec_.n_residual_blocks; ++b) {
    Tensor r = block(h);
    r = batch_norm(convs_[c++](r), norms_[n++], mode);
    h = add(h, r);
  }
  h = block(h);
  h = block(h);
  return tanh(convs_[c++](h));
}

Discriminator::Discriminator(const ModelSpec& spec) : spec_(spec) {
  spec.validate();
  const auto w = static_cast<std::size_t>(spec.base_width);
  std::size_t in = static_cast<std::size_t>(spec.discriminator_in_channels);
  int size = spec.image_size;
  for (int i = 0; i < kHiddenDiscriminatorLayers; ++i) {
    const std::size_t out = w * std::min<std::size_t>(std::size_t{1} << i, 8);
    if (size >= 8) {
      convs_.emplace_back(in, out, 4, 2, 1);
      size /= 2;
    } else {
      convs_.emplace_back(in, out, 3, 1, 1);
    }
    if (i > 0) norms_.emplace_back(out);
    in = out;
  }
  convs_.emplace_back(in, in, 3, 1, 1);
  norms_.emplace_back(in);
  convs_.emplace_back(in, 1, 3, 1, 1);
}

Tensor Discriminator::forward(const Tensor& x, NormMode mode) {
  if (x.ndim() != 4 || x.dim(1) != static_cast<std::size_t>(spec_.discriminator_in_channels)) {
    throw Error(ErrorKind::ShapeMismatch, "discriminator input " + shape_string(x.shape()));
  }
  Tensor h = leaky_relu(convs_[0](x), kLeakySlope);
  std::size_t n = 0;
  for (std::size_t c = 1; c + 1 < convs_.size(); ++c) {
    h = leaky_relu(batch_norm(convs_[c](h), norms_[n++], mode), kLeakySlope);
  }
  return sigmoid(convs_.back()(h));
}

Generator build_generator(const ModelSpec& spec) { return Generator(spec); }
Discriminator build_discriminator(const ModelSpec& spec) { return Discriminator(spec); }

void init_params(Network& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> weight_dist(0.0, 0.02);
  std::normal_distribution<double> gamma_dist(1.0, 0.02);
  for (auto& c : net.convs()) {
    for (double& v : c.weight.data()) v = weight_dist(rng);
    std::fill(c.bias.data().begin(), c.bias.data().end(), 0.0);
  }
  for (auto& n : net.norms()) {
    for (double& v : n.gamma.data()) v = gamma_dist(rng);
    std::fill(n.beta.data().begin(), n.beta.data().end(), 0.0);
    std::fill(n.running_mean.begin(), n.running_mean.end(), 0.0);
    std::fill(n.running_var.begin(), n.running_var.end(), 1.0);
  }
}

}  // namespace sgce
