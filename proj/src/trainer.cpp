#include "sgce/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "sgce/error.hpp"
#include "sgce/expand.hpp"
#include "sgce/skeleton.hpp"

namespace sgce {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorKind::InvalidConfig, why); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch size must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("adam betas must lie in [0,1)");
  if (!(weights.cyc >= 0.0) || !(weights.ske >= 0.0)) fail("loss weights must be >= 0");
  if (!(threshold > 0.0 && threshold < 1.0)) fail("threshold must lie in (0,1)");
  model.validate();
}

TrainingState::TrainingState(const TrainConfig& cfg)
    : config(cfg),
      gen_x((cfg.validate(), cfg.model)),
      gen_y(cfg.model),
      disc_x(cfg.model),
      disc_y(cfg.model),
      rng(cfg.seed) {
  init_params(gen_x, rng());
  init_params(gen_y, rng());
  init_params(disc_x, rng());
  init_params(disc_y, rng());
  const AdamConfig adam{cfg.learning_rate, cfg.beta1, cfg.beta2, 1e-8};
  opt_gen = AdamState(adam, generator_parameters());
  opt_disc = AdamState(adam, discriminator_parameters());
}

std::vector<Tensor> TrainingState::generator_parameters() const {
  auto p = gen_x.parameters();
  auto q = gen_y.parameters();
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

std::vector<Tensor> TrainingState::discriminator_parameters() const {
  auto p = disc_x.parameters();
  auto q = disc_y.parameters();
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

Tensor images_to_batch(std::span<const RasterImage> images) {
  std::vector<Tensor> items;
  items.reserve(images.size());
  for (const auto& img : images) {
    if (img.channels() != 3) throw Error(ErrorKind::ChannelMismatch, "training images must be RGB");
    items.push_back(image_to_tensor(img));
  }
  return stack(items);
}

Tensor generator_input(const TrainConfig& cfg, std::span<const RasterImage> images) {
  if (!cfg.sgce_enabled) return pad_constant_channel(images_to_batch(images));
  std::vector<Tensor> items;
  items.reserve(images.size());
  for (const auto& img : images) items.push_back(to_model_input(expand(img, cfg.threshold)));
  return stack(items);
}

Tensor generator_input(const TrainConfig& cfg, const Tensor& rgb_batch) {
  return cfg.sgce_enabled ? expand_batch(rgb_batch, cfg.threshold) : pad_constant_channel(rgb_batch);
}

namespace {

Tensor masks_for(std::span<const RasterImage> images, double threshold) {
  std::vector<Tensor> items;
  for (const auto& img : images) {
    const BinaryGrid s = ske(img, threshold);
    items.emplace_back(Shape{1, static_cast<std::size_t>(s.height()), static_cast<std::size_t>(s.width())},
                       std::vector<double>(s.bits().begin(), s.bits().end()));
  }
  return stack(items);
}

void check_finite(const TrainingState& st, const char* phase, const LossBreakdown& b, double d_loss) {
  if (b.all_finite() && std::isfinite(d_loss)) return;
  std::ostringstream msg;
  msg << phase << " at step " << st.step << ": adv_x=" << b.adv_x << " adv_y=" << b.adv_y
      << " cyc=" << b.cyc << " ske=" << b.ske << " total=" << b.total << " d_loss=" << d_loss;
  throw Error(ErrorKind::NonFiniteLoss, msg.str());
}

void check_batch(const TrainingState& st, std::span<const RasterImage> xs, std::span<const RasterImage> ys) {
  if (xs.empty() || xs.size() != ys.size()) {
    throw Error(ErrorKind::ShapeMismatch, "batches must be non-empty and of equal size");
  }
  const int size = st.config.model.image_size;
  for (auto batch : {xs, ys})
    for (const auto& img : batch)
      if (img.width() != size || img.height() != size || img.channels() != 3) {
        throw Error(ErrorKind::ShapeMismatch, "batch image is not " + std::to_string(size) + "x" +
                                                  std::to_string(size) + " RGB");
      }
}

}  // namespace

LossBreakdown train_step(TrainingState& st, std::span<const RasterImage> batch_x,
                         std::span<const RasterImage> batch_y) {
  check_batch(st, batch_x, batch_y);
  const TrainConfig& cfg = st.config;
  const Tensor x = images_to_batch(batch_x);
  const Tensor y = images_to_batch(batch_y);

  // x -> G_y -> fake_y -> G_x -> rec_x, and symmetrically from y
  const Tensor fake_y = st.gen_y.forward(generator_input(cfg, batch_x), NormMode::Train);
  const Tensor rec_x = st.gen_x.forward(generator_input(cfg, fake_y), NormMode::Train);
  const Tensor fake_x = st.gen_x.forward(generator_input(cfg, batch_y), NormMode::Train);
  const Tensor rec_y = st.gen_y.forward(generator_input(cfg, fake_x), NormMode::Train);

  // discriminators
  st.disc_x.zero_grad();
  st.disc_y.zero_grad();
  // separate statements: each forward updates running statistics, so order matters
  const Tensor dy_real = st.disc_y.forward(y, NormMode::Train);
  const Tensor dy_fake = st.disc_y.forward(fake_y.detach(), NormMode::Train);
  const Tensor dx_real = st.disc_x.forward(x, NormMode::Train);
  const Tensor dx_fake = st.disc_x.forward(fake_x.detach(), NormMode::Train);
  Tensor d_loss = add(adv_loss_d(dy_real, dy_fake), adv_loss_d(dx_real, dx_fake));
  check_finite(st, "discriminator", LossBreakdown{}, d_loss.item());
  d_loss.backward();
  auto d_params = st.discriminator_parameters();
  adam_step(d_params, st.opt_disc);

  // generators
  st.gen_x.zero_grad();
  st.gen_y.zero_grad();
  const Tensor adv_y = adv_loss_g(st.disc_y.forward(fake_y, NormMode::Train), cfg.gan_loss);
  const Tensor adv_x = adv_loss_g(st.disc_x.forward(fake_x, NormMode::Train), cfg.gan_loss);
  const Tensor cyc = add(cycle_loss(x, rec_x), cycle_loss(y, rec_y));
  Tensor objective = add(add(adv_x, adv_y), affine(cyc, cfg.weights.cyc, 0.0));

  const double ske_weight = cfg.effective_ske_weight();
  const bool ske_in_graph = ske_weight > 0.0 && cfg.ske_grad == SkeGrad::MaskedIntensity;
  double ske_value = 0.0;
  {
    const SkeGrad mode = ske_in_graph ? SkeGrad::MaskedIntensity : SkeGrad::None;
    const Tensor ske_term = add(ske_loss(masks_for(batch_x, cfg.threshold), rec_x, cfg.threshold, mode),
                                ske_loss(masks_for(batch_y, cfg.threshold), rec_y, cfg.threshold, mode));
    ske_value = ske_term.item();
    if (ske_in_graph) objective = add(objective, affine(ske_term, ske_weight, 0.0));
  }

  const LossBreakdown breakdown =
      total_loss(adv_x.item(), adv_y.item(), cyc.item(), ske_value, LossWeights{cfg.weights.cyc, ske_weight});
  check_finite(st, "generator", breakdown, d_loss.item());
  objective.backward();
  auto g_params = st.generator_parameters();
  adam_step(g_params, st.opt_gen);
  ++st.step;
  return breakdown;
}

std::uint64_t steps_per_epoch(const TrainConfig& cfg, const GlyphDataset& data) {
  const std::size_t n = std::min(data.x_train.size(), data.y_train.size());
  if (n < cfg.batch_size) {
    throw Error(ErrorKind::DataEmpty, "fewer training images (" + std::to_string(n) +
                                          ") than the batch size");
  }
  return n / cfg.batch_size;
}

std::uint64_t total_steps(const TrainConfig& cfg, const GlyphDataset& data) {
  const std::uint64_t full = cfg.epochs * steps_per_epoch(cfg, data);
  return cfg.max_steps > 0 ? std::min(full, cfg.max_steps) : full;
}

void train(TrainingState& st, const GlyphDataset& data, const TrainOptions& options) {
  const TrainConfig& cfg = st.config;
  const std::uint64_t per_epoch = steps_per_epoch(cfg, data);
  const std::uint64_t last = total_steps(cfg, data);

  std::ofstream log;
  if (!options.log_path.empty()) {
    const bool fresh = st.step == 0 || !fs::exists(options.log_path);
    log.open(options.log_path, fresh ? std::ios::binary | std::ios::trunc : std::ios::binary | std::ios::app);
    if (!log) throw Error(ErrorKind::UnreadableFile, "cannot write " + options.log_path.string());
    if (fresh) log << kLossLogHeader << '\n';
  }
  auto save = [&] {
    if (!options.checkpoint_path.empty()) save_container(options.checkpoint_path, to_checkpoint(st));
  };

  std::vector<RasterImage> bx, by;
  std::uint64_t cached_epoch = ~std::uint64_t{0};
  std::vector<std::size_t> order_x, order_y;
  while (st.step < last) {
    const std::uint64_t epoch = st.step / per_epoch;
    const std::uint64_t k = st.step % per_epoch;
    if (epoch != cached_epoch) {
      order_x = epoch_order(data.x_train.size(), cfg.seed, epoch, 0);
      order_y = epoch_order(data.y_train.size(), cfg.seed, epoch, 1);
      cached_epoch = epoch;
    }
    bx.clear();
    by.clear();
    for (std::uint64_t i = k * cfg.batch_size; i < (k + 1) * cfg.batch_size; ++i) {
      bx.push_back(data.x_train[order_x[i]]);
      by.push_back(data.y_train[order_y[i]]);
    }
    const LossBreakdown b = train_step(st, bx, by);
    if (log.is_open()) {
      log << format_log_row(st.step, b) << '\n';
      log.flush();
    }
    if (options.on_step) options.on_step(st.step, b);
    if (cfg.checkpoint_every > 0 && st.step % cfg.checkpoint_every == 0 && st.step < last) save();
  }
  save();
}

namespace {

void put_u64(Container& c, const std::string& name, std::uint64_t v) {
  const std::uint64_t values[1] = {v};
  c.add(ContainerEntry::from_u64(name, values));
}

void put_f64(Container& c, const std::string& name, double v) {
  c.add(ContainerEntry::from_tensor(name, Tensor::scalar(v)));
}

std::uint64_t get_u64(const Container& c, const std::string& name) {
  const auto v = c.at(name).to_u64();
  if (v.size() != 1) throw Error(ErrorKind::MalformedContainer, name + " must hold one value");
  return v[0];
}

double get_f64(const Container& c, const std::string& name) {
  const Tensor t = c.at(name).to_tensor();
  if (t.numel() != 1) throw Error(ErrorKind::MalformedContainer, name + " must hold one value");
  return t.item();
}

void put_network(Container& c, const std::string& prefix, const Network& net) {
  for (const auto& [name, t] : net.state()) c.add(ContainerEntry::from_tensor(prefix + name, t));
}

void load_network(const Container& c, const std::string& prefix, Network& net) {
  std::vector<NamedTensor> entries;
  for (const auto& e : c.entries)
    if (e.name.rfind(prefix, 0) == 0) entries.emplace_back(e.name, e.to_tensor());
  net.load_state(entries, prefix);
}

void put_adam(Container& c, const std::string& prefix, const AdamState& s) {
  put_u64(c, prefix + "t", s.t);
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    c.add(ContainerEntry::from_tensor(prefix + "m" + std::to_string(i), Tensor(Shape{s.m[i].size()}, s.m[i])));
    c.add(ContainerEntry::from_tensor(prefix + "v" + std::to_string(i), Tensor(Shape{s.v[i].size()}, s.v[i])));
  }
}

void load_adam(const Container& c, const std::string& prefix, AdamState& s) {
  s.t = get_u64(c, prefix + "t");
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    const Tensor m = c.at(prefix + "m" + std::to_string(i)).to_tensor();
    const Tensor v = c.at(prefix + "v" + std::to_string(i)).to_tensor();
    if (m.numel() != s.m[i].size() || v.numel() != s.v[i].size()) {
      throw Error(ErrorKind::MalformedContainer, "optimizer moment size mismatch in " + prefix);
    }
    std::copy(m.data().begin(), m.data().end(), s.m[i].begin());
    std::copy(v.data().begin(), v.data().end(), s.v[i].begin());
  }
}

}  // namespace

Container to_checkpoint(const TrainingState& st) {
  const TrainConfig& cfg = st.config;
  Container c;
  put_u64(c, "config/epochs", cfg.epochs);
  put_u64(c, "config/batch_size", cfg.batch_size);
  put_f64(c, "config/learning_rate", cfg.learning_rate);
  put_f64(c, "config/beta1", cfg.beta1);
  put_f64(c, "config/beta2", cfg.beta2);
  put_f64(c, "config/lambda_cyc", cfg.weights.cyc);
  put_f64(c, "config/lambda_ske", cfg.weights.ske);
  put_u64(c, "config/seed", cfg.seed);
  put_f64(c, "config/threshold", cfg.threshold);
  put_u64(c, "config/sgce_enabled", cfg.sgce_enabled ? 1 : 0);
  put_u64(c, "config/checkpoint_every", cfg.checkpoint_every);
  put_u64(c, "config/max_steps", cfg.max_steps);
  put_u64(c, "config/gan_loss", static_cast<std::uint64_t>(cfg.gan_loss));
  put_u64(c, "config/ske_grad", static_cast<std::uint64_t>(cfg.ske_grad));
  put_u64(c, "model/image_size", static_cast<std::uint64_t>(cfg.model.image_size));
  put_u64(c, "model/base_width", static_cast<std::uint64_t>(cfg.model.base_width));
  put_u64(c, "model/n_residual_blocks", static_cast<std::uint64_t>(cfg.model.n_residual_blocks));
  put_u64(c, "model/generator_in_channels", static_cast<std::uint64_t>(cfg.model.generator_in_channels));
  put_u64(c, "model/discriminator_in_channels",
          static_cast<std::uint64_t>(cfg.model.discriminator_in_channels));
  put_u64(c, "model/paper_scale", cfg.model.paper_scale ? 1 : 0);

  put_network(c, "gen_x/", st.gen_x);
  put_network(c, "gen_y/", st.gen_y);
  put_network(c, "disc_x/", st.disc_x);
  put_network(c, "disc_y/", st.disc_y);
  put_adam(c, "adam_gen/", st.opt_gen);
  put_adam(c, "adam_disc/", st.opt_disc);

  c.step = st.step;
  std::ostringstream rng_text;
  rng_text << st.rng;
  c.rng_state = rng_text.str();
  return c;
}

TrainConfig config_from_checkpoint(const Container& c) {
  TrainConfig cfg;
  cfg.epochs = get_u64(c, "config/epochs");
  cfg.batch_size = get_u64(c, "config/batch_size");
  cfg.learning_rate = get_f64(c, "config/learning_rate");
  cfg.beta1 = get_f64(c, "config/beta1");
  cfg.beta2 = get_f64(c, "config/beta2");
  cfg.weights.cyc = get_f64(c, "config/lambda_cyc");
  cfg.weights.ske = get_f64(c, "config/lambda_ske");
  cfg.seed = get_u64(c, "config/seed");
  cfg.threshold = get_f64(c, "config/threshold");
  cfg.sgce_enabled = get_u64(c, "config/sgce_enabled") != 0;
  cfg.checkpoint_every = get_u64(c, "config/checkpoint_every");
  cfg.max_steps = get_u64(c, "config/max_steps");
  const auto gan = get_u64(c, "config/gan_loss");
  const auto ske_grad = get_u64(c, "config/ske_grad");
  if (gan > 1 || ske_grad > 1) throw Error(ErrorKind::MalformedContainer, "unknown loss mode code");
  cfg.gan_loss = static_cast<GanLoss>(gan);
  cfg.ske_grad = static_cast<SkeGrad>(ske_grad);
  cfg.model.image_size = static_cast<int>(get_u64(c, "model/image_size"));
  cfg.model.base_width = static_cast<int>(get_u64(c, "model/base_width"));
  cfg.model.n_residual_blocks = static_cast<int>(get_u64(c, "model/n_residual_blocks"));
  cfg.model.generator_in_channels = static_cast<int>(get_u64(c, "model/generator_in_channels"));
  cfg.model.discriminator_in_channels = static_cast<int>(get_u64(c, "model/discriminator_in_channels"));
  cfg.model.paper_scale = get_u64(c, "model/paper_scale") != 0;
  return cfg;
}

TrainingState from_checkpoint(const Container& c) {
  TrainingState st(config_from_checkpoint(c));
  load_network(c, "gen_x/", st.gen_x);
  load_network(c, "gen_y/", st.gen_y);
  load_network(c, "disc_x/", st.disc_x);
  load_network(c, "disc_y/", st.disc_y);
  load_adam(c, "adam_gen/", st.opt_gen);
  load_adam(c, "adam_disc/", st.opt_disc);
  st.step = c.step;
  std::istringstream rng_text(c.rng_state);
  rng_text >> st.rng;
  if (!rng_text) throw Error(ErrorKind::MalformedContainer, "unreadable RNG state");
  return st;
}

std::vector<RasterImage> generate(TrainingState& st, std::span<const RasterImage> images,
                                  Direction direction) {
  NoGradGuard no_grad;
  Generator& g = direction == Direction::XtoY ? st.gen_y : st.gen_x;
  const int size = st.config.model.image_size;
  std::vector<RasterImage> out;
  out.reserve(images.size());
  for (const auto& img : images) {
    const RasterImage input =
        (img.width() == size && img.height() == size) ? img : resize(img, size, size);
    const RasterImage rgb = input.channels() == 3 ? input : gray_to_rgb(input);
    const Tensor result = g.forward(generator_input(st.config, std::span(&rgb, 1)), NormMode::Eval);
    out.push_back(tensor_to_image(result.data(), 3, size, size));
  }
  return out;
}

double mean_pairwise_distance(std::span<const RasterImage> images) {
  if (images.size() < 2) throw Error(ErrorKind::DataEmpty, "pairwise distance needs at least two images");
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < images.size(); ++i)
    for (std::size_t j = i + 1; j < images.size(); ++j) {
      const auto a = images[i].data();
      const auto b = images[j].data();
      if (a.size() != b.size()) throw Error(ErrorKind::DimensionMismatch, "images differ in shape");
      double d = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) d += std::abs(a[k] - b[k]);
      sum += d / static_cast<double>(a.size());
      ++pairs;
    }
  return sum / static_cast<double>(pairs);
}

DiversityReport diversity_diagnostic(std::span<const RasterImage> generated,
                                     std::span<const RasterImage> real) {
  DiversityReport r;
  r.generated_mean_distance = mean_pairwise_distance(generated);
  r.real_mean_distance = mean_pairwise_distance(real);
  if (r.real_mean_distance > 0.0) {
    r.ratio = r.generated_mean_distance / r.real_mean_distance;
  } else {
    r.ratio = r.generated_mean_distance > 0.0 ? 1.0 : 0.0;
  }
  r.score = std::clamp(r.ratio, 0.0, 1.0);

  // union-find over near-duplicate pairs
  std::vector<std::size_t> parent(generated.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (std::size_t i = 0; i < generated.size(); ++i)
    for (std::size_t j = i + 1; j < generated.size(); ++j) {
      const auto a = generated[i].data();
      const auto b = generated[j].data();
      double d = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) d += std::abs(a[k] - b[k]);
      if (d / static_cast<double>(a.size()) < kDuplicateDistance) parent[find(j)] = find(i);
    }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < generated.size(); ++i) groups[find(i)].push_back(i);
  for (auto& [root, members] : groups)
    if (members.size() > 1) r.duplicate_clusters.push_back(std::move(members));
  std::stable_sort(r.duplicate_clusters.begin(), r.duplicate_clusters.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
  return r;
}

}  // namespace sgce
