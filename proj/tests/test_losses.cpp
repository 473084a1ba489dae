#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sgce/error.hpp"
#include "sgce/losses.hpp"
#include "sgce/skeleton.hpp"
#include "test_util.hpp"

using namespace sgce;

namespace {

Tensor filled(Shape s, double v, bool grad = false) { return Tensor(std::move(s), v, grad); }

// [1,3,H,W] tensor in [-1,1] from an RGB image in [0,1].
Tensor to_tensor(const RasterImage& img) {
  const auto h = static_cast<std::size_t>(img.height()), w = static_cast<std::size_t>(img.width());
  Tensor t(Shape{1, 3, h, w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        t.data()[(c * h + y) * w + x] = 2.0 * img.at(static_cast<int>(x), static_cast<int>(y), static_cast<int>(c)) - 1.0;
  return t;
}

RasterImage to_image(const Tensor& t, std::size_t n) {
  const auto h = t.dim(2), w = t.dim(3);
  RasterImage img(static_cast<int>(w), static_cast<int>(h), 3);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        img.at(static_cast<int>(x), static_cast<int>(y), static_cast<int>(c)) =
            0.5 * t.data()[((n * 3 + c) * h + y) * w + x] + 0.5;
  return img;
}

// Direct evaluation: mean over pixels of |target - retained(rec) * ink(rec)|.
double ske_oracle(const Tensor& target, const Tensor& rec, double threshold) {
  const auto n = rec.dim(0), h = rec.dim(2), w = rec.dim(3);
  double sum = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    const RasterImage img = to_image(rec, b);
    const BinaryGrid kept = ske(img, threshold);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const int xi = static_cast<int>(x), yi = static_cast<int>(y);
        const double gray = 0.299 * img.at(xi, yi, 0) + 0.587 * img.at(xi, yi, 1) + 0.114 * img.at(xi, yi, 2);
        const double r = kept.at(xi, yi) ? 1.0 - gray : 0.0;
        sum += std::abs(target.data()[(b * h + y) * w + x] - r);
      }
  }
  return sum / static_cast<double>(n * h * w);
}

}  // namespace

TEST_CASE("adversarial losses at even odds") {
  const Tensor half = filled({2, 1, 4, 4}, 0.5);
  CHECK(adv_loss_d(half, half).item() == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK(adv_loss_d(half, half).item() == doctest::Approx(1.3863).epsilon(1e-4));
  CHECK(adv_loss_g(half).item() == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(adv_loss_g(half, GanLoss::Minimax).item() == doctest::Approx(std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("adversarial losses under saturation") {
  const Tensor one = filled({1, 1, 2, 2}, 1.0), zero = filled({1, 1, 2, 2}, 0.0);
  CHECK(adv_loss_d(one, zero).item() == doctest::Approx(-2.0 * std::log(1.0 - kLogClampEps)).epsilon(1e-9));
  CHECK(adv_loss_d(one, zero).item() < 1e-6);
  CHECK(adv_loss_g(one).item() < 1e-6);
  const double worst = adv_loss_g(zero).item();
  CHECK(std::isfinite(worst));
  CHECK(worst == doctest::Approx(-std::log(kLogClampEps)));
}

TEST_CASE("adversarial losses ignore batch order") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor real = testutil::random_tensor(rng, {6, 1, 2, 2}, false, 0.01, 0.99);
    const Tensor fake = testutil::random_tensor(rng, {6, 1, 2, 2}, false, 0.01, 0.99);
    std::vector<std::size_t> order(6);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Tensor pr(real.shape()), pf(fake.shape());
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        pr.data()[i * 4 + j] = real.data()[order[i] * 4 + j];
        pf.data()[i * 4 + j] = fake.data()[order[i] * 4 + j];
      }
    CHECK(adv_loss_d(pr, pf).item() == doctest::Approx(adv_loss_d(real, fake).item()).epsilon(1e-13));
    CHECK(adv_loss_g(pf).item() == doctest::Approx(adv_loss_g(fake).item()).epsilon(1e-13));
  }
}

TEST_CASE("adversarial loss gradients") {
  std::mt19937_64 rng(12);
  const Tensor real = testutil::random_tensor(rng, {2, 1, 3, 3}, true, 0.05, 0.95);
  const Tensor fake = testutil::random_tensor(rng, {2, 1, 3, 3}, true, 0.05, 0.95);
  Tensor loss = adv_loss_d(real, fake);
  loss.backward();
  const double n = static_cast<double>(real.numel());
  for (std::size_t i = 0; i < real.numel(); ++i) {
    CHECK(real.grad()[i] == doctest::Approx(-1.0 / (n * real.data()[i])).epsilon(1e-12));
    CHECK(fake.grad()[i] == doctest::Approx(1.0 / (n * (1.0 - fake.data()[i]))).epsilon(1e-12));
  }
}

TEST_CASE("cycle loss") {
  CHECK(cycle_loss(filled({1, 3, 4, 4}, -1.0), filled({1, 3, 4, 4}, 1.0)).item() == 2.0);
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = testutil::random_tensor(rng, {2, 3, 5, 5}), b = testutil::random_tensor(rng, {2, 3, 5, 5});
    CHECK(cycle_loss(a, a).item() == 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) sum += std::abs(a.data()[i] - b.data()[i]);
    CHECK(std::abs(cycle_loss(a, b).item() - sum / static_cast<double>(a.numel())) < 1e-12);
  }
  CHECK_THROWS_AS(cycle_loss(filled({1, 3, 4, 4}, 0.0), filled({1, 3, 4, 5}, 0.0)), Error);
}

TEST_CASE("skeleton loss examples") {
  const BinaryGrid glyph = testutil::grid_from({
      "..........",
      ".########.",
      ".########.",
      ".########.",
      "..........",
      "...###....",
      "...###....",
      "...###....",
      "..........",
  });
  const RasterImage img = testutil::glyph_image(glyph);
  const std::size_t k = ske(img).count();
  REQUIRE(k > 0);

  CHECK(ske_loss(img, to_tensor(img)).item() == 0.0);

  const Tensor white = filled({1, 3, 9, 10}, 1.0);
  CHECK(ske_loss(img, white).item() == doctest::Approx(static_cast<double>(k) / 90.0).epsilon(1e-15));
  CHECK(ske_loss(img, white, kDefaultThreshold, SkeGrad::None).item() ==
        doctest::Approx(static_cast<double>(k) / 90.0).epsilon(1e-15));
}

TEST_CASE("skeleton loss matches a per-pixel oracle") {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 30; ++trial) {
    const Tensor rec = testutil::random_tensor(rng, {2, 3, 12, 12}, true);
    const Tensor target = skeleton_mask(testutil::random_tensor(rng, {2, 3, 12, 12}));
    Tensor loss = ske_loss(target, rec);
    CHECK(std::abs(loss.item() - ske_oracle(target, rec, kDefaultThreshold)) < 1e-12);

    loss.backward();
    const Tensor kept = skeleton_mask(rec.detach());
    const std::size_t plane = 144;
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t p = 0; p < plane; ++p)
          if (kept.data()[b * plane + p] == 0.0) CHECK(rec.grad()[(b * 3 + c) * plane + p] == 0.0);
  }
}

TEST_CASE("skeleton loss shape checks") {
  CHECK_THROWS_AS(ske_loss(filled({1, 1, 4, 4}, 0.0), filled({1, 4, 4, 4}, 0.0)), Error);
  CHECK_THROWS_AS(ske_loss(filled({1, 1, 4, 5}, 0.0), filled({1, 3, 4, 4}, 0.0)), Error);
}

TEST_CASE("weighted total") {
  const LossWeights defaults;
  CHECK(defaults.cyc == 1.0);
  CHECK(defaults.ske == 0.001);
  CHECK(total_loss(0, 0, 0, 0, defaults).total == 0.0);
  CHECK(total_loss(1.0, 1.0, 0.5, 2.0, defaults).total == doctest::Approx(2.502).epsilon(1e-15));

  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const LossWeights w{u(rng), u(rng) * 1e-3};
    const double ax = u(rng), ay = u(rng), c = u(rng), s = u(rng);
    const LossBreakdown b = total_loss(ax, ay, c, s, w);
    CHECK(b.total == ax + ay + w.cyc * c + w.ske * s);
    CHECK(total_loss(ax, ay, c, s, LossWeights{w.cyc, 0.0}).total == ax + ay + w.cyc * c);
  }
}

TEST_CASE("log rows") {
  const LossBreakdown b = total_loss(0.1, 0.25, 1.0 / 3.0, 2.0, LossWeights{});
  const std::string row = format_log_row(7, b);
  CHECK(row.rfind("7,0.1,0.25,", 0) == 0);
  CHECK(std::count(row.begin(), row.end(), ',') == 5);
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(std::string(kLossLogHeader) == "step,adv_x,adv_y,cyc,ske,total");
  CHECK(b.all_finite());
  CHECK_FALSE(total_loss(NAN, 0, 0, 0, LossWeights{}).all_finite());
}
