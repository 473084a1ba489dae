#include <doctest.h>

#include <cmath>
#include <random>

#include "sgce/error.hpp"
#include "sgce/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace sgce;

namespace {

RasterImage constant(int w, int h, int c, double v) { return RasterImage(w, h, c, v); }

FeatureStats gaussian_stats(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  FeatureStats s;
  s.mean = mean;
  s.cov = cov;
  s.count = 10;
  return s;
}

}  // namespace

TEST_CASE("mse and psnr") {
  CHECK(mse(constant(4, 4, 1, 0.0), constant(4, 4, 1, 1.0)) == 1.0);
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const RasterImage a = testutil::random_image(rng, 7, 5, 3), b = testutil::random_image(rng, 7, 5, 3);
    CHECK(mse(a, a) == 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) sum += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    CHECK(std::abs(mse(a, b) - sum / static_cast<double>(a.data().size())) < 1e-12);
  }
  CHECK_THROWS_AS(mse(constant(4, 4, 1, 0.0), constant(4, 5, 1, 0.0)), Error);

  CHECK(psnr_from_mse(0.25) == doctest::Approx(6.0206).epsilon(1e-5));
  CHECK(std::isinf(psnr_from_mse(0.0)));
  CHECK(std::isinf(psnr(constant(3, 3, 1, 0.2), constant(3, 3, 1, 0.2))));
  const double at_013 = psnr_from_mse(0.13);
  CHECK(at_013 == doctest::Approx(8.86).epsilon(1e-3));
  CHECK((at_013 > 7.0 && at_013 < 10.0));
}

TEST_CASE("gaussian window") {
  const auto g = gaussian_window(11, 1.5);
  REQUIRE(g.size() == 121);
  double sum = 0.0;
  for (double v : g) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(g[60] == *std::max_element(g.begin(), g.end()));
  CHECK(g[0] == doctest::Approx(g[120]).epsilon(1e-15));
}

TEST_CASE("ssim identities and closed form") {
  std::mt19937_64 rng(32);
  const RasterImage a = testutil::random_image(rng, 16, 16, 1), b = testutil::random_image(rng, 16, 16, 1);
  CHECK(std::abs(ssim(a, a) - 1.0) < 1e-9);
  CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-12);

  const double c1 = 1e-4;
  const double expected = (2 * 0.5 * 0.7 + c1) / (0.25 + 0.49 + c1);
  CHECK(ssim(constant(12, 12, 1, 0.5), constant(12, 12, 1, 0.7)) == doctest::Approx(expected).epsilon(1e-12));

  CHECK_THROWS_AS(ssim(constant(10, 12, 1, 0.5), constant(10, 12, 1, 0.5)), Error);
  CHECK_THROWS_AS(ssim(constant(12, 12, 1, 0.5), constant(13, 12, 1, 0.5)), Error);
}

TEST_CASE("ssim matches a brute-force oracle") {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 11 + static_cast<int>(rng() % 10), h = 11 + static_cast<int>(rng() % 10);
    const RasterImage a = testutil::random_image(rng, w, h, 3), b = testutil::random_image(rng, w, h, 3);
    CHECK(std::abs(ssim(a, b) - oracle::ssim(to_gray(a), to_gray(b))) < 1e-10);
  }
}

TEST_CASE("ssim range over random pairs") {
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    RasterImage a = testutil::random_image(rng, 12, 12, 1), b = testutil::random_image(rng, 12, 12, 1);
    if (trial % 2 == 1)
      for (std::size_t i = 0; i < a.data().size(); ++i) b.data()[i] = 1.0 - a.data()[i] * u(rng) * 0.1;
    const double s = ssim(a, b);
    CHECK((s >= -1.0 && s <= 1.0));
  }
}

TEST_CASE("feature statistics") {
  Eigen::MatrixXd rep(4, 3);
  rep.rowwise() = Eigen::RowVector3d(1.0, -2.0, 0.5);
  const FeatureStats r = feature_stats(rep);
  CHECK(r.count == 4);
  CHECK(r.cov.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.mean(1) == -2.0);

  Eigen::MatrixXd two(2, 1);
  two << 0.0, 2.0;
  const FeatureStats t = feature_stats(two);
  CHECK(t.mean(0) == 1.0);
  CHECK(t.cov(0, 0) == 2.0);

  CHECK(feature_stats(Eigen::MatrixXd::Ones(1, 2)).cov.cwiseAbs().maxCoeff() == 0.0);

  std::mt19937_64 rng(35);
  std::normal_distribution<double> n01;
  const int n = 20000, d = 4;
  Eigen::MatrixXd big(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) big(i, j) = n01(rng);
  const FeatureStats s = feature_stats(big);
  CHECK((s.cov - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() < 5.0 / std::sqrt(double(n)));
  CHECK((s.cov - s.cov.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("frechet distance closed forms") {
  Eigen::VectorXd m0(1), m3(1);
  m0 << 0.0;
  m3 << 3.0;
  Eigen::MatrixXd v1(1, 1), v4(1, 1);
  v1 << 1.0;
  v4 << 4.0;
  CHECK(fid(gaussian_stats(m0, v1), gaussian_stats(m3, v4)) == doctest::Approx(10.0).epsilon(1e-12));

  std::mt19937_64 rng(36);
  std::uniform_real_distribution<double> mu(-3.0, 3.0), var(0.01, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd a(1), b(1);
    a << mu(rng);
    b << mu(rng);
    Eigen::MatrixXd sa(1, 1), sb(1, 1);
    sa << var(rng);
    sb << var(rng);
    const double expect = (a(0) - b(0)) * (a(0) - b(0)) + std::pow(std::sqrt(sa(0, 0)) - std::sqrt(sb(0, 0)), 2);
    CHECK(std::abs(fid(gaussian_stats(a, sa), gaussian_stats(b, sb)) - expect) <= 1e-6 * std::max(expect, 1e-12));

    const int d = 1 + static_cast<int>(rng() % 6);
    Eigen::VectorXd ma(d), mb(d), da(d), db(d);
    double diag = 0.0;
    for (int j = 0; j < d; ++j) {
      ma(j) = mu(rng);
      mb(j) = mu(rng);
      da(j) = var(rng);
      db(j) = var(rng);
      diag += (ma(j) - mb(j)) * (ma(j) - mb(j)) + std::pow(std::sqrt(da(j)) - std::sqrt(db(j)), 2);
    }
    const double got = fid(gaussian_stats(ma, da.asDiagonal()), gaussian_stats(mb, db.asDiagonal()));
    CHECK(std::abs(got - diag) <= 1e-6 * std::max(diag, 1e-12));
  }
}

TEST_CASE("frechet distance identity, symmetry and errors") {
  std::mt19937_64 rng(37);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd fa(30, 5), fb(30, 5);
    for (int i = 0; i < 30; ++i)
      for (int j = 0; j < 5; ++j) {
        fa(i, j) = n01(rng);
        fb(i, j) = 2.0 * n01(rng) + 1.0;
      }
    const FeatureStats a = feature_stats(fa), b = feature_stats(fb);
    CHECK(std::abs(fid(a, a)) < 1e-8);
    CHECK(std::abs(fid(a, b) - fid(b, a)) < 1e-8);
    CHECK(fid(a, b) >= 0.0);
  }
  // rank-deficient covariances still give a finite, floored value
  Eigen::MatrixXd low(3, 6);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 6; ++j) low(i, j) = n01(rng);
  const FeatureStats l = feature_stats(low);
  CHECK(std::abs(fid(l, l)) < 1e-8);

  const FeatureStats a = feature_stats(Eigen::MatrixXd::Ones(2, 2)), b = feature_stats(Eigen::MatrixXd::Ones(2, 3));
  CHECK_THROWS_AS(fid(a, b), Error);
}

TEST_CASE("feature extraction") {
  std::mt19937_64 rng(38);
  std::vector<RasterImage> imgs{testutil::random_image(rng, 32, 32, 3), constant(20, 24, 1, 0.3),
                                testutil::random_image(rng, 16, 16, 1)};
  const Eigen::MatrixXd f = extract_features(imgs, FlattenGray16{});
  CHECK(f.rows() == 3);
  CHECK(f.cols() == 256);
  CHECK(f.row(1).minCoeff() == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(f.row(1).maxCoeff() == doctest::Approx(0.3).epsilon(1e-12));
  for (int j = 0; j < 256; ++j) CHECK(f(2, j) == imgs[2].data()[static_cast<std::size_t>(j)]);

  testutil::TempDir dir("features");
  const auto path = dir.path() / "f.bin";
  save_features(path, f);
  const Eigen::MatrixXd back = load_features(path);
  CHECK(back.rows() == f.rows());
  CHECK(back.cols() == f.cols());
  CHECK((back.array() == f.array()).all());

  const FeatureExtractor fromfile = parse_extractor("file:" + path.string());
  CHECK((extract_features(imgs, fromfile).array() == f.array()).all());
  CHECK_THROWS_AS(extract_features(std::span(imgs).first(2), fromfile), Error);
  CHECK(std::holds_alternative<FlattenGray16>(parse_extractor("flatten-gray-16")));
  CHECK_THROWS_AS(parse_extractor("inception"), Error);
}

TEST_CASE("evaluation report") {
  std::mt19937_64 rng(39);
  std::vector<RasterImage> gen, ref;
  double mse_sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    gen.push_back(testutil::random_image(rng, 16, 16, 3));
    ref.push_back(testutil::random_image(rng, 16, 16, 3));
    mse_sum += mse(gen.back(), ref.back());
  }
  const MetricReport r = evaluate("t", gen, ref);
  CHECK(r.task == "t");
  CHECK(r.n == 4);
  CHECK(r.mse == doctest::Approx(mse_sum / 4).epsilon(1e-14));
  CHECK(r.psnr == doctest::Approx(psnr_from_mse(r.mse)).epsilon(1e-14));
  CHECK(r.fid >= 0.0);

  const MetricReport same = evaluate("s", ref, ref);
  CHECK(same.mse == 0.0);
  CHECK(std::isinf(same.psnr));
  CHECK(std::abs(same.ssim - 1.0) < 1e-9);
  CHECK(std::abs(same.fid) < 1e-8);

  const std::string row = metric_csv_row(r);
  CHECK(row.rfind("t,4,", 0) == 0);
  CHECK(std::count(row.begin(), row.end(), ',') == 5);
  CHECK(std::string(kMetricCsvHeader) == "task,n,mse,psnr,ssim,fid");
}
