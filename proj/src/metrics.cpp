#include "sgce/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "sgce/container.hpp"
#include "sgce/error.hpp"
#include "sgce/losses.hpp"

namespace sgce {

namespace {

constexpr double kEigenClamp = -1e-6;

void require_same_geometry(const RasterImage& a, const RasterImage& b, const char* op) {
  if (a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels()) {
    throw Error(ErrorKind::DimensionMismatch, std::string(op) + ": image shapes differ");
  }
}

// Valid-region separable filtering of a single-channel plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int w, int h,
                                 const std::vector<double>& kernel1d) {
  const int k = static_cast<int>(kernel1d.size());
  const int ow = w - k + 1, oh = h - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += kernel1d[i] * plane[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += kernel1d[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

std::vector<double> gaussian_1d(int window, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(window));
  const double c = (window - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < window; ++i) {
    g[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (m + m.transpose()));
  if (solver.info() != Eigen::Success) throw Error(ErrorKind::NumericalFailure, "eigendecomposition failed");
  Eigen::VectorXd ev = solver.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < kEigenClamp) {
      throw Error(ErrorKind::NumericalFailure, "covariance is not positive semidefinite");
    }
    ev[i] = std::sqrt(std::max(ev[i], 0.0));
  }
  return solver.eigenvectors() * ev.asDiagonal() * solver.eigenvectors().transpose();
}

}  // namespace

double mse(const RasterImage& a, const RasterImage& b) {
  require_same_geometry(a, b, "mse");
  if (a.data().empty()) throw Error(ErrorKind::DimensionMismatch, "mse of empty images");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.data().size());
}

double psnr_from_mse(double mse_value) {
  if (mse_value <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse_value);
}

double psnr(const RasterImage& a, const RasterImage& b) { return psnr_from_mse(mse(a, b)); }

std::vector<double> gaussian_window(int window, double sigma) {
  const auto g = gaussian_1d(window, sigma);
  std::vector<double> out(static_cast<std::size_t>(window) * window);
  for (int y = 0; y < window; ++y)
    for (int x = 0; x < window; ++x) out[static_cast<std::size_t>(y) * window + x] = g[y] * g[x];
  return out;
}

double ssim(const RasterImage& a, const RasterImage& b, const SsimParams& params) {
  require_same_geometry(a, b, "ssim");
  if (a.width() < params.window || a.height() < params.window) {
    throw Error(ErrorKind::ImageTooSmall, "ssim needs images at least as large as the window");
  }
  const RasterImage ga = a.channels() == 3 ? to_gray(a) : a;
  const RasterImage gb = b.channels() == 3 ? to_gray(b) : b;
  if (ga.channels() != 1) throw Error(ErrorKind::ChannelMismatch, "ssim expects gray or RGB images");

  const int w = ga.width(), h = ga.height();
  const std::vector<double> pa(ga.data().begin(), ga.data().end());
  const std::vector<double> pb(gb.data().begin(), gb.data().end());
  std::vector<double> aa(pa.size()), bb(pa.size()), ab(pa.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    aa[i] = pa[i] * pa[i];
    bb[i] = pb[i] * pb[i];
    ab[i] = pa[i] * pb[i];
  }
  const auto g = gaussian_1d(params.window, params.sigma);
  const auto mu_a = filter_valid(pa, w, h, g);
  const auto mu_b = filter_valid(pb, w, h, g);
  const auto e_aa = filter_valid(aa, w, h, g);
  const auto e_bb = filter_valid(bb, w, h, g);
  const auto e_ab = filter_valid(ab, w, h, g);

  const double c1 = std::pow(params.k1 * params.dynamic_range, 2);
  const double c2 = std::pow(params.k2 * params.dynamic_range, 2);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

FeatureStats feature_stats(const Eigen::MatrixXd& features) {
  if (features.rows() == 0) throw Error(ErrorKind::DataEmpty, "feature_stats of zero samples");
  FeatureStats s;
  s.count = static_cast<std::size_t>(features.rows());
  s.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  if (features.rows() < 2) {
    s.cov = Eigen::MatrixXd::Zero(features.cols(), features.cols());
  } else {
    s.cov = (centered.transpose() * centered) / static_cast<double>(features.rows() - 1);
  }
  return s;
}

double fid(const FeatureStats& a, const FeatureStats& b) {
  if (a.mean.size() != b.mean.size() || a.cov.rows() != a.mean.size() || b.cov.rows() != b.mean.size()) {
    throw Error(ErrorKind::DimensionMismatch, "fid: feature dimensions differ");
  }
  const Eigen::MatrixXd root_a = psd_sqrt(a.cov);
  const Eigen::MatrixXd inner = root_a * b.cov * root_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (inner + inner.transpose()),
                                                        Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw Error(ErrorKind::NumericalFailure, "eigendecomposition failed");
  double trace_root = 0.0;
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) {
    const double ev = solver.eigenvalues()[i];
    if (ev < kEigenClamp) throw Error(ErrorKind::NumericalFailure, "negative eigenvalue in covariance product");
    trace_root += std::sqrt(std::max(ev, 0.0));
  }
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const double value = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * trace_root;
  return std::max(value, 0.0);
}

FeatureExtractor parse_extractor(const std::string& spec) {
  if (spec == "flatten-gray-16") return FlattenGray16{};
  if (spec.rfind("file:", 0) == 0 && spec.size() > 5) return FeatureFile{spec.substr(5)};
  throw Error(ErrorKind::InvalidConfig, "unknown extractor '" + spec + "' (flatten-gray-16 | file:<path>)");
}

Eigen::MatrixXd extract_features(std::span<const RasterImage> images, const FeatureExtractor& extractor) {
  if (const auto* file = std::get_if<FeatureFile>(&extractor)) {
    Eigen::MatrixXd m = load_features(file->path);
    if (static_cast<std::size_t>(m.rows()) != images.size()) {
      throw Error(ErrorKind::DimensionMismatch, "feature file row count differs from image count");
    }
    return m;
  }
  constexpr int kSide = 16;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(images.size()), kSide * kSide);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const RasterImage gray = images[i].channels() == 3 ? to_gray(images[i]) : images[i];
    if (gray.channels() != 1) throw Error(ErrorKind::ChannelMismatch, "features need gray or RGB images");
    const RasterImage small = resize(gray, kSide, kSide);
    for (int j = 0; j < kSide * kSide; ++j) m(static_cast<Eigen::Index>(i), j) = small.data()[j];
  }
  return m;
}

void save_features(const std::filesystem::path& path, const Eigen::MatrixXd& features) {
  std::vector<double> values(static_cast<std::size_t>(features.size()));
  for (Eigen::Index r = 0; r < features.rows(); ++r)
    for (Eigen::Index c = 0; c < features.cols(); ++c)
      values[static_cast<std::size_t>(r * features.cols() + c)] = features(r, c);
  Container c;
  c.add(ContainerEntry::from_tensor(
      "features", Tensor(Shape{static_cast<std::size_t>(features.rows()), static_cast<std::size_t>(features.cols())},
                         std::move(values))));
  save_container(path, c);
}

Eigen::MatrixXd load_features(const std::filesystem::path& path) {
  const Container c = load_container(path);
  const Tensor t = c.at("features").to_tensor();
  if (t.ndim() != 2) throw Error(ErrorKind::MalformedContainer, "features must be a 2-d tensor");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index col = 0; col < m.cols(); ++col)
      m(r, col) = t.data()[static_cast<std::size_t>(r * m.cols() + col)];
  return m;
}

std::string metric_csv_row(const MetricReport& r) {
  const std::string psnr_text = std::isinf(r.psnr) ? "inf" : format_double(r.psnr);
  return r.task + "," + std::to_string(r.n) + "," + format_double(r.mse) + "," + psnr_text + "," +
         format_double(r.ssim) + "," + format_double(r.fid);
}

MetricReport evaluate(const std::string& task, std::span<const RasterImage> generated,
                      std::span<const RasterImage> reference, const FeatureExtractor& generated_features,
                      const FeatureExtractor& reference_features) {
  if (generated.size() != reference.size()) {
    throw Error(ErrorKind::DimensionMismatch, "evaluate: generated and reference counts differ");
  }
  if (generated.empty()) throw Error(ErrorKind::DataEmpty, "evaluate: no samples");
  MetricReport r;
  r.task = task;
  r.n = generated.size();
  double mse_sum = 0.0, ssim_sum = 0.0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    mse_sum += mse(generated[i], reference[i]);
    ssim_sum += ssim(generated[i], reference[i]);
  }
  r.mse = mse_sum / static_cast<double>(r.n);
  r.psnr = psnr_from_mse(r.mse);
  r.ssim = ssim_sum / static_cast<double>(r.n);
  r.fid = fid(feature_stats(extract_features(generated, generated_features)),
              feature_stats(extract_features(reference, reference_features)));
  return r;
}

}  // namespace sgce
