#pragma once

#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "sgce/image.hpp"

namespace sgce {

/// Mean squared difference over all values; shapes must match.
double mse(const RasterImage& a, const RasterImage& b);
/// 10 log10(1 / mse) for images in [0,1]; +inf when mse == 0.
double psnr_from_mse(double mse_value);
double psnr(const RasterImage& a, const RasterImage& b);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Mean SSIM over all fully contained windows (Gaussian weighting). RGB
/// inputs are converted with to_gray first. Throws ImageTooSmall when either
/// side is below the window size.
double ssim(const RasterImage& a, const RasterImage& b, const SsimParams& params = {});

/// Normalised Gaussian window, row-major window x window.
std::vector<double> gaussian_window(int window, double sigma);

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::size_t count = 0;
};

/// Sample mean and unbiased covariance of the rows (covariance 0 for one row).
FeatureStats feature_stats(const Eigen::MatrixXd& features);

/// Frechet distance between two Gaussians:
/// |mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)), via the symmetric form
/// (S1^(1/2) S2 S1^(1/2))^(1/2). Floored at 0.
double fid(const FeatureStats& a, const FeatureStats& b);

/// Built-in extractor: gray, resized to 16x16, flattened (d = 256).
struct FlattenGray16 {};
/// Precomputed per-image features stored as tensor `features` [n,d] in a container.
struct FeatureFile {
  std::filesystem::path path;
};
using FeatureExtractor = std::variant<FlattenGray16, FeatureFile>;

/// Parses "flatten-gray-16" or "file:<path>".
FeatureExtractor parse_extractor(const std::string& spec);

/// n x d feature matrix. With a FeatureFile the row count must equal
/// images.size().
Eigen::MatrixXd extract_features(std::span<const RasterImage> images, const FeatureExtractor& extractor);

void save_features(const std::filesystem::path& path, const Eigen::MatrixXd& features);
Eigen::MatrixXd load_features(const std::filesystem::path& path);

struct MetricReport {
  std::string task;
  std::size_t n = 0;  ///< number of paired samples behind mse/psnr/ssim
  double mse = 0.0;
  double psnr = std::numeric_limits<double>::infinity();
  double ssim = 1.0;
  double fid = 0.0;
};

inline constexpr const char* kMetricCsvHeader = "task,n,mse,psnr,ssim,fid";
std::string metric_csv_row(const MetricReport& r);

/// Paired metrics averaged over (generated[i], reference[i]); psnr is taken
/// at the mean mse. FID compares the two sets, each under its own extractor
/// (feature files are per set).
MetricReport evaluate(const std::string& task, std::span<const RasterImage> generated,
                      std::span<const RasterImage> reference, const FeatureExtractor& generated_features,
                      const FeatureExtractor& reference_features);
inline MetricReport evaluate(const std::string& task, std::span<const RasterImage> generated,
                             std::span<const RasterImage> reference) {
  return evaluate(task, generated, reference, FlattenGray16{}, FlattenGray16{});
}

}  // namespace sgce
