#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "sgce/image.hpp"
#include "sgce/tensor.hpp"

namespace testutil {

inline sgce::BinaryGrid random_grid(std::mt19937_64& rng, int w, int h, double density) {
  std::bernoulli_distribution ink(density);
  sgce::BinaryGrid g(w, h);
  for (auto& b : g.bits()) b = ink(rng) ? 1 : 0;
  return g;
}

inline sgce::RasterImage random_image(std::mt19937_64& rng, int w, int h, int c) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  sgce::RasterImage img(w, h, c);
  for (auto& v : img.data()) v = u(rng);
  return img;
}

inline sgce::Tensor random_tensor(std::mt19937_64& rng, sgce::Shape shape, bool grad = false,
                                  double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(sgce::shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return sgce::Tensor(std::move(shape), std::move(v), grad);
}

/// Grid from rows of '#' (ink) and '.' (background).
inline sgce::BinaryGrid grid_from(const std::vector<std::string>& rows) {
  sgce::BinaryGrid g(static_cast<int>(rows.at(0).size()), static_cast<int>(rows.size()));
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) g.at(x, y) = rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] == '#';
  return g;
}

/// RGB image with black ink where the grid is set, white elsewhere.
inline sgce::RasterImage glyph_image(const sgce::BinaryGrid& g) {
  sgce::RasterImage img(g.width(), g.height(), 3, 1.0);
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x)
      if (g.at(x, y))
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = 0.0;
  return img;
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("sgce_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
