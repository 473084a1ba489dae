#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace sgce {

enum class ChannelLayout { Gray = 1, Rgb = 3, Rgbs = 4 };

/// Row-major, channel-interleaved image with values in [0,1].
class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(int width, int height, int channels, double fill = 0.0);
  RasterImage(int width, int height, int channels, std::vector<double> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  ChannelLayout layout() const noexcept { return static_cast<ChannelLayout>(channels_); }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  double& at(int x, int y, int c) noexcept { return data_[index(x, y, c)]; }
  double at(int x, int y, int c) const noexcept { return data_[index(x, y, c)]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool operator==(const RasterImage&) const = default;

 private:
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<double> data_;
};

/// {0,1} grid, 1 = ink.
class BinaryGrid {
 public:
  BinaryGrid() = default;
  BinaryGrid(int width, int height, std::uint8_t fill = 0)
      : width_(width), height_(height),
        bits_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  std::uint8_t& at(int x, int y) noexcept { return bits_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t at(int x, int y) const noexcept {
    return bits_[static_cast<std::size_t>(y) * width_ + x];
  }
  /// Zero outside the grid.
  std::uint8_t get_padded(int x, int y) const noexcept {
    return (x < 0 || y < 0 || x >= width_ || y >= height_) ? 0 : at(x, y);
  }
  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  std::span<std::uint8_t> bits() noexcept { return bits_; }
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }
  std::size_t count() const noexcept;

  bool operator==(const BinaryGrid&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

inline constexpr double kDefaultThreshold = 0.5;

RasterImage decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const RasterImage& img);

RasterImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RasterImage& img);

/// BT.601 luminance.
RasterImage to_gray(const RasterImage& img);
/// Gray image to 3 replicated channels.
RasterImage gray_to_rgb(const RasterImage& img);
/// Ink (1) where gray < threshold.
BinaryGrid binarize(const RasterImage& img, double threshold);
/// Bilinear, half-pixel-centre sampling; output clamped to [0,1].
RasterImage resize(const RasterImage& img, int width, int height);

/// 1-channel image with ink drawn black (0) on white (1).
RasterImage grid_to_image(const BinaryGrid& grid);

}  // namespace sgce
