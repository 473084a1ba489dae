#include "sgce/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include <png.h>

#include "sgce/error.hpp"

namespace sgce {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedImage: return "MalformedImage";
    case ErrorKind::UnsupportedDepth: return "UnsupportedDepth";
    case ErrorKind::UnsupportedChannels: return "UnsupportedChannels";
    case ErrorKind::ChannelMismatch: return "ChannelMismatch";
    case ErrorKind::InvalidThreshold: return "InvalidThreshold";
    case ErrorKind::InvalidSize: return "InvalidSize";
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::EmptyFont: return "EmptyFont";
    case ErrorKind::UnreadableFile: return "UnreadableFile";
    case ErrorKind::DataEmpty: return "DataEmpty";
    case ErrorKind::MalformedContainer: return "MalformedContainer";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ImageTooSmall: return "ImageTooSmall";
    case ErrorKind::DegenerateBatch: return "DegenerateBatch";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::NumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

namespace {

void check_channels(int channels) {
  if (channels != 1 && channels != 3 && channels != 4) {
    throw Error(ErrorKind::UnsupportedChannels, "channel count must be 1, 3 or 4");
  }
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

RasterImage::RasterImage(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  check_channels(channels);
  if (width < 0 || height < 0) throw Error(ErrorKind::InvalidSize, "negative image dimension");
  data_.assign(pixel_count() * static_cast<std::size_t>(channels), fill);
}

RasterImage::RasterImage(int width, int height, int channels, std::vector<double> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  check_channels(channels);
  if (width < 0 || height < 0) throw Error(ErrorKind::InvalidSize, "negative image dimension");
  if (data_.size() != pixel_count() * static_cast<std::size_t>(channels)) {
    throw Error(ErrorKind::InvalidSize, "data length does not match width*height*channels");
  }
  for (double v : data_) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::MalformedImage, "value outside [0,1]");
  }
}

std::size_t BinaryGrid::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

RasterImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (bytes.empty() || !png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(ErrorKind::MalformedImage, bytes.empty() ? "empty input" : image.message);
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw Error(ErrorKind::UnsupportedDepth, "16-bit PNG input is not supported");
  }
  image.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgba.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorKind::MalformedImage, msg);
  }
  const int w = static_cast<int>(image.width);
  const int h = static_cast<int>(image.height);
  RasterImage out(w, h, 3);
  auto dst = out.data();
  for (std::size_t p = 0; p < out.pixel_count(); ++p) {
    const std::uint8_t alpha = rgba[p * 4 + 3];
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = rgba[p * 4 + c] / 255.0;
      if (alpha == 255) {
        dst[p * 3 + c] = v;
      } else {
        const double a = alpha / 255.0;
        dst[p * 3 + c] = std::clamp(v * a + (1.0 - a), 0.0, 1.0);
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_png(const RasterImage& img) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw Error(ErrorKind::UnsupportedChannels,
                "PNG output supports 1 or 3 channels; store 4-channel data in a container");
  }
  if (img.width() == 0 || img.height() == 0) {
    throw Error(ErrorKind::InvalidSize, "cannot encode an empty image");
  }
  std::vector<std::uint8_t> pixels(img.data().size());
  std::transform(img.data().begin(), img.data().end(), pixels.begin(), quantize);

  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;

  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(image, size, 0, pixels.data(), 0, nullptr)) {
    throw Error(ErrorKind::MalformedImage, image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
    throw Error(ErrorKind::MalformedImage, image.message);
  }
  out.resize(size);
  return out;
}

RasterImage read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::UnreadableFile, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_png(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void write_png(const std::filesystem::path& path, const RasterImage& img) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::UnreadableFile, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

RasterImage to_gray(const RasterImage& img) {
  if (img.channels() != 3) throw Error(ErrorKind::ChannelMismatch, "to_gray expects 3 channels");
  RasterImage out(img.width(), img.height(), 1);
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t p = 0; p < out.pixel_count(); ++p) {
    const double y = 0.299 * src[p * 3] + 0.587 * src[p * 3 + 1] + 0.114 * src[p * 3 + 2];
    dst[p] = std::clamp(y, 0.0, 1.0);
  }
  return out;
}

RasterImage gray_to_rgb(const RasterImage& img) {
  if (img.channels() != 1) throw Error(ErrorKind::ChannelMismatch, "gray_to_rgb expects 1 channel");
  RasterImage out(img.width(), img.height(), 3);
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t p = 0; p < out.pixel_count(); ++p) {
    dst[p * 3] = dst[p * 3 + 1] = dst[p * 3 + 2] = src[p];
  }
  return out;
}

BinaryGrid binarize(const RasterImage& img, double threshold) {
  if (img.channels() != 1) throw Error(ErrorKind::ChannelMismatch, "binarize expects 1 channel");
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw Error(ErrorKind::InvalidThreshold, "threshold must lie in (0,1)");
  }
  BinaryGrid out(img.width(), img.height());
  auto src = img.data();
  auto bits = out.bits();
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = src[i] < threshold ? 1 : 0;
  return out;
}

RasterImage resize(const RasterImage& img, int width, int height) {
  if (width < 1 || height < 1) throw Error(ErrorKind::InvalidSize, "target size must be >= 1");
  if (img.width() < 1 || img.height() < 1) throw Error(ErrorKind::InvalidSize, "empty source image");
  if (width == img.width() && height == img.height()) return img;

  const int c = img.channels();
  RasterImage out(width, height, c);
  const double sx = static_cast<double>(img.width()) / width;
  const double sy = static_cast<double>(img.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double wx = fx - x0;
      for (int k = 0; k < c; ++k) {
        // lerp as a + (b - a) * t so constant regions stay bit-exact
        const double top = img.at(x0, y0, k) + (img.at(x1, y0, k) - img.at(x0, y0, k)) * wx;
        const double bottom = img.at(x0, y1, k) + (img.at(x1, y1, k) - img.at(x0, y1, k)) * wx;
        out.at(x, y, k) = std::clamp(top + (bottom - top) * wy, 0.0, 1.0);
      }
    }
  }
  return out;
}

RasterImage grid_to_image(const BinaryGrid& grid) {
  RasterImage out(grid.width(), grid.height(), 1);
  auto bits = grid.bits();
  auto dst = out.data();
  for (std::size_t i = 0; i < bits.size(); ++i) dst[i] = bits[i] ? 0.0 : 1.0;
  return out;
}

}  // namespace sgce
