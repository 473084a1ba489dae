#include "sgce/expand.hpp"

#include <algorithm>

#include "sgce/error.hpp"
#include "sgce/skeleton.hpp"

namespace sgce {

ExpandedInput expand(const RasterImage& img, double threshold) {
  if (img.channels() != 3) throw Error(ErrorKind::ChannelMismatch, "expand expects 3 channels");
  const BinaryGrid skeleton = ske(img, threshold);
  RasterImage out(img.width(), img.height(), 4);
  auto src = img.data();
  auto dst = out.data();
  auto bits = skeleton.bits();
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    std::copy_n(src.begin() + static_cast<long>(p * 3), 3, dst.begin() + static_cast<long>(p * 4));
    dst[p * 4 + 3] = bits[p];
  }
  return ExpandedInput{std::move(out)};
}

Tensor image_to_tensor(const RasterImage& img) {
  const std::size_t c = static_cast<std::size_t>(img.channels());
  const std::size_t plane = img.pixel_count();
  std::vector<double> values(c * plane);
  auto src = img.data();
  for (std::size_t p = 0; p < plane; ++p)
    for (std::size_t k = 0; k < c; ++k) values[k * plane + p] = 2.0 * src[p * c + k] - 1.0;
  return Tensor(Shape{c, static_cast<std::size_t>(img.height()), static_cast<std::size_t>(img.width())},
                std::move(values));
}

Tensor to_model_input(const ExpandedInput& e) { return image_to_tensor(e.image); }

RasterImage tensor_to_image(std::span<const double> values, int channels, int height, int width) {
  const std::size_t plane = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  const std::size_t c = static_cast<std::size_t>(channels);
  if (values.size() != c * plane) {
    throw Error(ErrorKind::ShapeMismatch, "tensor_to_image: value count does not match geometry");
  }
  RasterImage out(width, height, channels);
  auto dst = out.data();
  for (std::size_t p = 0; p < plane; ++p)
    for (std::size_t k = 0; k < c; ++k)
      dst[p * c + k] = std::clamp((values[k * plane + p] + 1.0) / 2.0, 0.0, 1.0);
  return out;
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw Error(ErrorKind::ShapeMismatch, "stack of zero tensors");
  const Shape& inner = items.front().shape();
  Shape shape{items.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  std::vector<double> values;
  values.reserve(shape_numel(shape));
  for (const auto& t : items) {
    if (t.shape() != inner) throw Error(ErrorKind::ShapeMismatch, "stack: inconsistent shapes");
    values.insert(values.end(), t.data().begin(), t.data().end());
  }
  return Tensor(std::move(shape), std::move(values));
}

Tensor skeleton_plane(const Tensor& rgb_batch, double threshold) {
  if (rgb_batch.ndim() != 4 || rgb_batch.dim(1) != 3) {
    throw Error(ErrorKind::ShapeMismatch,
                "skeleton_plane expects [N,3,H,W], got " + shape_string(rgb_batch.shape()));
  }
  const std::size_t n = rgb_batch.dim(0), h = rgb_batch.dim(2), w = rgb_batch.dim(3);
  const std::size_t plane = h * w;
  std::vector<double> out(n * plane);
  for (std::size_t i = 0; i < n; ++i) {
    const RasterImage img = tensor_to_image(rgb_batch.data().subspan(i * 3 * plane, 3 * plane), 3,
                                            static_cast<int>(h), static_cast<int>(w));
    const BinaryGrid s = ske(img, threshold);
    for (std::size_t p = 0; p < plane; ++p) out[i * plane + p] = s.bits()[p] ? 1.0 : -1.0;
  }
  return Tensor(Shape{n, 1, h, w}, std::move(out));
}

Tensor expand_batch(const Tensor& rgb_batch, double threshold) {
  return concat_channels(rgb_batch, skeleton_plane(rgb_batch, threshold));
}

Tensor pad_constant_channel(const Tensor& rgb_batch) {
  if (rgb_batch.ndim() != 4) {
    throw Error(ErrorKind::ShapeMismatch, "pad_constant_channel expects [N,C,H,W]");
  }
  return concat_channels(
      rgb_batch, Tensor(Shape{rgb_batch.dim(0), 1, rgb_batch.dim(2), rgb_batch.dim(3)}, -1.0));
}

}  // namespace sgce
