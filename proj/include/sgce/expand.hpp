#pragma once

#include <span>
#include <vector>

#include "sgce/image.hpp"
#include "sgce/tensor.hpp"

namespace sgce {

/// Four-channel (R, G, B, S) glyph: the RGB planes of the source image plus
/// its skeleton, S in {0, 1}.
struct ExpandedInput {
  RasterImage image;
};

/// Appends ske(img, threshold) as a fourth channel; RGB is copied untouched.
ExpandedInput expand(const RasterImage& img, double threshold = kDefaultThreshold);

/// [4,H,W] tensor with every channel mapped v -> 2v - 1.
Tensor to_model_input(const ExpandedInput& e);

/// [C,H,W] tensor, v -> 2v - 1.
Tensor image_to_tensor(const RasterImage& img);
/// Inverse of image_to_tensor for one [C,H,W] (or [1,C,H,W]) tensor; values
/// are clamped into [0,1].
RasterImage tensor_to_image(std::span<const double> values, int channels, int height, int width);

/// Stacks equally shaped [C,H,W] tensors into [N,C,H,W].
Tensor stack(std::span<const Tensor> items);

/// Skeleton plane for a batch of generated images [N,3,H,W] in [-1,1]:
/// returns [N,1,H,W] with +1 on skeleton pixels and -1 elsewhere. No history.
Tensor skeleton_plane(const Tensor& rgb_batch, double threshold = kDefaultThreshold);

/// SGCE applied to a batch: concat(rgb, skeleton_plane(rgb)). Gradients flow
/// through the RGB channels only.
Tensor expand_batch(const Tensor& rgb_batch, double threshold = kDefaultThreshold);

/// Plain three-channel input padded with a constant -1 fourth channel.
Tensor pad_constant_channel(const Tensor& rgb_batch);

}  // namespace sgce
