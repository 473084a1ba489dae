#pragma once

#include <array>
#include <cstdint>

#include "sgce/image.hpp"

namespace sgce {

/// Neighbourhood of a pixel P1, neighbours numbered clockwise from the one
/// directly above:
///
///     P9 P2 P3
///     P8 P1 P4
///     P7 P6 P5
///
/// `neighbors[0]` holds p2, `neighbors[7]` holds p9.
struct PatchStats {
  int n = 0;  ///< number of foreground neighbours (P1 excluded)
  int p = 0;  ///< number of 0->1 transitions in the cyclic sequence p2..p9,p2
  std::array<std::uint8_t, 8> neighbors{};

  std::uint8_t operator[](int i) const noexcept { return neighbors[static_cast<std::size_t>(i - 2)]; }

  static PatchStats from_neighbors(const std::array<std::uint8_t, 8>& neighbors) noexcept;
};

enum class Subpass { A, B };

/// Neighbours outside the grid read as zero.
PatchStats patch_stats(const BinaryGrid& grid, int x, int y);

/// Condition (a) together with (b) for subpass A or (c) for subpass B.
bool deletable(const PatchStats& stats, Subpass subpass) noexcept;

/// Alternating-subpass thinning to a fixpoint. Each subpass evaluates the
/// predicate against a snapshot and deletes all marked pixels at once.
BinaryGrid thin(const BinaryGrid& grid);

/// Number of pixels removed by one subpass (applied in place).
std::size_t thin_subpass(BinaryGrid& grid, Subpass subpass);

/// thin(binarize(to_gray(img), threshold)) for an RGB image.
BinaryGrid ske(const RasterImage& img, double threshold = kDefaultThreshold);

/// Number of 8-connected foreground components.
std::size_t count_components(const BinaryGrid& grid);

}  // namespace sgce
