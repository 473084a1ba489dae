#include "sgce/skeleton.hpp"

#include <vector>

#include "sgce/error.hpp"

namespace sgce {

namespace {

// (dx, dy) for p2..p9, y grows downwards.
constexpr std::array<std::array<int, 2>, 8> kOffsets{{
    {0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1},
}};

}  // namespace

PatchStats PatchStats::from_neighbors(const std::array<std::uint8_t, 8>& neighbors) noexcept {
  PatchStats s;
  s.neighbors = neighbors;
  for (std::size_t i = 0; i < 8; ++i) {
    s.n += neighbors[i];
    if (neighbors[i] == 0 && neighbors[(i + 1) % 8] == 1) ++s.p;
  }
  return s;
}

PatchStats patch_stats(const BinaryGrid& grid, int x, int y) {
  if (!grid.contains(x, y)) throw Error(ErrorKind::OutOfBounds, "patch centre outside grid");
  std::array<std::uint8_t, 8> nb{};
  for (std::size_t i = 0; i < 8; ++i) nb[i] = grid.get_padded(x + kOffsets[i][0], y + kOffsets[i][1]);
  return PatchStats::from_neighbors(nb);
}

bool deletable(const PatchStats& s, Subpass subpass) noexcept {
  if (s.n < 2 || s.n > 6 || s.p != 1) return false;
  if (subpass == Subpass::A) return s[2] * s[4] * s[6] == 0 && s[4] * s[6] * s[8] == 0;
  return s[2] * s[4] * s[8] == 0 && s[2] * s[6] * s[8] == 0;
}

std::size_t thin_subpass(BinaryGrid& grid, Subpass subpass) {
  const BinaryGrid snapshot = grid;
  std::size_t removed = 0;
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      if (snapshot.at(x, y) && deletable(patch_stats(snapshot, x, y), subpass)) {
        grid.at(x, y) = 0;
        ++removed;
      }
    }
  }
  return removed;
}

BinaryGrid thin(const BinaryGrid& grid) {
  BinaryGrid out = grid;
  for (;;) {
    std::size_t removed = thin_subpass(out, Subpass::A);
    removed += thin_subpass(out, Subpass::B);
    if (removed == 0) return out;
  }
}

BinaryGrid ske(const RasterImage& img, double threshold) {
  return thin(binarize(to_gray(img), threshold));
}

std::size_t count_components(const BinaryGrid& grid) {
  std::vector<std::uint8_t> seen(grid.bits().size(), 0);
  std::vector<std::pair<int, int>> stack;
  std::size_t components = 0;
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * grid.width() + x;
      if (!grid.at(x, y) || seen[idx]) continue;
      ++components;
      seen[idx] = 1;
      stack.emplace_back(x, y);
      while (!stack.empty()) {
        auto [cx, cy] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (!grid.contains(nx, ny) || !grid.at(nx, ny)) continue;
            const std::size_t nidx = static_cast<std::size_t>(ny) * grid.width() + nx;
            if (seen[nidx]) continue;
            seen[nidx] = 1;
            stack.emplace_back(nx, ny);
          }
        }
      }
    }
  }
  return components;
}

}  // namespace sgce
