#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sgce/image.hpp"

namespace sgce {

enum class Split { Train, Test };

struct ManifestEntry {
  std::string path;  ///< relative to the dataset root, '/' separated
  std::string font;
  Split split = Split::Train;
  bool operator==(const ManifestEntry&) const = default;
};

/// Tab-separated `path<TAB>font<TAB>split` lines, LF endings.
struct Manifest {
  std::vector<ManifestEntry> entries;

  /// Entries of one font and split, in manifest order.
  std::vector<ManifestEntry> select(const std::string& font, Split split) const;
  std::vector<std::string> fonts() const;

  std::string to_string() const;
  static Manifest parse(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static Manifest load(const std::filesystem::path& path);

  bool operator==(const Manifest&) const = default;
};

/// Number of test items for a font of n files: floor(n * (1 - ratio)), at least 1.
std::size_t test_count(std::size_t n, double train_ratio);

/// Lists `<root>/<font>/*.png` for every font, shuffles each sorted file list
/// with the same seed and splits at `train_ratio`. Fonts with identical file
/// names therefore share the same character split.
Manifest build_manifest(const std::filesystem::path& root, std::span<const std::string> fonts,
                        double train_ratio, std::uint64_t seed);

/// Deterministic Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);

/// Per-domain epoch order derived from (seed, epoch, domain).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch,
                                     int domain);

struct UnpairedBatch {
  std::vector<RasterImage> x;
  std::vector<RasterImage> y;
};

/// Decodes and resizes the selected training entries of the two fonts.
/// `indices_x` / `indices_y` index the fonts' train lists independently.
UnpairedBatch load_batch(const Manifest& manifest, const std::filesystem::path& root,
                         const std::string& font_x, const std::string& font_y,
                         std::span<const std::size_t> indices_x,
                         std::span<const std::size_t> indices_y, int size);

/// Loads one image as RGB resized to size x size.
RasterImage load_glyph(const std::filesystem::path& path, int size);

/// Two-domain dataset held in memory.
struct GlyphDataset {
  std::vector<RasterImage> x_train, y_train, x_test, y_test;
  std::vector<std::string> x_test_names, y_test_names;  ///< file names (no directory)
};

GlyphDataset load_dataset(const Manifest& manifest, const std::filesystem::path& root,
                          const std::string& font_x, const std::string& font_y, int size);

inline constexpr const char* kSynthFontA = "fontA";
inline constexpr const char* kSynthFontB = "fontB";
inline constexpr const char* kManifestName = "manifest.tsv";

/// Random polyline glyph on a size x size canvas (1 = ink), stroke width 1.
BinaryGrid synth_glyph(int size, std::uint64_t seed);
/// Square dilation to the given odd stroke thickness.
BinaryGrid thicken(const BinaryGrid& glyph, int thickness);

/// Writes n glyphs per pseudo-font under `out`: fontA at stroke thickness 1,
/// fontB the same shapes at thickness 3, plus `manifest.tsv` (ratio 0.8).
Manifest synth_fonts(const std::filesystem::path& out, std::size_t n_per_font, int size,
                     std::uint64_t seed);

}  // namespace sgce
