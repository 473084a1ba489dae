#include "sgce/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "sgce/error.hpp"

namespace sgce {

namespace fs = std::filesystem;

namespace {

const char* split_name(Split s) { return s == Split::Train ? "train" : "test"; }

void draw_line(BinaryGrid& g, int x0, int y0, int x1, int y1) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    if (g.contains(x0, y0)) g.at(x0, y0) = 1;
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

RasterImage ink_to_rgb(const BinaryGrid& g) { return gray_to_rgb(grid_to_image(g)); }

}  // namespace

std::vector<ManifestEntry> Manifest::select(const std::string& font, Split split) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.font == font && e.split == split) out.push_back(e);
  return out;
}

std::vector<std::string> Manifest::fonts() const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (std::find(out.begin(), out.end(), e.font) == out.end()) out.push_back(e.font);
  return out;
}

std::string Manifest::to_string() const {
  std::string out;
  for (const auto& e : entries) out += e.path + "\t" + e.font + "\t" + split_name(e.split) + "\n";
  return out;
}

Manifest Manifest::parse(const std::string& text) {
  Manifest m;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1)
      fields.push_back(line.substr(start, tab - start));
    fields.push_back(line.substr(start));
    if (fields.size() != 3 || (fields[2] != "train" && fields[2] != "test")) {
      throw Error(ErrorKind::UnreadableFile, "manifest line " + std::to_string(lineno) +
                                                 ": expected path<TAB>font<TAB>train|test");
    }
    if (!seen.insert(fields[0]).second) {
      throw Error(ErrorKind::UnreadableFile, "manifest line " + std::to_string(lineno) +
                                                 ": duplicate path " + fields[0]);
    }
    m.entries.push_back({fields[0], fields[1], fields[2] == "train" ? Split::Train : Split::Test});
  }
  return m;
}

void Manifest::save(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::UnreadableFile, "cannot write " + path.string());
  out << to_string();
}

Manifest Manifest::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::UnreadableFile, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::size_t test_count(std::size_t n, double train_ratio) {
  if (n == 0) return 0;
  // small epsilon so 10 * (1 - 0.8) does not floor to 1
  const auto raw = static_cast<std::size_t>(std::floor(static_cast<double>(n) * (1.0 - train_ratio) + 1e-9));
  return std::clamp<std::size_t>(raw, 1, n);
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch,
                                     int domain) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32),
                    static_cast<std::uint32_t>(domain)};
  std::array<std::uint32_t, 2> mixed{};
  seq.generate(mixed.begin(), mixed.end());
  return permutation(n, (static_cast<std::uint64_t>(mixed[0]) << 32) | mixed[1]);
}

Manifest build_manifest(const fs::path& root, std::span<const std::string> fonts, double train_ratio,
                        std::uint64_t seed) {
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "split ratio must lie in (0,1)");
  }
  Manifest m;
  for (const auto& font : fonts) {
    const fs::path dir = root / font;
    std::vector<std::string> files;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw Error(ErrorKind::EmptyFont, "missing font directory " + dir.string());
    for (const auto& item : fs::directory_iterator(dir)) {
      if (item.is_regular_file() && item.path().extension() == ".png") {
        files.push_back(item.path().filename().string());
      }
    }
    if (files.empty()) throw Error(ErrorKind::EmptyFont, "no PNG files in " + dir.string());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      try {
        read_png(dir / f);
      } catch (const Error& e) {
        throw Error(ErrorKind::UnreadableFile, "cannot decode " + (dir / f).string() + ": " + e.what());
      }
    }
    const auto order = permutation(files.size(), seed);
    const std::size_t n_test = test_count(files.size(), train_ratio);
    const std::size_t n_train = files.size() - n_test;
    for (std::size_t i = 0; i < files.size(); ++i) {
      m.entries.push_back({font + "/" + files[order[i]], font, i < n_train ? Split::Train : Split::Test});
    }
  }
  return m;
}

RasterImage load_glyph(const fs::path& path, int size) { return resize(read_png(path), size, size); }

UnpairedBatch load_batch(const Manifest& manifest, const fs::path& root, const std::string& font_x,
                         const std::string& font_y, std::span<const std::size_t> indices_x,
                         std::span<const std::size_t> indices_y, int size) {
  const auto xs = manifest.select(font_x, Split::Train);
  const auto ys = manifest.select(font_y, Split::Train);
  UnpairedBatch batch;
  for (auto i : indices_x) {
    if (i >= xs.size()) throw Error(ErrorKind::OutOfBounds, "batch index beyond " + font_x + " train set");
    batch.x.push_back(load_glyph(root / xs[i].path, size));
  }
  for (auto i : indices_y) {
    if (i >= ys.size()) throw Error(ErrorKind::OutOfBounds, "batch index beyond " + font_y + " train set");
    batch.y.push_back(load_glyph(root / ys[i].path, size));
  }
  return batch;
}

GlyphDataset load_dataset(const Manifest& manifest, const fs::path& root, const std::string& font_x,
                          const std::string& font_y, int size) {
  GlyphDataset d;
  auto load_all = [&](const std::string& font, Split split, std::vector<RasterImage>& images,
                      std::vector<std::string>* names) {
    for (const auto& e : manifest.select(font, split)) {
      images.push_back(load_glyph(root / e.path, size));
      if (names) names->push_back(fs::path(e.path).filename().string());
    }
  };
  load_all(font_x, Split::Train, d.x_train, nullptr);
  load_all(font_y, Split::Train, d.y_train, nullptr);
  load_all(font_x, Split::Test, d.x_test, &d.x_test_names);
  load_all(font_y, Split::Test, d.y_test, &d.y_test_names);
  if (d.x_train.empty() || d.y_train.empty()) {
    throw Error(ErrorKind::DataEmpty, "no training images for " + font_x + " / " + font_y);
  }
  return d;
}

BinaryGrid synth_glyph(int size, std::uint64_t seed) {
  if (size < 12) throw Error(ErrorKind::InvalidSize, "synthetic glyphs need size >= 12");
  std::mt19937_64 rng(seed);
  constexpr int kLattice = 5;
  const int margin = 3;
  const double spacing = static_cast<double>(size - 1 - 2 * margin) / (kLattice - 1);
  auto coord = [&](int i) { return margin + static_cast<int>(std::lround(i * spacing)); };
  auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); };

  // mostly horizontal / vertical strokes, some diagonals
  constexpr std::array<std::array<int, 2>, 8> kDirs{{
      {1, 0}, {0, 1}, {1, 0}, {0, 1}, {1, 1}, {1, -1}, {-1, 0}, {0, -1},
  }};

  BinaryGrid g(size, size);
  const int strokes = 3 + pick(3);
  for (int s = 0; s < strokes; ++s) {
    int cx = pick(kLattice), cy = pick(kLattice);
    const int segments = 1 + pick(2);
    for (int k = 0; k < segments; ++k) {
      const auto dir = kDirs[static_cast<std::size_t>(pick(8))];
      const int len = 1 + pick(3);
      const int nx = std::clamp(cx + dir[0] * len, 0, kLattice - 1);
      const int ny = std::clamp(cy + dir[1] * len, 0, kLattice - 1);
      draw_line(g, coord(cx), coord(cy), coord(nx), coord(ny));
      cx = nx;
      cy = ny;
    }
  }
  if (g.count() < 2) draw_line(g, coord(0), coord(2), coord(kLattice - 1), coord(2));
  return g;
}

BinaryGrid thicken(const BinaryGrid& glyph, int thickness) {
  const int r = thickness / 2;
  BinaryGrid out(glyph.width(), glyph.height());
  for (int y = 0; y < glyph.height(); ++y)
    for (int x = 0; x < glyph.width(); ++x) {
      if (!glyph.at(x, y)) continue;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
          if (out.contains(x + dx, y + dy)) out.at(x + dx, y + dy) = 1;
    }
  return out;
}

Manifest synth_fonts(const fs::path& out, std::size_t n_per_font, int size, std::uint64_t seed) {
  if (n_per_font == 0) throw Error(ErrorKind::InvalidConfig, "n must be >= 1");
  fs::create_directories(out / kSynthFontA);
  fs::create_directories(out / kSynthFontB);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n_per_font; ++i) {
    const BinaryGrid thin_glyph = synth_glyph(size, rng());
    char name[32];
    std::snprintf(name, sizeof(name), "%05zu.png", i);
    write_png(out / kSynthFontA / name, ink_to_rgb(thin_glyph));
    write_png(out / kSynthFontB / name, ink_to_rgb(thicken(thin_glyph, 3)));
  }
  const std::vector<std::string> fonts{kSynthFontA, kSynthFontB};
  Manifest m = build_manifest(out, fonts, 0.8, seed);
  m.save(out / kManifestName);
  return m;
}

}  // namespace sgce
