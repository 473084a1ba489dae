#include <doctest.h>

#include <png.h>

#include <cmath>
#include <random>

#include "sgce/error.hpp"
#include "sgce/image.hpp"
#include "test_util.hpp"

using namespace sgce;

namespace {

std::vector<std::uint8_t> png_from_bytes(int w, int h, png_uint_32 format, const void* pixels) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  png_alloc_size_t size = 0;
  REQUIRE(png_image_write_to_memory(&image, nullptr, &size, 0, pixels, 0, nullptr));
  std::vector<std::uint8_t> out(size);
  REQUIRE(png_image_write_to_memory(&image, out.data(), &size, 0, pixels, 0, nullptr));
  out.resize(size);
  return out;
}

ErrorKind kind_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an sgce::Error");
  return ErrorKind::NumericalFailure;
}

}  // namespace

TEST_CASE("raster image rejects broken invariants") {
  CHECK(kind_of([] { RasterImage(2, 2, 3, std::vector<double>(11, 0.0)); }) == ErrorKind::InvalidSize);
  CHECK(kind_of([] { RasterImage(1, 1, 1, std::vector<double>{1.5}); }) == ErrorKind::MalformedImage);
  CHECK(kind_of([] { RasterImage(1, 1, 2); }) == ErrorKind::UnsupportedChannels);
  const RasterImage ok(3, 2, 4, 0.25);
  CHECK(ok.layout() == ChannelLayout::Rgbs);
  CHECK(ok.data().size() == 24);
}

TEST_CASE("decode white rgb, black gray and a known pixel") {
  const std::uint8_t white[] = {255, 255, 255};
  const RasterImage a = decode_png(png_from_bytes(1, 1, PNG_FORMAT_RGB, white));
  CHECK(a.width() == 1);
  CHECK(a.channels() == 3);
  CHECK(std::vector<double>(a.data().begin(), a.data().end()) == std::vector<double>{1, 1, 1});

  const std::uint8_t black[] = {0};
  const RasterImage b = decode_png(png_from_bytes(1, 1, PNG_FORMAT_GRAY, black));
  CHECK(b.channels() == 3);
  CHECK(std::vector<double>(b.data().begin(), b.data().end()) == std::vector<double>{0, 0, 0});

  const std::uint8_t px[] = {128, 64, 255, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  const RasterImage c = decode_png(png_from_bytes(2, 2, PNG_FORMAT_RGB, px));
  CHECK(c.data()[0] == 128.0 / 255.0);
  CHECK(c.data()[1] == 64.0 / 255.0);
  CHECK(c.data()[2] == 1.0);
}

TEST_CASE("alpha composites over white") {
  const std::uint8_t px[] = {0, 0, 0, 0, 0, 0, 0, 255};
  const RasterImage img = decode_png(png_from_bytes(2, 1, PNG_FORMAT_RGBA, px));
  CHECK(img.at(0, 0, 0) == 1.0);  // fully transparent black reads as paper
  CHECK(img.at(1, 0, 0) == 0.0);
}

TEST_CASE("decode errors") {
  const std::vector<std::uint8_t> junk{1, 2, 3, 4, 5};
  CHECK(kind_of([&] { decode_png(junk); }) == ErrorKind::MalformedImage);
  const std::uint16_t deep[] = {65535};
  const auto bytes = png_from_bytes(1, 1, PNG_FORMAT_LINEAR_Y, deep);
  CHECK(kind_of([&] { decode_png(bytes); }) == ErrorKind::UnsupportedDepth);
}

TEST_CASE("to_gray weights") {
  RasterImage img(3, 1, 3);
  const double px[3][3] = {{1, 1, 1}, {1, 0, 0}, {0.5, 0.5, 0.5}};
  for (int x = 0; x < 3; ++x)
    for (int c = 0; c < 3; ++c) img.at(x, 0, c) = px[x][c];
  const RasterImage g = to_gray(img);
  CHECK(g.channels() == 1);
  CHECK(g.data()[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(g.data()[1] == doctest::Approx(0.299).epsilon(1e-15));
  CHECK(g.data()[2] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(kind_of([&] { to_gray(g); }) == ErrorKind::ChannelMismatch);
}

TEST_CASE("to_gray stays in range") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 50; ++i) {
    const RasterImage g = to_gray(testutil::random_image(rng, 7, 5, 3));
    for (double v : g.data()) CHECK((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("binarize uses a strict comparison") {
  const RasterImage row(3, 1, 1, std::vector<double>{0.2, 0.5, 0.8});
  const BinaryGrid g = binarize(row, 0.5);
  CHECK(std::vector<std::uint8_t>(g.bits().begin(), g.bits().end()) == std::vector<std::uint8_t>{1, 0, 0});
  CHECK(binarize(RasterImage(4, 4, 1, 1.0), 0.5).count() == 0);
  CHECK(binarize(RasterImage(4, 4, 1, 0.0), 0.5).count() == 16);
  CHECK(kind_of([&] { binarize(row, 0.0); }) == ErrorKind::InvalidThreshold);
  CHECK(kind_of([&] { binarize(row, 1.0); }) == ErrorKind::InvalidThreshold);
  CHECK(kind_of([] { binarize(RasterImage(1, 1, 3), 0.5); }) == ErrorKind::ChannelMismatch);
}

TEST_CASE("binarize depends only on the predicate") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> below(0.0, 0.4999), above(0.5, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    RasterImage a(6, 6, 1), b(6, 6, 1);
    std::bernoulli_distribution ink(0.4);
    for (std::size_t i = 0; i < a.data().size(); ++i) {
      const bool dark = ink(rng);
      a.data()[i] = dark ? below(rng) : above(rng);
      b.data()[i] = dark ? below(rng) : above(rng);
    }
    CHECK(binarize(a, 0.5) == binarize(b, 0.5));
  }
}

TEST_CASE("resize") {
  std::mt19937_64 rng(3);
  const RasterImage img = testutil::random_image(rng, 5, 4, 3);
  CHECK(resize(img, 5, 4) == img);

  const RasterImage ramp(2, 1, 1, std::vector<double>{0.0, 1.0});
  const RasterImage up = resize(ramp, 4, 1);
  CHECK(up.data()[0] == 0.0);
  CHECK(up.data()[3] == 1.0);
  for (int i = 1; i < 4; ++i) CHECK(up.data()[i] >= up.data()[i - 1]);
  // half-pixel centres: output x=1 samples source 0.25 -> 0.25
  CHECK(up.data()[1] == doctest::Approx(0.25));

  const RasterImage flat(7, 3, 3, 0.3);
  for (auto [w, h] : {std::pair{1, 1}, {13, 2}, {32, 32}, {4, 9}}) {
    const RasterImage r = resize(flat, w, h);
    for (double v : r.data()) CHECK(v == 0.3);
  }
  CHECK(kind_of([&] { resize(img, 0, 3); }) == ErrorKind::InvalidSize);
}

TEST_CASE("png roundtrip") {
  const RasterImage zeros(3, 3, 1, 0.0);
  const RasterImage back = decode_png(encode_png(zeros));
  for (double v : back.data()) CHECK(v == 0.0);

  const RasterImage half(1, 1, 1, 0.5);
  CHECK(decode_png(encode_png(half)).data()[0] == 128.0 / 255.0);

  std::mt19937_64 rng(9);
  for (int i = 0; i < 10; ++i) {
    const RasterImage img = testutil::random_image(rng, 6, 5, 3);
    const RasterImage once = decode_png(encode_png(img));
    for (std::size_t k = 0; k < img.data().size(); ++k) CHECK(std::abs(once.data()[k] - img.data()[k]) <= 1.0 / 510.0 + 1e-15);
    CHECK(decode_png(encode_png(once)) == once);
  }
  CHECK(kind_of([] { encode_png(RasterImage(1, 1, 4)); }) == ErrorKind::UnsupportedChannels);
}
