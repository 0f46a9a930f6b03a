#include <catch2/catch_amalgamated.hpp>

#include "vhtk/image.hpp"
#include "vhtk/image_io.hpp"
#include "test_support.hpp"

using namespace vhtk;
using vhtk_test::ScratchDir;
using vhtk_test::random_image;

TEST_CASE("image tensor basics") {
  ImageTensor img(4, 6);
  REQUIRE(img.size() == 4u * 6u * 3u);
  REQUIRE(img.pixel_count() == 24u);
  img.at(1, 2, 0) = 0.5;
  REQUIRE(img.at(1, 2, 0) == 0.5);
  REQUIRE_THROWS_AS(ImageTensor(0, 5), Error);
}

TEST_CASE("byte conversion round trip is exact on the 8-bit grid") {
  ImageTensor img(3, 3);
  for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = (i % 256) / 255.0;
  const auto bytes = to_bytes(img);
  const ImageTensor back = from_bytes(3, 3, bytes.data());
  REQUIRE(max_abs_diff(img, back) == 0.0);
}

TEST_CASE("png write/read round trip") {
  ScratchDir dir("png");
  const ImageTensor img = random_image(20, 31, 42);
  write_png(dir.file("x.png"), img);
  const ImageTensor back = read_image(dir.file("x.png"));
  REQUIRE(back.height == 20);
  REQUIRE(back.width == 31);
  // everything beyond 8-bit quantization must survive
  REQUIRE(max_abs_diff(img, back) <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("jpeg encode/decode shapes and sniffing") {
  ScratchDir dir("jpeg");
  const ImageTensor img = vhtk_test::synthetic_photo(32, 24, 7);
  const auto bytes = jpeg_encode(img, 85);
  REQUIRE(looks_like_jpeg(bytes.data(), bytes.size()));
  const ImageTensor back = jpeg_decode(bytes.data(), bytes.size());
  REQUIRE(back.height == 32);
  REQUIRE(back.width == 24);
  write_file_bytes(dir.file("x.jpg"), bytes.data(), bytes.size());
  const ImageTensor from_file = read_image(dir.file("x.jpg"));
  REQUIRE(from_file == back);
}

TEST_CASE("reading garbage fails cleanly") {
  ScratchDir dir("garbage");
  const std::uint8_t junk[] = {1, 2, 3, 4, 5, 6, 7, 8};
  write_file_bytes(dir.file("junk.bin"), junk, sizeof junk);
  REQUIRE_THROWS_AS(read_image(dir.file("junk.bin")), IoError);
  REQUIRE_THROWS_AS(read_image(dir.file("missing.png")), IoError);
}

TEST_CASE("bilinear resize") {
  SECTION("identity when sizes match") {
    const ImageTensor img = random_image(8, 8, 1);
    REQUIRE(resize_bilinear(img, 8, 8) == img);
  }
  SECTION("constant images stay constant") {
    const ImageTensor img = ImageTensor::constant(10, 14, 0.37);
    const ImageTensor out = resize_bilinear(img, 64, 64);
    REQUIRE(out.height == 64);
    for (double v : out.data) REQUIRE(v == Catch::Approx(0.37).margin(1e-12));
  }
  SECTION("values stay within the input range") {
    const ImageTensor img = random_image(9, 13, 3);
    const ImageTensor out = resize_bilinear(img, 33, 17);
    for (double v : out.data) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
    }
  }
}
