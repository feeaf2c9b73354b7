#include <doctest.h>

#include <limits>
#include <string>

#include "coconolab/render.hpp"
#include "test_util.hpp"

using namespace coconolab;

TEST_SUITE("render") {

TEST_CASE("all-zero map is all black") {
  const auto g = decode_pgm(encode_pgm(Grid(4)));
  CHECK(g.width == 4);
  CHECK(g.height == 4);
  for (auto p : g.pixels) CHECK(p == 0);
}

TEST_CASE("a map with max 1 has a white pixel") {
  Grid m(3, 0.2);
  m(1, 2) = 1.0;
  const auto g = decode_pgm(encode_pgm(m));
  CHECK(g.pixels[1 * 3 + 2] == 255);
  CHECK(g.pixels[0] == 51);
}

TEST_CASE("header and scaling") {
  Grid m(2);
  m.v = {0.0, 0.5, 1.0, 2.0};
  const auto bytes = encode_pgm(m, 3);
  const std::string head(bytes.begin(), bytes.begin() + 11);
  CHECK(head == "P5\n6 6\n255\n");
  CHECK(bytes.size() == 11 + 36);
  const auto g = decode_pgm(bytes);
  CHECK(g.width == 6);
  CHECK(g.pixels.size() == 36);
  CHECK(g.pixels[0] == 0);
  CHECK(g.pixels[5] == 128);
  CHECK(g.pixels[6 * 5] == 255);
  CHECK(g.pixels[35] == 255);
}

TEST_CASE("non-finite values render black and masks render 0/255") {
  Grid m(2, 0.0);
  m[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK(decode_pgm(encode_pgm(m)).pixels[0] == 0);
  Mask k(2);
  k[3] = 1;
  const auto g = decode_pgm(encode_pgm(k));
  CHECK(g.pixels == std::vector<std::uint8_t>{0, 0, 0, 255});
}

TEST_CASE("decoding rejects other formats") {
  const std::string p2 = "P2\n1 1\n255\n0\n";
  CHECK_THROWS_AS_CODE(decode_pgm(std::vector<std::uint8_t>(p2.begin(), p2.end())), ErrorCode::bad_magic);
}

}  // TEST_SUITE
