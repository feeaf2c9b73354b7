#include "coconolab/render.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "coconolab/error.hpp"

namespace coconolab {

namespace {

std::vector<std::uint8_t> encode_pixels(std::size_t r, const std::vector<std::uint8_t>& cells, std::size_t scale) {
  require(scale >= 1, ErrorCode::invalid_argument, "render scale must be at least 1");
  require(r >= 1, ErrorCode::invalid_argument, "cannot render an empty map");
  const std::size_t side = r * scale;
  const std::string header = "P5\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + side * side);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) out.push_back(cells[(y / scale) * r + x / scale]);
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_pgm(const Grid& map, std::size_t scale) {
  std::vector<std::uint8_t> cells(map.v.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const double v = std::isfinite(map.v[c]) ? std::clamp(map.v[c], 0.0, 1.0) : 0.0;
    cells[c] = static_cast<std::uint8_t>(std::lround(255.0 * v));
  }
  return encode_pixels(map.r, cells, scale);
}

std::vector<std::uint8_t> encode_pgm(const Mask& mask, std::size_t scale) {
  std::vector<std::uint8_t> cells(mask.v.size());
  for (std::size_t c = 0; c < cells.size(); ++c) cells[c] = mask.v[c] ? 255 : 0;
  return encode_pixels(mask.r, cells, scale);
}

Graymap decode_pgm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    require(!t.empty(), ErrorCode::truncated, "graymap header is truncated");
    return t;
  };
  require(token() == "P5", ErrorCode::bad_magic, "not a binary graymap");
  Graymap g;
  g.width = std::stoul(token());
  g.height = std::stoul(token());
  require(token() == "255", ErrorCode::malformed, "graymap maxval must be 255");
  ++pos;
  require(bytes.size() - std::min(pos, bytes.size()) == g.width * g.height, ErrorCode::truncated,
          "graymap pixel data has the wrong length");
  g.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return g;
}

}  // namespace coconolab
