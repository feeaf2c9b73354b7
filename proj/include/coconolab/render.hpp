#pragma once

// 8-bit binary graymaps (PGM, P5) of attention maps and masks.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "coconolab/grid.hpp"

namespace coconolab {

/// Pixel value round(255·clamp(v, 0, 1)); each cell becomes a scale×scale block.
std::vector<std::uint8_t> encode_pgm(const Grid& map, std::size_t scale = 1);
std::vector<std::uint8_t> encode_pgm(const Mask& mask, std::size_t scale = 1);

struct Graymap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

/// Reads the P5 form written by encode_pgm (maxval 255).
Graymap decode_pgm(const std::vector<std::uint8_t>& bytes);

}  // namespace coconolab
