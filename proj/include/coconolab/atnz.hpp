#pragma once

// ATNZ: a small binary container for named float32 tensors.
//
//   magic        4 bytes  "ATNZ"
//   version      u16      1
//   record count u32
//   per record:
//     name length  u32, then that many bytes of UTF-8
//     rank         u8 (≥ 1)
//     dims         u32 × rank
//     payload      float32 × ∏dims, row-major
//
// All integers and floats are little-endian. A bundle uses "cross" (r, r, n)
// and "self" (r², r²); "masks" (r, r, m) and "token_labels" (UTF-8 bytes of the
// labels joined by '\n', one byte per float) are optional.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coconolab/evaluation.hpp"
#include "coconolab/producer.hpp"

namespace coconolab {

inline constexpr std::uint16_t kAtnzVersion = 1;

struct AtnzRecord {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const;
  friend bool operator==(const AtnzRecord&, const AtnzRecord&) = default;
};

std::vector<std::uint8_t> encode_atnz(std::span<const AtnzRecord> records);
std::vector<AtnzRecord> decode_atnz(std::span<const std::uint8_t> bytes);

std::vector<AtnzRecord> read_atnz(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it into place.
void write_atnz(std::span<const AtnzRecord> records, const std::filesystem::path& path);

const AtnzRecord* find_record(std::span<const AtnzRecord> records, const std::string& name);

struct BundleFile {
  AttentionBundle bundle;
  std::optional<MaskSet> masks;
};

std::vector<AtnzRecord> bundle_to_records(const AttentionBundle& bundle, const MaskSet* masks = nullptr);
/// Requires "cross" and "self" with consistent r; validates bundle invariants.
BundleFile records_to_bundle(std::span<const AtnzRecord> records);

AtnzRecord vector_record(std::string name, std::span<const double> values);

/// Round-trips every entry through float32, matching what a file holds.
AttentionBundle quantize_to_float32(const AttentionBundle& bundle);

/// Replaces `path` atomically with `contents`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> contents);

}  // namespace coconolab
