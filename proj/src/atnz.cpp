#include "coconolab/atnz.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <system_error>

#include "coconolab/error.hpp"

namespace coconolab {

namespace {

constexpr char kMagic[4] = {'A', 'T', 'N', 'Z'};

class Writer {
 public:
  void u8(std::uint8_t x) { out_.push_back(x); }
  void u16(std::uint16_t x) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
  }
  void u32(std::uint32_t x) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t remaining() const { return in_.size() - pos_; }
  void need(std::size_t n, const char* what) const {
    require(remaining() >= n, ErrorCode::truncated, std::string("file truncated while reading ") + what);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return in_[pos_++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t x = static_cast<std::uint16_t>(in_[pos_] | (in_[pos_ + 1] << 8));
    pos_ += 2;
    return x;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(in_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 4;
    return x;
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::size_t checked_count(const std::vector<std::uint32_t>& dims) {
  std::size_t count = 1;
  for (auto d : dims) {
    require(d == 0 || count <= SIZE_MAX / 4 / d, ErrorCode::malformed, "record dimensions overflow");
    count *= d;
  }
  return count;
}

std::string join_labels(const std::vector<std::string>& labels) {
  std::string s;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) s += '\n';
    s += labels[i];
  }
  return s;
}

}  // namespace

std::size_t AtnzRecord::element_count() const { return checked_count(dims); }

std::vector<std::uint8_t> encode_atnz(std::span<const AtnzRecord> records) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u16(kAtnzVersion);
  require(records.size() <= UINT32_MAX, ErrorCode::invalid_argument, "too many records");
  w.u32(static_cast<std::uint32_t>(records.size()));
  std::set<std::string> names;
  for (const auto& rec : records) {
    require(!rec.name.empty(), ErrorCode::invalid_argument, "record name is empty");
    require(names.insert(rec.name).second, ErrorCode::duplicate_name, "duplicate record name '" + rec.name + "'");
    require(!rec.dims.empty() && rec.dims.size() <= 255, ErrorCode::invalid_argument,
            "record '" + rec.name + "' must have rank 1..255");
    require(rec.data.size() == rec.element_count(), ErrorCode::invalid_argument,
            "record '" + rec.name + "' payload does not match its dims");
    w.u32(static_cast<std::uint32_t>(rec.name.size()));
    w.bytes(rec.name.data(), rec.name.size());
    w.u8(static_cast<std::uint8_t>(rec.dims.size()));
    for (auto d : rec.dims) w.u32(d);
    for (float f : rec.data) w.u32(std::bit_cast<std::uint32_t>(f));
  }
  return w.take();
}

std::vector<AtnzRecord> decode_atnz(std::span<const std::uint8_t> bytes) {
  Reader rd(bytes);
  const auto magic = rd.take(4, "magic");
  require(std::memcmp(magic.data(), kMagic, 4) == 0, ErrorCode::bad_magic, "not an ATNZ file (bad magic)");
  const std::uint16_t version = rd.u16("version");
  require(version == kAtnzVersion, ErrorCode::unsupported_version,
          "unsupported ATNZ version " + std::to_string(version));
  const std::uint32_t count = rd.u32("record count");
  std::vector<AtnzRecord> records;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    AtnzRecord rec;
    const std::uint32_t name_len = rd.u32("name length");
    const auto name = rd.take(name_len, "name");
    rec.name.assign(name.begin(), name.end());
    require(!rec.name.empty(), ErrorCode::malformed, "record name is empty");
    require(names.insert(rec.name).second, ErrorCode::duplicate_name, "duplicate record name '" + rec.name + "'");
    const std::uint8_t rank = rd.u8("rank");
    require(rank >= 1, ErrorCode::malformed, "record '" + rec.name + "' has rank 0");
    for (std::uint8_t k = 0; k < rank; ++k) rec.dims.push_back(rd.u32("dims"));
    const std::size_t n = rec.element_count();
    const auto payload = rd.take(n * 4, "payload");
    rec.data.resize(n);
    for (std::size_t e = 0; e < n; ++e) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(payload[e * 4 + static_cast<std::size_t>(b)]) << (8 * b);
      rec.data[e] = std::bit_cast<float>(bits);
    }
    records.push_back(std::move(rec));
  }
  require(rd.remaining() == 0, ErrorCode::malformed,
          std::to_string(rd.remaining()) + " trailing bytes after the last record");
  return records;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::io_error, "cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(contents.data()), static_cast<std::streamsize>(contents.size()));
    require(static_cast<bool>(out), ErrorCode::io_error, "write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorCode::io_error, "cannot move output into place at '" + path.string() + "'");
  }
}

std::vector<AtnzRecord> read_atnz(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io_error, "cannot open '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_atnz(bytes);
}

void write_atnz(std::span<const AtnzRecord> records, const std::filesystem::path& path) {
  write_file_atomic(path, encode_atnz(records));
}

const AtnzRecord* find_record(std::span<const AtnzRecord> records, const std::string& name) {
  for (const auto& r : records)
    if (r.name == name) return &r;
  return nullptr;
}

AtnzRecord vector_record(std::string name, std::span<const double> values) {
  AtnzRecord rec{std::move(name), {static_cast<std::uint32_t>(values.size())}, {}};
  rec.data.reserve(values.size());
  for (double v : values) rec.data.push_back(static_cast<float>(v));
  return rec;
}

std::vector<AtnzRecord> bundle_to_records(const AttentionBundle& bundle, const MaskSet* masks) {
  const std::size_t r = bundle.cross.r;
  const std::size_t n = bundle.cross.n();
  const std::size_t cells = r * r;
  std::vector<AtnzRecord> out;

  AtnzRecord cross{"cross", {static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(n)}, {}};
  cross.data.resize(cells * n);
  for (std::size_t c = 0; c < cells; ++c)
    for (std::size_t j = 0; j < n; ++j) cross.data[c * n + j] = static_cast<float>(bundle.cross.maps[j][c]);
  out.push_back(std::move(cross));

  AtnzRecord self{"self", {static_cast<std::uint32_t>(cells), static_cast<std::uint32_t>(cells)}, {}};
  self.data.reserve(bundle.self.values.size());
  for (double v : bundle.self.values) self.data.push_back(static_cast<float>(v));
  out.push_back(std::move(self));

  if (masks && !masks->masks.empty()) {
    const std::size_t m = masks->size();
    AtnzRecord rec{"masks", {static_cast<std::uint32_t>(masks->r), static_cast<std::uint32_t>(masks->r), static_cast<std::uint32_t>(m)}, {}};
    rec.data.resize(masks->r * masks->r * m);
    for (std::size_t c = 0; c < masks->r * masks->r; ++c)
      for (std::size_t j = 0; j < m; ++j) rec.data[c * m + j] = masks->masks[j][c] ? 1.0f : 0.0f;
    out.push_back(std::move(rec));
  }

  if (!bundle.cross.token_labels.empty()) {
    const std::string joined = join_labels(bundle.cross.token_labels);
    AtnzRecord rec{"token_labels", {static_cast<std::uint32_t>(joined.size())}, {}};
    for (unsigned char ch : joined) rec.data.push_back(static_cast<float>(ch));
    if (!rec.data.empty()) out.push_back(std::move(rec));
  }
  return out;
}

BundleFile records_to_bundle(std::span<const AtnzRecord> records) {
  const AtnzRecord* cross = find_record(records, "cross");
  const AtnzRecord* self = find_record(records, "self");
  require(cross != nullptr, ErrorCode::malformed, "missing required record 'cross'");
  require(self != nullptr, ErrorCode::malformed, "missing required record 'self'");
  require(cross->dims.size() == 3 && cross->dims[0] == cross->dims[1] && cross->dims[2] >= 1,
          ErrorCode::shape_mismatch, "'cross' must have dims (r, r, n)");
  const std::size_t r = cross->dims[0];
  const std::size_t n = cross->dims[2];
  const std::size_t cells = r * r;
  require(self->dims.size() == 2 && self->dims[0] == cells && self->dims[1] == cells, ErrorCode::shape_mismatch,
          "'self' must have dims (r², r²) matching 'cross'");

  BundleFile out;
  auto& b = out.bundle;
  b.cross.r = r;
  b.cross.maps.assign(n, Grid(r));
  for (std::size_t c = 0; c < cells; ++c)
    for (std::size_t j = 0; j < n; ++j) b.cross.maps[j][c] = cross->data[c * n + j];
  b.self.r = r;
  b.self.values.assign(self->data.begin(), self->data.end());

  if (const AtnzRecord* labels = find_record(records, "token_labels")) {
    require(labels->dims.size() == 1, ErrorCode::shape_mismatch, "'token_labels' must be rank 1");
    std::string joined;
    for (float f : labels->data) {
      require(f >= 0.0f && f <= 255.0f && f == static_cast<float>(static_cast<int>(f)), ErrorCode::malformed,
              "'token_labels' holds a non-byte value");
      joined.push_back(static_cast<char>(static_cast<unsigned char>(f)));
    }
    std::size_t start = 0;
    while (true) {
      const std::size_t nl = joined.find('\n', start);
      b.cross.token_labels.push_back(joined.substr(start, nl == std::string::npos ? std::string::npos : nl - start));
      if (nl == std::string::npos) break;
      start = nl + 1;
    }
    require(b.cross.token_labels.size() == n, ErrorCode::shape_mismatch,
            "'token_labels' count does not match the cross maps");
  }

  if (const AtnzRecord* masks = find_record(records, "masks")) {
    require(masks->dims.size() == 3 && masks->dims[0] == r && masks->dims[1] == r, ErrorCode::shape_mismatch,
            "'masks' must have dims (r, r, m) matching 'cross'");
    const std::size_t m = masks->dims[2];
    MaskSet set;
    set.r = r;
    set.masks.assign(m, Mask(r));
    for (std::size_t c = 0; c < cells; ++c)
      for (std::size_t j = 0; j < m; ++j) {
        const float v = masks->data[c * m + j];
        require(v == 0.0f || v == 1.0f, ErrorCode::malformed, "'masks' entries must be 0 or 1");
        set.masks[j][c] = v == 1.0f ? 1 : 0;
      }
    out.masks = std::move(set);
  }
  b.validate();
  return out;
}

AttentionBundle quantize_to_float32(const AttentionBundle& bundle) {
  AttentionBundle q = bundle;
  for (Grid& g : q.cross.maps)
    for (double& x : g.v) x = static_cast<double>(static_cast<float>(x));
  for (double& x : q.self.values) x = static_cast<double>(static_cast<float>(x));
  return q;
}

}  // namespace coconolab
