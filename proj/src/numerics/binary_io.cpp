#include "stride/binary_io.hpp"

#include <fstream>
#include <iterator>

namespace stride {

const char* to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::Io: return "io error";
    case FormatErrorKind::BadMagic: return "bad magic";
    case FormatErrorKind::UnsupportedVersion: return "unsupported version";
    case FormatErrorKind::Truncated: return "truncated";
    case FormatErrorKind::TrailingBytes: return "trailing bytes";
    case FormatErrorKind::ChecksumMismatch: return "checksum mismatch";
    case FormatErrorKind::ShapeMismatch: return "shape mismatch";
    case FormatErrorKind::InvariantViolation: return "invariant violation";
  }
  return "format error";
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001B3ULL;
  }
  return h;
}

void ByteReader::expect_magic(const char (&m)[5]) {
  if (data_.size() - pos_ < 4) {
    throw FormatError(FormatErrorKind::Truncated, context_ + ": file too short for magic");
  }
  auto got = bytes(4);
  if (std::memcmp(got.data(), m, 4) != 0) {
    std::string seen;
    for (auto c : got) seen += (c >= 32 && c < 127) ? static_cast<char>(c) : '?';
    throw FormatError(FormatErrorKind::BadMagic,
                      context_ + ": expected magic \"" + std::string(m, 4) + "\", found \"" + seen + "\"");
  }
}

void ByteReader::verify_seal() {
  const std::size_t body = pos_;
  const std::uint64_t stored = u64();
  if (pos_ != data_.size()) {
    throw FormatError(FormatErrorKind::TrailingBytes,
                      context_ + ": " + std::to_string(data_.size() - pos_) + " unexpected trailing bytes");
  }
  const std::uint64_t actual = fnv1a64(data_.first(body));
  if (stored != actual) {
    throw FormatError(FormatErrorKind::ChecksumMismatch, context_ + ": payload checksum does not match");
  }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrorKind::Io, "write failed for " + path.string());
}

}  // namespace stride
