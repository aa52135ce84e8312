#pragma once

#include <charconv>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stride/binary_io.hpp"

// Minimal reader for the plain comma-separated tables this project writes:
// no quoting, '#' lines are comments, the first other line is the header.

namespace stride::csv {

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

class Reader {
 public:
  Reader(std::istream& in, std::string header, std::string context)
      : in_(in), header_(std::move(header)), context_(std::move(context)) {}

  /// Next data row split into fields; nullopt at end of input. Throws if the
  /// header is wrong or a row has the wrong field count.
  std::optional<std::vector<std::string_view>> next() {
    while (std::getline(in_, line_)) {
      ++line_no_;
      if (!line_.empty() && line_.back() == '\r') line_.pop_back();
      if (line_.empty() || line_.front() == '#') continue;
      if (!header_seen_) {
        if (line_ != header_) fail("expected header '" + header_ + "', found '" + line_ + "'");
        header_seen_ = true;
        continue;
      }
      auto fields = split(line_);
      const auto expected = split(header_).size();
      if (fields.size() != expected) {
        fail("expected " + std::to_string(expected) + " fields, found " + std::to_string(fields.size()));
      }
      return fields;
    }
    if (!header_seen_) throw FormatError(FormatErrorKind::Truncated, context_ + ": no header line");
    return std::nullopt;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw FormatError(FormatErrorKind::InvariantViolation,
                      context_ + " line " + std::to_string(line_no_) + ": " + why);
  }

  /// Parses field `column` (0-based) of the current row.
  template <typename V>
  V number(std::string_view field, std::size_t column) const {
    V v{};
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, v);
    if (ec != std::errc{} || ptr != end || field.empty()) {
      fail("column " + std::to_string(column + 1) + " ('" + std::string(split(header_)[column]) +
           "'): bad number '" + std::string(field) + "'");
    }
    return v;
  }

  template <typename V>
  std::optional<V> optional_number(std::string_view field, std::size_t column) const {
    if (field.empty()) return std::nullopt;
    return number<V>(field, column);
  }

  std::size_t line_number() const { return line_no_; }

 private:
  std::istream& in_;
  std::string header_;
  std::string context_;
  std::string line_;
  std::size_t line_no_ = 0;
  bool header_seen_ = false;
};

}  // namespace stride::csv
