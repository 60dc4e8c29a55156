#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "vigil/errors.hpp"
#include "vigil/types.hpp"

namespace vigil {

// Recording CSV: header "t,uv", rows "<seconds>,<microvolts>", LF endings.
// Tag CSV: header "t,status", status is "open" or "closed".

namespace detail {

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;  // from_chars rejects a leading '+'
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// Shortest fixed-notation text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[512];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed);
  if (ec != std::errc()) throw std::runtime_error("cannot format value");
  return std::string(buf, ptr);
}

inline void chomp(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline std::pair<std::string_view, std::string_view> split2(std::string_view line, std::size_t lineno) {
  const auto comma = line.find(',');
  if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos)
    throw ParseError(lineno, "expected exactly two comma-separated fields");
  return {line.substr(0, comma), line.substr(comma + 1)};
}

}  // namespace detail

// Streaming reader for recording CSV files. Enforces strictly increasing t.
class CsvSampleReader {
 public:
  explicit CsvSampleReader(const std::string& path) : in_(path), path_(path) {
    if (!in_) throw SourceError("cannot open recording '" + path + "'");
    std::string header;
    if (!std::getline(in_, header)) throw ParseError(1, "missing header in '" + path + "'");
    detail::chomp(header);
    line_ = 1;
    if (header != "t,uv") throw ParseError(1, "expected header 't,uv', got '" + header + "'");
  }

  std::optional<Sample> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      detail::chomp(line);
      if (line.empty()) continue;
      auto [ts, vs] = detail::split2(line, line_);
      auto t = detail::parse_double(ts);
      auto uv = detail::parse_double(vs);
      if (!t || !uv) throw ParseError(line_, "malformed row '" + line + "'");
      if (last_t_ && !(*t > *last_t_)) throw ParseError(line_, "timestamp not increasing");
      last_t_ = *t;
      return Sample{*t, *uv};
    }
    return std::nullopt;
  }

  std::size_t line() const { return line_; }

 private:
  std::ifstream in_;
  std::string path_;
  std::size_t line_{0};
  std::optional<double> last_t_;
};

inline std::vector<Sample> read_recording(const std::string& path) {
  CsvSampleReader reader(path);
  std::vector<Sample> out;
  while (auto s = reader.next()) out.push_back(*s);
  return out;
}

inline void write_sample_row(std::ostream& os, const Sample& s) {
  os << detail::format_double(s.t) << ',' << detail::format_double(s.uv) << '\n';
}

inline void write_recording(std::ostream& os, const std::vector<Sample>& samples) {
  os << "t,uv\n";
  for (const auto& s : samples) write_sample_row(os, s);
}

inline void write_recording(const std::string& path, const std::vector<Sample>& samples) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  write_recording(os, samples);
}

inline std::vector<EyeStatusTag> read_tags(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SourceError("cannot open tag file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing header in '" + path + "'");
  detail::chomp(line);
  if (line != "t,status") throw ParseError(1, "expected header 't,status'");
  std::vector<EyeStatusTag> tags;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    detail::chomp(line);
    if (line.empty()) continue;
    auto [ts, ss] = detail::split2(line, lineno);
    auto t = detail::parse_double(ts);
    if (!t || (ss != "open" && ss != "closed")) throw ParseError(lineno, "malformed tag row '" + line + "'");
    if (!tags.empty() && !(*t > tags.back().t)) throw ParseError(lineno, "tag times must increase");
    tags.push_back({*t, parse_eye_status(ss)});
  }
  return tags;
}

inline void write_tags(const std::string& path, const std::vector<EyeStatusTag>& tags) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os << "t,status\n";
  for (const auto& tag : tags) os << detail::format_double(tag.t) << ',' << to_string(tag.status) << '\n';
}

}  // namespace vigil
