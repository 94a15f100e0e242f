#ifndef LMKIT_UTIL_HPP
#define LMKIT_UTIL_HPP

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lmkit {

/// Base exception for every failure reported by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parse failure in one of the text formats; carries the 1-based line.
class FormatError : public Error {
 public:
  FormatError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

using WarningSink = std::function<void(const std::string&)>;

inline WarningSink& warning_sink() {
  static WarningSink sink = [](const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

inline void warn(const std::string& msg) { warning_sink()(msg); }

/// Installs a sink for the lifetime of the guard; restores the previous one.
class ScopedWarningSink {
 public:
  explicit ScopedWarningSink(WarningSink sink) : previous_(warning_sink()) {
    warning_sink() = std::move(sink);
  }
  ~ScopedWarningSink() { warning_sink() = std::move(previous_); }
  ScopedWarningSink(const ScopedWarningSink&) = delete;
  ScopedWarningSink& operator=(const ScopedWarningSink&) = delete;

 private:
  WarningSink previous_;
};

inline std::vector<std::string> split_whitespace(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r' ||
                               line[i] == '\n' || line[i] == '\v' || line[i] == '\f')) {
      ++i;
    }
    std::size_t j = i;
    while (j < line.size() && !(line[j] == ' ' || line[j] == '\t' || line[j] == '\r' ||
                                line[j] == '\n' || line[j] == '\v' || line[j] == '\f')) {
      ++j;
    }
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Splits on LF; a trailing CR is dropped so CRLF files still parse.
inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::string data = read_file(path);
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < data.size()) {
    std::size_t end = data.find('\n', start);
    if (end == std::string::npos) end = data.size();
    std::string line = data.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = end + 1;
  }
  return lines;
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

/// printf-style %.{digits}g without a negative zero.
inline std::string format_g(double v, int digits) {
  if (v == 0.0) v = 0.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline double parse_double(std::string_view s, const std::string& what) {
  std::string tmp(s);
  if (tmp == "inf" || tmp == "+inf" || tmp == "infinity") return INFINITY;
  if (tmp == "-inf" || tmp == "-infinity") return -INFINITY;
  try {
    std::size_t used = 0;
    double v = std::stod(tmp, &used);
    if (used != tmp.size()) throw std::invalid_argument(tmp);
    return v;
  } catch (const std::exception&) {
    throw Error("invalid number for " + what + ": '" + tmp + "'");
  }
}

inline long long parse_int(std::string_view s, const std::string& what) {
  std::string tmp(s);
  try {
    std::size_t used = 0;
    long long v = std::stoll(tmp, &used);
    if (used != tmp.size()) throw std::invalid_argument(tmp);
    return v;
  } catch (const std::exception&) {
    throw Error("invalid integer for " + what + ": '" + tmp + "'");
  }
}

}  // namespace lmkit

#endif  // LMKIT_UTIL_HPP
