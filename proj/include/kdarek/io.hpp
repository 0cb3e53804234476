#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "kdarek/errors.hpp"

namespace kdarek {

// Doubles are printed with %.17g: lossless for IEEE754 binary64 and stable
// across reruns, which the byte-identical output guarantee relies on.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header)
      : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open " + path + " for writing");
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) out_ << ',';
      out_ << header[i];
    }
    out_ << '\n';
  }

  CsvWriter& field(const std::string& v) {
    sep();
    out_ << v;
    return *this;
  }
  CsvWriter& field(double v) { return field(format_double(v)); }
  CsvWriter& field(int v) { return field(std::to_string(v)); }
  CsvWriter& field(long v) { return field(std::to_string(v)); }
  CsvWriter& field(std::size_t v) { return field(std::to_string(v)); }
  CsvWriter& field(std::uint64_t v) { return field(std::to_string(v)); }

  void end_row() {
    out_ << '\n';
    row_open_ = false;
  }

  const std::string& path() const { return path_; }

 private:
  void sep() {
    if (row_open_) out_ << ',';
    row_open_ = true;
  }
  std::string path_;
  std::ofstream out_;
  bool row_open_ = false;
};

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

class Stopwatch {
 public:
  Stopwatch() : start_(clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(clock::now() - start_).count();
  }
  void reset() { start_ = clock::now(); }

 private:
  using clock = std::chrono::steady_clock;
  clock::time_point start_;
};

}  // namespace kdarek
