// Copyright 2026 The FedPower Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FEDPOWER_FPMX_HPP_
#define FEDPOWER_FPMX_HPP_

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "fedpower/errors.hpp"
#include "fedpower/linalg.hpp"

namespace fedpower {

// FPMX matrix file: 4-byte magic "FPMX", uint32 rows, uint32 cols (both
// little-endian), then rows*cols little-endian IEEE-754 doubles, row-major.

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

inline void put_f64_le(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof(bits));
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>(bits >> (8 * i)));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 |
         static_cast<std::uint32_t>(p[3]) << 24;
}

inline double get_f64_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = bits << 8 | p[i];
  double d;
  std::memcpy(&d, &bits, sizeof(d));
  return d;
}

}  // namespace detail

inline std::string encode_fpmx(const DenseMatrix& m) {
  std::string out;
  out.reserve(12 + 8 * m.size());
  out += "FPMX";
  detail::put_u32_le(out, static_cast<std::uint32_t>(m.rows()));
  detail::put_u32_le(out, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.data()) detail::put_f64_le(out, v);
  return out;
}

inline DenseMatrix decode_fpmx(const std::string& bytes,
                               const std::string& origin = "<memory>") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(p, "FPMX", 4) != 0) {
    throw IoError("FPMX: bad magic in " + origin);
  }
  const std::uint64_t rows = detail::get_u32_le(p + 4);
  const std::uint64_t cols = detail::get_u32_le(p + 8);
  if (rows == 0 || cols == 0) {
    throw IoError("FPMX: zero dimension in " + origin);
  }
  const std::uint64_t count = rows * cols;
  if (count > (bytes.size() - 12) / 8 || bytes.size() != 12 + 8 * count) {
    throw IoError("FPMX: payload size mismatch in " + origin);
  }
  std::vector<double> data(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    data[i] = detail::get_f64_le(p + 12 + 8 * i);
  }
  DenseMatrix m(rows, cols, std::move(data));
  if (!m.all_finite()) {
    throw IoError("FPMX: non-finite entry in " + origin);
  }
  return m;
}

inline void write_fpmx(const std::string& path, const DenseMatrix& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("FPMX: cannot open " + path + " for writing");
  const std::string bytes = encode_fpmx(m);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("FPMX: write failed for " + path);
}

inline DenseMatrix read_fpmx(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("FPMX: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  return decode_fpmx(bytes, path);
}

}  // namespace fedpower

#endif  // FEDPOWER_FPMX_HPP_
