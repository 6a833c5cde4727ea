// selkd/checkpoint.hpp

// Copyright 2026  The selkd Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Binary tensor checkpoints:
//   "SELKD1" | u32 count | count x (u32 name_len, name bytes, u32 rank,
//   rank x u32 dim, product(dims) x f64)
// All integers and reals are little-endian.

#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "selkd/tensor.hpp"

namespace selkd {

inline constexpr char kCheckpointMagic[] = "SELKD1";

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f64(std::ostream& os, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i)
    b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw IoError("checkpoint: truncated file");
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw IoError("checkpoint: truncated file");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace detail

inline void write_tensors(std::ostream& os, const ParamList& tensors) {
  os.write(kCheckpointMagic, 6);
  detail::put_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (auto dim : t.shape())
      detail::put_u32(os, static_cast<std::uint32_t>(dim));
    for (double v : t.values()) detail::put_f64(os, v);
  }
}

inline ParamList read_tensors(std::istream& is) {
  char magic[6];
  if (!is.read(magic, 6) || std::memcmp(magic, kCheckpointMagic, 6) != 0) {
    throw IoError("checkpoint: bad magic (expected SELKD1)");
  }
  const auto count = detail::get_u32(is);
  ParamList out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::get_u32(is);
    std::string name(len, '\0');
    if (len && !is.read(name.data(), len)) {
      throw IoError("checkpoint: truncated tensor name");
    }
    const auto rank = detail::get_u32(is);
    Shape shape(rank);
    for (auto& d : shape) d = detail::get_u32(is);
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) v = detail::get_f64(is);
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  return out;
}

inline void save_checkpoint(const std::string& path, const ParamList& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_tensors(os, tensors);
  if (!os) throw IoError("write failed for " + path);
}

inline ParamList load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_tensors(is);
}

}  // namespace selkd
