// Copyright 2026 The sparse-zo Authors.
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

#pragma once

// Binary checkpoint layout (all integers little-endian):
//
//   magic        8 bytes   "SZOCKPT\0"
//   version      u8        1
//   layer_count  u32
//   per layer:
//     name_len   u32
//     name       name_len bytes (UTF-8, no terminator)
//     rank       u32
//     extents    rank x u64
//     dtype      u8        1 = f32, 2 = f64
//     offset     u64       byte offset of the layer inside the payload
//   payload_len  u64
//   payload      payload_len bytes; layers back to back in layer order,
//                values in row-major order, IEEE-754 little-endian
//
// The manifest is fully validated before any payload byte is read.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "szo/error.hpp"
#include "szo/tensor.hpp"

namespace szo {

inline constexpr std::array<char, 8> kCheckpointMagic = {'S', 'Z', 'O', 'C',
                                                         'K', 'P', 'T', '\0'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

namespace checkpoint_detail {

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v,
                    int bytes = 8) {
  for (int i = 0; i < bytes; ++i) out.push_back((v >> (8 * i)) & 0xffu);
}

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  std::uint64_t uint(int bytes, const char* what) {
    std::array<unsigned char, 8> buf{};
    in_.read(reinterpret_cast<char*>(buf.data()), bytes);
    if (in_.gcount() != bytes) fail(std::string("truncated header reading ") + what);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint64_t{buf[i]} << (8 * i);
    return v;
  }

  std::string bytes(std::size_t n, const char* what) {
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      fail(std::string("truncated header reading ") + what);
    }
    return s;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw IoError("checkpoint '" + path_ + "': " + msg);
  }

 private:
  std::istream& in_;
  std::string path_;
};

template <Real T>
std::uint64_t encode(T v) {
  if constexpr (std::same_as<T, float>) {
    return std::bit_cast<std::uint32_t>(v);
  } else {
    return std::bit_cast<std::uint64_t>(v);
  }
}

template <Real T>
T decode(const unsigned char* p) {
  if constexpr (std::same_as<T, float>) {
    std::uint32_t u = 0;
    for (int i = 0; i < 4; ++i) u |= std::uint32_t{p[i]} << (8 * i);
    return std::bit_cast<float>(u);
  } else {
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= std::uint64_t{p[i]} << (8 * i);
    return std::bit_cast<double>(u);
  }
}

}  // namespace checkpoint_detail

template <Real T>
void save_checkpoint(const ParameterSet<T>& p,
                     const std::filesystem::path& path) {
  using checkpoint_detail::put_u64;
  std::vector<std::uint8_t> out(kCheckpointMagic.begin(),
                                kCheckpointMagic.end());
  out.push_back(kCheckpointVersion);
  put_u64(out, p.num_layers(), 4);
  std::uint64_t offset = 0;
  for (const auto& l : p.layers()) {
    put_u64(out, l.name().size(), 4);
    out.insert(out.end(), l.name().begin(), l.name().end());
    put_u64(out, l.shape().size(), 4);
    for (std::size_t e : l.shape()) put_u64(out, e);
    out.push_back(static_cast<std::uint8_t>(element_type_of<T>()));
    put_u64(out, offset);
    offset += l.size() * sizeof(T);
  }
  put_u64(out, offset);
  for (const auto& l : p.layers()) {
    for (T v : l.values()) {
      put_u64(out, checkpoint_detail::encode(v), sizeof(T));
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

template <Real T>
ParameterSet<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  checkpoint_detail::Reader r(f, path.string());

  const std::string magic = r.bytes(kCheckpointMagic.size(), "magic");
  if (std::memcmp(magic.data(), kCheckpointMagic.data(), magic.size()) != 0) {
    r.fail("bad magic bytes");
  }
  const auto version = r.uint(1, "version");
  if (version != kCheckpointVersion) {
    r.fail("unsupported version " + std::to_string(version));
  }

  struct Entry {
    std::string name;
    std::vector<std::size_t> shape;
    std::uint64_t offset;
  };
  const auto count = r.uint(4, "layer count");
  std::vector<Entry> manifest;
  for (std::uint64_t i = 0; i < count; ++i) {
    Entry e;
    const auto name_len = r.uint(4, "name length");
    if (name_len > (1u << 16)) r.fail("implausible name length in layer " + std::to_string(i));
    e.name = r.bytes(name_len, "layer name");
    const auto rank = r.uint(4, "rank");
    if (rank == 0 || rank > 16) r.fail("layer '" + e.name + "' has invalid rank");
    for (std::uint64_t k = 0; k < rank; ++k) {
      const auto extent = r.uint(8, "extent");
      if (extent == 0) r.fail("layer '" + e.name + "' has a zero extent");
      e.shape.push_back(extent);
    }
    const auto dtype = r.uint(1, "element type");
    if (dtype != 1 && dtype != 2) {
      r.fail("layer '" + e.name + "' has unknown element type code " +
             std::to_string(dtype));
    }
    if (dtype != static_cast<std::uint64_t>(element_type_of<T>())) {
      r.fail("layer '" + e.name + "' stores " +
             to_string(static_cast<ElementType>(dtype)) + " but " +
             to_string(element_type_of<T>()) + " was requested");
    }
    e.offset = r.uint(8, "offset");
    manifest.push_back(std::move(e));
  }
  const auto payload_len = r.uint(8, "payload length");

  // Offsets must tile the payload exactly.
  std::uint64_t expected = 0;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& e = manifest[i];
    if (e.offset != expected) {
      r.fail("layer '" + manifest[i == 0 ? 0 : i - 1].name +
             "': manifest shape does not match payload offsets");
    }
    expected += element_count(e.shape) * sizeof(T);
  }
  if (expected != payload_len) {
    r.fail("layer '" + (manifest.empty() ? std::string("<none>") : manifest.back().name) +
           "': manifest shape does not match payload size");
  }

  std::vector<unsigned char> payload(payload_len);
  f.read(reinterpret_cast<char*>(payload.data()),
         static_cast<std::streamsize>(payload_len));
  if (static_cast<std::uint64_t>(f.gcount()) != payload_len) {
    r.fail("truncated payload");
  }
  if (f.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes after payload");

  ParameterSet<T> p;
  for (const auto& e : manifest) {
    std::vector<T> values(element_count(e.shape));
    const unsigned char* src = payload.data() + e.offset;
    for (std::size_t k = 0; k < values.size(); ++k) {
      values[k] = checkpoint_detail::decode<T>(src + k * sizeof(T));
    }
    p.add_layer(e.name, e.shape, std::move(values));
  }
  return p;
}

}  // namespace szo
