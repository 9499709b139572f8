// Copyright 2026 The riskbias Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "riskbias/errors.hpp"
#include "riskbias/mlp.hpp"

namespace riskbias {

/// File layout, all integers little-endian:
///   8 bytes  magic "RISKBIAS"
///   u32      format version
///   u64      header length H
///   H bytes  JSON architecture descriptor {"kind", "nets":[{"name","dims"}], "meta"}
///   for each net, for each layer: weight (out*in f64) then bias (out f64)
struct Checkpoint {
  static constexpr char kMagic[8] = {'R', 'I', 'S', 'K', 'B', 'I', 'A', 'S'};
  static constexpr std::uint32_t kVersion = 1;

  std::string kind;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, MlpParams>> nets;

  const MlpParams& net(const std::string& name) const {
    for (const auto& [n, p] : nets)
      if (n == name) return p;
    throw FormatError("checkpoint has no network named '" + name + "'");
  }

  nlohmann::json descriptor() const {
    nlohmann::json d;
    d["kind"] = kind;
    d["nets"] = nlohmann::json::array();
    for (const auto& [n, p] : nets) d["nets"].push_back({{"name", n}, {"dims", p.dims()}});
    return d;
  }
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& os, double d) { put_u64(os, std::bit_cast<std::uint64_t>(d)); }

inline std::uint64_t get_uint(std::istream& is, int bytes, const std::string& what) {
  unsigned char b[8] = {};
  is.read(reinterpret_cast<char*>(b), bytes);
  if (is.gcount() != bytes) throw FormatError("truncated file while reading " + what);
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is) {
  return std::bit_cast<double>(get_uint(is, 8, "weights"));
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  nlohmann::json header = ckpt.descriptor();
  header["meta"] = ckpt.meta;
  const std::string text = header.dump();
  os.write(Checkpoint::kMagic, sizeof(Checkpoint::kMagic));
  detail::put_u32(os, Checkpoint::kVersion);
  detail::put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, p] : ckpt.nets) {
    for (const auto& l : p.layers) {
      for (double w : l.weight.data()) detail::put_f64(os, w);
      for (double b : l.bias.data()) detail::put_f64(os, b);
    }
  }
  if (!os) throw IoError("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[8] = {};
  is.read(magic, 8);
  if (is.gcount() != 8 || std::memcmp(magic, Checkpoint::kMagic, 8) != 0) {
    throw FormatError(path.string() + ": not a riskbias checkpoint (bad magic)");
  }
  const auto version = detail::get_uint(is, 4, "version");
  if (version != Checkpoint::kVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " +
                      std::to_string(version));
  }
  const auto header_len = detail::get_uint(is, 8, "header length");
  if (header_len > (1u << 24)) throw FormatError("checkpoint header too large");
  std::string text(header_len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(header_len));
  if (static_cast<std::uint64_t>(is.gcount()) != header_len)
    throw FormatError("truncated file while reading header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  Checkpoint ckpt;
  try {
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.meta = header.value("meta", nlohmann::json::object());
    for (const auto& n : header.at("nets")) {
      auto dims = n.at("dims").get<std::vector<std::size_t>>();
      ckpt.nets.emplace_back(n.at("name").get<std::string>(), MlpParams::zeros(dims));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint descriptor: ") + e.what());
  }
  for (auto& [name, p] : ckpt.nets) {
    for (auto& l : p.layers) {
      for (double& w : l.weight.data()) w = detail::get_f64(is);
      for (double& b : l.bias.data()) b = detail::get_f64(is);
    }
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw FormatError(path.string() + ": trailing bytes after weights");
  return ckpt;
}

/// Loads and verifies that kind and every network's widths match `expected`.
inline Checkpoint load_checkpoint(const std::filesystem::path& path,
                                  const nlohmann::json& expected_descriptor) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.descriptor() != expected_descriptor) {
    throw MismatchError(path.string() + ": architecture " + ckpt.descriptor().dump() +
                        " does not match requested " + expected_descriptor.dump());
  }
  return ckpt;
}

}  // namespace riskbias
