// SPDX-License-Identifier: Apache-2.0
#include "dgmoe/smtx.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "dgmoe/errors.hpp"

namespace dgmoe {

namespace {

void put_u64_le(std::ofstream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64_le(std::ifstream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void save_smtx(const std::filesystem::path& path, const Tensor& t) {
  if (t.rank() == 0 || t.rank() > 255)
    throw DimensionError("save_smtx: unsupported rank " +
                         std::to_string(t.rank()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("save_smtx: cannot open " + path.string());
  out.write("SMTX", 4);
  const unsigned char version = 1;
  const unsigned char rank = static_cast<unsigned char>(t.rank());
  out.write(reinterpret_cast<const char*>(&version), 1);
  out.write(reinterpret_cast<const char*>(&rank), 1);
  for (std::size_t d : t.shape) put_u64_le(out, d);
  std::vector<float> payload(t.data.size());
  for (std::size_t i = 0; i < t.data.size(); ++i)
    payload[i] = static_cast<float>(t.data[i]);
  static_assert(sizeof(float) == 4);
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * 4));
  if (!out) throw ConfigError("save_smtx: write failed for " + path.string());
}

Tensor load_smtx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("load_smtx: cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "SMTX", 4) != 0)
    throw ConfigError("load_smtx: bad magic in " + path.string());
  unsigned char version = 0, rank = 0;
  in.read(reinterpret_cast<char*>(&version), 1);
  in.read(reinterpret_cast<char*>(&rank), 1);
  if (version != 1)
    throw ConfigError("load_smtx: unsupported version " +
                      std::to_string(version) + " in " + path.string());
  if (rank == 0) throw ConfigError("load_smtx: zero rank in " + path.string());
  std::vector<std::size_t> shape(rank);
  std::size_t numel = 1;
  for (int i = 0; i < rank; ++i) {
    shape[i] = static_cast<std::size_t>(get_u64_le(in));
    numel *= shape[i];
  }
  std::vector<float> payload(numel);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(numel * 4));
  if (!in)
    throw ConfigError("load_smtx: truncated payload in " + path.string());
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < numel; ++i)
    t.data[i] = static_cast<double>(payload[i]);
  return t;
}

void save_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("save_manifest: cannot open " + path.string());
  for (const auto& [k, v] : m) out << k << "=" << v << "\n";
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_manifest: cannot open " + path.string());
  Manifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto pos = line.find('=');
    if (pos == std::string::npos)
      throw ConfigError("load_manifest: malformed line '" + line + "' in " +
                        path.string());
    m.emplace_back(line.substr(0, pos), line.substr(pos + 1));
  }
  return m;
}

const std::string& manifest_get(const Manifest& m, const std::string& key) {
  for (const auto& [k, v] : m)
    if (k == key) return v;
  throw ConfigError("manifest: missing required key: " + key);
}

bool manifest_has(const Manifest& m, const std::string& key) {
  for (const auto& [k, v] : m)
    if (k == key) return true;
  return false;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace dgmoe
