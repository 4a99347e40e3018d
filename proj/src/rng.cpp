// SPDX-License-Identifier: Apache-2.0
#include "dgmoe/rng.hpp"

#include <cmath>

namespace dgmoe {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed) : key_(mix64(seed + kGolden)) {}

RngStream RngStream::child(std::string_view name) const {
  RngStream s(0);
  s.key_ = mix64(key_ ^ (fnv1a(name) | 1ull));
  return s;
}

RngStream RngStream::child(std::uint64_t index) const {
  RngStream s(0);
  s.key_ = mix64(key_ ^ ((index + 0x632BE59BD9B4E019ull) * 0xD1B54A32D192ED03ull));
  return s;
}

std::uint64_t RngStream::bits_at(std::uint64_t i) const {
  return mix64(key_ + (i + 1) * kGolden);
}

double RngStream::uniform_at(std::uint64_t i) const {
  return static_cast<double>(bits_at(i) >> 11) * 0x1.0p-53;
}

double RngStream::normal_at(std::uint64_t i) const {
  // Box-Muller on two counter slots; fully deterministic per index.
  const double u1 = uniform_at(2 * i);
  const double u2 = uniform_at(2 * i + 1);
  const double r = std::sqrt(-2.0 * std::log1p(-u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  return r * std::cos(theta);
}

}  // namespace dgmoe
