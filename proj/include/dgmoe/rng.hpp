// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

namespace dgmoe {

/// Counter-based seeded random stream. Every draw is a pure function of
/// (key, index), so parallel consumers can take index-derived slices of a
/// stream and results stay schedule-independent. Child streams are derived
/// by name or index; all commands route their randomness through named
/// children of a single root seed.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  RngStream child(std::string_view name) const;
  RngStream child(std::uint64_t index) const;

  std::uint64_t bits_at(std::uint64_t i) const;
  double uniform_at(std::uint64_t i) const;  // [0, 1)
  double normal_at(std::uint64_t i) const;   // standard normal

  // Stateful convenience over the same key; a stream instance should be
  // consumed either through *_at or through next_*, not both.
  std::uint64_t next_bits() { return bits_at(cursor_++); }
  double next_uniform() { return uniform_at(cursor_++); }
  double next_normal() { return normal_at(cursor_++); }
  std::uint64_t next_index(std::uint64_t n) { return next_bits() % n; }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t cursor_ = 0;
};

}  // namespace dgmoe
