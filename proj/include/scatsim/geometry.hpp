// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace scatsim {

// Cache shape: n_ways ways, 2^b_indices indices per way.
struct CacheGeometry {
  uint32_t n_ways = 8;
  uint32_t b_indices = 11;

  uint32_t indices_per_way() const { return 1u << b_indices; }
  uint64_t total_slots() const {
    return static_cast<uint64_t>(n_ways) << b_indices;
  }

  void validate() const {
    if (n_ways < 1) throw std::invalid_argument("geometry: n_ways must be >= 1");
    if (b_indices < 1 || b_indices > 28)
      throw std::invalid_argument("geometry: b_indices out of range [1,28]");
    if (total_slots() > (1ull << 28))
      throw std::invalid_argument("geometry: total slots exceed 2^28");
  }

  bool operator==(const CacheGeometry&) const = default;

  std::string str() const {
    return std::to_string(n_ways) + "x" + std::to_string(b_indices);
  }
};

// Opaque isolation-domain identifier; equality is the only relation.
struct SecurityDomainId {
  uint64_t value = 0;
  bool operator==(const SecurityDomainId&) const = default;
};

// Memory address at cache-line granularity; opaque 64-bit value.
struct LineAddress {
  uint64_t value = 0;
  bool operator==(const LineAddress&) const = default;
  auto operator<=>(const LineAddress&) const = default;
};

// Each simulated actor draws fresh addresses from its own counter
// namespace, so addresses never repeat within or across roles.
enum class Role : uint8_t {
  Attacker = 1,
  Victim = 2,
  Flusher = 3,
  Transmitter = 4,
  Receiver = 5,
};

constexpr uint64_t role_tag(Role r) {
  return static_cast<uint64_t>(r) << 56;
}

inline SecurityDomainId default_sdid(Role r) {
  return SecurityDomainId{static_cast<uint64_t>(r)};
}

}  // namespace scatsim

template <>
struct std::hash<scatsim::LineAddress> {
  size_t operator()(const scatsim::LineAddress& a) const noexcept {
    uint64_t x = a.value;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    return static_cast<size_t>(x ^ (x >> 31));
  }
};

template <>
struct std::hash<scatsim::SecurityDomainId> {
  size_t operator()(const scatsim::SecurityDomainId& s) const noexcept {
    return std::hash<uint64_t>{}(s.value);
  }
};
