#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>

namespace varshift::detail {

// Non-finite doubles are exactly those with every exponent bit set.
inline bool all_finite(const double* p, std::size_t n) noexcept {
  constexpr std::uint64_t kExponent = 0x7FF0000000000000ULL;
  std::uint64_t bad = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bad |= static_cast<std::uint64_t>((std::bit_cast<std::uint64_t>(p[i]) & kExponent) == kExponent);
  }
  return bad == 0;
}

}  // namespace varshift::detail
