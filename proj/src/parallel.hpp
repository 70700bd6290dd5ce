#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace varshift::detail {

// Slab partitioning is a function of the problem size only, never of the
// thread count, so reductions over slabs are bit-reproducible.
inline constexpr std::size_t kSlabRows = 2048;

struct Slab {
  std::size_t begin;
  std::size_t end;
  [[nodiscard]] std::size_t size() const noexcept { return end - begin; }
};

inline std::vector<Slab> make_slabs(std::size_t rows, std::size_t slab_rows = kSlabRows) {
  std::vector<Slab> slabs;
  for (std::size_t b = 0; b < rows; b += slab_rows) {
    slabs.push_back({b, std::min(rows, b + slab_rows)});
  }
  return slabs;
}

/// Runs fn(i) for i in [0, count); iterations must be independent.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const auto n = static_cast<std::int64_t>(count);
#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic, 1)
#endif
  for (std::int64_t i = 0; i < n; ++i) {
    fn(static_cast<std::size_t>(i));
  }
}

}  // namespace varshift::detail
