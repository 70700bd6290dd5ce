#include "varshift/rng.hpp"

#include <algorithm>
#include <cmath>

namespace varshift {

RandomSeed RandomSeed::derive(std::initializer_list<std::uint64_t> coords) const {
  std::uint64_t h = mix64(stream_id ^ 0x632BE59BD9B4E019ULL);
  for (std::uint64_t c : coords) {
    h = mix64(h ^ mix64(c + 0x8CB92BA72F3D8DD7ULL));
  }
  return RandomSeed{seed, h};
}

CounterRng::CounterRng(RandomSeed seed) noexcept
    : base_(mix64(seed.seed ^ mix64(seed.stream_id + 0xD1B54A32D192ED03ULL))) {}

namespace {

constexpr double kCentral = 0.425;

// Central region of Wichura's AS241 quantile (|u - 1/2| <= 0.425). Branch-free
// so fill_normal can vectorize it; evaluated outside the region it is finite
// and gets overwritten.
inline double central_quantile(double u) noexcept {
  const double q = u - 0.5;
  const double r = 0.180625 - q * q;
  return q *
         (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
              45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
           133.14166789178437745) * r + 3.387132872796366608) /
         (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
              21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
           42.313330701600911252) * r + 1.0);
}

inline double tail_quantile(double u) noexcept {
  const double q = u - 0.5;
  double r = std::sqrt(-std::log(q < 0.0 ? u : 1.0 - u));
  double v;
  if (r <= 5.0) {
    r -= 1.6;
    v = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
             1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
          4.6303378461565452959) * r + 1.42343711074968357734) /
        (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
             0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
          2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    v = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
             0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
          5.4637849111641143699) * r + 6.6579046435011037772) /
        (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
             7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
          0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -v : v;
}

}  // namespace

double CounterRng::normal(std::uint64_t k) const noexcept {
  const double u = uniform_open(k);
  return std::fabs(u - 0.5) <= kCentral ? central_quantile(u) : tail_quantile(u);
}

void CounterRng::fill_normal(std::uint64_t k0, double* out, std::uint64_t count) const noexcept {
  constexpr std::uint64_t kChunk = 256;
  double u[kChunk];
  for (std::uint64_t base = 0; base < count; base += kChunk) {
    const std::uint64_t m = std::min(kChunk, count - base);
    double* o = out + base;
    for (std::uint64_t j = 0; j < m; ++j) u[j] = uniform_open(k0 + base + j);
    for (std::uint64_t j = 0; j < m; ++j) o[j] = central_quantile(u[j]);
    for (std::uint64_t j = 0; j < m; ++j) {
      if (std::fabs(u[j] - 0.5) > kCentral) o[j] = tail_quantile(u[j]);
    }
  }
}

}  // namespace varshift
