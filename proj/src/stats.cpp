#include "varshift/stats.hpp"

#include <algorithm>
#include <cmath>

#include "finite.hpp"
#include "parallel.hpp"

namespace varshift {

FeatureBatch::FeatureBatch(Matrix data) : data_(std::move(data)) {
  if (data_.rows() < 1 || data_.cols() < 1) {
    throw ShapeError("FeatureBatch requires batch_size >= 1 and width >= 1, got " +
                     std::to_string(data_.rows()) + "x" + std::to_string(data_.cols()));
  }
  if (!detail::all_finite(data_.data(), static_cast<std::size_t>(data_.size()))) {
    throw DomainError("FeatureBatch entries must be finite");
  }
}

FeatureBatch FeatureBatch::zeros(std::size_t batch_size, std::size_t width) {
  return constant(batch_size, width, 0.0);
}

FeatureBatch FeatureBatch::constant(std::size_t batch_size, std::size_t width, double value) {
  return FeatureBatch(Matrix::Constant(static_cast<Eigen::Index>(batch_size),
                                       static_cast<Eigen::Index>(width), value));
}

FeatureBatch sample_gaussian(double mean, double variance, std::size_t batch_size,
                             std::size_t width, RandomSeed seed) {
  if (!(variance >= 0.0) || !std::isfinite(variance)) {
    throw DomainError("sample_gaussian: variance must be finite and >= 0, got " +
                      std::to_string(variance));
  }
  if (!std::isfinite(mean)) {
    throw DomainError("sample_gaussian: mean must be finite");
  }
  if (batch_size < 1 || width < 1) {
    throw ShapeError("sample_gaussian: batch_size and width must be >= 1");
  }
  Matrix data(static_cast<Eigen::Index>(batch_size), static_cast<Eigen::Index>(width));
  const double sd = std::sqrt(variance);
  const CounterRng rng(seed);
  const auto slabs = detail::make_slabs(batch_size);
  detail::parallel_for(slabs.size(), [&](std::size_t s) {
    const auto& slab = slabs[s];
    double* out = data.data() + slab.begin * width;
    const std::uint64_t count = slab.size() * width;
    rng.fill_normal(slab.begin * width, out, count);
    for (std::uint64_t i = 0; i < count; ++i) {
      out[i] = mean + sd * out[i];
    }
  });
  return FeatureBatch(std::move(data));
}

MomentStats batch_moments(const Matrix& x) {
  const auto rows = static_cast<std::size_t>(x.rows());
  const auto cols = x.cols();
  if (rows < 1 || cols < 1) {
    throw ShapeError("batch_moments: empty batch");
  }
  const auto slabs = detail::make_slabs(rows);
  std::vector<Vector> partial(slabs.size(), Vector::Zero(cols));

  // Row-major storage: accumulate whole rows so the inner loop is contiguous.
  detail::parallel_for(slabs.size(), [&](std::size_t s) {
    double* acc = partial[s].data();
    for (std::size_t r = slabs[s].begin; r < slabs[s].end; ++r) {
      const double* row = x.data() + r * static_cast<std::size_t>(cols);
      for (Eigen::Index c = 0; c < cols; ++c) acc[c] += row[c];
    }
  });
  Vector sum = Vector::Zero(cols);
  for (const auto& p : partial) sum += p;
  const double n = static_cast<double>(rows);
  const Vector mean = sum / n;

  detail::parallel_for(slabs.size(), [&](std::size_t s) {
    double* acc = partial[s].data();
    std::fill(acc, acc + cols, 0.0);
    const double* mu = mean.data();
    for (std::size_t r = slabs[s].begin; r < slabs[s].end; ++r) {
      const double* row = x.data() + r * static_cast<std::size_t>(cols);
      for (Eigen::Index c = 0; c < cols; ++c) {
        const double d = row[c] - mu[c];
        acc[c] += d * d;
      }
    }
  });
  Vector ss = Vector::Zero(cols);
  for (const auto& p : partial) ss += p;

  return MomentStats{std::move(mean), ss / n};
}

MomentStats batch_moments(const FeatureBatch& x) { return batch_moments(x.values()); }

double pooled_variance(const MomentStats& stats) {
  if (stats.variance.size() == 0) {
    throw ShapeError("pooled_variance: empty stats");
  }
  return stats.variance.mean();
}

double pooled_mean(const MomentStats& stats) {
  if (stats.mean.size() == 0) {
    throw ShapeError("pooled_mean: empty stats");
  }
  return stats.mean.mean();
}

}  // namespace varshift
