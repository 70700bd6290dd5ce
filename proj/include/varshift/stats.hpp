#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "varshift/rng.hpp"

namespace varshift {

/// Row-major so that one sample (one vector x) is contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Raised when an argument lies outside the domain of an operation
/// (negative variance, keep probability outside (0,1), ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when operand shapes disagree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A mini-batch of feature vectors, batch_size x width, all entries finite.
class FeatureBatch {
 public:
  explicit FeatureBatch(Matrix data);

  static FeatureBatch zeros(std::size_t batch_size, std::size_t width);
  static FeatureBatch constant(std::size_t batch_size, std::size_t width, double value);

  [[nodiscard]] std::size_t batch_size() const noexcept { return static_cast<std::size_t>(data_.rows()); }
  [[nodiscard]] std::size_t width() const noexcept { return static_cast<std::size_t>(data_.cols()); }
  [[nodiscard]] double operator()(std::size_t row, std::size_t col) const { return data_(row, col); }
  [[nodiscard]] const Matrix& values() const noexcept { return data_; }

  /// Moves the storage out; the batch is left empty and must not be used.
  [[nodiscard]] Matrix release() && noexcept { return std::move(data_); }

  friend bool operator==(const FeatureBatch& a, const FeatureBatch& b) {
    return a.data_.rows() == b.data_.rows() && a.data_.cols() == b.data_.cols() &&
           a.data_ == b.data_;
  }

 private:
  Matrix data_;
};

/// Per-element population mean and variance over the batch.
struct MomentStats {
  Vector mean;
  Vector variance;

  [[nodiscard]] std::size_t width() const noexcept { return static_cast<std::size_t>(mean.size()); }
};

/// Draws a batch with i.i.d. N(mean, variance) entries. Entry (r, c) is
/// normal draw r * width + c of the seed's stream.
[[nodiscard]] FeatureBatch sample_gaussian(double mean, double variance, std::size_t batch_size,
                                           std::size_t width, RandomSeed seed);

/// Population (divide-by-N) moments per column, two-pass, slab-summed.
[[nodiscard]] MomentStats batch_moments(const FeatureBatch& x);
[[nodiscard]] MomentStats batch_moments(const Matrix& x);

/// Mean of the per-element variances.
[[nodiscard]] double pooled_variance(const MomentStats& stats);

/// Mean of the per-element means.
[[nodiscard]] double pooled_mean(const MomentStats& stats);

}  // namespace varshift
