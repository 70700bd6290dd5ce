#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

#include "varshift/stats.hpp"

namespace varshift {

enum class Phase { Train, Test };

[[nodiscard]] std::string_view to_string(Phase phase) noexcept;

/// Probability p that a unit survives dropout; always in the open interval (0, 1).
class KeepProbability {
 public:
  explicit KeepProbability(double p);
  [[nodiscard]] double value() const noexcept { return p_; }
  /// 1/p, the train-phase survivor scale.
  [[nodiscard]] double scale() const noexcept { return 1.0 / p_; }

 private:
  double p_;
};

using MaskBits = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A realized dropout mask: one independent Bernoulli(p) bit per entry.
struct DropoutMask {
  MaskBits bits;
  KeepProbability keep;
};

/// Draws a batch_size x width mask; bit (r, c) keeps iff uniform draw r * width + c < p.
[[nodiscard]] DropoutMask sample_mask(std::size_t batch_size, std::size_t width,
                                      KeepProbability p, RandomSeed seed);

struct DropoutResult {
  FeatureBatch output;
  std::optional<DropoutMask> mask;
};

/// Inverted dropout. Train: survivors scaled by 1/p and the mask is returned.
/// Test: identity, no mask.
[[nodiscard]] DropoutResult dropout_forward(FeatureBatch x, KeepProbability p, Phase phase,
                                            RandomSeed seed);

/// Applies a fixed mask with 1/p scaling.
[[nodiscard]] FeatureBatch dropout_with_mask(FeatureBatch x, const DropoutMask& mask);

[[nodiscard]] FeatureBatch relu_forward(FeatureBatch x);

[[nodiscard]] FeatureBatch elu_forward(FeatureBatch x, double alpha);

/// Dense weight, width_out x width_in, with the moments it was drawn from.
struct LinearWeights {
  Matrix w;
  double init_mean = 0.0;
  double init_variance = 0.0;

  [[nodiscard]] std::size_t width_out() const noexcept { return static_cast<std::size_t>(w.rows()); }
  [[nodiscard]] std::size_t width_in() const noexcept { return static_cast<std::size_t>(w.cols()); }
};

/// Wraps an explicit matrix; init moments are recorded as the matrix's own.
[[nodiscard]] LinearWeights make_weights(Matrix w);

/// Entries i.i.d. N(mean_w, 2 / width_in). For a fixed seed, changing mean_w
/// shifts every entry by the same amount (common random numbers).
[[nodiscard]] LinearWeights he_init(std::size_t width_out, std::size_t width_in, double mean_w,
                                    RandomSeed seed);

/// y = x W^T row by row. Square weights are applied in place slab by slab.
[[nodiscard]] FeatureBatch linear_forward(FeatureBatch x, const LinearWeights& w);

inline constexpr double kBatchNormEpsilon = 1e-5;

/// Batch normalization with statistics frozen from a training batch.
/// beta is fixed at zero and gamma is a scalar shared by all elements.
struct BNState {
  double gamma = 1.0;
  double beta = 0.0;
  Vector frozen_mean;
  Vector frozen_variance;
  double epsilon = kBatchNormEpsilon;

  [[nodiscard]] bool calibrated() const noexcept { return frozen_mean.size() > 0; }
};

/// Freezes the population moments of a training batch (batch_size >= 2).
[[nodiscard]] BNState bn_calibrate(const FeatureBatch& x_train, double gamma);

/// gamma * (x - frozen_mean) / sqrt(frozen_variance + epsilon). Same map in both phases.
[[nodiscard]] FeatureBatch bn_forward(FeatureBatch x, const BNState& state);

[[nodiscard]] FeatureBatch skip_add(FeatureBatch x, const FeatureBatch& f);

/// batch_size x channels x spatial_size, stored as a row-major
/// batch_size x (channels * spatial_size) matrix, channel-major within a row.
class SpatialFeatureBatch {
 public:
  SpatialFeatureBatch(Matrix data, std::size_t channels, std::size_t spatial_size);

  [[nodiscard]] std::size_t batch_size() const noexcept { return static_cast<std::size_t>(data_.rows()); }
  [[nodiscard]] std::size_t channels() const noexcept { return channels_; }
  [[nodiscard]] std::size_t spatial_size() const noexcept { return spatial_; }
  [[nodiscard]] double operator()(std::size_t b, std::size_t c, std::size_t s) const {
    return data_(b, c * spatial_ + s);
  }
  [[nodiscard]] const Matrix& values() const noexcept { return data_; }
  [[nodiscard]] Matrix release() && noexcept { return std::move(data_); }

 private:
  Matrix data_;
  std::size_t channels_;
  std::size_t spatial_;
};

/// Per sample and channel: mean over spatial positions.
[[nodiscard]] FeatureBatch gap_forward(const SpatialFeatureBatch& x);

/// Dropout with an independent mask bit per (sample, channel, position).
[[nodiscard]] SpatialFeatureBatch spatial_dropout_elementwise(SpatialFeatureBatch x,
                                                              KeepProbability p, Phase phase,
                                                              RandomSeed seed);

}  // namespace varshift
