#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "varshift/layers.hpp"

namespace varshift {

// Closed-form moments of a dropout/BN/residual network at initialization.
// BN outputs are modeled as z ~ N(0, gamma^2) with beta = 0, and the weight
// following dropout is He-initialized with zero mean.

/// Variance of Dropout_train(x) for an element with the given moments:
/// Var[x]/p + (1 - p)/p * E[x]^2.
[[nodiscard]] double dropout_train_variance(double var_x, double mean_x, KeepProbability p);

struct GaussianReluMoments {
  double mean;
  double variance;
};

/// Moments of ReLU(z) for z ~ N(0, gamma^2).
[[nodiscard]] GaussianReluMoments relu_gaussian_moments(double gamma);

/// Variance of a residual branch [.. BN - ReLU - Dropout - Weight] whose BN
/// output is N(0, gamma^2): (pi/p - 1)/pi * gamma^2 in training,
/// (pi - 1)/pi * gamma^2 at test time.
[[nodiscard]] double dropped_branch_variance(double gamma, KeepProbability p, Phase phase);

/// Inconsistency ratio of a non-residual block: (pi - 1) / (pi/p - 1).
[[nodiscard]] double delta_nonresidual(KeepProbability p);

struct ResidualConfig {
  double var_x0;
  std::vector<double> gammas;
  KeepProbability p;

  ResidualConfig(double var_x0, std::vector<double> gammas, KeepProbability p);
};

/// Trunk variance entering block `upto_l`: Var[x_0] plus the branch
/// variances of blocks 0 .. upto_l-1. Requires upto_l <= gammas.size().
[[nodiscard]] double accumulated_variance(const ResidualConfig& cfg, std::size_t upto_l, Phase phase);

/// Inconsistency ratio of x_l + f_l(x_l), i.e. of the trunk after block l.
/// Requires l < gammas.size().
[[nodiscard]] double delta_residual(const ResidualConfig& cfg, std::size_t l);

struct PreDropoutCondition {
  bool holds;
  double value;                 ///< sum over output rows
  std::vector<double> per_row;  ///< sum_{j != k} w_ij w_ik E[x_j x_k] for each row i
  /// True when every row's term is positive (the stricter, per-row reading).
  [[nodiscard]] bool holds_per_row() const noexcept;
};

/// Cross-term condition under which dropout before a weight layer is more
/// consistent than dropout after it. `second_moments` is E[x_j x_k]
/// (uncentered), width_in x width_in, symmetric.
[[nodiscard]] PreDropoutCondition predropout_condition(const LinearWeights& w,
                                                       const Eigen::MatrixXd& second_moments);

enum class EstimateSource { ClosedForm, MonteCarlo };

[[nodiscard]] std::string_view to_string(EstimateSource source) noexcept;

struct EstimateMeta {
  EstimateSource source = EstimateSource::MonteCarlo;
  std::optional<std::size_t> batch_size;
  std::optional<RandomSeed> seed;
};

/// Var_test / Var_train with provenance.
struct InconsistencyReport {
  double delta;
  double var_train;
  double var_test;
  EstimateSource source;
  std::optional<std::size_t> batch_size;
  std::optional<RandomSeed> seed;
};

[[nodiscard]] InconsistencyReport delta_from_mc(double var_train, double var_test,
                                                EstimateMeta meta = {});

}  // namespace varshift
