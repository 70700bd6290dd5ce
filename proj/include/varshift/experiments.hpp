#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "varshift/layers.hpp"

namespace varshift {

inline constexpr std::uint64_t kDefaultSeed = 20230607;

/// Mean and standard error over independent repetitions.
struct RepeatedEstimate {
  double mean = 0.0;
  double se = 0.0;
};

[[nodiscard]] RepeatedEstimate summarize(const std::vector<double>& samples);

using Cell = std::variant<double, std::string>;

/// How a SweepResult is drawn: one curve per (group value, y column).
struct PlotSpec {
  std::string title;
  std::string x_column;
  std::string x_label;
  std::string y_label;
  std::vector<std::string> group_columns;
  std::vector<std::string> y_columns;
  bool log_x = false;
};

/// A table of grid points in deterministic config order.
struct SweepResult {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  PlotSpec plot;

  [[nodiscard]] std::size_t column_index(std::string_view column) const;
  [[nodiscard]] double number(std::size_t row, std::string_view column) const;
  void add_row(std::vector<Cell> row);
};

/// How the train-phase dropout masks enter the pre/post-dropout comparison.
enum class MaskEstimator {
  /// Masks are sampled and every layer is applied explicitly.
  Sampled,
  /// Masks are integrated out exactly given the simulated batch; the final
  /// weight's output moments follow from the batch's second-moment matrix.
  Marginalized,
};

struct Prop2SweepConfig {
  std::vector<std::size_t> widths{128, 256, 512, 1024, 2048};
  std::vector<double> mean_w_values{-0.02, -0.01, 0.0, 0.01, 0.02};
  double p = 0.5;
  std::size_t batch_size = 100000;
  std::size_t repetitions = 10;
  MaskEstimator estimator = MaskEstimator::Marginalized;
  RandomSeed seed{kDefaultSeed, 0};

  void validate() const;
};

/// Dropout before vs after a weight layer fed by a [BN-ReLU-Weight-BN-ReLU]
/// pipeline on N(0,1) input. Columns:
/// width,mean_w,delta_pre_mc,delta_pre_se,delta_post_mc,delta_post_se,gap_mc,gap_se,cross_term
[[nodiscard]] SweepResult run_prop2_sweep(const Prop2SweepConfig& cfg);

struct Prop34SweepConfig {
  std::vector<double> keep_probs{0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<double> var_x0_values{0.5, 1.0, 2.0, 4.0};
  std::size_t width = 128;
  std::size_t batch_size = 100000;
  std::size_t repetitions = 10;
  double gamma = 1.0;
  RandomSeed seed{kDefaultSeed, 0};

  void validate() const;
};

/// Non-residual branch f(x0) = [BN-ReLU-Weight-BN-ReLU-Dropout-Weight](x0)
/// versus the residual sum x0 + f(x0). Columns:
/// p,var_x0,delta_nonres_mc,delta_nonres_se,delta_res_mc,delta_res_se,delta_nonres_cf,delta_res_cf
[[nodiscard]] SweepResult run_prop34_sweep(const Prop34SweepConfig& cfg);

struct HeadCompareConfig {
  std::size_t channels = 64;
  std::size_t spatial_size = 16;
  double p = 0.5;
  std::size_t batch_size = 10000;
  double input_mean = 0.0;
  double input_variance = 1.0;
  /// Pass the input through the head's ReLU before the dropout slots.
  bool pre_activation = true;
  std::size_t repetitions = 10;
  RandomSeed seed{kDefaultSeed, 0};

  void validate() const;
};

/// Element-mask-then-GAP versus GAP-then-channel-mask on identical inputs.
/// Columns:
/// input_mean,input_var,p,spatial_size,channels,var_h4,var_h4_se,var_h5,var_h5_se,gap,gap_se,oracle_h4,oracle_h5
/// (H4: dropout before GAP, H5: dropout after GAP; gap = var_h5 - var_h4).
[[nodiscard]] SweepResult run_head_comparison(const HeadCompareConfig& cfg);

/// run_head_comparison over a (spatial_size x p) grid, concatenated in that order.
[[nodiscard]] SweepResult run_head_sweep(const HeadCompareConfig& base,
                                         const std::vector<std::size_t>& spatial_sizes,
                                         const std::vector<double>& keep_probs);

/// Moments of max(0, z) for z ~ N(mean, variance); variance 0 gives the point mass.
struct ReluMoments {
  double mean;
  double variance;
};
[[nodiscard]] ReluMoments relu_moments(double mean, double variance);

/// Writes a header row and one row per grid point; numbers with 6 significant digits.
void emit_csv(const SweepResult& result, const std::string& path);
[[nodiscard]] std::string format_csv(const SweepResult& result);

/// Writes the result as a JSON object {name, columns, rows}.
void emit_json(const SweepResult& result, const std::string& path);
[[nodiscard]] std::string format_json(const SweepResult& result);

/// Writes a self-contained SVG line chart following result.plot.
void emit_plot(const SweepResult& result, const std::string& path);
[[nodiscard]] std::string format_svg(const SweepResult& result);

}  // namespace varshift
