#include "varshift/variance_calculus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace varshift {

namespace {

constexpr double kPi = std::numbers::pi;

void require_gamma(double gamma, const char* where) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw DomainError(std::string(where) + ": gamma must be finite and > 0");
  }
}

// (pi/p - 1)/pi and (pi - 1)/pi: branch variance per unit gamma^2.
double branch_factor(KeepProbability p, Phase phase) {
  return phase == Phase::Train ? (kPi / p.value() - 1.0) / kPi : (kPi - 1.0) / kPi;
}

}  // namespace

double dropout_train_variance(double var_x, double mean_x, KeepProbability p) {
  if (!(var_x >= 0.0)) {
    throw DomainError("dropout_train_variance: variance must be >= 0");
  }
  const double q = p.value();
  return var_x / q + (1.0 - q) / q * mean_x * mean_x;
}

GaussianReluMoments relu_gaussian_moments(double gamma) {
  require_gamma(gamma, "relu_gaussian_moments");
  return {gamma / std::sqrt(2.0 * kPi), (kPi - 1.0) / (2.0 * kPi) * gamma * gamma};
}

double dropped_branch_variance(double gamma, KeepProbability p, Phase phase) {
  require_gamma(gamma, "dropped_branch_variance");
  return branch_factor(p, phase) * gamma * gamma;
}

double delta_nonresidual(KeepProbability p) {
  return (kPi - 1.0) / (kPi / p.value() - 1.0);
}

ResidualConfig::ResidualConfig(double var_x0_, std::vector<double> gammas_, KeepProbability p_)
    : var_x0(var_x0_), gammas(std::move(gammas_)), p(p_) {
  if (!(var_x0 >= 0.0) || !std::isfinite(var_x0)) {
    throw DomainError("ResidualConfig: var_x0 must be finite and >= 0");
  }
  for (double g : gammas) require_gamma(g, "ResidualConfig");
}

double accumulated_variance(const ResidualConfig& cfg, std::size_t upto_l, Phase phase) {
  if (upto_l > cfg.gammas.size()) {
    throw std::out_of_range("accumulated_variance: block index " + std::to_string(upto_l) +
                            " exceeds " + std::to_string(cfg.gammas.size()) + " blocks");
  }
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < upto_l; ++i) sum_sq += cfg.gammas[i] * cfg.gammas[i];
  return cfg.var_x0 + branch_factor(cfg.p, phase) * sum_sq;
}

double delta_residual(const ResidualConfig& cfg, std::size_t l) {
  if (l >= cfg.gammas.size()) {
    throw std::out_of_range("delta_residual: block " + std::to_string(l) + " needs gamma_" +
                            std::to_string(l) + " but only " + std::to_string(cfg.gammas.size()) +
                            " are given");
  }
  return accumulated_variance(cfg, l + 1, Phase::Test) /
         accumulated_variance(cfg, l + 1, Phase::Train);
}

bool PreDropoutCondition::holds_per_row() const noexcept {
  return !per_row.empty() && std::all_of(per_row.begin(), per_row.end(), [](double v) { return v > 0.0; });
}

PreDropoutCondition predropout_condition(const LinearWeights& w,
                                         const Eigen::MatrixXd& second_moments) {
  const auto n = static_cast<Eigen::Index>(w.width_in());
  if (second_moments.rows() != n || second_moments.cols() != n) {
    throw ShapeError("predropout_condition: second moments must be " + std::to_string(n) + "x" +
                     std::to_string(n));
  }
  const double scale = std::max(1.0, second_moments.cwiseAbs().maxCoeff());
  if ((second_moments - second_moments.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw DomainError("predropout_condition: second-moment matrix is not symmetric");
  }
  // w_i^T S w_i minus the diagonal contribution sum_j w_ij^2 S_jj.
  const Eigen::MatrixXd ws = w.w * second_moments;
  const Eigen::VectorXd quad = ws.cwiseProduct(w.w).rowwise().sum();
  const Eigen::VectorXd diag = w.w.cwiseAbs2() * second_moments.diagonal();
  const Eigen::VectorXd cross = quad - diag;

  PreDropoutCondition out;
  out.per_row.assign(cross.data(), cross.data() + cross.size());
  out.value = cross.sum();
  out.holds = out.value > 0.0;
  return out;
}

std::string_view to_string(EstimateSource source) noexcept {
  return source == EstimateSource::ClosedForm ? "closed_form" : "monte_carlo";
}

InconsistencyReport delta_from_mc(double var_train, double var_test, EstimateMeta meta) {
  if (!(var_train > 0.0)) {
    throw DomainError("delta_from_mc: train-phase variance must be > 0");
  }
  if (!(var_test >= 0.0)) {
    throw DomainError("delta_from_mc: test-phase variance must be >= 0");
  }
  return InconsistencyReport{var_test / var_train, var_train, var_test, meta.source,
                             meta.batch_size, meta.seed};
}

}  // namespace varshift
