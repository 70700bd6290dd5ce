#include "varshift/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "parallel.hpp"
#include "varshift/variance_calculus.hpp"

namespace varshift {

namespace {

// Stream coordinates: (experiment, repetition, role[, extra]).
enum : std::uint64_t { kExpPrePost = 2, kExpResidual = 3, kExpHead = 5 };
enum : std::uint64_t { kRoleInput = 0, kRoleW1 = 1, kRoleW2 = 2, kRoleMask = 3, kRoleMaskPre = 4 };

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

FeatureBatch copy_of(const FeatureBatch& x) { return FeatureBatch(x.values()); }

// Uncentered second moments (1/B) sum_b x_b x_b^T, accumulated over a fixed
// number of row groups so the reduction order never depends on threads.
Eigen::MatrixXd second_moment_matrix(const Matrix& x) {
  constexpr std::size_t kGroups = 8;
  const auto rows = static_cast<std::size_t>(x.rows());
  const auto n = x.cols();
  const std::size_t group_rows = (rows + kGroups - 1) / kGroups;
  const auto groups = detail::make_slabs(rows, group_rows);
  std::vector<Eigen::MatrixXd> partial(groups.size());
  detail::parallel_for(groups.size(), [&](std::size_t g) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
    for (const auto& s : detail::make_slabs(groups[g].size())) {
      const auto block = x.middleRows(static_cast<Eigen::Index>(groups[g].begin + s.begin),
                                      static_cast<Eigen::Index>(s.size()));
      acc.selfadjointView<Eigen::Lower>().rankUpdate(block.transpose());
    }
    partial[g] = std::move(acc);
  });
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, n);
  for (const auto& p : partial) sum += p;
  Eigen::MatrixXd full = sum.selfadjointView<Eigen::Lower>();
  return full / static_cast<double>(rows);
}

// [BN - ReLU - Weight - BN - ReLU] applied to N(0, 1) input, gamma = 1.
FeatureBatch prepost_features(std::size_t width, std::size_t batch, RandomSeed rep_seed) {
  FeatureBatch g = sample_gaussian(0.0, 1.0, batch, width, rep_seed.derive({kRoleInput}));
  const BNState bn1 = bn_calibrate(g, 1.0);
  FeatureBatch h = relu_forward(bn_forward(std::move(g), bn1));
  const LinearWeights w1 = he_init(width, width, 0.0, rep_seed.derive({kRoleW1}));
  FeatureBatch z = linear_forward(std::move(h), w1);
  const BNState bn2 = bn_calibrate(z, 1.0);
  return relu_forward(bn_forward(std::move(z), bn2));
}

struct PrePostVariances {
  double test;
  double pre_train;
  double post_train;
};

PrePostVariances prepost_sampled(const FeatureBatch& x, const LinearWeights& w2,
                                 KeepProbability p, RandomSeed rep_seed) {
  FeatureBatch y = linear_forward(copy_of(x), w2);
  const double test = pooled_variance(batch_moments(y));
  FeatureBatch post =
      dropout_forward(std::move(y), p, Phase::Train, rep_seed.derive({kRoleMask})).output;
  FeatureBatch dropped =
      dropout_forward(copy_of(x), p, Phase::Train, rep_seed.derive({kRoleMaskPre})).output;
  FeatureBatch pre = linear_forward(std::move(dropped), w2);
  return {test, pooled_variance(batch_moments(pre)), pooled_variance(batch_moments(post))};
}

// Given batch moments of x, the expected (over fresh per-sample masks) batch
// variance of (W D(x))_i and D(W x)_i is Var[(Wx)_i] plus
// (1/p - 1)(1 - 1/B) times sum_j w_ij^2 S_jj or w_i^T S w_i respectively.
// w_i^T S w_i is the cross term plus the diagonal part.
PrePostVariances prepost_marginalized(const Vector& mean, const Eigen::MatrixXd& second,
                                      const PreDropoutCondition& cond, std::size_t batch,
                                      const LinearWeights& w2, KeepProbability p) {
  const Eigen::VectorXd diag = w2.w.cwiseAbs2() * second.diagonal();
  const Eigen::VectorXd cross = Eigen::Map<const Eigen::VectorXd>(
      cond.per_row.data(), static_cast<Eigen::Index>(cond.per_row.size()));
  const Eigen::VectorXd quad_s = cross + diag;
  const Eigen::VectorXd wmean = w2.w * mean;
  const Eigen::VectorXd quad_c = quad_s - wmean.cwiseAbs2();
  const double c = (p.scale() - 1.0) * (1.0 - 1.0 / static_cast<double>(batch));
  const double test = quad_c.mean();
  return {test, test + c * diag.mean(), test + c * quad_s.mean()};
}

}  // namespace

RepeatedEstimate summarize(const std::vector<double>& samples) {
  if (samples.empty()) {
    throw std::invalid_argument("summarize: no samples");
  }
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= n;
  if (samples.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

std::size_t SweepResult::column_index(std::string_view column) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == column) return i;
  }
  throw std::out_of_range("no column '" + std::string(column) + "' in " + name);
}

double SweepResult::number(std::size_t row, std::string_view column) const {
  const Cell& cell = rows.at(row).at(column_index(column));
  if (const auto* v = std::get_if<double>(&cell)) return *v;
  throw std::invalid_argument("column '" + std::string(column) + "' is not numeric");
}

void SweepResult::add_row(std::vector<Cell> row) {
  if (row.size() != columns.size()) {
    throw std::invalid_argument("row has " + std::to_string(row.size()) + " cells, expected " +
                                std::to_string(columns.size()));
  }
  rows.push_back(std::move(row));
}

void Prop2SweepConfig::validate() const {
  require(!widths.empty(), "widths must not be empty");
  for (auto w : widths) require(w >= 1, "widths must be >= 1");
  require(!mean_w_values.empty(), "mean_w values must not be empty");
  (void)KeepProbability(p);
  require(batch_size >= 2, "batch_size must be >= 2");
  require(repetitions >= 2, "repetitions must be >= 2 to estimate a standard error");
}

SweepResult run_prop2_sweep(const Prop2SweepConfig& cfg) {
  cfg.validate();
  const KeepProbability p(cfg.p);
  const std::size_t n_mu = cfg.mean_w_values.size();

  SweepResult result;
  result.name = "prepost_dropout";
  result.columns = {"width",         "mean_w", "delta_pre_mc", "delta_pre_se", "delta_post_mc",
                    "delta_post_se", "gap_mc", "gap_se",       "cross_term"};
  result.plot = PlotSpec{"Dropout before vs after a weight layer (p=" + short_number(cfg.p) + ")",
                         "mean_w",
                         "E[W]",
                         "inconsistency ratio Delta",
                         {"width"},
                         {"delta_pre_mc", "delta_post_mc"},
                         false};

  for (std::size_t wi = 0; wi < cfg.widths.size(); ++wi) {
    const std::size_t width = cfg.widths[wi];
    std::vector<std::vector<double>> pre(n_mu), post(n_mu), gap(n_mu), cross(n_mu);
    for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
      const RandomSeed rep_seed = cfg.seed.derive({kExpPrePost, width, rep});
      const FeatureBatch x = prepost_features(width, cfg.batch_size, rep_seed);

      const Vector mean = batch_moments(x).mean;
      const Eigen::MatrixXd second = second_moment_matrix(x.values());
      for (std::size_t mi = 0; mi < n_mu; ++mi) {
        // The same W2 stream for every mean_w: the matrices differ by a constant shift.
        const LinearWeights w2 =
            he_init(width, width, cfg.mean_w_values[mi], rep_seed.derive({kRoleW2}));
        const PreDropoutCondition cond = predropout_condition(w2, second);
        const PrePostVariances v =
            cfg.estimator == MaskEstimator::Marginalized
                ? prepost_marginalized(mean, second, cond, cfg.batch_size, w2, p)
                : prepost_sampled(x, w2, p, rep_seed);
        const double d_pre = delta_from_mc(v.pre_train, v.test).delta;
        const double d_post = delta_from_mc(v.post_train, v.test).delta;
        pre[mi].push_back(d_pre);
        post[mi].push_back(d_post);
        gap[mi].push_back(d_pre - d_post);
        cross[mi].push_back(cond.value / static_cast<double>(width));
      }
    }
    for (std::size_t mi = 0; mi < n_mu; ++mi) {
      const auto a = summarize(pre[mi]);
      const auto b = summarize(post[mi]);
      const auto g = summarize(gap[mi]);
      result.add_row({static_cast<double>(width), cfg.mean_w_values[mi], a.mean, a.se, b.mean,
                      b.se, g.mean, g.se, summarize(cross[mi]).mean});
    }
  }
  return result;
}

void Prop34SweepConfig::validate() const {
  require(!keep_probs.empty(), "keep probabilities must not be empty");
  for (double p : keep_probs) (void)KeepProbability(p);
  require(!var_x0_values.empty(), "var_x0 values must not be empty");
  for (double v : var_x0_values) require(v >= 0.0 && std::isfinite(v), "var_x0 must be >= 0");
  require(width >= 1, "width must be >= 1");
  require(batch_size >= 2, "batch_size must be >= 2");
  require(repetitions >= 2, "repetitions must be >= 2 to estimate a standard error");
  require(gamma > 0.0 && std::isfinite(gamma), "gamma must be > 0");
}

SweepResult run_prop34_sweep(const Prop34SweepConfig& cfg) {
  cfg.validate();
  const std::size_t n_p = cfg.keep_probs.size();
  const std::size_t n_v = cfg.var_x0_values.size();
  std::vector<std::vector<double>> nonres(n_p * n_v), res(n_p * n_v);

  for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
    // Inputs, weights and masks are shared across the grid (common random numbers).
    const RandomSeed rep_seed = cfg.seed.derive({kExpResidual, rep});
    const LinearWeights w1 = he_init(cfg.width, cfg.width, 0.0, rep_seed.derive({kRoleW1}));
    const LinearWeights w2 = he_init(cfg.width, cfg.width, 0.0, rep_seed.derive({kRoleW2}));
    for (std::size_t vi = 0; vi < n_v; ++vi) {
      const FeatureBatch x0 = sample_gaussian(0.0, cfg.var_x0_values[vi], cfg.batch_size,
                                              cfg.width, rep_seed.derive({kRoleInput}));
      const BNState bn1 = bn_calibrate(x0, 1.0);
      FeatureBatch z = linear_forward(relu_forward(bn_forward(copy_of(x0), bn1)), w1);
      const BNState bn2 = bn_calibrate(z, cfg.gamma);
      const FeatureBatch r = relu_forward(bn_forward(std::move(z), bn2));

      // Test phase: dropout is the identity, so one pass serves every p.
      FeatureBatch f_test = linear_forward(copy_of(r), w2);
      const double nonres_test = pooled_variance(batch_moments(f_test));
      const double res_test = pooled_variance(batch_moments(skip_add(std::move(f_test), x0)));

      for (std::size_t pi = 0; pi < n_p; ++pi) {
        const KeepProbability p(cfg.keep_probs[pi]);
        FeatureBatch dropped =
            dropout_forward(copy_of(r), p, Phase::Train, rep_seed.derive({kRoleMask})).output;
        FeatureBatch f_train = linear_forward(std::move(dropped), w2);
        const double nonres_train = pooled_variance(batch_moments(f_train));
        const double res_train = pooled_variance(batch_moments(skip_add(std::move(f_train), x0)));
        nonres[pi * n_v + vi].push_back(delta_from_mc(nonres_train, nonres_test).delta);
        res[pi * n_v + vi].push_back(delta_from_mc(res_train, res_test).delta);
      }
    }
  }

  SweepResult result;
  result.name = "residual_inconsistency";
  result.columns = {"p",           "var_x0",       "delta_nonres_mc", "delta_nonres_se",
                    "delta_res_mc", "delta_res_se", "delta_nonres_cf", "delta_res_cf"};
  result.plot = PlotSpec{"Residual vs non-residual block (width " + std::to_string(cfg.width) + ")",
                         "var_x0",
                         "Var[x0]",
                         "inconsistency ratio Delta(x + f(x))",
                         {"p"},
                         {"delta_res_mc"},
                         false};
  for (std::size_t pi = 0; pi < n_p; ++pi) {
    const KeepProbability p(cfg.keep_probs[pi]);
    for (std::size_t vi = 0; vi < n_v; ++vi) {
      const auto a = summarize(nonres[pi * n_v + vi]);
      const auto b = summarize(res[pi * n_v + vi]);
      const ResidualConfig rc(cfg.var_x0_values[vi], {cfg.gamma}, p);
      result.add_row({cfg.keep_probs[pi], cfg.var_x0_values[vi], a.mean, a.se, b.mean, b.se,
                      delta_nonresidual(p), delta_residual(rc, 0)});
    }
  }
  return result;
}

ReluMoments relu_moments(double mean, double variance) {
  if (!(variance >= 0.0)) throw DomainError("relu_moments: variance must be >= 0");
  if (variance == 0.0) return {std::max(0.0, mean), 0.0};
  const double sd = std::sqrt(variance);
  const double a = mean / sd;
  const double pdf = std::exp(-0.5 * a * a) / std::sqrt(2.0 * std::numbers::pi);
  const double cdf = 0.5 * std::erfc(-a / std::numbers::sqrt2);
  const double m1 = mean * cdf + sd * pdf;
  const double m2 = (mean * mean + variance) * cdf + mean * sd * pdf;
  return {m1, std::max(0.0, m2 - m1 * m1)};
}

void HeadCompareConfig::validate() const {
  require(channels >= 1, "channels must be >= 1");
  require(spatial_size >= 1, "spatial_size must be >= 1");
  (void)KeepProbability(p);
  require(batch_size >= 2, "batch_size must be >= 2");
  require(input_variance >= 0.0 && std::isfinite(input_variance), "input variance must be >= 0");
  require(std::isfinite(input_mean), "input mean must be finite");
  require(repetitions >= 2, "repetitions must be >= 2 to estimate a standard error");
}

namespace {

SweepResult head_result_shell() {
  SweepResult result;
  result.name = "head_dropout";
  result.columns = {"input_mean", "input_var", "p",   "spatial_size", "channels",
                    "var_h4",     "var_h4_se", "var_h5", "var_h5_se", "gap",
                    "gap_se",     "oracle_h4", "oracle_h5"};
  result.plot = PlotSpec{"Dropout before (H4) vs after (H5) global average pooling",
                         "spatial_size",
                         "spatial positions s",
                         "pooled output variance",
                         {"p", "input_mean", "input_var"},
                         {"var_h4", "var_h5"},
                         true};
  return result;
}

}  // namespace

SweepResult run_head_comparison(const HeadCompareConfig& cfg) {
  cfg.validate();
  const KeepProbability p(cfg.p);
  const std::size_t c = cfg.channels;
  const std::size_t s = cfg.spatial_size;
  std::vector<double> h4, h5, gap;
  for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
    const RandomSeed rep_seed = cfg.seed.derive({kExpHead, rep});
    FeatureBatch flat = sample_gaussian(cfg.input_mean, cfg.input_variance, cfg.batch_size, c * s,
                                        rep_seed.derive({kRoleInput}));
    if (cfg.pre_activation) flat = relu_forward(std::move(flat));
    const SpatialFeatureBatch x(std::move(flat).release(), c, s);

    const FeatureBatch elem = gap_forward(
        spatial_dropout_elementwise(x, p, Phase::Train, rep_seed.derive({kRoleMaskPre})));
    const FeatureBatch chan =
        dropout_forward(gap_forward(x), p, Phase::Train, rep_seed.derive({kRoleMask})).output;
    const double v4 = pooled_variance(batch_moments(elem));
    const double v5 = pooled_variance(batch_moments(chan));
    h4.push_back(v4);
    h5.push_back(v5);
    gap.push_back(v5 - v4);
  }
  const ReluMoments m = cfg.pre_activation ? relu_moments(cfg.input_mean, cfg.input_variance)
                                           : ReluMoments{cfg.input_mean, cfg.input_variance};
  const double q = p.value();
  const double sd = static_cast<double>(s);
  const double oracle_h4 = (m.variance / q + (1.0 - q) / q * m.mean * m.mean) / sd;
  const double oracle_h5 = m.variance / (q * sd) + (1.0 - q) / q * m.mean * m.mean;

  SweepResult result = head_result_shell();
  const auto a = summarize(h4);
  const auto b = summarize(h5);
  const auto g = summarize(gap);
  result.add_row({cfg.input_mean, cfg.input_variance, cfg.p, static_cast<double>(s),
                  static_cast<double>(c), a.mean, a.se, b.mean, b.se, g.mean, g.se, oracle_h4,
                  oracle_h5});
  return result;
}

SweepResult run_head_sweep(const HeadCompareConfig& base,
                           const std::vector<std::size_t>& spatial_sizes,
                           const std::vector<double>& keep_probs) {
  require(!spatial_sizes.empty() && !keep_probs.empty(),
          "head sweep needs at least one spatial size and one keep probability");
  SweepResult result = head_result_shell();
  for (std::size_t s : spatial_sizes) {
    for (double p : keep_probs) {
      HeadCompareConfig cfg = base;
      cfg.spatial_size = s;
      cfg.p = p;
      for (auto& row : run_head_comparison(cfg).rows) result.add_row(std::move(row));
    }
  }
  return result;
}

}  // namespace varshift
