#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "varshift/variance_calculus.hpp"

using namespace varshift;

namespace {

constexpr double kPi = std::numbers::pi;

// Independent evaluation of the ratio by summing the phase variances term by term.
double residual_ratio_oracle(double var_x0, const std::vector<double>& gammas, std::size_t l, double p) {
  double test = var_x0, train = var_x0;
  for (std::size_t i = 0; i <= l; ++i) {
    const double g2 = gammas[i] * gammas[i];
    const double relu_var = (kPi - 1.0) / (2.0 * kPi) * g2;
    const double relu_mean2 = g2 / (2.0 * kPi);
    // Each block adds 2 * Var[u] for the unit u entering the He weight.
    test += 2.0 * (relu_var + relu_mean2) - 2.0 * relu_mean2;
    train += 2.0 * ((relu_var + relu_mean2) / p) - 2.0 * relu_mean2;
  }
  return test / train;
}

LinearWeights weights(std::initializer_list<std::initializer_list<double>> values) {
  Matrix m(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(values.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : values) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return make_weights(m);
}

}  // namespace

TEST_CASE("dropout_train_variance examples") {
  CHECK(dropout_train_variance(1, 0, KeepProbability(0.5)) == doctest::Approx(2.0));
  CHECK(dropout_train_variance(0, 1, KeepProbability(0.5)) == doctest::Approx(1.0));
  CHECK(dropout_train_variance(1, 0, KeepProbability(0.999)) == doctest::Approx(1.001).epsilon(1e-5));
  CHECK_THROWS_AS((void)dropout_train_variance(-1, 0, KeepProbability(0.5)), DomainError);
}

TEST_CASE("dropout never lowers the variance") {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0.01, 0.99), v(0.0, 10.0), m(-5.0, 5.0);
  for (int i = 0; i < 1000; ++i) {
    const double var = v(gen);
    CHECK(dropout_train_variance(var, m(gen), KeepProbability(u(gen))) >= var);
  }
}

TEST_CASE("relu_gaussian_moments examples") {
  const auto m1 = relu_gaussian_moments(1.0);
  CHECK(m1.mean == doctest::Approx(0.39894).epsilon(1e-5));
  CHECK(m1.variance == doctest::Approx(0.34085).epsilon(1e-5));
  const auto m2 = relu_gaussian_moments(2.0);
  CHECK(m2.mean == doctest::Approx(2 * m1.mean));
  CHECK(m2.variance == doctest::Approx(4 * m1.variance));
  CHECK_THROWS_AS((void)relu_gaussian_moments(0.0), DomainError);
}

TEST_CASE("dropped_branch_variance examples") {
  const KeepProbability half(0.5);
  CHECK(dropped_branch_variance(1, half, Phase::Train) == doctest::Approx((2 * kPi - 1) / kPi));
  CHECK(dropped_branch_variance(1, half, Phase::Train) == doctest::Approx(1.68169).epsilon(1e-5));
  CHECK(dropped_branch_variance(1, half, Phase::Test) == doctest::Approx(0.68169).epsilon(1e-5));
  CHECK(dropped_branch_variance(1, KeepProbability(0.9), Phase::Test) ==
        dropped_branch_variance(1, half, Phase::Test));
  CHECK(dropped_branch_variance(3, half, Phase::Test) == doctest::Approx(9 * 0.6816901138));
}

TEST_CASE("delta_nonresidual examples") {
  CHECK(delta_nonresidual(KeepProbability(0.5)) == doctest::Approx((kPi - 1) / (2 * kPi - 1)).epsilon(1e-14));
  CHECK(delta_nonresidual(KeepProbability(0.5)) == doctest::Approx(0.40536).epsilon(1e-5));
  CHECK(delta_nonresidual(KeepProbability(1 - 1e-12)) == doctest::Approx(1.0).epsilon(1e-9));
  double prev = 0.0;
  for (double p : {0.5, 0.6, 0.7, 0.8, 0.9}) {
    const double d = delta_nonresidual(KeepProbability(p));
    CHECK(d > prev);
    CHECK(d < 1.0);
    prev = d;
  }
}

TEST_CASE("accumulated_variance examples") {
  const ResidualConfig cfg(1.0, {1.0, 1.0}, KeepProbability(0.5));
  CHECK(accumulated_variance(cfg, 2, Phase::Train) == doctest::Approx(4.36338).epsilon(1e-5));
  CHECK(accumulated_variance(cfg, 2, Phase::Test) == doctest::Approx(2.36338).epsilon(1e-5));
  CHECK(accumulated_variance(cfg, 0, Phase::Train) == 1.0);
  CHECK(accumulated_variance(cfg, 0, Phase::Test) == 1.0);
  CHECK_THROWS_AS((void)accumulated_variance(cfg, 3, Phase::Train), std::out_of_range);
}

TEST_CASE("delta_residual examples") {
  const KeepProbability half(0.5);
  CHECK(delta_residual(ResidualConfig(1.0, {1.0}, half), 0) == doctest::Approx(0.62710).epsilon(1e-5));
  CHECK(delta_residual(ResidualConfig(0.0, {1.0}, half), 0) == doctest::Approx(delta_nonresidual(half)).epsilon(1e-14));
  CHECK(std::abs(delta_residual(ResidualConfig(1e6, {1.0}, half), 0) - 1.0) < 1e-5);
  CHECK_THROWS_AS((void)delta_residual(ResidualConfig(1.0, {1.0}, half), 1), std::out_of_range);
  CHECK_THROWS_AS(ResidualConfig(-1.0, {1.0}, half), DomainError);
  CHECK_THROWS_AS(ResidualConfig(1.0, {1.0, 0.0}, half), DomainError);
}

TEST_CASE("delta_residual agrees with a term-by-term oracle") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> pu(0.05, 0.95), vu(0.0, 8.0), gu(0.1, 3.0);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> gammas(1 + static_cast<std::size_t>(i % 5));
    for (auto& g : gammas) g = gu(gen);
    const double p = pu(gen), v = vu(gen);
    const std::size_t l = gammas.size() - 1;
    CHECK(delta_residual(ResidualConfig(v, gammas, KeepProbability(p)), l) ==
          doctest::Approx(residual_ratio_oracle(v, gammas, l, p)).epsilon(1e-12));
  }
}

TEST_CASE("residual blocks sit strictly between the non-residual ratio and one") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> pu(0.05, 0.95), vu(1e-3, 100.0), gu(0.1, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const KeepProbability p(pu(gen));
    std::vector<double> gammas(1 + static_cast<std::size_t>(i % 4));
    for (auto& g : gammas) g = gu(gen);
    const ResidualConfig cfg(vu(gen), gammas, p);
    for (std::size_t l = 0; l < gammas.size(); ++l) {
      const double d = delta_residual(cfg, l);
      CHECK(delta_nonresidual(p) < d);
      CHECK(d < 1.0);
    }
  }
}

TEST_CASE("delta_residual is increasing in var_x0 and in p") {
  const std::vector<double> gammas{1.0, 0.5};
  double prev = 0.0;
  for (double v : {0.5, 1.0, 2.0, 4.0, 8.0}) {
    const double d = delta_residual(ResidualConfig(v, gammas, KeepProbability(0.5)), 1);
    CHECK(d > prev);
    prev = d;
  }
  prev = 0.0;
  for (double p : {0.5, 0.6, 0.7, 0.8, 0.9}) {
    const double d = delta_residual(ResidualConfig(1.0, gammas, KeepProbability(p)), 1);
    CHECK(d > prev);
    prev = d;
  }
}

TEST_CASE("the residual ratio is a mediant of the input and branch ratios") {
  // (a + c) / (b + d) lies between a/b and c/d: the trunk ratio is bounded by 1 and the branch ratio.
  std::mt19937_64 gen(13);
  std::uniform_real_distribution<double> pu(0.05, 0.95), vu(0.01, 50.0), gu(0.1, 3.0);
  for (int i = 0; i < 200; ++i) {
    const KeepProbability p(pu(gen));
    const double g = gu(gen);
    const ResidualConfig cfg(vu(gen), {g}, p);
    const double branch = dropped_branch_variance(g, p, Phase::Test) / dropped_branch_variance(g, p, Phase::Train);
    CHECK(branch == doctest::Approx(delta_nonresidual(p)).epsilon(1e-12));
    const double d = delta_residual(cfg, 0);
    CHECK(d >= std::min(branch, 1.0));
    CHECK(d <= std::max(branch, 1.0));
  }
}

TEST_CASE("predropout_condition examples") {
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(2, 2);
  SUBCASE("all positive terms") {
    const auto c = predropout_condition(weights({{1, 1}, {1, 1}}), ones);
    CHECK(c.value == doctest::Approx(4.0));
    CHECK(c.holds);
    CHECK(c.holds_per_row());
  }
  SUBCASE("no cross terms") {
    const auto c = predropout_condition(weights({{1, 0}, {0, 1}}), ones);
    CHECK(c.value == 0.0);
    CHECK_FALSE(c.holds);
    CHECK_FALSE(c.holds_per_row());
  }
  SUBCASE("opposite signs") {
    const auto c = predropout_condition(weights({{1, -1}, {1, -1}}), ones);
    CHECK(c.value == doctest::Approx(-4.0));
    CHECK_FALSE(c.holds);
  }
  SUBCASE("aggregate can hold while a row does not") {
    const auto c = predropout_condition(weights({{1, 1}, {1, -0.5}}), ones);
    REQUIRE(c.per_row.size() == 2);
    CHECK(c.per_row[0] == doctest::Approx(2.0));
    CHECK(c.per_row[1] == doctest::Approx(-1.0));
    CHECK(c.holds);
    CHECK_FALSE(c.holds_per_row());
  }
  SUBCASE("errors") {
    Eigen::MatrixXd asym = ones;
    asym(0, 1) = 2.0;
    CHECK_THROWS_AS((void)predropout_condition(weights({{1, 1}}), asym), DomainError);
    CHECK_THROWS_AS((void)predropout_condition(weights({{1, 1, 1}}), ones), ShapeError);
  }
}

TEST_CASE("predropout_condition matches the explicit double sum") {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> z;
  const int n = 6, m = 4;
  Matrix w(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) w(i, j) = z(gen);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = z(gen);
  const Eigen::MatrixXd s = a * a.transpose();
  const auto c = predropout_condition(make_weights(w), s);
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    double row = 0.0;
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        if (j != k) row += w(i, j) * w(i, k) * s(j, k);
    CHECK(c.per_row[static_cast<std::size_t>(i)] == doctest::Approx(row).epsilon(1e-10));
    total += row;
  }
  CHECK(c.value == doctest::Approx(total).epsilon(1e-10));
}

TEST_CASE("delta_from_mc examples") {
  CHECK(delta_from_mc(2, 2).delta == 1.0);
  const auto r = delta_from_mc(10, 2, EstimateMeta{EstimateSource::MonteCarlo, 100000, RandomSeed{1, 2}});
  CHECK(r.delta == doctest::Approx(0.2));
  CHECK(r.var_train == 10.0);
  CHECK(r.var_test == 2.0);
  CHECK(r.batch_size == 100000u);
  CHECK(r.seed == RandomSeed{1, 2});
  CHECK(to_string(r.source) == "monte_carlo");
  CHECK(delta_from_mc(1.68169, 0.68169).delta == doctest::Approx(0.40536).epsilon(1e-5));
  CHECK_THROWS_AS((void)delta_from_mc(0, 1), DomainError);
}
