#include <doctest.h>

#include <cmath>
#include <numbers>

#include "varshift/experiments.hpp"
#include "varshift/variance_calculus.hpp"

using namespace varshift;

TEST_CASE("summarize gives the mean and standard error") {
  const auto e = summarize({1.0, 2.0, 3.0, 4.0});
  CHECK(e.mean == 2.5);
  // sample sd = sqrt(5/3), se = sd / 2
  CHECK(e.se == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
  CHECK(summarize({7.0}).se == 0.0);
  CHECK_THROWS_AS((void)summarize({}), std::invalid_argument);
}

TEST_CASE("SweepResult accessors") {
  SweepResult r;
  r.name = "t";
  r.columns = {"a", "b"};
  r.add_row({1.0, std::string("x")});
  CHECK(r.column_index("b") == 1);
  CHECK(r.number(0, "a") == 1.0);
  CHECK_THROWS_AS((void)r.number(0, "b"), std::invalid_argument);
  CHECK_THROWS_AS((void)r.column_index("c"), std::out_of_range);
  CHECK_THROWS_AS(r.add_row({1.0}), std::invalid_argument);
}

TEST_CASE("relu_moments of a shifted Gaussian") {
  const auto std_normal = relu_moments(0.0, 1.0);
  CHECK(std_normal.mean == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)));
  CHECK(std_normal.variance == doctest::Approx((std::numbers::pi - 1.0) / (2.0 * std::numbers::pi)));
  CHECK(relu_moments(1.0, 0.0).mean == 1.0);
  CHECK(relu_moments(-1.0, 0.0).mean == 0.0);
  CHECK(relu_moments(-1.0, 0.0).variance == 0.0);
  // Far above zero the ReLU is the identity.
  CHECK(relu_moments(50.0, 1.0).mean == doctest::Approx(50.0));
  CHECK(relu_moments(50.0, 1.0).variance == doctest::Approx(1.0));
  CHECK_THROWS_AS((void)relu_moments(0.0, -1.0), DomainError);
}

TEST_CASE("config validation") {
  Prop2SweepConfig p2;
  p2.repetitions = 1;
  CHECK_THROWS_AS(p2.validate(), std::invalid_argument);
  p2 = {};
  p2.widths.clear();
  CHECK_THROWS_AS(p2.validate(), std::invalid_argument);
  p2 = {};
  p2.p = 1.0;
  CHECK_THROWS_AS(p2.validate(), DomainError);

  Prop34SweepConfig p34;
  p34.var_x0_values = {-1.0};
  CHECK_THROWS_AS(p34.validate(), std::invalid_argument);
  p34 = {};
  p34.batch_size = 1;
  CHECK_THROWS_AS(p34.validate(), std::invalid_argument);

  HeadCompareConfig head;
  head.spatial_size = 0;
  CHECK_THROWS_AS(head.validate(), std::invalid_argument);
  CHECK_THROWS_AS((void)run_head_sweep(HeadCompareConfig{}, {}, {0.5}), std::invalid_argument);
}

TEST_CASE("residual sweep matches the closed forms at small scale") {
  Prop34SweepConfig cfg;
  cfg.keep_probs = {0.5, 0.8};
  cfg.var_x0_values = {0.5, 2.0};
  cfg.width = 64;
  cfg.batch_size = 20000;
  cfg.repetitions = 3;
  const auto r = run_prop34_sweep(cfg);
  CHECK(r.columns == std::vector<std::string>{"p", "var_x0", "delta_nonres_mc", "delta_nonres_se", "delta_res_mc",
                                              "delta_res_se", "delta_nonres_cf", "delta_res_cf"});
  REQUIRE(r.rows.size() == 4);
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const KeepProbability p(r.number(i, "p"));
    CHECK(r.number(i, "delta_nonres_cf") == doctest::Approx(delta_nonresidual(p)));
    CHECK(r.number(i, "delta_res_cf") ==
          doctest::Approx(delta_residual(ResidualConfig(r.number(i, "var_x0"), {1.0}, p), 0)));
    CHECK(std::abs(r.number(i, "delta_nonres_mc") / r.number(i, "delta_nonres_cf") - 1.0) < 0.03);
    CHECK(std::abs(r.number(i, "delta_res_mc") / r.number(i, "delta_res_cf") - 1.0) < 0.03);
    CHECK(r.number(i, "delta_nonres_mc") < r.number(i, "delta_res_mc"));
    CHECK(r.number(i, "delta_res_mc") < 1.0);
  }
}

TEST_CASE("sampled and marginalized mask estimators agree") {
  Prop2SweepConfig cfg;
  cfg.widths = {32};
  cfg.mean_w_values = {0.0, 0.05};
  cfg.batch_size = 20000;
  cfg.repetitions = 4;
  cfg.estimator = MaskEstimator::Marginalized;
  const auto marg = run_prop2_sweep(cfg);
  cfg.estimator = MaskEstimator::Sampled;
  const auto samp = run_prop2_sweep(cfg);
  REQUIRE(marg.rows.size() == 2);
  REQUIRE(samp.rows.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    for (const char* col : {"delta_pre_mc", "delta_post_mc"}) {
      CAPTURE(col);
      CAPTURE(i);
      const std::string se_col = std::string(col).replace(std::string(col).find("_mc"), 3, "_se");
      const double tol = 6.0 * std::hypot(samp.number(i, se_col), marg.number(i, se_col)) + 1e-3;
      CHECK(std::abs(samp.number(i, col) - marg.number(i, col)) < tol);
    }
    CHECK(samp.number(i, "cross_term") == marg.number(i, "cross_term"));
  }
}

TEST_CASE("sweeps are deterministic in the seed") {
  Prop2SweepConfig cfg;
  cfg.widths = {16, 32};
  cfg.batch_size = 2000;
  cfg.repetitions = 2;
  const auto a = run_prop2_sweep(cfg);
  const auto b = run_prop2_sweep(cfg);
  CHECK(a.rows == b.rows);
  cfg.seed = RandomSeed{kDefaultSeed + 1, 0};
  CHECK_FALSE(run_prop2_sweep(cfg).rows == a.rows);
}

TEST_CASE("head comparison oracles") {
  HeadCompareConfig cfg;
  cfg.channels = 16;
  cfg.batch_size = 20000;
  cfg.repetitions = 4;
  SUBCASE("constant input matches the Bernoulli oracle") {
    cfg.input_mean = 1.0;
    cfg.input_variance = 0.0;
    cfg.spatial_size = 16;
    cfg.p = 0.5;
    const auto r = run_head_comparison(cfg);
    CHECK(r.number(0, "oracle_h4") == doctest::Approx(0.5 / (0.5 * 16)));
    CHECK(r.number(0, "oracle_h5") == doctest::Approx(1.0));
    CHECK(std::abs(r.number(0, "var_h4") - r.number(0, "oracle_h4")) < 6 * r.number(0, "var_h4_se") + 1e-3);
    CHECK(std::abs(r.number(0, "var_h5") - r.number(0, "oracle_h5")) < 6 * r.number(0, "var_h5_se") + 1e-2);
  }
  SUBCASE("one spatial position makes the slots equivalent") {
    cfg.spatial_size = 1;
    const auto r = run_head_comparison(cfg);
    CHECK(r.number(0, "oracle_h4") == doctest::Approx(r.number(0, "oracle_h5")));
    CHECK(std::abs(r.number(0, "gap")) < 6 * r.number(0, "gap_se") + 1e-12);
  }
  SUBCASE("pooling first leaves more variance") {
    cfg.spatial_size = 4;
    const auto r = run_head_comparison(cfg);
    CHECK(r.number(0, "var_h4") < r.number(0, "var_h5"));
    CHECK(r.number(0, "gap") > 6 * r.number(0, "gap_se"));
  }
  SUBCASE("the sweep concatenates spatial-major") {
    const auto r = run_head_sweep(cfg, {1, 4}, {0.5, 0.8});
    REQUIRE(r.rows.size() == 4);
    CHECK(r.number(1, "spatial_size") == 1.0);
    CHECK(r.number(1, "p") == 0.8);
    CHECK(r.number(2, "spatial_size") == 4.0);
  }
}
