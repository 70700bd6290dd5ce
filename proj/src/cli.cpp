#include "varshift/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include <CLI11.hpp>

#include "varshift/experiments.hpp"
#include "varshift/lint.hpp"
#include "varshift/variance_calculus.hpp"

namespace varshift {

namespace {

struct GlobalOptions {
  std::uint64_t seed = kDefaultSeed;
  std::string out_dir = ".";
  std::vector<std::string> formats{"csv"};
  std::size_t batch = 0;  // 0 keeps the experiment default
  std::size_t reps = 0;
};

struct AnalyzeOptions {
  bool delta_nonresidual = false;
  bool delta_residual = false;
  bool relu_moments = false;
  bool dropout_variance = false;
  double p = 0.5;
  double var_x0 = 1.0;
  std::vector<double> gammas{1.0};
  std::size_t block = 0;
  double gamma = 1.0;
  double mean = 0.0;
  double var = 1.0;
};

std::string g6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_outputs(const SweepResult& result, const std::string& stem, const GlobalOptions& opts,
                   std::ostream& out) {
  std::filesystem::create_directories(opts.out_dir);
  for (const auto& format : opts.formats) {
    const std::string path = (std::filesystem::path(opts.out_dir) / (stem + "." + format)).string();
    if (format == "csv") {
      emit_csv(result, path);
    } else if (format == "json") {
      emit_json(result, path);
    } else {
      emit_plot(result, path);
    }
    out << "wrote " << path << '\n';
  }
}

void run_analyze(const AnalyzeOptions& a, std::ostream& out) {
  if (!a.delta_nonresidual && !a.delta_residual && !a.relu_moments && !a.dropout_variance) {
    throw CLI::ValidationError(
        "analyze needs --delta-nonresidual, --delta-residual, --relu-moments or --dropout-variance");
  }
  const KeepProbability p(a.p);
  if (a.delta_nonresidual) out << g6(delta_nonresidual(p)) << '\n';
  if (a.delta_residual) out << g6(delta_residual(ResidualConfig(a.var_x0, a.gammas, p), a.block)) << '\n';
  if (a.relu_moments) {
    const auto m = relu_gaussian_moments(a.gamma);
    out << g6(m.mean) << '\n' << g6(m.variance) << '\n';
  }
  if (a.dropout_variance) out << g6(dropout_train_variance(a.var, a.mean, p)) << '\n';
}

int run_lint(const std::vector<std::string>& files, const GlobalOptions& opts, std::ostream& out) {
  const bool json = std::find(opts.formats.begin(), opts.formats.end(), "json") != opts.formats.end();
  bool failed = false;
  for (const auto& file : files) {
    const ModelGraph g = load_model_graph(file);
    const auto diagnostics = check_guidelines(g);
    for (const auto& d : diagnostics) {
      if (json) {
        out << format_json_line(d) << '\n';
      } else {
        out << file << ": " << format_text(d) << '\n';
      }
    }
    failed = failed || has_failure(diagnostics);
  }
  return failed ? kExitLintFailure : kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Variance-shift analysis of dropout placement"};
  app.name("varshift");
  app.fallthrough();
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Base random seed")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for experiment outputs")->capture_default_str();
  app.add_option("--format", g.formats, "Output formats: csv, json, svg (lint: json selects JSON lines)")
      ->allow_extra_args(false)
      ->delimiter(',')
      ->check(CLI::IsMember({"csv", "json", "svg"}))
      ->capture_default_str();
  app.add_option("--batch", g.batch, "Batch size override")->check(CLI::PositiveNumber);
  app.add_option("--reps", g.reps, "Repetition count override")->check(CLI::Range(2, 1000000));

  AnalyzeOptions a;
  auto* analyze = app.add_subcommand("analyze", "Evaluate closed-form moments; one value per line");
  analyze->add_flag("--delta-nonresidual", a.delta_nonresidual, "Inconsistency ratio of a non-residual block");
  analyze->add_flag("--delta-residual", a.delta_residual, "Inconsistency ratio after residual block --block");
  analyze->add_flag("--relu-moments", a.relu_moments, "Mean and variance of ReLU(N(0, gamma^2))");
  analyze->add_flag("--dropout-variance", a.dropout_variance, "Train-phase variance of dropout(x)");
  analyze->add_option("--p", a.p, "Keep probability")->capture_default_str();
  analyze->add_option("--var-x0", a.var_x0, "Variance of the network input")->capture_default_str();
  analyze->add_option("--gammas", a.gammas, "BN scales of the residual blocks")->capture_default_str();
  analyze->add_option("--block", a.block, "Residual block index")->capture_default_str();
  analyze->add_option("--gamma", a.gamma, "BN scale for --relu-moments")->capture_default_str();
  analyze->add_option("--mean", a.mean, "Input mean for --dropout-variance")->capture_default_str();
  analyze->add_option("--var", a.var, "Input variance for --dropout-variance")->capture_default_str();

  Prop2SweepConfig fig2;
  std::string estimator = "marginalized";
  auto* f2 = app.add_subcommand("reproduce-fig2", "Dropout before vs after a weight layer, over width and E[W]");
  f2->add_option("--widths", fig2.widths, "Layer widths")->capture_default_str();
  f2->add_option("--mean-w", fig2.mean_w_values, "Means of the weight entries")->capture_default_str();
  f2->add_option("--p", fig2.p, "Keep probability")->capture_default_str();
  f2->add_option("--estimator", estimator, "Train-phase mask handling")
      ->check(CLI::IsMember({"marginalized", "sampled"}))
      ->capture_default_str();

  Prop34SweepConfig fig3;
  auto* f3 = app.add_subcommand("reproduce-fig3", "Non-residual vs residual inconsistency over p and Var[x0]");
  f3->add_option("--keep-probs", fig3.keep_probs, "Keep probabilities")->capture_default_str();
  f3->add_option("--var-x0", fig3.var_x0_values, "Input variances")->capture_default_str();
  f3->add_option("--width", fig3.width, "Layer width")->capture_default_str();
  f3->add_option("--gamma", fig3.gamma, "Scale of the second BN")->capture_default_str();

  HeadCompareConfig head;
  std::vector<std::size_t> spatial{1, 4, 16, 49};
  std::vector<double> head_keep{0.5, 0.8};
  bool raw_input = false;
  auto* hc = app.add_subcommand("head-compare", "Dropout before vs after global average pooling");
  hc->add_option("--spatial", spatial, "Spatial sizes")->capture_default_str();
  hc->add_option("--keep-probs", head_keep, "Keep probabilities")->capture_default_str();
  hc->add_option("--channels", head.channels, "Channel count")->capture_default_str();
  hc->add_option("--input-mean", head.input_mean, "Mean of the Gaussian input")->capture_default_str();
  hc->add_option("--input-var", head.input_variance, "Variance of the input (0 for a constant)")
      ->capture_default_str();
  hc->add_flag("--raw-input", raw_input, "Feed the input to dropout without the preceding ReLU");

  std::vector<std::string> lint_files;
  auto* lint = app.add_subcommand("lint", "Check dropout placement in model-graph JSON files");
  lint->add_option("files", lint_files, "Graph documents")->required()->check(CLI::ExistingFile);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const RandomSeed seed{g.seed, 0};
    if (analyze->parsed()) {
      run_analyze(a, out);
    } else if (f2->parsed()) {
      fig2.estimator = estimator == "sampled" ? MaskEstimator::Sampled : MaskEstimator::Marginalized;
      fig2.seed = seed;
      if (g.batch) fig2.batch_size = g.batch;
      if (g.reps) fig2.repetitions = g.reps;
      write_outputs(run_prop2_sweep(fig2), "fig2", g, out);
    } else if (f3->parsed()) {
      fig3.seed = seed;
      if (g.batch) fig3.batch_size = g.batch;
      if (g.reps) fig3.repetitions = g.reps;
      write_outputs(run_prop34_sweep(fig3), "fig3", g, out);
    } else if (hc->parsed()) {
      head.seed = seed;
      head.pre_activation = !raw_input;
      if (g.batch) head.batch_size = g.batch;
      if (g.reps) head.repetitions = g.reps;
      write_outputs(run_head_sweep(head, spatial, head_keep), "head", g, out);
    } else if (lint->parsed()) {
      return run_lint(lint_files, g, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace varshift
