#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "varshift/cli.hpp"

using namespace varshift;

namespace {

const std::filesystem::path kFixtures = VARSHIFT_FIXTURE_DIR;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("varshift_cli_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("analyze prints closed-form values") {
  auto r = invoke({"analyze", "--delta-nonresidual", "--p", "0.5"});
  CHECK(r.code == kExitOk);
  CHECK(r.out == "0.40536\n");

  r = invoke({"analyze", "--delta-residual", "--p", "0.5", "--var-x0", "1"});
  CHECK(r.out == "0.627101\n");

  r = invoke({"analyze", "--relu-moments", "--gamma", "1"});
  CHECK(r.out == "0.398942\n0.340845\n");

  r = invoke({"analyze", "--dropout-variance", "--mean", "1", "--var", "0", "--p", "0.5"});
  CHECK(r.out == "1\n");
}

TEST_CASE("usage errors exit 2") {
  CHECK(invoke({"analyze", "--no-such-flag"}).code == kExitUsage);
  CHECK(invoke({"analyze"}).code == kExitUsage);
  CHECK(invoke({}).code == kExitUsage);
  CHECK(invoke({"analyze", "--delta-nonresidual", "--p", "1.5"}).code == kExitUsage);
  CHECK(invoke({"--format", "xml", "analyze", "--delta-nonresidual"}).code == kExitUsage);
  CHECK(invoke({"--help"}).code == kExitOk);
}

TEST_CASE("lint exit codes") {
  auto r = invoke({"lint", (kFixtures / "preresnet_p6.json").string()});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("pass d P6") != std::string::npos);

  r = invoke({"lint", (kFixtures / "preresnet_p6.json").string(), (kFixtures / "preresnet_p3.json").string()});
  CHECK(r.code == kExitLintFailure);

  r = invoke({"--format", "json", "lint", (kFixtures / "head_h5.json").string()});
  CHECK(r.code == kExitOk);
  CHECK(r.out.rfind("{", 0) == 0);

  r = invoke({"lint", (kFixtures / "invalid" / "dangling_edge.json").string()});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("error:") == 0);

  CHECK(invoke({"lint", (kFixtures / "does_not_exist.json").string()}).code == kExitUsage);
}

TEST_CASE("experiments write every requested format") {
  const auto dir = scratch("formats");
  const auto r = invoke({"--out-dir", dir.string(), "--format", "csv,json,svg", "--batch", "500", "--reps", "2",
                         "reproduce-fig3", "--keep-probs", "0.5", "--var-x0", "1", "--width", "8"});
  REQUIRE(r.code == kExitOk);
  for (const char* ext : {"csv", "json", "svg"}) CHECK(std::filesystem::exists(dir / ("fig3." + std::string(ext))));
  CHECK(slurp(dir / "fig3.csv").rfind("p,var_x0,", 0) == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("same seed gives byte-identical output") {
  const auto a = scratch("seed_a"), b = scratch("seed_b"), c = scratch("seed_c");
  auto fig3 = [](const std::filesystem::path& dir, const char* seed) {
    return invoke({"--seed", seed, "--out-dir", dir.string(), "--batch", "1000", "--reps", "2", "reproduce-fig3",
                   "--width", "16"});
  };
  REQUIRE(fig3(a, "7").code == kExitOk);
  REQUIRE(fig3(b, "7").code == kExitOk);
  REQUIRE(fig3(c, "8").code == kExitOk);
  CHECK(slurp(a / "fig3.csv") == slurp(b / "fig3.csv"));
  CHECK(slurp(a / "fig3.csv") != slurp(c / "fig3.csv"));
  for (const auto& d : {a, b, c}) std::filesystem::remove_all(d);
}
