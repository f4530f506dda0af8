#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "eotlab/csv.hpp"
#include "eotlab/experiment.hpp"
#include "eotlab/util.hpp"

using namespace eotlab;

namespace {

const char* kDemoConfig = R"json({
  "seed": 7,
  "epsilons": [0.5],
  "iteration_budget": 60,
  "checks": ["monotonicity", "identity", "rate"],
  "rho": {"potential": {"kind": "quadratic", "alpha": 1.0},
          "box": [[-2, 2], [-2, 2]], "resolution": [6, 6],
          "tag": {"kind": "strongly-log-concave", "alpha": 1.0}},
  "nu":  {"potential": {"kind": "quadratic", "alpha": 1.0},
          "box": [[-2, 2], [-2, 2]], "resolution": [6, 6],
          "tag": {"kind": "strongly-log-concave", "alpha": 1.0}},
  "cost": {"family": "half-squared-euclidean"}
})json";

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string body_without_comments(const std::string& doc) {
  std::string out;
  std::stringstream ss(doc);
  std::string line;
  while (std::getline(ss, line))
    if (line.empty() || line[0] != '#') out += line + "\n";
  return out;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_THROWS(parse_experiment_config("{"));
  CHECK_THROWS(parse_experiment_config(R"({"checks": ["monotonicity"]})"));      // no epsilons
  CHECK_THROWS(parse_experiment_config(R"({"epsilons": [], "checks": []})"));    // empty epsilons
  CHECK_THROWS(parse_experiment_config(R"({"epsilons": [-1], "checks": []})"));  // negative
  CHECK_THROWS(
      parse_experiment_config(R"({"epsilons": [1], "checks": ["no-such-check"]})"));
  // instance checks demand marginals
  CHECK_THROWS(parse_experiment_config(R"({"epsilons": [1], "checks": ["monotonicity"]})"));
  // pure formula checks do not
  CHECK_NOTHROW(parse_experiment_config(R"({"epsilons": [1], "checks": ["gaussian-recursion"]})"));
  CHECK_NOTHROW(parse_experiment_config(kDemoConfig));
}

TEST_CASE("instrumented run invariants on a small instance") {
  const auto cfg = parse_experiment_config(kDemoConfig);
  const auto rho = build_marginal(cfg.rho);
  const auto nu = build_marginal(cfg.nu);
  const auto cost = cost_from_spec(cfg.cost, 2);
  InstrumentOptions opts;
  opts.iteration_budget = 50;
  opts.track_lambda = true;
  opts.lambda_samples = 32;
  const auto run = run_instrumented(rho, nu, cost, 0.5, opts);
  REQUIRE(run.reference.converged);
  CHECK(run.rows.size() >= 5);
  CHECK(run.mono_slack_half >= -1e-9);
  CHECK(run.mono_slack_full >= -1e-9);
  for (double g : run.identity_gap) CHECK(g <= 1e-8);
  for (double tv : run.wrong_marginal_tv) CHECK(tv <= 1e-10);
  CHECK(run.lambda_hessian_sup > 0.0);
  // KL decays along the run
  CHECK(run.rows.back().kl_nn < run.rows.front().kl_nn);
}

TEST_CASE("gaussian recursion harness") {
  const auto r = check_gaussian_recursion(20, 200, 99);
  CHECK(r.max_limit_gap <= 1e-8);
  CHECK(r.max_fixed_point_residual <= 1e-12);
  CHECK(r.pinned_case_gap <= 1e-10);
  CHECK(r.monotone_tails);
}

TEST_CASE("polynomial lemma harness") {
  const auto r = check_polynomial_lemma(20, 2000, 7);
  CHECK(r.min_slack_prev_variant >= -1e-10);
  CHECK(r.max_scaled_as_stated <= r.max_scaled_allowance);
  // the documented alpha = 2 discrepancy
  CHECK(r.counterexample_a1 == doctest::Approx((std::sqrt(5.0) - 1.0) / 2.0).epsilon(1e-12));
  CHECK(r.counterexample_bound == doctest::Approx(0.5));
  CHECK(r.counterexample_a1 > r.counterexample_bound);
}

TEST_CASE("reweighting hits the requested kl") {
  const auto cfg = parse_experiment_config(kDemoConfig);
  const auto nu = build_marginal(cfg.nu);
  for (int fam = 0; fam < 5; ++fam) {
    const double target = 1e-3;
    const auto mu = reweight_to_target_kl(nu, fam, target, 17);
    CHECK(mu.aligned_with(nu));
    CHECK(kl(mu, nu) == doctest::Approx(target).epsilon(0.05));
  }
}

TEST_CASE("run_experiment produces deterministic artifacts and passes") {
  const auto cfg = parse_experiment_config(kDemoConfig);
  namespace fs = std::filesystem;
  const fs::path out1 = fs::temp_directory_path() / "eotlab_run1";
  const fs::path out2 = fs::temp_directory_path() / "eotlab_run2";
  fs::remove_all(out1);
  fs::remove_all(out2);

  const auto rep1 = run_experiment(cfg, out1, std::nullopt, 1);
  CHECK(rep1.exit_status == 0);
  for (const auto& o : rep1.outcomes) {
    INFO(o.id << ": " << o.detail);
    CHECK(o.passed);
  }
  CHECK(fs::exists(out1 / "eps_0p5" / "trace.csv"));
  CHECK(fs::exists(out1 / "eps_0p5" / "diagnostics.csv"));
  CHECK(fs::exists(out1 / "eps_0p5" / "report.txt"));
  CHECK(fs::exists(out1 / "summary.csv"));

  const auto rep2 = run_experiment(cfg, out2, std::nullopt, 2);
  CHECK(rep2.exit_status == 0);
  // byte-identical bodies outside comment lines, regardless of jobs
  CHECK(body_without_comments(slurp(out1 / "eps_0p5" / "trace.csv")) ==
        body_without_comments(slurp(out2 / "eps_0p5" / "trace.csv")));
  CHECK(body_without_comments(slurp(out1 / "summary.csv")) ==
        body_without_comments(slurp(out2 / "summary.csv")));

  // the trace has the mandated header
  const auto table = read_numeric_csv(out1 / "eps_0p5" / "trace.csv");
  REQUIRE(table.header.size() == 6);
  CHECK(table.header[0] == "n");
  CHECK(table.header[1] == "kl_plan_nn");
  CHECK(table.header[5] == "marginal_tv_error");
  CHECK(table.rows.size() >= 5);

  fs::remove_all(out1);
  fs::remove_all(out2);
}

TEST_CASE("hard check failure drives a nonzero exit status") {
  auto cfg = parse_experiment_config(kDemoConfig);
  cfg.checks = {"monotonicity"};
  cfg.monotonicity_slack = -1.0;  // demands slack >= 1, impossible
  namespace fs = std::filesystem;
  const fs::path out = fs::temp_directory_path() / "eotlab_run_fail";
  fs::remove_all(out);
  const auto rep = run_experiment(cfg, out, std::nullopt, 1);
  CHECK(rep.exit_status == 1);
  fs::remove_all(out);
}

TEST_CASE("cost specs build every family") {
  CostSpec quad;
  quad.family = "anisotropic-quadratic";
  quad.sigma_row_major = {1.0, 0.2, 0.2, 2.0};
  CHECK(cost_from_spec(quad, 2).family() == CostFamily::AnisotropicQuadratic);

  CostSpec elastic;
  elastic.family = "subspace-elastic";
  elastic.a_row_major = {1.0, 0.0};
  elastic.a_rows = 1;
  elastic.gamma = 0.5;
  CHECK(cost_from_spec(elastic, 2).family() == CostFamily::SubspaceElastic);

  CostSpec stvs;
  stvs.family = "stvs";
  stvs.gamma = 0.7;
  CHECK(cost_from_spec(stvs, 2).family() == CostFamily::Stvs);

  CostSpec pc;
  pc.family = "p-cost";
  pc.p = 1.5;
  CHECK(cost_from_spec(pc, 2).family() == CostFamily::PCost);

  CostSpec sd;
  sd.family = "sphere-delta";
  sd.delta = 0.9;
  CHECK(cost_from_spec(sd, 2).family() == CostFamily::SphereDelta);

  CostSpec bad;
  bad.family = "no-such-cost";
  CHECK_THROWS(cost_from_spec(bad, 2));
}

TEST_CASE("formula-only campaign needs no marginals") {
  const auto cfg = parse_experiment_config(
      R"({"epsilons": [1], "checks": ["gaussian-recursion", "polynomial", "sphere-derivatives"],
          "gaussian_recursion": {"draws": 5, "steps": 200},
          "polynomial": {"draws": 5, "steps": 500},
          "sphere": {"delta": 0.9, "samples": 40}})");
  namespace fs = std::filesystem;
  const fs::path out = fs::temp_directory_path() / "eotlab_run3";
  fs::remove_all(out);
  const auto rep = run_experiment(cfg, out, std::nullopt, 1);
  CHECK(rep.exit_status == 0);
  CHECK(rep.outcomes.size() == 3);
  fs::remove_all(out);
}

TEST_CASE("format_double round trips and stays short") {
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(10.0) == "10");
  CHECK(format_double(-3.0) == "-3");
  const double v = 0.1 + 0.2;
  CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
}
