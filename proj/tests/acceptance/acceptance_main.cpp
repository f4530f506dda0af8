// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Tolerances and instance parameters are pinned here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "eotlab/diagnostics.hpp"
#include "eotlab/experiment.hpp"
#include "eotlab/util.hpp"
#include "mpfr_sinkhorn.hpp"

using namespace eotlab;

namespace {

constexpr std::uint64_t kSeed = 20240601;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Fixture {
  // populated by criteria 1 and 2, reused by 5 and 7
  std::vector<InstrumentedRun> mono_runs;
  std::vector<InstrumentedRun> rate_runs;
  std::vector<SinkhornState> rate_states;  // converged reference states
  std::vector<double> rate_lambdas;        // hessian-sup + margin per run
};

Fixture fx;

DiscreteMeasure gaussian_grid_2d(double alpha, const Eigen::Vector2d& center, double half_width,
                                 int res) {
  return build_grid_measure(gaussian_model(alpha, center),
                            {{-half_width, half_width}, {-half_width, half_width}}, {res, res});
}

// --------------------------------------------------------------- criterion 1
Outcome criterion1_monotonicity() {
  std::mt19937_64 rng(kSeed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double worst_half = 1.0, worst_full = 1.0;
  for (int inst = 0; inst < 10; ++inst) {
    const int res = 10 + static_cast<int>(unif(rng) * 5.0);  // up to 14x14 per marginal
    const double a_rho = 0.7 + 0.8 * unif(rng);
    const double a_nu = 0.7 + 0.8 * unif(rng);
    Eigen::Vector2d c_rho(unif(rng) - 0.5, unif(rng) - 0.5);
    Eigen::Vector2d c_nu(unif(rng) - 0.5, unif(rng) - 0.5);
    const auto rho = gaussian_grid_2d(a_rho, c_rho, 2.5, res);
    const auto nu = gaussian_grid_2d(a_nu, c_nu, 2.5, res);
    const CostModel cost = inst % 2 == 0 ? CostModel::half_squared_euclidean(2)
                                         : CostModel::stvs(0.5 + unif(rng), 2);
    const double eps = inst < 5 ? 0.25 : 1.0;

    InstrumentOptions opts;
    opts.iteration_budget = 400;
    const auto run = run_instrumented(rho, nu, cost, eps, opts);
    if (!run.reference.converged)
      return {false, "instance " + std::to_string(inst) + " reference did not converge"};
    worst_half = std::min(worst_half, run.mono_slack_half);
    worst_full = std::min(worst_full, run.mono_slack_full);
    fx.mono_runs.push_back(run);
  }
  const bool pass = worst_half >= -1e-9 && worst_full >= -1e-9;
  return {pass, "min slack (full<=half) " + format_double(worst_half) +
                    ", (half<=prev full) " + format_double(worst_full) + " over 10 instances"};
}

// --------------------------------------------------------------- criterion 2
Outcome criterion2_rate_envelope() {
  const auto rho = gaussian_grid_2d(1.0, Eigen::Vector2d(0.15, -0.1), 3.0, 14);
  const auto nu = gaussian_grid_2d(1.0, Eigen::Vector2d(-0.2, 0.1), 3.0, 14);
  const auto cost = CostModel::half_squared_euclidean(2);
  const double tau = ti_constant(gaussian_model(1.0, Eigen::Vector2d::Zero()));

  bool pass = true;
  std::string detail;
  for (double eps : {1.0, 0.5}) {
    InstrumentOptions opts;
    opts.iteration_budget = 600;
    opts.kl_floor = 1e-13;
    opts.track_lambda = true;
    opts.lambda_samples = 128;
    opts.lambda_seed = kSeed;
    const auto run = run_instrumented(rho, nu, cost, eps, opts);
    if (!run.reference.converged) return {false, "reference did not converge"};

    const double lambda_hat = run.lambda_hessian_sup + 1e-3;
    const double envelope = contraction_main(eps, tau, lambda_hat, RateVariant::i) + 0.05;
    double max_ratio = 0.0;
    for (size_t n = 2; n + 1 < run.rows.size(); ++n) {
      if (run.rows[n].kl_nn < 1e-12) break;
      max_ratio = std::max(max_ratio, run.rows[n + 1].kl_nn / run.rows[n].kl_nn);
    }
    pass = pass && max_ratio <= envelope;
    detail += "eps=" + format_double(eps) + ": max_ratio=" + format_double(max_ratio) +
              " envelope=" + format_double(envelope) +
              " lambda_hat=" + format_double(lambda_hat) + "; ";
    fx.rate_runs.push_back(run);
    fx.rate_states.push_back(run.reference.state);
    fx.rate_lambdas.push_back(lambda_hat);
  }
  return {pass, detail};
}

// --------------------------------------------------------------- criterion 3
Outcome criterion3_gaussian_recursion() {
  const auto r = check_gaussian_recursion(20, 200, kSeed);
  const bool pass = r.max_limit_gap <= 1e-8 && r.max_fixed_point_residual <= 1e-12 &&
                    r.pinned_case_gap <= 1e-10;
  return {pass, "limit gap " + format_double(r.max_limit_gap) + ", residual " +
                    format_double(r.max_fixed_point_residual) + ", pinned case " +
                    format_double(r.pinned_case_gap)};
}

// --------------------------------------------------------------- criterion 4
Outcome criterion4_hessian_identity() {
  std::mt19937_64 rng(kSeed + 4);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double worst_hess = 0.0, worst_grad = 0.0;
  const struct {
    double alpha_rho, alpha_nu, eps;
  } instances[3] = {{1.0, 1.0, 0.5}, {0.8, 1.3, 1.0}, {1.4, 0.9, 0.7}};
  for (const auto& inst : instances) {
    const auto rho = gaussian_grid_2d(inst.alpha_rho, Eigen::Vector2d(0.2, 0.0), 2.0, 11);
    const auto nu = gaussian_grid_2d(inst.alpha_nu, Eigen::Vector2d(-0.1, 0.15), 2.0, 11);
    const auto res = solve_reference(rho, nu, CostModel::half_squared_euclidean(2), inst.eps);
    if (!res.converged) return {false, "reference did not converge"};
    for (int t = 0; t < 20; ++t) {
      Eigen::VectorXd y(2);
      y << -1.2 + 2.4 * unif(rng), -1.2 + 2.4 * unif(rng);
      worst_hess = std::max(worst_hess, hessian_identity_residual(res.state, y, 1e-3));
    }
    for (int t = 0; t < 50; ++t) {
      Eigen::VectorXd y(2);
      y << -1.5 + 3.0 * unif(rng), -1.5 + 3.0 * unif(rng);
      worst_grad = std::max(worst_grad, gradient_identity_residual(res.state, y, 1e-5));
    }
  }
  const bool pass = worst_hess <= 1e-4 && worst_grad <= 1e-6;
  return {pass, "max hessian residual " + format_double(worst_hess) +
                    ", max gradient residual " + format_double(worst_grad)};
}

// --------------------------------------------------------------- criterion 5
Outcome criterion5_conditional_kl() {
  if (fx.rate_states.empty()) return {false, "criterion 2 fixture missing"};
  double worst = -1.0;
  for (size_t k = 0; k < fx.rate_states.size(); ++k) {
    const double viol =
        conditional_kl_check(fx.rate_states[k], fx.rate_lambdas[k], 200, kSeed + 5);
    worst = std::max(worst, viol);
  }
  return {worst <= 1e-8, "max violation " + format_double(worst) + " over 200 pairs per instance"};
}

// --------------------------------------------------------------- criterion 6
Outcome criterion6_stability() {
  const auto rho = gaussian_grid_2d(1.0, Eigen::Vector2d(0.1, -0.1), 1.8, 6);
  const auto nu = gaussian_grid_2d(1.1, Eigen::Vector2d(-0.1, 0.0), 1.8, 6);
  const auto cost = CostModel::half_squared_euclidean(2);
  double worst_slack = 1.0;
  double kl_lo = 1.0, kl_hi = 0.0;
  for (double eps : {0.5, 1.0}) {
    const auto res = solve_reference(rho, nu, cost, eps);
    if (!res.converged) return {false, "reference did not converge"};
    ProbeSpec spec;
    spec.sample_count = 256;
    spec.seed = kSeed + 6;
    const double lambda = estimate_lambda(res.state, spec).lambda_hat + 1e-3;
    for (int fam = 0; fam < 5; ++fam) {
      const double target = 1e-4 * std::pow(10.0, 3.0 * fam / 4.0);  // spans [1e-4, 1e-1]
      const auto mu = reweight_to_target_kl(nu, fam, target, kSeed + 60 + fam);
      const auto rep = stability_gap(rho, nu, mu, cost, eps, lambda);
      worst_slack = std::min(worst_slack, rep.slack);
      kl_lo = std::min(kl_lo, rep.kl_marginals);
      kl_hi = std::max(kl_hi, rep.kl_marginals);
    }
  }
  const bool pass = worst_slack >= -1e-8 && kl_lo >= 0.5e-4 && kl_hi <= 2e-1;
  return {pass, "min slack " + format_double(worst_slack) + ", marginal KL in [" +
                    format_double(kl_lo) + ", " + format_double(kl_hi) + "]"};
}

// --------------------------------------------------------------- criterion 7
Outcome criterion7_entropy_identity() {
  if (fx.mono_runs.empty() || fx.rate_runs.empty())
    return {false, "criteria 1-2 fixtures missing"};
  double worst_gap = 0.0, worst_tv = 0.0;
  auto scan = [&](const std::vector<InstrumentedRun>& runs) {
    for (const auto& run : runs) {
      for (double g : run.identity_gap) worst_gap = std::max(worst_gap, g);
      for (double tv : run.wrong_marginal_tv) worst_tv = std::max(worst_tv, tv);
    }
  };
  scan(fx.mono_runs);
  scan(fx.rate_runs);
  const bool pass = worst_gap <= 1e-8 && worst_tv <= 1e-10;
  return {pass, "max |lhs-rhs| " + format_double(worst_gap) + ", max wrong-marginal TV " +
                    format_double(worst_tv)};
}

// --------------------------------------------------------------- criterion 8
Outcome criterion8_sphere_derivatives() {
  const auto reg =
      check_cost_derivatives(CostModel::sphere_regular(2), 100, kSeed + 8, 1e-4, 1e-4);
  const auto del =
      check_cost_derivatives(CostModel::sphere_delta(0.9, 2), 100, kSeed + 9, 1e-4, 1e-4);
  const bool pass = reg.max_grad_err <= 1e-5 && del.max_grad_err <= 1e-5 &&
                    reg.max_hess_err <= 1e-4 && del.max_hess_err <= 1e-4 &&
                    reg.min_hess_eig >= -1.0 - 1e-8 && reg.max_hess_eig <= 1.0 + 1e-8;
  return {pass, "grad err " + format_double(std::max(reg.max_grad_err, del.max_grad_err)) +
                    ", hess err " + format_double(std::max(reg.max_hess_err, del.max_hess_err)) +
                    ", regular eigs [" + format_double(reg.min_hess_eig) + ", " +
                    format_double(reg.max_hess_eig) + "]"};
}

// --------------------------------------------------------------- criterion 9
Outcome criterion9_polynomial() {
  const auto r = check_polynomial_lemma(20, 10000, kSeed + 10);
  const bool counterexample_ok =
      std::abs(r.counterexample_a1 - (std::sqrt(5.0) - 1.0) / 2.0) <= 1e-12 &&
      r.counterexample_a1 > r.counterexample_bound && r.counterexample_bound == 0.5;
  const bool pass = r.min_slack_prev_variant >= -1e-10 &&
                    r.max_scaled_as_stated <= r.max_scaled_allowance && counterexample_ok;
  return {pass, "min slack " + format_double(r.min_slack_prev_variant) + ", scaled sup " +
                    format_double(r.max_scaled_as_stated) + " (allowance " +
                    format_double(r.max_scaled_allowance) + "), counterexample a1 " +
                    format_double(r.counterexample_a1) + " > bound 0.5"};
}

// -------------------------------------------------------------- criterion 10
Outcome criterion10_exact_ot() {
  std::mt19937_64 rng(kSeed + 11);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.2, 1.0);
  auto random_1d = [&](int n) {
    Eigen::MatrixXd p(n, 1);
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) {
      p(i, 0) = gauss(rng);
      w[i] = unif(rng);
    }
    return DiscreteMeasure(p, w, Geometry::euclidean(1));
  };
  double worst_gap = 0.0, worst_mono = 0.0;
  auto sq = [](double a, double b) { return (a - b) * (a - b); };
  for (int t = 0; t < 100; ++t) {
    const auto mu = random_1d(5 + t % 30);
    const auto nu = random_1d(4 + (7 * t) % 35);
    const auto res = w2_squared(mu, nu);
    worst_gap = std::max(worst_gap, std::abs(res.plan.duality_gap()));
    worst_mono =
        std::max(worst_mono, std::abs(res.value - monotone_coupling_value_1d(mu, nu, sq)));
  }
  const bool pass = worst_gap <= 1e-9 && worst_mono <= 1e-10;
  return {pass, "max duality gap " + format_double(worst_gap) + ", max 1d-shortcut deviation " +
                    format_double(worst_mono) + " over 100 instances"};
}

// -------------------------------------------------------------- criterion 11
Outcome criterion11_heavy_tail() {
  // rho ~ exp(-|x|^3 - 0.1 x^2), nu ~ exp(-min(y^2, |y|^{1.5})), 1-d grids.
  // The decay measured here is e^{-4}..e^{-7} per iteration, so by iteration
  // 30 the plan KL sits near 1e-54 (eps = 0.5) and 1e-95 (eps = 1) — far
  // below what binary64 potentials can resolve. The regression therefore
  // runs on the extended-precision replica; the production pipeline is
  // cross-checked against it on the iterations it can still resolve.
  MarginalSpec rho_spec;
  rho_spec.potential.kind = "power";
  rho_spec.potential.power_q = 3.0;
  rho_spec.potential.delta_coef = 0.1;
  rho_spec.box = {{-2.6, 2.6}};
  rho_spec.resolution = {61};
  MarginalSpec nu_spec;
  nu_spec.potential.kind = "min-power";
  nu_spec.potential.power_p = 1.5;
  nu_spec.box = {{-7.0, 7.0}};
  nu_spec.resolution = {81};

  const auto rho = build_marginal(rho_spec);
  const auto nu = build_marginal(nu_spec);
  const auto cost = CostModel::half_squared_euclidean(1);
  const mp::Problem problem(rho.points().col(0), rho.weights(), nu.points().col(0), nu.weights());

  bool pass = true;
  std::string detail;
  for (double eps : {0.5, 1.0}) {
    const auto trace = mp::run_trace(problem, eps, 30);
    if (!trace.reference_converged) return {false, "extended-precision reference not converged"};

    // dual-route guard: the binary64 pipeline must agree where it still has
    // resolution
    InstrumentOptions opts;
    opts.iteration_budget = 4;
    opts.kl_floor = -std::numeric_limits<double>::infinity();
    const auto run = run_instrumented(rho, nu, cost, eps, opts);
    for (size_t n = 0; n <= 2; ++n) {
      const double here = run.rows[n].kl_nn;
      const double there = std::exp(trace.log_kl[n]);
      if (std::abs(here - there) > 1e-5 * std::max(here, there))
        return {false, "binary64 and extended-precision KL disagree at n=" + std::to_string(n)};
    }

    std::vector<double> xs, ys;
    for (size_t n = 3; n <= 30; ++n) {
      xs.push_back(static_cast<double>(n));
      ys.push_back(trace.log_kl[n]);
    }
    const auto fit = linear_fit(xs, ys);
    pass = pass && fit.slope < 0.0 && fit.r_squared >= 0.95;
    detail += "eps=" + format_double(eps) + ": slope=" + format_double(fit.slope) +
              " R2=" + format_double(fit.r_squared) +
              " logKL(30)=" + format_double(trace.log_kl[30]) + "; ";
  }
  return {pass, detail};
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* name;
    std::function<Outcome()> fn;
  };
  const std::vector<Entry> criteria = {
      {1, "monotonicity suite", criterion1_monotonicity},
      {2, "rate envelope (variant i)", criterion2_rate_envelope},
      {3, "gaussian recursion", criterion3_gaussian_recursion},
      {4, "hessian identity", criterion4_hessian_identity},
      {5, "conditional-KL lemma", criterion5_conditional_kl},
      {6, "stability theorem", criterion6_stability},
      {7, "entropy-difference identity", criterion7_entropy_identity},
      {8, "sphere derivatives", criterion8_sphere_derivatives},
      {9, "polynomial lemma", criterion9_polynomial},
      {10, "exact-OT oracle", criterion10_exact_ot},
      {11, "heavy-tail demo", criterion11_heavy_tail},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.fn();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %02d %-28s (%6.1fs) %s\n", out.pass ? "PASS" : "FAIL", c.id, c.name, secs,
                out.detail.c_str());
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  if (failures)
    std::printf("%d criterion(s) failed\n", failures);
  else
    std::printf("all 11 criteria passed\n");
  return failures == 0 ? 0 : 1;
}
