#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "eotlab/diagnostics.hpp"
#include "eotlab/rate_theory.hpp"

namespace eotlab {

// ---------------------------------------------------------------------------
// Instrumented runs: one Sinkhorn run traced against a converged reference.

struct TraceRow {
  int n = 0;
  double kl_nn = 0.0;         // KL(ref | pi^{n,n})
  double kl_n1n = 0.0;        // KL(ref | pi^{n,n-1}); NaN at n = 0
  double kl_rho_wrong = 0.0;  // KL(rho | rho^{n-1,n-1}); NaN at n = 0
  double kl_nu_wrong = 0.0;   // KL(nu | nu^{n,n-1}); NaN at n = 0
  double marginal_tv = 0.0;   // TV(rho-marginal of pi^{n,n}, rho)
};

struct InstrumentedRun {
  SolveResult reference;
  std::vector<TraceRow> rows;  // rows[k] is iteration k, starting at 0
  std::vector<double> identity_gap;        // |lhs - rhs| between rows k-1, k (k >= 2)
  std::vector<double> wrong_marginal_tv;   // formula vs literal plan marginals, per k >= 1
  double mono_slack_half = 0.0;  // min over n of kl_n1n(n) - kl_nn(n)
  double mono_slack_full = 0.0;  // min over n of kl_nn(n-1) - kl_n1n(n)
  double lambda_hessian_sup = 0.0;  // max over recorded iterates of the hessian-sup probe
};

struct InstrumentOptions {
  int iteration_budget = 400;
  double reference_tol = 1e-13;
  int reference_max_iter = 100000;
  double kl_floor = 1e-13;   // stop tracing once KL(ref | pi^{n,n}) falls below
  bool track_lambda = false;
  int lambda_samples = 64;
  std::uint64_t lambda_seed = 20240601;
  std::optional<Eigen::VectorXd> phi0;
};

InstrumentedRun run_instrumented(const DiscreteMeasure& rho, const DiscreteMeasure& nu,
                                 const CostModel& cost, double epsilon,
                                 const InstrumentOptions& opts);

// ---------------------------------------------------------------------------
// Reusable check harnesses (shared by the CLI runner and the acceptance
// suite, which pins its own thresholds).

/// Derivative oracles against finite differences of the evaluation, along
/// straight lines (Euclidean) or geodesics (sphere). Relative error is
/// |fd - oracle| / max(1, |oracle|).
struct DerivCheckResult {
  double max_grad_err = 0.0;
  double max_hess_err = 0.0;
  double min_hess_eig = 0.0;  // over tangent spaces for sphere families
  double max_hess_eig = 0.0;
};
DerivCheckResult check_cost_derivatives(const CostModel& cost, int samples, std::uint64_t seed,
                                        double grad_step, double hess_step, double box_halfwidth = 2.0);

struct GaussianRecursionCheck {
  double max_limit_gap = 0.0;       // max over draws of |A_steps - A_inf|
  double max_fixed_point_residual = 0.0;
  double pinned_case_gap = 0.0;     // eps=2, Sigma=Id, alpha=beta=1 vs (sqrt(2)-1) Id
  bool monotone_tails = true;       // eigenvalue sequences eventually monotone
};
GaussianRecursionCheck check_gaussian_recursion(int draws, int steps, std::uint64_t seed);

struct PolynomialLemmaCheck {
  double min_slack_prev_variant = 0.0;   // bound - a_n >= 0 under the n-1 decrement
  double max_scaled_as_stated = 0.0;     // sup_{n >= 100} a_n n^{1/(alpha-1)} over draws
  double max_scaled_allowance = 0.0;     // 2 (C/(alpha-1))^{1/(alpha-1)}, worst draw
  double counterexample_a1 = 0.0;        // equality step from a0 = 1, alpha = 2, C = 1
  double counterexample_bound = 0.0;     // the displayed bound it exceeds
};
PolynomialLemmaCheck check_polynomial_lemma(int draws, long steps, std::uint64_t seed);

/// Smooth reweighting of nu with KL(mu | nu) tuned to `target_kl` by scaling
/// a fixed tilt field; `family` selects the field shape (5 shapes cycle).
DiscreteMeasure reweight_to_target_kl(const DiscreteMeasure& nu, int family, double target_kl,
                                      std::uint64_t seed);

// ---------------------------------------------------------------------------
// Config-driven experiment runner.

struct PotentialSpec {
  std::string kind = "quadratic";  // zero | quadratic | double-well | power | min-power
  double alpha = 1.0;              // quadratic modulus
  double well_m = 1.0;             // double-well: |x|^4 - m |x|^2
  double power_q = 3.0;            // power: |x|^q + delta_coef |x|^2
  double delta_coef = 0.1;
  double power_p = 1.5;            // min-power: min(|y|^2, sum_i |y_i|^p)
  std::vector<double> center;
};

struct TagSpec {
  std::string kind = "custom";  // strongly-log-concave | weakly-log-concave | light-tails | custom
  double alpha = 1.0;
  double weak_l = 0.0;
  double tail_c = 1.0, tail_delta = 1.0, tail_r = 0.0, tail_l = 0.0;
};

struct MarginalSpec {
  PotentialSpec potential;
  Box box;
  std::vector<int> resolution;
  TagSpec tag;
};

struct CostSpec {
  std::string family = "half-squared-euclidean";
  std::vector<double> sigma_row_major;  // anisotropic-quadratic
  std::vector<double> a_row_major;      // subspace-elastic projector seed, p x d
  int a_rows = 0;
  double gamma = 1.0;   // subspace-elastic / stvs
  double p = 1.5;       // p-cost
  double delta = 0.9;   // sphere-delta
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::vector<double> epsilons;
  int iteration_budget = 400;
  double reference_tol = 1e-13;
  bool emit_plots = false;
  std::vector<std::string> checks;
  MarginalSpec rho, nu;
  CostSpec cost;
  // probe and tolerance knobs
  int probe_samples = 160;
  int pair_count = 200;
  double lambda_margin = 1e-3;
  double envelope_slack = 0.05;
  double identity_tol = 1e-8;
  double monotonicity_slack = 1e-9;
  double hessian_tol = 1e-4;
  double gradient_tol = 1e-6;
  double conditional_kl_tol = 1e-8;
  double stability_slack = 1e-8;
  double discretization_slack = 0.05;
  std::optional<double> tau_override;
  // non-Sinkhorn checks
  int recursion_draws = 20;
  int recursion_steps = 200;
  int polynomial_draws = 20;
  long polynomial_steps = 10000;
  double sphere_delta = 0.9;
  int sphere_samples = 100;
};

extern const std::vector<std::string> kKnownChecks;

ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

LogDensityModel model_from_spec(const MarginalSpec& spec);
DiscreteMeasure build_marginal(const MarginalSpec& spec);
CostModel cost_from_spec(const CostSpec& spec, int dim);

struct CheckOutcome {
  std::string id;
  std::string cell;   // empty for run-level checks
  bool hard = true;
  bool passed = false;
  std::string detail;
};

struct RunReport {
  std::vector<CheckOutcome> outcomes;
  int exit_status = 0;  // nonzero iff a hard check failed
};

/// Executes the configured campaign: per (instance, epsilon) cell a trace
/// CSV, a diagnostics CSV and a plain-text report; a run-level summary CSV.
/// Cells run concurrently when jobs > 1; artifact bodies are byte-stable
/// across reruns with the same config and seed.
RunReport run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                         std::optional<std::uint64_t> seed_override, int jobs);

}  // namespace eotlab
