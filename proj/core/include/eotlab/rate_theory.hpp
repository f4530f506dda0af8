#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace eotlab {

enum class RateVariant { i, ii };

/// Contraction factor of the exponential-convergence theorem:
/// (i)  1 - min(tau Lambda, eps) / (min(tau Lambda, eps) + tau Lambda)
/// (ii) 1 - eps / (eps + tau Lambda)
double contraction_main(double epsilon, double tau, double lambda, RateVariant variant);

enum class RateSetting {
  LogConcaveSemiconvex,
  LogConcave,
  WeaklyLogConcave,
  LightTailsGeneral,
  LightTailsQuadratic,
  LipschitzInY,
  LipschitzInX,
  CompactSupport,
  CompactBoth,
  SphereRegularCost,
  SphereDeltaCost,
  HeavyTail,
};

std::string to_string(RateSetting s);
std::optional<RateSetting> rate_setting_from_string(const std::string& name);

/// Parameters of the rate catalog. Each setting reads only the fields its
/// proposition mentions; unset required fields raise an error.
struct RateParams {
  double tau = 0.0;
  double epsilon = 0.0;
  std::optional<double> alpha, beta;      // log-concavity moduli
  std::optional<double> sigma_norm;       // operator norm of the cost matrix Sigma
  std::optional<double> weak_l;           // weak log-concavity defect L
  std::optional<double> tail_c, tail_delta, tail_r, tail_l;  // light-tail profile
  std::optional<double> hess_upper, hess_lower;              // H(c), h(c)
  std::optional<double> lip;              // Lipschitz modulus of the cost
  std::optional<double> c_rho;            // log-Sobolev constant of rho
  std::optional<double> g_inf;            // sup |grad_2 c - Sigma y| over supp(rho)
  std::optional<double> grad_inf;         // sup |grad_2 c| over supp(rho) x supp(nu)
  std::optional<double> sphere_delta;     // smoothing parameter of the c_delta cost
  std::optional<double> heavy_k;          // user-supplied K (non-certified)
};

/// One evaluated rate formula: the semiconcavity constant implied by the
/// proposition's proof, the contraction factor, and whether epsilon is below
/// the proposition's smallness threshold (the formula is still reported when
/// it is not).
struct RateCertificate {
  RateSetting setting;
  std::string formula_id;
  double lambda = 0.0;
  double tau = 0.0;
  double epsilon = 0.0;
  double contraction = 0.0;
  double epsilon_threshold = 0.0;
  bool threshold_ok = false;
  bool certified = true;  // false where a constant is not computable from theory
};

RateCertificate rate_catalog(RateSetting setting, const RateParams& params);
std::vector<RateCertificate> rate_catalog_all(const RateParams& params);

/// (A_n, B_n) pair of the anisotropic Gaussian recursion; both commute with
/// the Sigma that generated them.
struct MatrixPair {
  Eigen::MatrixXd a;
  Eigen::MatrixXd b;
};

/// Iterates B_n = Sigma (A_n Sigma + eps alpha)^{-1},
/// A_{n+1} = Sigma (B_n Sigma + eps beta)^{-1} from A_0, in the joint
/// eigenbasis of (Sigma, A_0). Returns pairs (A_k, B_k) for k = 0..steps.
std::vector<MatrixPair> gaussian_recursion(const Eigen::MatrixXd& sigma, double alpha, double beta,
                                           double epsilon, const Eigen::MatrixXd& a0, int steps);

/// Closed-form limits A_inf, B_inf of the recursion.
MatrixPair gaussian_limits(const Eigen::MatrixXd& sigma, double alpha, double beta, double epsilon);

/// Operator-norm residual of the fixed-point characterization
/// B = ((B + eps beta Sigma^{-1})^{-1} + eps alpha Sigma^{-1})^{-1}.
double gaussian_fixed_point_residual(const Eigen::MatrixXd& sigma, double alpha, double beta,
                                     double epsilon, const MatrixPair& pair);

/// Hessian lower bound on phi^0 that certifies the warm-start envelope:
/// -Sigma - eps alpha/2 + (eps^2 alpha^2/4 + (alpha/beta) Sigma^2)^{1/2}.
Eigen::MatrixXd warm_start_lower_bound(const Eigen::MatrixXd& sigma, double alpha, double beta,
                                       double epsilon);

/// Light-tail conditional-covariance bound. With alpha supplied this is the
/// first displayed bound; without it the bound at the choice
/// alpha = eps + (H - h).
double lighttail_cov_bound(double hess_upper, double hess_lower, double tail_l, double tail_r,
                           double tail_c, double tail_delta, double epsilon,
                           std::optional<double> alpha = std::nullopt);

/// Bound on a nonnegative sequence with per-step decrement a_{n-1} - a_n >=
/// a_{n-1}^alpha / C (decrement measured at n-1):
/// a_k <= (k (alpha-1)/C + a_0^{-(alpha-1)})^{-1/(alpha-1)}.
double polynomial_bound(double alpha_exp, double c, double a_start, long k);

/// Displayed polynomial-convergence bound with exponent gamma/(1-gamma);
/// k counts iterations past the semiconcavity onset, k = 0 returns kl_start.
double polynomial_rate_theorem(double gamma, double m, double kl_start, long k);

}  // namespace eotlab
