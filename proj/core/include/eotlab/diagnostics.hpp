#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "eotlab/exact_ot.hpp"
#include "eotlab/sinkhorn.hpp"

namespace eotlab {

/// pi^{n,n}(dx | y) for the current state: weights proportional to
/// rho_i exp(-(c(x_i,y) + phi_i)/eps). The psi value at y cancels.
DiscreteMeasure conditional_given_y(const SinkhornState& state, Eigen::Index y_index);
DiscreteMeasure conditional_at_point(const SinkhornState& state, const Eigen::VectorXd& y);

/// Everywhere-extensions of the potentials through the softmin displays.
/// Rows of `points` are query points.
Eigen::VectorXd psi_extension(const SinkhornState& state, const Eigen::MatrixXd& points);
Eigen::VectorXd phi_extension(const SinkhornState& state, const Eigen::MatrixXd& points);

struct MeanCov {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Weighted mean and two-pass weighted covariance of grad_map(X, y) with X
/// drawn from the conditional at y.
MeanCov conditional_mean_cov(const SinkhornState& state, const Eigen::VectorXd& y,
                             const std::function<Eigen::VectorXd(const Eigen::VectorXd&,
                                                                 const Eigen::VectorXd&)>& grad_map);

/// grad psi^n(y) = -E[grad_2 c(X,y)] and
/// hess psi^n(y) = -E[hess_2 c(X,y)] + Cov(grad_2 c(X,y))/eps
/// under the conditional at y; exact identities on discrete supports.
Eigen::VectorXd grad_psi_formula(const SinkhornState& state, const Eigen::VectorXd& y);
Eigen::MatrixXd hess_psi_formula(const SinkhornState& state, const Eigen::VectorXd& y);

/// Central-difference Hessian of the softmin-extended psi^n minus the
/// covariance formula, in operator norm. Euclidean geometries only; y must
/// keep the whole stencil inside the working box (default: bounding box of
/// the nu support).
double hessian_identity_residual(const SinkhornState& state, const Eigen::VectorXd& y,
                                 double fd_step, std::optional<Box> working_box = std::nullopt);

/// Central-difference gradient of the extended psi^n minus the
/// conditional-mean formula, max-norm.
double gradient_identity_residual(const SinkhornState& state, const Eigen::VectorXd& y,
                                  double fd_step);

enum class LambdaMode { DefinitionProbe, HessianSup };

struct ProbeSpec {
  LambdaMode mode = LambdaMode::HessianSup;
  int sample_count = 200;
  std::optional<Box> box;        // Euclidean probing region; default nu-support bbox
  double radius_max = 1.0;       // definition-probe pair separation cap (Euclidean)
  std::uint64_t seed = 20240601;
  bool include_support_atoms = true;
};

/// Sampled estimate of the semiconcavity constant of y -> c(x,y) + psi^n(y),
/// uniform over x in the rho support. Both modes are lower estimates of the
/// true supremum.
struct SemiconcavityEstimate {
  double lambda_hat = 0.0;
  int probe_count = 0;
  Eigen::Index worst_x_index = -1;
  Eigen::VectorXd worst_y, worst_z;
  LambdaMode mode = LambdaMode::HessianSup;
};

SemiconcavityEstimate estimate_lambda(const SinkhornState& state, const ProbeSpec& spec);

/// Max over sampled pairs (y,z) of KL(pi(.|y) | pi(.|z)) - (lambda/2eps) d(y,z)^2;
/// nonpositive when lambda dominates the true semiconcavity constant.
double conditional_kl_check(const SinkhornState& state, double lambda, int pair_count,
                            std::uint64_t rng_seed, std::optional<Box> box = std::nullopt);

/// Both sides of the per-step identity
///   KL(ref|pi^{n+1,n}) - KL(ref|pi^{n,n-1}) = -(KL(rho|rho^{n,n}) + KL(nu|nu^{n,n-1})),
/// evaluated from two consecutive states of one run. The caller asserts the
/// discrepancy.
std::pair<double, double> entropy_difference_identity(const SinkhornState& state_prev,
                                                      const SinkhornState& state_next,
                                                      const DiscretePlan& reference);

struct StabilityReport {
  double kl_plans = 0.0;       // KL(pi^mu | pi^nu)
  double kl_marginals = 0.0;   // KL(mu | nu)
  double transport = 0.0;      // W_2^2(mu, nu) or W_omega(mu, nu)
  double bound = 0.0;          // kl_marginals + lambda/(2 eps) * transport
  double slack = 0.0;          // bound - kl_plans, expected >= -1e-8
};

/// Evaluates the stability bound KL(pi^mu|pi^nu) <= KL(mu|nu) + (lambda/2eps) W
/// from two reference solves. mu and nu must share support atoms; lambda must
/// be certified for the (rho, nu) problem.
StabilityReport stability_gap(const DiscreteMeasure& rho, const DiscreteMeasure& nu,
                              const DiscreteMeasure& mu, const CostModel& cost, double epsilon,
                              double lambda,
                              const std::function<double(const Eigen::VectorXd&,
                                                         const Eigen::VectorXd&)>& omega = {});

}  // namespace eotlab
