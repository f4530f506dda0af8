#pragma once

#include <memory>
#include <optional>

#include "eotlab/costs.hpp"
#include "eotlab/measures.hpp"

namespace eotlab {

/// Coupling stored in log domain. exp(log_weights) sums to one up to
/// floating-point drift for every plan exposed by the iteration.
struct DiscretePlan {
  Eigen::MatrixXd log_weights;  // |rho| x |nu|
  DiscreteMeasure row_measure;
  DiscreteMeasure col_measure;

  double total_mass() const;
  Eigen::VectorXd row_marginal() const;
  Eigen::VectorXd col_marginal() const;
};

enum class PlanKind { nn, n_plus_1_n };

/// Log-domain Sinkhorn state for one (rho, nu, cost, epsilon) problem.
///
/// A full iteration maps (phi^n, psi^n) to
///   phi^{n+1} = -softmin over nu of psi^n   (row constraint becomes exact)
///   psi^{n+1} = -softmin over rho of phi^{n+1}  (column constraint exact)
/// The gauge sum_i rho_i phi_i = 0 is enforced after the phi half-step; the
/// compensating constant is pushed into the stored previous pair so every
/// exposed plan keeps unit mass exactly.
///
/// After n full steps the state holds the current pair (phi^n, psi^n) and,
/// once n >= 1, the previous pair expressed in the current gauge, which is
/// what the half-step plan pi^{n,n-1} and the wrong marginals are built from.
class SinkhornState {
 public:
  SinkhornState(DiscreteMeasure rho, DiscreteMeasure nu, const CostModel& cost, double epsilon,
                std::optional<Eigen::VectorXd> phi0 = std::nullopt);

  double epsilon() const { return epsilon_; }
  int iteration() const { return iteration_; }
  bool has_prev() const { return iteration_ >= 1; }

  const DiscreteMeasure& rho() const { return rho_; }
  const DiscreteMeasure& nu() const { return nu_; }
  const CostModel& cost() const { return cost_; }
  const Eigen::MatrixXd& cost_matrix() const { return *cost_matrix_; }

  const Eigen::VectorXd& phi() const { return phi_; }
  const Eigen::VectorXd& psi() const { return psi_; }
  const Eigen::VectorXd& phi_prev() const;
  const Eigen::VectorXd& psi_prev() const;

  friend void sinkhorn_step(SinkhornState& state);

 private:
  DiscreteMeasure rho_;
  DiscreteMeasure nu_;
  CostModel cost_;
  double epsilon_;
  std::shared_ptr<const Eigen::MatrixXd> cost_matrix_;  // shared across copies
  Eigen::VectorXd phi_, psi_;
  Eigen::VectorXd phi_prev_, psi_prev_;
  int iteration_ = 0;
};

/// Psi_0^nu(psi)(x) = -eps log sum_j nu_j exp(-(c(x,y_j)+psi_j)/eps),
/// evaluated at the rho-support atoms (cached cost matrix) or at arbitrary
/// query points (rows of `query_points`).
Eigen::VectorXd softmin_over_nu(const SinkhornState& state);
Eigen::VectorXd softmin_over_nu(const SinkhornState& state, const Eigen::MatrixXd& query_points);

/// Phi_0^rho(phi)(y), same convention with the roles of rho and nu swapped.
Eigen::VectorXd softmin_over_rho(const SinkhornState& state);
Eigen::VectorXd softmin_over_rho(const SinkhornState& state, const Eigen::MatrixXd& query_points);

void sinkhorn_step(SinkhornState& state);

/// The coupling induced by the current potentials (nn) or by the cached
/// half-step pair (n_plus_1_n, which requires at least one full step).
DiscretePlan plan(const SinkhornState& state, PlanKind kind);

/// (nu^{n+1,n}, rho^{n,n}) at the state's iteration n+1: the not-yet-
/// constrained marginals, computed from the potential-difference densities.
std::pair<DiscreteMeasure, DiscreteMeasure> wrong_marginals(const SinkhornState& state);

/// KL(p | q) between plans over identical supports, with 0 log 0 = 0.
double kl(const DiscretePlan& p, const DiscretePlan& q);

/// Total-variation distance between the rho-marginal of the current full
/// plan and rho; this is the free marginal after a full step.
double marginal_tv_error(const SinkhornState& state);

struct SolveOptions {
  double tol = 1e-13;
  int max_iter = 100000;
  std::optional<Eigen::VectorXd> phi0;
};

struct SolveResult {
  SinkhornState state;
  bool converged = false;
  int iterations = 0;
  double final_tv = 0.0;
};

/// Iterates until the free-marginal TV error drops below tol (or max_iter is
/// hit; reported via `converged`, not thrown). The converged plan serves as
/// the reference optimum for all diagnostics.
SolveResult solve_reference(const DiscreteMeasure& rho, const DiscreteMeasure& nu,
                            const CostModel& cost, double epsilon, const SolveOptions& opts = {});

}  // namespace eotlab
