#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include "eotlab/measures.hpp"

namespace eotlab {

enum class ExactCostKind { SquaredDistance, Omega };

/// Exact small-instance transportation plan with the dual certificate that
/// the solver maintains. Row sums match mu, column sums match nu, and the
/// duality gap is the primal-dual objective difference.
struct TransportPlanExact {
  Eigen::MatrixXd coupling;
  double objective = 0.0;
  ExactCostKind cost_kind = ExactCostKind::SquaredDistance;
  Eigen::VectorXd dual_mu, dual_nu;
  double dual_objective = 0.0;

  double duality_gap() const { return objective - dual_objective; }
};

/// Minimizes sum_ij pi_ij cost_ij over couplings of (mu, nu) by successive
/// shortest augmenting paths on the bipartite graph, with node potentials
/// kept dual-feasible throughout. Ties in the path selection are broken by
/// lowest node index, which makes the returned vertex deterministic.
TransportPlanExact solve_transport_lp(const Eigen::MatrixXd& cost, const Eigen::VectorXd& mu,
                                      const Eigen::VectorXd& nu,
                                      ExactCostKind kind = ExactCostKind::SquaredDistance);

struct ExactOtResult {
  double value = 0.0;
  TransportPlanExact plan;
};

/// Squared Wasserstein distance of order two on the measures' geometry.
/// Desk scale only: |mu| * |nu| is capped at 10^6 atom pairs.
ExactOtResult w2_squared(const DiscreteMeasure& mu, const DiscreteMeasure& nu);

/// Generalized transport functional W_omega for a nonnegative gauge omega.
ExactOtResult w_omega(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                      const std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>& omega);

/// Value of the monotone (sorted) coupling between two 1-d measures, optimal
/// for costs that are convex in the displacement. Used as the independent
/// oracle for the LP path.
double monotone_coupling_value_1d(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                  const std::function<double(double, double)>& cost);

void write_plan_csv(const TransportPlanExact& plan, const std::filesystem::path& path);

enum class TiForm { TI, TIOmega, Gamma };

struct TiProbeSpec {
  TiForm form = TiForm::TI;
  double tau = 1.0;
  double gamma = 0.5;  // exponent of the Gamma form rhs tau (KL + KL^gamma)
  std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)> omega;  // TIOmega/Gamma
  int candidate_count = 100;
  std::uint64_t rng_seed = 1;
};

struct TiProbeResult {
  double max_violation = 0.0;
  int worst_candidate = -1;
  std::string worst_family;
};

/// One-sided falsification probe of a transport inequality: the maximum of
/// lhs - rhs over randomly generated candidates mu sharing nu's support
/// (reweightings and local mass shifts). A nonpositive result is consistent
/// with the inequality, never a proof of it.
TiProbeResult ti_probe(const DiscreteMeasure& nu, const TiProbeSpec& spec);

}  // namespace eotlab
