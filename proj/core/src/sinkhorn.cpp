#include "eotlab/sinkhorn.hpp"

#include <cmath>
#include <stdexcept>

#include "eotlab/util.hpp"

namespace eotlab {

namespace {

// Thread the reductions only when the kernel is big enough to amortize the
// spawn cost.
int worker_count(Eigen::Index elements) { return elements >= 100000 ? 4 : 1; }

// out_i = -eps * LSE_j( base_j - C(i,j)/eps ) where base_j already folds the
// log weights and the potential on the integrated side.
Eigen::VectorXd softmin_rows(const Eigen::MatrixXd& c, const Eigen::VectorXd& base, double eps) {
  const Eigen::Index n = c.rows(), m = c.cols();
  Eigen::VectorXd out(n);
  const double inv_eps = 1.0 / eps;
  parallel_for(n, worker_count(n * m), [&](std::int64_t i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j) mx = std::max(mx, base[j] - c(i, j) * inv_eps);
    double s = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) s += std::exp(base[j] - c(i, j) * inv_eps - mx);
    out[i] = -eps * (mx + std::log(s));
  });
  return out;
}

// out_j = -eps * LSE_i( base_i - C(i,j)/eps ), column-wise counterpart.
Eigen::VectorXd softmin_cols(const Eigen::MatrixXd& c, const Eigen::VectorXd& base, double eps) {
  const Eigen::Index n = c.rows(), m = c.cols();
  Eigen::VectorXd out(m);
  const double inv_eps = 1.0 / eps;
  parallel_for(m, worker_count(n * m), [&](std::int64_t j) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) mx = std::max(mx, base[i] - c(i, j) * inv_eps);
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += std::exp(base[i] - c(i, j) * inv_eps - mx);
    out[j] = -eps * (mx + std::log(s));
  });
  return out;
}

Eigen::MatrixXd build_cost_matrix(const DiscreteMeasure& rho, const DiscreteMeasure& nu,
                                  const CostModel& cost) {
  Eigen::MatrixXd c(rho.size(), nu.size());
  parallel_for(rho.size(), worker_count(rho.size() * nu.size()), [&](std::int64_t i) {
    const Eigen::VectorXd xi = rho.point(i);
    for (Eigen::Index j = 0; j < nu.size(); ++j) c(i, j) = cost.eval(xi, nu.point(j));
  });
  return c;
}

Eigen::VectorXd softmin_at_points(const DiscreteMeasure& integrated,
                                  const Eigen::VectorXd& potential, const CostModel& cost,
                                  double eps, const Eigen::MatrixXd& query, bool query_is_x) {
  Eigen::VectorXd base =
      integrated.log_weights() - potential / eps;
  Eigen::VectorXd out(query.rows());
  parallel_for(query.rows(), worker_count(query.rows() * integrated.size()), [&](std::int64_t q) {
    const Eigen::VectorXd pt = query.row(q).transpose();
    double mx = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd a(integrated.size());
    for (Eigen::Index j = 0; j < integrated.size(); ++j) {
      const Eigen::VectorXd zj = integrated.point(j);
      const double cij = query_is_x ? cost.eval(pt, zj) : cost.eval(zj, pt);
      a[j] = base[j] - cij / eps;
      mx = std::max(mx, a[j]);
    }
    double s = 0.0;
    for (Eigen::Index j = 0; j < integrated.size(); ++j) s += std::exp(a[j] - mx);
    out[q] = -eps * (mx + std::log(s));
  });
  return out;
}

}  // namespace

double DiscretePlan::total_mass() const { return row_marginal().sum(); }

Eigen::VectorXd DiscretePlan::row_marginal() const {
  return log_weights.array().exp().matrix().rowwise().sum();
}

Eigen::VectorXd DiscretePlan::col_marginal() const {
  return log_weights.array().exp().matrix().colwise().sum().transpose();
}

SinkhornState::SinkhornState(DiscreteMeasure rho, DiscreteMeasure nu, const CostModel& cost,
                             double epsilon, std::optional<Eigen::VectorXd> phi0)
    : rho_(std::move(rho)), nu_(std::move(nu)), cost_(cost), epsilon_(epsilon) {
  if (!(epsilon > 0)) throw std::invalid_argument("SinkhornState: epsilon must be positive");
  if (rho_.geometry() != cost_.geometry() || nu_.geometry() != cost_.geometry())
    throw std::invalid_argument("SinkhornState: marginals and cost use different geometries");
  cost_matrix_ = std::make_shared<const Eigen::MatrixXd>(build_cost_matrix(rho_, nu_, cost_));

  phi_ = phi0.value_or(Eigen::VectorXd::Zero(rho_.size()));
  if (phi_.size() != rho_.size())
    throw std::invalid_argument("SinkhornState: phi0 must live on the rho support");
  // Fix the gauge before deriving psi; the pair (phi - m, -Phi_0(phi - m))
  // induces the same plan as the ungauged pair.
  phi_.array() -= rho_.weights().dot(phi_);
  psi_ = -softmin_over_rho(*this);
}

const Eigen::VectorXd& SinkhornState::phi_prev() const {
  if (!has_prev()) throw std::logic_error("SinkhornState: no previous iterate yet");
  return phi_prev_;
}

const Eigen::VectorXd& SinkhornState::psi_prev() const {
  if (!has_prev()) throw std::logic_error("SinkhornState: no previous iterate yet");
  return psi_prev_;
}

Eigen::VectorXd softmin_over_nu(const SinkhornState& state) {
  const Eigen::VectorXd base = state.nu().log_weights() - state.psi() / state.epsilon();
  return softmin_rows(state.cost_matrix(), base, state.epsilon());
}

Eigen::VectorXd softmin_over_nu(const SinkhornState& state, const Eigen::MatrixXd& query_points) {
  return softmin_at_points(state.nu(), state.psi(), state.cost(), state.epsilon(), query_points,
                           /*query_is_x=*/true);
}

Eigen::VectorXd softmin_over_rho(const SinkhornState& state) {
  const Eigen::VectorXd base = state.rho().log_weights() - state.phi() / state.epsilon();
  return softmin_cols(state.cost_matrix(), base, state.epsilon());
}

Eigen::VectorXd softmin_over_rho(const SinkhornState& state, const Eigen::MatrixXd& query_points) {
  return softmin_at_points(state.rho(), state.phi(), state.cost(), state.epsilon(), query_points,
                           /*query_is_x=*/false);
}

void sinkhorn_step(SinkhornState& state) {
  Eigen::VectorXd phi_raw = -softmin_over_nu(state);
  const double m = state.rho_.weights().dot(phi_raw);
  // Re-express the outgoing pair in the new gauge so pi^{n,n} and the
  // half-step plan keep their exact mass.
  state.phi_prev_ = state.phi_.array() - m;
  state.psi_prev_ = state.psi_.array() + m;
  state.phi_ = phi_raw.array() - m;
  state.psi_ = -softmin_over_rho(state);
  ++state.iteration_;
}

DiscretePlan plan(const SinkhornState& state, PlanKind kind) {
  const Eigen::VectorXd& phi = state.phi();
  const Eigen::VectorXd& psi = kind == PlanKind::nn ? state.psi() : state.psi_prev();
  const double inv_eps = 1.0 / state.epsilon();
  Eigen::MatrixXd lw = -inv_eps * state.cost_matrix();
  lw.colwise() += state.rho().log_weights() - inv_eps * phi;
  lw.rowwise() += (state.nu().log_weights() - inv_eps * psi).transpose();
  DiscretePlan p{std::move(lw), state.rho(), state.nu()};
  const double drift = std::abs(p.total_mass() - 1.0);
  if (drift > 1e-10)
    throw std::runtime_error("plan: normalization drift " + format_double(drift));
  return p;
}

std::pair<DiscreteMeasure, DiscreteMeasure> wrong_marginals(const SinkhornState& state) {
  const double inv_eps = 1.0 / state.epsilon();
  const Eigen::VectorXd nu_w =
      (state.nu().log_weights() - inv_eps * (state.psi_prev() - state.psi())).array().exp();
  const Eigen::VectorXd rho_w =
      (state.rho().log_weights() - inv_eps * (state.phi_prev() - state.phi())).array().exp();
  return {state.nu().reweighted(nu_w), state.rho().reweighted(rho_w)};
}

double kl(const DiscretePlan& p, const DiscretePlan& q) {
  if (p.log_weights.rows() != q.log_weights.rows() ||
      p.log_weights.cols() != q.log_weights.cols())
    throw std::invalid_argument("kl: plan shapes differ");
  double acc = 0.0;
  for (Eigen::Index j = 0; j < p.log_weights.cols(); ++j)
    for (Eigen::Index i = 0; i < p.log_weights.rows(); ++i) {
      const double lp = p.log_weights(i, j);
      const double w = std::exp(lp);
      if (w == 0.0) continue;
      acc += w * (lp - q.log_weights(i, j));
    }
  return acc;
}

double marginal_tv_error(const SinkhornState& state) {
  const DiscretePlan p = plan(state, PlanKind::nn);
  return 0.5 * (p.row_marginal() - state.rho().weights()).cwiseAbs().sum();
}

SolveResult solve_reference(const DiscreteMeasure& rho, const DiscreteMeasure& nu,
                            const CostModel& cost, double epsilon, const SolveOptions& opts) {
  if (!(opts.tol > 0)) throw std::invalid_argument("solve_reference: tol must be positive");
  SinkhornState state(rho, nu, cost, epsilon, opts.phi0);
  double tv = marginal_tv_error(state);
  int n = 0;
  while (tv > opts.tol && n < opts.max_iter) {
    sinkhorn_step(state);
    ++n;
    tv = marginal_tv_error(state);
  }
  return SolveResult{std::move(state), tv <= opts.tol, n, tv};
}

}  // namespace eotlab
