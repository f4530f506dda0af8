#include "eotlab/diagnostics.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "eotlab/util.hpp"

namespace eotlab {

namespace {

Box support_bbox(const DiscreteMeasure& m) {
  Box box;
  for (Eigen::Index k = 0; k < m.points().cols(); ++k)
    box.push_back({m.points().col(k).minCoeff(), m.points().col(k).maxCoeff()});
  return box;
}

// Normalized conditional log-weights on the rho support at an arbitrary y.
Eigen::VectorXd conditional_log_weights(const SinkhornState& state, const Eigen::VectorXd& y) {
  const DiscreteMeasure& rho = state.rho();
  const double inv_eps = 1.0 / state.epsilon();
  Eigen::VectorXd lw(rho.size());
  for (Eigen::Index i = 0; i < rho.size(); ++i)
    lw[i] = rho.log_weights()[i] - (state.cost().eval(rho.point(i), y) + state.phi()[i]) * inv_eps;
  lw.array() -= log_sum_exp(lw);
  return lw;
}

bool hess2_depends_on_x(const CostModel& cost) {
  switch (cost.family()) {
    case CostFamily::AnisotropicQuadratic:
    case CostFamily::SubspaceElastic:
    case CostFamily::HalfSquaredEuclidean:
      return false;
    default:
      return true;
  }
}

bool inside_box(const Box& box, const Eigen::VectorXd& y, double pad) {
  for (Eigen::Index k = 0; k < y.size(); ++k)
    if (y[k] - pad < box[static_cast<size_t>(k)][0] || y[k] + pad > box[static_cast<size_t>(k)][1])
      return false;
  return true;
}

Eigen::VectorXd sample_in_box(const Box& box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd y(static_cast<Eigen::Index>(box.size()));
  for (size_t k = 0; k < box.size(); ++k)
    y[static_cast<Eigen::Index>(k)] = box[k][0] + (box[k][1] - box[k][0]) * unif(rng);
  return y;
}

Eigen::VectorXd sample_on_sphere(Eigen::Index ambient, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd y(ambient);
  do {
    for (Eigen::Index k = 0; k < ambient; ++k) y[k] = gauss(rng);
  } while (y.norm() < 1e-12);
  return y / y.norm();
}

Eigen::VectorXd sample_tangent(const Eigen::VectorXd& y, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(y.size());
  double n = 0;
  do {
    for (Eigen::Index k = 0; k < y.size(); ++k) v[k] = gauss(rng);
    v -= v.dot(y) * y;
    n = v.norm();
  } while (n < 1e-12);
  return v / n;
}

// KL between the conditionals at y and z, computed from normalized
// log-weights over the shared rho support.
double conditional_kl_pair(const SinkhornState& state, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& z) {
  const Eigen::VectorXd ly = conditional_log_weights(state, y);
  const Eigen::VectorXd lz = conditional_log_weights(state, z);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < ly.size(); ++i) {
    const double w = std::exp(ly[i]);
    if (w > 0) acc += w * (ly[i] - lz[i]);
  }
  return acc;
}

}  // namespace

DiscreteMeasure conditional_given_y(const SinkhornState& state, Eigen::Index y_index) {
  if (y_index < 0 || y_index >= state.nu().size())
    throw std::invalid_argument("conditional_given_y: index out of range");
  return conditional_at_point(state, state.nu().point(y_index));
}

DiscreteMeasure conditional_at_point(const SinkhornState& state, const Eigen::VectorXd& y) {
  const Eigen::VectorXd lw = conditional_log_weights(state, y);
  return state.rho().reweighted(lw.array().exp());
}

Eigen::VectorXd psi_extension(const SinkhornState& state, const Eigen::MatrixXd& points) {
  return -softmin_over_rho(state, points);
}

Eigen::VectorXd phi_extension(const SinkhornState& state, const Eigen::MatrixXd& points) {
  return -softmin_over_nu(state, points);
}

MeanCov conditional_mean_cov(const SinkhornState& state, const Eigen::VectorXd& y,
                             const std::function<Eigen::VectorXd(const Eigen::VectorXd&,
                                                                 const Eigen::VectorXd&)>& grad_map) {
  const Eigen::VectorXd w = conditional_log_weights(state, y).array().exp();
  const Eigen::Index n = w.size();
  std::vector<Eigen::VectorXd> g(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) g[static_cast<size_t>(i)] = grad_map(state.rho().point(i), y);
  const Eigen::Index d = g[0].size();

  MeanCov mc;
  mc.mean = Eigen::VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i) mc.mean += w[i] * g[static_cast<size_t>(i)];
  mc.cov = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd centered = g[static_cast<size_t>(i)] - mc.mean;
    mc.cov += w[i] * centered * centered.transpose();
  }
  mc.cov = 0.5 * (mc.cov + mc.cov.transpose());
  return mc;
}

Eigen::VectorXd grad_psi_formula(const SinkhornState& state, const Eigen::VectorXd& y) {
  const CostModel& cost = state.cost();
  return -conditional_mean_cov(state, y,
                               [&cost](const Eigen::VectorXd& x, const Eigen::VectorXd& yy) {
                                 return cost.grad2(x, yy);
                               })
              .mean;
}

Eigen::MatrixXd hess_psi_formula(const SinkhornState& state, const Eigen::VectorXd& y) {
  const CostModel& cost = state.cost();
  const Eigen::VectorXd w = conditional_log_weights(state, y).array().exp();
  const Eigen::Index d = y.size();
  Eigen::MatrixXd mean_hess = Eigen::MatrixXd::Zero(d, d);
  if (hess2_depends_on_x(cost)) {
    for (Eigen::Index i = 0; i < w.size(); ++i)
      mean_hess += w[i] * cost.hess2(state.rho().point(i), y);
  } else {
    mean_hess = cost.hess2(state.rho().point(0), y);
  }
  const MeanCov mc = conditional_mean_cov(
      state, y,
      [&cost](const Eigen::VectorXd& x, const Eigen::VectorXd& yy) { return cost.grad2(x, yy); });
  return -mean_hess + mc.cov / state.epsilon();
}

double gradient_identity_residual(const SinkhornState& state, const Eigen::VectorXd& y,
                                  double fd_step) {
  if (state.cost().geometry().tag != GeometryTag::Euclidean)
    throw std::invalid_argument("gradient_identity_residual: Euclidean geometries only");
  const Eigen::Index d = y.size();
  Eigen::VectorXd fd(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    Eigen::MatrixXd pts(2, d);
    pts.row(0) = y.transpose();
    pts.row(1) = y.transpose();
    pts(0, k) += fd_step;
    pts(1, k) -= fd_step;
    const Eigen::VectorXd vals = psi_extension(state, pts);
    fd[k] = (vals[0] - vals[1]) / (2.0 * fd_step);
  }
  return (fd - grad_psi_formula(state, y)).cwiseAbs().maxCoeff();
}

double hessian_identity_residual(const SinkhornState& state, const Eigen::VectorXd& y,
                                 double fd_step, std::optional<Box> working_box) {
  if (state.cost().geometry().tag != GeometryTag::Euclidean)
    throw std::invalid_argument("hessian_identity_residual: Euclidean geometries only");
  const Box box = working_box.value_or(support_bbox(state.nu()));
  if (!inside_box(box, y, 2.0 * fd_step))
    throw std::invalid_argument("hessian_identity_residual: stencil leaves the working box");

  const Eigen::Index d = y.size();
  auto psi_at = [&](const Eigen::VectorXd& q) {
    Eigen::MatrixXd pts(1, d);
    pts.row(0) = q.transpose();
    return psi_extension(state, pts)[0];
  };
  const double center = psi_at(y);
  Eigen::MatrixXd fd(d, d);
  for (Eigen::Index k = 0; k < d; ++k) {
    Eigen::VectorXd up = y, dn = y;
    up[k] += fd_step;
    dn[k] -= fd_step;
    fd(k, k) = (psi_at(up) - 2.0 * center + psi_at(dn)) / (fd_step * fd_step);
    for (Eigen::Index l = k + 1; l < d; ++l) {
      Eigen::VectorXd pp = y, pm = y, mp = y, mm = y;
      pp[k] += fd_step; pp[l] += fd_step;
      pm[k] += fd_step; pm[l] -= fd_step;
      mp[k] -= fd_step; mp[l] += fd_step;
      mm[k] -= fd_step; mm[l] -= fd_step;
      fd(k, l) = fd(l, k) =
          (psi_at(pp) - psi_at(pm) - psi_at(mp) + psi_at(mm)) / (4.0 * fd_step * fd_step);
    }
  }
  const Eigen::MatrixXd residual = fd - hess_psi_formula(state, y);
  return operator_norm_sym(0.5 * (residual + residual.transpose()));
}

SemiconcavityEstimate estimate_lambda(const SinkhornState& state, const ProbeSpec& spec) {
  const bool sphere = state.cost().geometry().tag == GeometryTag::Sphere;
  const Geometry geom = state.cost().geometry();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Box box = spec.box.value_or(support_bbox(state.nu()));

  SemiconcavityEstimate est;
  est.mode = spec.mode;
  est.lambda_hat = -std::numeric_limits<double>::infinity();

  auto sample_y = [&]() {
    return sphere ? sample_on_sphere(state.nu().points().cols(), rng) : sample_in_box(box, rng);
  };

  if (spec.mode == LambdaMode::HessianSup) {
    std::vector<Eigen::VectorXd> ys;
    for (int s = 0; s < spec.sample_count; ++s) ys.push_back(sample_y());
    if (spec.include_support_atoms)
      for (Eigen::Index j = 0; j < state.nu().size(); ++j) ys.push_back(state.nu().point(j));

    const bool x_dependent = hess2_depends_on_x(state.cost());
    for (const auto& y : ys) {
      const Eigen::MatrixXd hp = hess_psi_formula(state, y);
      Eigen::Index n_x = x_dependent ? state.rho().size() : 1;
      for (Eigen::Index i = 0; i < n_x; ++i) {
        Eigen::MatrixXd total = state.cost().hess2(state.rho().point(i), y) + hp;
        double lam;
        if (sphere) {
          const Eigen::MatrixXd basis = sphere_tangent_basis(y);
          lam = max_eigenvalue_sym(basis.transpose() * total * basis);
        } else {
          lam = max_eigenvalue_sym(total);
        }
        if (lam > est.lambda_hat) {
          est.lambda_hat = lam;
          est.worst_x_index = x_dependent ? i : -1;
          est.worst_y = y;
          est.worst_z = y;
        }
      }
      ++est.probe_count;
    }
    return est;
  }

  // Definition probe: quotient 2 [f(z) - f(y) - <grad f(y), log_map(y,z)>] / d(y,z)^2
  // with f = c(x,.) + psi, maximized over sampled pairs and all x atoms.
  for (int s = 0; s < spec.sample_count; ++s) {
    const Eigen::VectorXd y = sample_y();
    Eigen::VectorXd z;
    if (sphere) {
      const double r = (0.5 * std::numbers::pi) * std::max(unif(rng), 1e-3);
      z = sphere_exp(y, sample_tangent(y, rng), r);
    } else {
      z = sample_in_box(box, rng);
    }
    const double dist = geom.distance(y, z);
    if (dist < 1e-8) continue;  // degenerate pair
    const Eigen::VectorXd step = geom.log_map(y, z);

    Eigen::MatrixXd pts(2, y.size());
    pts.row(0) = y.transpose();
    pts.row(1) = z.transpose();
    const Eigen::VectorXd psi_vals = psi_extension(state, pts);
    const Eigen::VectorXd gpsi = grad_psi_formula(state, y);
    const double dpsi = psi_vals[1] - psi_vals[0] - gpsi.dot(step);

    for (Eigen::Index i = 0; i < state.rho().size(); ++i) {
      const Eigen::VectorXd x = state.rho().point(i);
      const double dc =
          state.cost().eval(x, z) - state.cost().eval(x, y) - state.cost().grad2(x, y).dot(step);
      const double quotient = 2.0 * (dc + dpsi) / (dist * dist);
      if (quotient > est.lambda_hat) {
        est.lambda_hat = quotient;
        est.worst_x_index = i;
        est.worst_y = y;
        est.worst_z = z;
      }
    }
    ++est.probe_count;
  }
  return est;
}

double conditional_kl_check(const SinkhornState& state, double lambda, int pair_count,
                            std::uint64_t rng_seed, std::optional<Box> box_opt) {
  const bool sphere = state.cost().geometry().tag == GeometryTag::Sphere;
  const Geometry geom = state.cost().geometry();
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Box box = box_opt.value_or(support_bbox(state.nu()));

  double worst = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < pair_count; ++s) {
    Eigen::VectorXd y, z;
    if (sphere) {
      y = sample_on_sphere(state.nu().points().cols(), rng);
      z = sphere_exp(y, sample_tangent(y, rng), (0.5 * std::numbers::pi) * unif(rng));
    } else {
      y = sample_in_box(box, rng);
      z = sample_in_box(box, rng);
    }
    const double dist = geom.distance(y, z);
    if (dist < 1e-8) continue;
    const double lhs = conditional_kl_pair(state, y, z);
    const double rhs = lambda / (2.0 * state.epsilon()) * dist * dist;
    worst = std::max(worst, lhs - rhs);
  }
  return worst;
}

std::pair<double, double> entropy_difference_identity(const SinkhornState& state_prev,
                                                      const SinkhornState& state_next,
                                                      const DiscretePlan& reference) {
  if (state_next.iteration() != state_prev.iteration() + 1)
    throw std::invalid_argument("entropy_difference_identity: states are not consecutive");
  if (!state_prev.rho().aligned_with(state_next.rho()) ||
      !state_prev.nu().aligned_with(state_next.nu()) ||
      state_prev.epsilon() != state_next.epsilon())
    throw std::invalid_argument("entropy_difference_identity: states come from different runs");

  const double lhs = kl(reference, plan(state_next, PlanKind::n_plus_1_n)) -
                     kl(reference, plan(state_prev, PlanKind::n_plus_1_n));
  const auto [nu_wrong_prev, rho_wrong_prev] = wrong_marginals(state_prev);
  const auto [nu_wrong_next, rho_wrong_next] = wrong_marginals(state_next);
  (void)nu_wrong_next;
  (void)rho_wrong_prev;
  const double rhs =
      -(kl(state_next.rho(), rho_wrong_next) + kl(state_prev.nu(), nu_wrong_prev));
  return {lhs, rhs};
}

StabilityReport stability_gap(const DiscreteMeasure& rho, const DiscreteMeasure& nu,
                              const DiscreteMeasure& mu, const CostModel& cost, double epsilon,
                              double lambda,
                              const std::function<double(const Eigen::VectorXd&,
                                                         const Eigen::VectorXd&)>& omega) {
  if (!mu.aligned_with(nu))
    throw std::invalid_argument("stability_gap: mu must share the support of nu");

  StabilityReport rep;
  rep.kl_marginals = kl(mu, nu);
  if (!std::isfinite(rep.kl_marginals)) {
    rep.bound = std::numeric_limits<double>::infinity();
    rep.slack = std::numeric_limits<double>::infinity();
    return rep;
  }

  const SolveResult ref_nu = solve_reference(rho, nu, cost, epsilon);
  const SolveResult ref_mu = solve_reference(rho, mu, cost, epsilon);
  rep.kl_plans = kl(plan(ref_mu.state, PlanKind::nn), plan(ref_nu.state, PlanKind::nn));
  rep.transport = omega ? w_omega(mu, nu, omega).value : w2_squared(mu, nu).value;
  rep.bound = rep.kl_marginals + lambda / (2.0 * epsilon) * rep.transport;
  rep.slack = rep.bound - rep.kl_plans;
  return rep;
}

}  // namespace eotlab
