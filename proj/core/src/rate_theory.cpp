#include "eotlab/rate_theory.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "eotlab/util.hpp"

namespace eotlab {

namespace {

double require(const std::optional<double>& v, const char* name) {
  if (!v) throw std::invalid_argument(std::string("rate_catalog: missing parameter ") + name);
  return *v;
}

void require_positive(double v, const char* name) {
  if (!(v > 0)) throw std::invalid_argument(std::string(name) + " must be positive");
}

// Joint eigenbasis of a commuting symmetric pair: diagonalize sigma, then
// re-diagonalize `a` inside each (near-)repeated eigenspace of sigma.
struct JointBasis {
  Eigen::MatrixXd q;
  Eigen::VectorXd sigma_eig;
  Eigen::VectorXd a_eig;
};

JointBasis joint_diagonalize(const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& a) {
  const Eigen::Index d = sigma.rows();
  const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff() * a.cwiseAbs().maxCoeff());
  if (((sigma * a - a * sigma).cwiseAbs().maxCoeff()) > 1e-10 * scale)
    throw std::invalid_argument("gaussian_recursion: A0 does not commute with Sigma");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
  Eigen::MatrixXd q = es.eigenvectors();
  Eigen::VectorXd sd = es.eigenvalues();

  Eigen::MatrixXd a_rot = q.transpose() * a * q;
  const double gap_tol = 1e-9 * std::max(1.0, sd.cwiseAbs().maxCoeff());
  Eigen::Index start = 0;
  while (start < d) {
    Eigen::Index end = start + 1;
    while (end < d && sd[end] - sd[end - 1] <= gap_tol) ++end;
    if (end - start > 1) {
      Eigen::MatrixXd block = a_rot.block(start, start, end - start, end - start);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> bes(0.5 * (block + block.transpose()));
      q.middleCols(start, end - start) = q.middleCols(start, end - start) * bes.eigenvectors();
    }
    start = end;
  }
  JointBasis jb;
  jb.q = q;
  jb.sigma_eig = sd;
  jb.a_eig = (q.transpose() * a * q).diagonal();
  return jb;
}

Eigen::MatrixXd compose(const Eigen::MatrixXd& q, const Eigen::VectorXd& eig) {
  return q * eig.asDiagonal() * q.transpose();
}

void check_spd(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols())
    throw std::invalid_argument("gaussian recursion: Sigma must be square");
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() >
      1e-12 * (1.0 + sigma.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("gaussian recursion: Sigma must be symmetric");
  if (min_eigenvalue_sym(sigma) <= 0)
    throw std::invalid_argument("gaussian recursion: Sigma must be positive definite");
}

}  // namespace

double contraction_main(double epsilon, double tau, double lambda, RateVariant variant) {
  require_positive(epsilon, "epsilon");
  require_positive(tau, "tau");
  require_positive(lambda, "lambda");
  const double tl = tau * lambda;
  if (variant == RateVariant::i) {
    const double m = std::min(tl, epsilon);
    return 1.0 - m / (m + tl);
  }
  return 1.0 - epsilon / (epsilon + tl);
}

std::string to_string(RateSetting s) {
  switch (s) {
    case RateSetting::LogConcaveSemiconvex: return "log-concave-semiconvex";
    case RateSetting::LogConcave: return "log-concave";
    case RateSetting::WeaklyLogConcave: return "weakly-log-concave";
    case RateSetting::LightTailsGeneral: return "light-tails-general";
    case RateSetting::LightTailsQuadratic: return "light-tails-quadratic";
    case RateSetting::LipschitzInY: return "lipschitz-y";
    case RateSetting::LipschitzInX: return "lipschitz-x";
    case RateSetting::CompactSupport: return "compact";
    case RateSetting::CompactBoth: return "compact-both";
    case RateSetting::SphereRegularCost: return "sphere-regular";
    case RateSetting::SphereDeltaCost: return "sphere-delta";
    case RateSetting::HeavyTail: return "heavy-tail";
  }
  return "?";
}

std::optional<RateSetting> rate_setting_from_string(const std::string& name) {
  for (RateSetting s :
       {RateSetting::LogConcaveSemiconvex, RateSetting::LogConcave, RateSetting::WeaklyLogConcave,
        RateSetting::LightTailsGeneral, RateSetting::LightTailsQuadratic, RateSetting::LipschitzInY,
        RateSetting::LipschitzInX, RateSetting::CompactSupport, RateSetting::CompactBoth,
        RateSetting::SphereRegularCost, RateSetting::SphereDeltaCost, RateSetting::HeavyTail})
    if (to_string(s) == name) return s;
  return std::nullopt;
}

RateCertificate rate_catalog(RateSetting setting, const RateParams& p) {
  require_positive(p.tau, "tau");
  require_positive(p.epsilon, "epsilon");
  const double tau = p.tau, eps = p.epsilon;

  RateCertificate cert;
  cert.setting = setting;
  cert.tau = tau;
  cert.epsilon = eps;

  switch (setting) {
    case RateSetting::LogConcaveSemiconvex: {
      const double alpha = require(p.alpha, "alpha");
      const double beta = require(p.beta, "beta");
      const double sn = require(p.sigma_norm, "sigma_norm");
      require_positive(alpha, "alpha");
      require_positive(beta, "beta");
      require_positive(sn, "sigma_norm");
      const double ratio = std::sqrt(beta / alpha);
      cert.lambda = sn * ratio;
      cert.contraction = 1.0 - eps / (eps + tau * sn * ratio);
      cert.epsilon_threshold = tau * ratio * sn;
      cert.formula_id = "anisotropic-quick-rate";
      break;
    }
    case RateSetting::LogConcave: {
      const double alpha = require(p.alpha, "alpha");
      const double sn = require(p.sigma_norm, "sigma_norm");
      require_positive(alpha, "alpha");
      require_positive(sn, "sigma_norm");
      cert.lambda = sn * sn / (eps * alpha);
      cert.contraction = 1.0 - eps * eps * alpha / (eps * eps * alpha + tau * sn * sn);
      cert.epsilon_threshold = sn * std::sqrt(tau / alpha);
      cert.formula_id = "rate-log-concave";
      break;
    }
    case RateSetting::WeaklyLogConcave: {
      const double alpha = require(p.alpha, "alpha");
      const double l = require(p.weak_l, "weak_l");
      require_positive(alpha, "alpha");
      if (l < 0) throw std::invalid_argument("weak_l must be nonnegative");
      cert.lambda = 1.0 / (eps * alpha) + l / (eps * alpha * alpha);
      cert.contraction =
          1.0 - eps * eps * alpha * alpha / (eps * eps * alpha * alpha + tau * (alpha + l));
      cert.epsilon_threshold = std::sqrt(tau * (alpha + l)) / alpha;
      cert.formula_id = "rate-weakly-log-concave";
      break;
    }
    case RateSetting::LightTailsGeneral: {
      const double hu = require(p.hess_upper, "hess_upper");
      const double hl = require(p.hess_lower, "hess_lower");
      const double c = require(p.tail_c, "tail_c");
      const double del = require(p.tail_delta, "tail_delta");
      const double r = require(p.tail_r, "tail_r");
      const double l = require(p.tail_l, "tail_l");
      if (hu < hl) throw std::invalid_argument("hess_upper must dominate hess_lower");
      require_positive(c, "tail_c");
      require_positive(del, "tail_delta");
      const double dh = hu - hl;
      const double e2d = std::pow(eps, 2.0 / del);
      const double num = eps * eps * e2d;
      const double den = num + eps * e2d * tau * dh +
                         2.0 * tau * hu * hu *
                             (e2d + (l + 2.0) * (l + 2.0) * std::pow(c, -2.0 / del) *
                                        std::pow(eps + 2.0 * dh, 2.0 / del));
      cert.contraction = 1.0 - num / den;
      cert.lambda = dh + (2.0 * hu * hu / eps) *
                             (1.0 + (l + 2.0) * (l + 2.0) *
                                        std::max(r * r, std::pow(c, -2.0 / del) *
                                                            std::pow(1.0 + 2.0 * dh / eps,
                                                                     2.0 / del)));
      const double gate = (r > 0 && std::pow(r, del) * c > 1.0)
                              ? dh / (std::pow(r, del) * c - 1.0)
                              : std::numeric_limits<double>::infinity();
      const double tail = std::pow(
          tau * dh + 2.0 * tau * hu * hu *
                         (1.0 + (l + 2.0) * (l + 2.0) * std::pow(c, -2.0 / del) *
                                    std::pow(1.0 + 2.0 * dh, 2.0 / del)),
          del / (2.0 + 2.0 * del));
      cert.epsilon_threshold = std::min({1.0, gate, tail});
      cert.formula_id = "rate-light-tails-general";
      break;
    }
    case RateSetting::LightTailsQuadratic: {
      const double sn = require(p.sigma_norm, "sigma_norm");
      const double c = require(p.tail_c, "tail_c");
      const double del = require(p.tail_delta, "tail_delta");
      const double r = require(p.tail_r, "tail_r");
      const double l = require(p.tail_l, "tail_l");
      require_positive(sn, "sigma_norm");
      require_positive(c, "tail_c");
      require_positive(del, "tail_delta");
      const double bracket = std::max(r * r, std::pow(c, -2.0 / del));
      const double bulk = 2.0 * tau * sn * sn * (1.0 + (l + 1.0) * (l + 1.0) * bracket);
      cert.contraction = 1.0 - eps * eps / (eps * eps + bulk);
      cert.lambda = (2.0 * sn * sn / eps) * (1.0 + (l + 1.0) * (l + 1.0) * bracket);
      cert.epsilon_threshold =
          sn * std::sqrt(2.0 * tau * (1.0 + (l + 1.0) * (l + 1.0) * bracket));
      cert.formula_id = "rate-light-tails-quadratic";
      break;
    }
    case RateSetting::LipschitzInY: {
      const double hu = require(p.hess_upper, "hess_upper");
      const double hl = require(p.hess_lower, "hess_lower");
      const double lip = require(p.lip, "lip");
      if (hu < hl) throw std::invalid_argument("hess_upper must dominate hess_lower");
      const double dh = hu - hl;
      cert.lambda = dh + lip * lip / eps;
      cert.contraction =
          1.0 - eps * eps / (eps * eps + tau * eps * dh + tau * lip * lip);
      cert.epsilon_threshold =
          0.5 * (tau * dh + std::sqrt(tau * tau * dh * dh + 4.0 * tau * lip * lip));
      cert.formula_id = "rate-lipschitz-y";
      break;
    }
    case RateSetting::LipschitzInX: {
      const double hu = require(p.hess_upper, "hess_upper");
      const double hl = require(p.hess_lower, "hess_lower");
      const double lip = require(p.lip, "lip");
      const double cr = require(p.c_rho, "c_rho");
      if (hu < hl) throw std::invalid_argument("hess_upper must dominate hess_lower");
      require_positive(cr, "c_rho");
      const double dh = hu - hl;
      const double e2 = eps * eps;
      cert.lambda =
          dh + (2.0 * hu * hu * cr / eps) * (1.0 + 4.0 * cr * lip * lip / e2);
      cert.contraction =
          1.0 - e2 * e2 / (e2 * e2 + tau * e2 * eps * dh +
                           2.0 * tau * hu * hu * cr * (e2 + 4.0 * cr * lip * lip));
      cert.epsilon_threshold = std::min(
          1.0, std::pow(tau * dh + 2.0 * tau * hu * hu * cr * (1.0 + 4.0 * cr * lip * lip), 0.25));
      cert.formula_id = "rate-lipschitz-x";
      break;
    }
    case RateSetting::CompactSupport: {
      const double g = require(p.g_inf, "g_inf");
      if (g < 0) throw std::invalid_argument("g_inf must be nonnegative");
      cert.lambda = g * g / eps;
      cert.contraction = 1.0 - eps * eps / (eps * eps + tau * g * g);
      cert.epsilon_threshold = std::sqrt(tau) * g;
      cert.formula_id = "rate-compact-support";
      break;
    }
    case RateSetting::CompactBoth: {
      const double hu = require(p.hess_upper, "hess_upper");
      const double hl = require(p.hess_lower, "hess_lower");
      const double g = require(p.grad_inf, "grad_inf");
      if (hu < hl) throw std::invalid_argument("hess_upper must dominate hess_lower");
      const double dh = hu - hl;
      cert.lambda = dh + g * g / eps;
      cert.contraction = 1.0 - eps * eps / (eps * eps + tau * eps * dh + tau * g * g);
      cert.epsilon_threshold =
          0.5 * (tau * dh + std::sqrt(tau * tau * dh * dh + 4.0 * tau * g * g));
      cert.formula_id = "rate-compact-both";
      break;
    }
    case RateSetting::SphereRegularCost: {
      cert.lambda = 2.0 + 1.0 / eps;
      cert.contraction = 1.0 - eps * eps / (eps * eps + 2.0 * tau * eps + tau);
      cert.epsilon_threshold = tau + std::sqrt(tau + tau * tau);
      cert.formula_id = "rate-sphere-regular";
      break;
    }
    case RateSetting::SphereDeltaCost: {
      const double del = require(p.sphere_delta, "sphere_delta");
      if (!(del > 0 && del < 1))
        throw std::invalid_argument("sphere_delta must lie strictly in (0,1)");
      const double pi = std::numbers::pi;
      const double root = std::sqrt(1.0 - del * del);
      const double s = del * del + 2.0 * pi / root;
      const double q = 4.0 * pi * pi / (1.0 - del * del);
      cert.lambda = 2.0 * del * del + 4.0 * pi / root + q / eps;
      cert.contraction = 1.0 - eps * eps / (eps * eps + 2.0 * tau * eps * s + q * tau);
      cert.epsilon_threshold = tau * s + std::sqrt(tau * tau * s * s + q * tau);
      cert.formula_id = "rate-sphere-delta";
      break;
    }
    case RateSetting::HeavyTail: {
      const double k = require(p.heavy_k, "heavy_k");
      require_positive(k, "heavy_k");
      const double m = std::min(k, eps);
      cert.lambda = k;  // stands in for the non-constructive constant
      cert.contraction = 1.0 - m / (m + k);
      cert.epsilon_threshold = k;
      cert.certified = false;
      cert.formula_id = "rate-heavy-tail-uncertified";
      break;
    }
  }
  cert.threshold_ok = cert.epsilon <= cert.epsilon_threshold;
  return cert;
}

std::vector<RateCertificate> rate_catalog_all(const RateParams& p) {
  std::vector<RateCertificate> out;
  for (RateSetting s :
       {RateSetting::LogConcaveSemiconvex, RateSetting::LogConcave, RateSetting::WeaklyLogConcave,
        RateSetting::LightTailsGeneral, RateSetting::LightTailsQuadratic, RateSetting::LipschitzInY,
        RateSetting::LipschitzInX, RateSetting::CompactSupport, RateSetting::CompactBoth,
        RateSetting::SphereRegularCost, RateSetting::SphereDeltaCost, RateSetting::HeavyTail}) {
    try {
      out.push_back(rate_catalog(s, p));
    } catch (const std::invalid_argument&) {
      // setting not parameterized in this sweep
    }
  }
  return out;
}

std::vector<MatrixPair> gaussian_recursion(const Eigen::MatrixXd& sigma, double alpha, double beta,
                                           double epsilon, const Eigen::MatrixXd& a0, int steps) {
  check_spd(sigma);
  if (a0.rows() != sigma.rows() || a0.cols() != sigma.cols())
    throw std::invalid_argument("gaussian_recursion: A0 shape mismatch");
  if (min_eigenvalue_sym(0.5 * (a0 + a0.transpose())) < -1e-12)
    throw std::invalid_argument("gaussian_recursion: A0 must be positive semidefinite");
  if (steps < 0) throw std::invalid_argument("gaussian_recursion: steps must be nonnegative");

  const JointBasis jb = joint_diagonalize(sigma, 0.5 * (a0 + a0.transpose()));
  const Eigen::Index d = sigma.rows();

  std::vector<MatrixPair> out;
  out.reserve(static_cast<size_t>(steps) + 1);
  Eigen::VectorXd a = jb.a_eig, b(d);
  for (int n = 0; n <= steps; ++n) {
    for (Eigen::Index k = 0; k < d; ++k) {
      const double den = a[k] * jb.sigma_eig[k] + epsilon * alpha;
      if (!(den > 0))
        throw std::invalid_argument("gaussian_recursion: singular update, need eps*alpha > 0 or A_n Sigma > 0");
      b[k] = jb.sigma_eig[k] / den;
    }
    out.push_back(MatrixPair{compose(jb.q, a), compose(jb.q, b)});
    for (Eigen::Index k = 0; k < d; ++k) {
      const double den = b[k] * jb.sigma_eig[k] + epsilon * beta;
      if (!(den > 0))
        throw std::invalid_argument("gaussian_recursion: singular update, need eps*beta > 0 or B_n Sigma > 0");
      a[k] = jb.sigma_eig[k] / den;
    }
  }
  return out;
}

MatrixPair gaussian_limits(const Eigen::MatrixXd& sigma, double alpha, double beta,
                           double epsilon) {
  check_spd(sigma);
  require_positive(alpha, "alpha");
  require_positive(beta, "beta");
  if (epsilon < 0) throw std::invalid_argument("gaussian_limits: epsilon must be nonnegative");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
  const Eigen::VectorXd sd = es.eigenvalues();
  Eigen::VectorXd a(sd.size()), b(sd.size());
  for (Eigen::Index k = 0; k < sd.size(); ++k) {
    const double ia = epsilon * alpha / (2.0 * sd[k]);
    const double ib = epsilon * beta / (2.0 * sd[k]);
    a[k] = -ia + std::sqrt(ia * ia + alpha / beta);
    b[k] = -ib + std::sqrt(ib * ib + beta / alpha);
  }
  return MatrixPair{compose(es.eigenvectors(), a), compose(es.eigenvectors(), b)};
}

double gaussian_fixed_point_residual(const Eigen::MatrixXd& sigma, double alpha, double beta,
                                     double epsilon, const MatrixPair& pair) {
  check_spd(sigma);
  const Eigen::MatrixXd sigma_inv = sigma.inverse();
  const Eigen::MatrixXd inner = (pair.b + epsilon * beta * sigma_inv).inverse();
  const Eigen::MatrixXd rhs = (inner + epsilon * alpha * sigma_inv).inverse();
  return operator_norm_sym(0.5 * ((pair.b - rhs) + (pair.b - rhs).transpose()));
}

Eigen::MatrixXd warm_start_lower_bound(const Eigen::MatrixXd& sigma, double alpha, double beta,
                                       double epsilon) {
  check_spd(sigma);
  require_positive(alpha, "alpha");
  require_positive(beta, "beta");
  if (epsilon < 0) throw std::invalid_argument("warm_start_lower_bound: epsilon must be nonnegative");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
  const Eigen::VectorXd sd = es.eigenvalues();
  Eigen::VectorXd v(sd.size());
  for (Eigen::Index k = 0; k < sd.size(); ++k)
    v[k] = -sd[k] - 0.5 * epsilon * alpha +
           std::sqrt(0.25 * epsilon * epsilon * alpha * alpha + (alpha / beta) * sd[k] * sd[k]);
  return compose(es.eigenvectors(), v);
}

double lighttail_cov_bound(double hess_upper, double hess_lower, double tail_l, double tail_r,
                           double tail_c, double tail_delta, double epsilon,
                           std::optional<double> alpha) {
  if (hess_upper < hess_lower)
    throw std::invalid_argument("lighttail_cov_bound: need H >= h");
  require_positive(tail_c, "C");
  require_positive(tail_delta, "delta");
  require_positive(epsilon, "epsilon");
  if (tail_l < 0 || tail_r < 0) throw std::invalid_argument("lighttail_cov_bound: L, R >= 0");
  const double dh = hess_upper - hess_lower;
  const double h2 = 2.0 * hess_upper * hess_upper;
  if (alpha) {
    const double a = *alpha;
    require_positive(a, "alpha");
    const double lever = tail_l * epsilon / a + (a + dh) / a;
    const double radius =
        std::max(tail_r * tail_r, std::pow((a + dh) / (epsilon * tail_c), 2.0 / tail_delta));
    return h2 * (epsilon / a + lever * lever * radius);
  }
  const double radius = std::max(
      tail_r * tail_r,
      std::pow(tail_c, -2.0 / tail_delta) * std::pow(1.0 + 2.0 * dh / epsilon, 2.0 / tail_delta));
  return h2 * (1.0 + (tail_l + 2.0) * (tail_l + 2.0) * radius);
}

double polynomial_bound(double alpha_exp, double c, double a_start, long k) {
  if (!(alpha_exp > 1)) throw std::invalid_argument("polynomial_bound: alpha must exceed 1");
  require_positive(c, "C");
  require_positive(a_start, "a_start");
  if (k < 0) throw std::invalid_argument("polynomial_bound: k must be nonnegative");
  if (k == 0) return a_start;
  const double e = alpha_exp - 1.0;
  return std::pow(static_cast<double>(k) * e / c + std::pow(a_start, -e), -1.0 / e);
}

double polynomial_rate_theorem(double gamma, double m, double kl_start, long k) {
  if (!(gamma > 0 && gamma < 1))
    throw std::invalid_argument("polynomial_rate_theorem: gamma must lie in (0,1)");
  require_positive(m, "M");
  require_positive(kl_start, "kl_start");
  if (k < 0) throw std::invalid_argument("polynomial_rate_theorem: k must be nonnegative");
  if (k == 0) return kl_start;
  const double expo = gamma / (1.0 - gamma);
  const double kd = static_cast<double>(k);
  const double inner = (1.0 - gamma) / (gamma * std::pow(m, 1.0 / gamma)) +
                       1.0 / (kd * std::pow(kl_start, (1.0 - gamma) / gamma));
  return std::pow(kd, -expo) * std::pow(inner, -expo);
}

}  // namespace eotlab
