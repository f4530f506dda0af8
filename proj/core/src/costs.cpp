#include "eotlab/costs.hpp"

#include <cmath>
#include <stdexcept>

namespace eotlab {

namespace {

// Per-coordinate STVS penalty g(t) = gamma^2 (asinh(s) + 1/2 - e^{-2 asinh(s)}/2)
// with s = |t|/(2 gamma), and its derivatives in t. g'(t) has a sign jump at
// t = 0 (the cost promotes sparse displacements); g'' below is the value away
// from the kink.
double stvs_term(double t, double gamma) {
  const double s = std::abs(t) / (2.0 * gamma);
  const double u = std::asinh(s);
  return gamma * gamma * (u + 0.5 - 0.5 * std::exp(-2.0 * u));
}

double stvs_term_d1(double t, double gamma) {
  const double a = std::abs(t);
  const double g = std::sqrt(gamma * gamma + 0.25 * a * a) - 0.5 * a;
  return t >= 0 ? g : -g;
}

double stvs_term_d2(double t, double gamma) {
  const double a = std::abs(t);
  return 0.5 * (a / std::sqrt(a * a + 4.0 * gamma * gamma) - 1.0);
}

Eigen::MatrixXd tangent_projector(const Eigen::VectorXd& y) {
  return Eigen::MatrixXd::Identity(y.size(), y.size()) - y * y.transpose();
}

}  // namespace

std::string to_string(CostFamily f) {
  switch (f) {
    case CostFamily::AnisotropicQuadratic: return "AnisotropicQuadratic";
    case CostFamily::SubspaceElastic: return "SubspaceElastic";
    case CostFamily::Stvs: return "STVS";
    case CostFamily::PCost: return "PCost";
    case CostFamily::SphereRegular: return "SphereRegular";
    case CostFamily::SphereDelta: return "SphereDelta";
    case CostFamily::HalfSquaredEuclidean: return "HalfSquaredEuclidean";
  }
  return "?";
}

CostModel CostModel::anisotropic_quadratic(Eigen::MatrixXd sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() < 1)
    throw std::invalid_argument("AnisotropicQuadratic: square matrix required");
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + sigma.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("AnisotropicQuadratic: Sigma must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= 0)
    throw std::invalid_argument("AnisotropicQuadratic: Sigma must be positive definite");
  CostModel c;
  c.family_ = CostFamily::AnisotropicQuadratic;
  c.geometry_ = Geometry::euclidean(static_cast<int>(sigma.rows()));
  c.sigma_ = 0.5 * (sigma + sigma.transpose());
  return c;
}

CostModel CostModel::subspace_elastic(double gamma, const Eigen::MatrixXd& a) {
  if (gamma < 0) throw std::invalid_argument("SubspaceElastic: gamma must be nonnegative");
  const Eigen::Index d = a.cols();
  Eigen::MatrixXd aat = a * a.transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(aat);
  if (!lu.isInvertible())
    throw std::invalid_argument("SubspaceElastic: A must have full row rank");
  Eigen::MatrixXd aperp =
      Eigen::MatrixXd::Identity(d, d) - a.transpose() * lu.solve(a);
  CostModel c = anisotropic_quadratic(Eigen::MatrixXd::Identity(d, d) + gamma * aperp);
  c.family_ = CostFamily::SubspaceElastic;
  c.gamma_ = gamma;
  return c;
}

CostModel CostModel::stvs(double gamma, int dim) {
  if (!(gamma > 0)) throw std::invalid_argument("STVS: gamma must be positive");
  CostModel c;
  c.family_ = CostFamily::Stvs;
  c.geometry_ = Geometry::euclidean(dim);
  c.gamma_ = gamma;
  return c;
}

CostModel CostModel::p_cost(double p, int dim) {
  if (!(p > 1.0 && p < 2.0)) throw std::invalid_argument("PCost: p must lie in (1,2)");
  CostModel c;
  c.family_ = CostFamily::PCost;
  c.geometry_ = Geometry::euclidean(dim);
  c.p_ = p;
  return c;
}

CostModel CostModel::sphere_regular(int dim) {
  CostModel c;
  c.family_ = CostFamily::SphereRegular;
  c.geometry_ = Geometry::sphere(dim);
  return c;
}

CostModel CostModel::sphere_delta(double delta, int dim) {
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("SphereDelta: delta must lie strictly in (0,1)");
  CostModel c;
  c.family_ = CostFamily::SphereDelta;
  c.geometry_ = Geometry::sphere(dim);
  c.delta_ = delta;
  return c;
}

CostModel CostModel::half_squared_euclidean(int dim) {
  CostModel c;
  c.family_ = CostFamily::HalfSquaredEuclidean;
  c.geometry_ = Geometry::euclidean(dim);
  return c;
}

const Eigen::MatrixXd& CostModel::sigma() const {
  if (sigma_.size() == 0) throw std::logic_error("CostModel: family has no Sigma matrix");
  return sigma_;
}

void CostModel::check_args(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  if (x.size() != geometry_.ambient_dim() || y.size() != geometry_.ambient_dim())
    throw std::invalid_argument("CostModel: point dimension does not match cost geometry");
  if (geometry_.tag == GeometryTag::Sphere) {
    require_unit(x, "CostModel");
    require_unit(y, "CostModel");
  }
}

double CostModel::eval(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  check_args(x, y);
  switch (family_) {
    case CostFamily::AnisotropicQuadratic:
    case CostFamily::SubspaceElastic: {
      const Eigen::VectorXd v = x - y;
      return 0.5 * v.dot(sigma_ * v);
    }
    case CostFamily::HalfSquaredEuclidean:
      return 0.5 * (x - y).squaredNorm();
    case CostFamily::Stvs:
      return stvs_eval(gamma_, x, y);
    case CostFamily::PCost:
      return std::pow(1.0 + (x - y).squaredNorm(), 0.5 * p_) - 1.0;
    case CostFamily::SphereRegular:
      return 1.0 - clamp_cosine(x.dot(y));
    case CostFamily::SphereDelta: {
      const double t = delta_ * clamp_cosine(x.dot(y));
      if (std::abs(t) >= 1.0) throw std::domain_error("SphereDelta: outside smooth domain");
      const double a = std::acos(t);
      return a * a;
    }
  }
  throw std::logic_error("CostModel::eval: unreachable");
}

Eigen::VectorXd CostModel::grad2(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  check_args(x, y);
  switch (family_) {
    case CostFamily::AnisotropicQuadratic:
    case CostFamily::SubspaceElastic:
      return sigma_ * (y - x);
    case CostFamily::HalfSquaredEuclidean:
      return y - x;
    case CostFamily::Stvs: {
      Eigen::VectorXd g = y - x;
      for (Eigen::Index i = 0; i < g.size(); ++i) g[i] += stvs_term_d1(y[i] - x[i], gamma_);
      return g;
    }
    case CostFamily::PCost: {
      const Eigen::VectorXd v = y - x;
      return p_ * std::pow(1.0 + v.squaredNorm(), 0.5 * p_ - 1.0) * v;
    }
    case CostFamily::SphereRegular:
      return -(tangent_projector(y) * x);
    case CostFamily::SphereDelta: {
      const double t = clamp_cosine(x.dot(y));
      const double dt = delta_ * t;
      if (std::abs(dt) >= 1.0) throw std::domain_error("SphereDelta: outside smooth domain");
      const double coef = 2.0 * delta_ * std::acos(dt) / std::sqrt(1.0 - dt * dt);
      return -coef * (tangent_projector(y) * x);
    }
  }
  throw std::logic_error("CostModel::grad2: unreachable");
}

Eigen::VectorXd CostModel::grad1(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  switch (family_) {
    case CostFamily::AnisotropicQuadratic:
    case CostFamily::SubspaceElastic:
    case CostFamily::HalfSquaredEuclidean:
    case CostFamily::Stvs:
    case CostFamily::PCost:
      // Translation-invariant families: c(x,y) = h(x - y).
      return -grad2(x, y);
    case CostFamily::SphereRegular:
    case CostFamily::SphereDelta:
      // Both sphere costs are symmetric in their arguments.
      return grad2(y, x);
  }
  throw std::logic_error("CostModel::grad1: unreachable");
}

Eigen::MatrixXd CostModel::hess2(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  check_args(x, y);
  const Eigen::Index d = x.size();
  switch (family_) {
    case CostFamily::AnisotropicQuadratic:
    case CostFamily::SubspaceElastic:
      return sigma_;
    case CostFamily::HalfSquaredEuclidean:
      return Eigen::MatrixXd::Identity(d, d);
    case CostFamily::Stvs: {
      Eigen::MatrixXd h = Eigen::MatrixXd::Identity(d, d);
      for (Eigen::Index i = 0; i < d; ++i) h(i, i) += stvs_term_d2(y[i] - x[i], gamma_);
      return h;
    }
    case CostFamily::PCost: {
      const Eigen::VectorXd v = y - x;
      const double q = 1.0 + v.squaredNorm();
      return p_ * std::pow(q, 0.5 * p_ - 1.0) * Eigen::MatrixXd::Identity(d, d) +
             p_ * (p_ - 2.0) * std::pow(q, 0.5 * p_ - 2.0) * v * v.transpose();
    }
    case CostFamily::SphereRegular:
      return clamp_cosine(x.dot(y)) * tangent_projector(y);
    case CostFamily::SphereDelta: {
      const double t = clamp_cosine(x.dot(y));
      const double dt = delta_ * t;
      if (std::abs(dt) >= 1.0) throw std::domain_error("SphereDelta: outside smooth domain");
      const double root = std::sqrt(1.0 - dt * dt);
      const double angular = 2.0 * delta_ * std::acos(dt) / root;
      Eigen::MatrixXd h = angular * t * tangent_projector(y);
      Eigen::VectorXd w = tangent_projector(y) * x;
      const double wn = w.norm();
      if (wn > 1e-14) {
        const double radial = 2.0 * delta_ * delta_ * (1.0 - t * t) / (1.0 - dt * dt) *
                              (1.0 - dt * std::acos(dt) / root);
        h += (radial / (wn * wn)) * w * w.transpose();
      }
      return h;
    }
  }
  throw std::logic_error("CostModel::hess2: unreachable");
}

Eigen::MatrixXd CostModel::hess1(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  switch (family_) {
    case CostFamily::AnisotropicQuadratic:
    case CostFamily::SubspaceElastic:
    case CostFamily::HalfSquaredEuclidean:
    case CostFamily::Stvs:
    case CostFamily::PCost:
      return hess2(x, y);  // h(x - y) is even in the displacement
    case CostFamily::SphereRegular:
    case CostFamily::SphereDelta:
      return hess2(y, x);
  }
  throw std::logic_error("CostModel::hess1: unreachable");
}

Eigen::MatrixXd CostModel::crosshess(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  switch (family_) {
    case CostFamily::AnisotropicQuadratic:
    case CostFamily::SubspaceElastic:
    case CostFamily::HalfSquaredEuclidean:
    case CostFamily::Stvs:
    case CostFamily::PCost:
      return -hess2(x, y);  // translation invariance
    case CostFamily::SphereRegular:
    case CostFamily::SphereDelta:
      throw std::logic_error("CostModel::crosshess: not defined for sphere costs");
  }
  throw std::logic_error("CostModel::crosshess: unreachable");
}

double stvs_eval(double gamma, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (!(gamma > 0)) throw std::invalid_argument("stvs_eval: gamma must be positive");
  if (x.size() != y.size()) throw std::invalid_argument("stvs_eval: dimension mismatch");
  double c = 0.5 * (x - y).squaredNorm();
  for (Eigen::Index i = 0; i < x.size(); ++i) c += stvs_term(x[i] - y[i], gamma);
  return c;
}

double omega_lpa(double r, double p, double a) {
  if (r < 0) throw std::invalid_argument("omega_lpa: r must be nonnegative");
  if (!(p > 1.0 && p <= 2.0)) throw std::invalid_argument("omega_lpa: p must lie in (1,2]");
  if (!(a > 0)) throw std::invalid_argument("omega_lpa: a must be positive");
  if (r <= a) return 0.5 * r * r;
  return std::pow(a, 2.0 - p) * std::pow(r, p) / p + a * a * (p - 2.0) / (2.0 * p);
}

}  // namespace eotlab
