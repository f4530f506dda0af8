#include "eotlab/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace eotlab {

Geometry Geometry::euclidean(int d) {
  if (d < 1) throw std::invalid_argument("Geometry: dimension must be positive");
  return Geometry{GeometryTag::Euclidean, d};
}

Geometry Geometry::sphere(int d) {
  if (d < 1) throw std::invalid_argument("Geometry: dimension must be positive");
  return Geometry{GeometryTag::Sphere, d};
}

void require_unit(const Eigen::VectorXd& y, const char* what, double tol) {
  if (std::abs(y.norm() - 1.0) > tol)
    throw std::invalid_argument(std::string(what) + ": sphere point must be a unit vector");
}

double Geometry::distance(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  if (x.size() != ambient_dim() || y.size() != ambient_dim())
    throw std::invalid_argument("Geometry::distance: dimension mismatch");
  if (tag == GeometryTag::Euclidean) return (x - y).norm();
  return std::acos(clamp_cosine(x.dot(y)));
}

Eigen::VectorXd Geometry::log_map(const Eigen::VectorXd& base, const Eigen::VectorXd& target) const {
  if (base.size() != ambient_dim() || target.size() != ambient_dim())
    throw std::invalid_argument("Geometry::log_map: dimension mismatch");
  if (tag == GeometryTag::Euclidean) return target - base;
  const double c = clamp_cosine(base.dot(target));
  const double theta = std::acos(c);
  Eigen::VectorXd w = target - c * base;
  const double wn = w.norm();
  if (wn < 1e-14) {
    if (theta > 1.0)
      throw std::invalid_argument("Geometry::log_map: antipodal points, log map undefined");
    return Eigen::VectorXd::Zero(base.size());
  }
  return (theta / wn) * w;
}

Eigen::VectorXd Geometry::exp_map(const Eigen::VectorXd& base, const Eigen::VectorXd& v,
                                  double t) const {
  if (tag == GeometryTag::Euclidean) return base + t * v;
  return sphere_exp(base, v, t);
}

Eigen::VectorXd sphere_exp(const Eigen::VectorXd& y, const Eigen::VectorXd& v, double t) {
  require_unit(y, "sphere_exp");
  const double vn = v.norm();
  if (vn == 0.0) return y;
  if (std::abs(y.dot(v)) > 1e-10 * std::max(1.0, vn))
    throw std::invalid_argument("sphere_exp: velocity is not tangent at the base point");
  Eigen::VectorXd out = std::cos(t * vn) * y + (std::sin(t * vn) / vn) * v;
  return out / out.norm();
}

Eigen::MatrixXd sphere_tangent_basis(const Eigen::VectorXd& y) {
  require_unit(y, "sphere_tangent_basis");
  const Eigen::Index n = y.size();
  // Householder reflection mapping e_1 to y; the remaining columns span the
  // tangent space.
  Eigen::VectorXd u = y;
  u[0] += (y[0] >= 0 ? 1.0 : -1.0);
  u.normalize();
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n) - 2.0 * u * u.transpose();
  Eigen::MatrixXd basis = h.rightCols(n - 1);
  return basis;
}

}  // namespace eotlab
