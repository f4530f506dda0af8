#pragma once

#include <Eigen/Dense>

namespace eotlab {

enum class GeometryTag { Euclidean, Sphere };

/// Geometry of a point set. Sphere(d) is the unit d-sphere embedded in
/// R^{d+1}: points are unit vectors and tangent data is stored in ambient
/// coordinates, orthogonal to the base point.
struct Geometry {
  GeometryTag tag = GeometryTag::Euclidean;
  int dim = 1;  // intrinsic dimension

  static Geometry euclidean(int d);
  static Geometry sphere(int d);

  int ambient_dim() const { return tag == GeometryTag::Sphere ? dim + 1 : dim; }

  double distance(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;

  /// Initial velocity of the unit-time geodesic from base to target.
  Eigen::VectorXd log_map(const Eigen::VectorXd& base, const Eigen::VectorXd& target) const;

  /// Point reached at time t along the constant-speed geodesic from base
  /// with velocity v.
  Eigen::VectorXd exp_map(const Eigen::VectorXd& base, const Eigen::VectorXd& v, double t) const;

  bool operator==(const Geometry&) const = default;
};

/// cos(t|v|) y + sin(t|v|) v/|v| for unit y and tangent v; v = 0 returns y.
Eigen::VectorXd sphere_exp(const Eigen::VectorXd& y, const Eigen::VectorXd& v, double t);

/// Columns form an orthonormal basis of the tangent space at unit vector y.
Eigen::MatrixXd sphere_tangent_basis(const Eigen::VectorXd& y);

inline double clamp_cosine(double s) { return s < -1.0 ? -1.0 : (s > 1.0 ? 1.0 : s); }

void require_unit(const Eigen::VectorXd& y, const char* what, double tol = 1e-9);

}  // namespace eotlab
