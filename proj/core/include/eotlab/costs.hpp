#pragma once

#include <string>

#include "eotlab/geometry.hpp"

namespace eotlab {

enum class CostFamily {
  AnisotropicQuadratic,
  SubspaceElastic,
  Stvs,
  PCost,
  SphereRegular,
  SphereDelta,
  HalfSquaredEuclidean,
};

std::string to_string(CostFamily f);

/// Cost family with evaluation and first/second derivative oracles in either
/// argument. Sphere families return gradients in the tangent space of the
/// differentiated argument and Hessians as ambient symmetric matrices acting
/// on that tangent space (the radial direction is projected out).
class CostModel {
 public:
  static CostModel anisotropic_quadratic(Eigen::MatrixXd sigma);
  static CostModel subspace_elastic(double gamma, const Eigen::MatrixXd& a);
  static CostModel stvs(double gamma, int dim);
  static CostModel p_cost(double p, int dim);
  static CostModel sphere_regular(int dim);
  static CostModel sphere_delta(double delta, int dim);
  static CostModel half_squared_euclidean(int dim);

  CostFamily family() const { return family_; }
  const Geometry& geometry() const { return geometry_; }
  const Eigen::MatrixXd& sigma() const;  // quadratic families only
  double gamma() const { return gamma_; }
  double p_exponent() const { return p_; }
  double delta() const { return delta_; }

  double eval(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;
  Eigen::VectorXd grad1(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;
  Eigen::VectorXd grad2(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;
  Eigen::MatrixXd hess1(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;
  Eigen::MatrixXd hess2(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;
  /// d^2 c / dx dy. Defined for the Euclidean families.
  Eigen::MatrixXd crosshess(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;

 private:
  CostModel() = default;
  void check_args(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;

  CostFamily family_ = CostFamily::HalfSquaredEuclidean;
  Geometry geometry_;
  Eigen::MatrixXd sigma_;
  double gamma_ = 0.0;
  double p_ = 0.0;
  double delta_ = 0.0;
};

/// The soft-thresholding elastic cost with vanishing shrinkage:
/// |x-y|^2/2 + gamma^2 sum_i (asinh(s_i) + 1/2 - exp(-2 asinh(s_i))/2),
/// s_i = |x_i - y_i| / (2 gamma).
double stvs_eval(double gamma, const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Quadratic-near-zero, p-power-at-infinity gauge:
/// r <= a: r^2/2;  r >= a: a^{2-p} r^p / p + a^2 (p-2) / (2p).
double omega_lpa(double r, double p, double a);

}  // namespace eotlab
