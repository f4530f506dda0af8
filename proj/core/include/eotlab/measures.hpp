#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "eotlab/geometry.hpp"

namespace eotlab {

/// Weighted finite point set on a declared geometry. Weights are strictly
/// positive and sum to one; atoms whose normalized weight falls below 1e-300
/// are dropped at construction so the log-domain kernels never see log(0).
class DiscreteMeasure {
 public:
  DiscreteMeasure(Eigen::MatrixXd points, Eigen::VectorXd weights, Geometry geometry);

  Eigen::Index size() const { return weights_.size(); }
  const Eigen::MatrixXd& points() const { return points_; }
  Eigen::VectorXd point(Eigen::Index i) const { return points_.row(i).transpose(); }
  const Eigen::VectorXd& weights() const { return weights_; }
  const Eigen::VectorXd& log_weights() const { return log_weights_; }
  const Geometry& geometry() const { return geometry_; }

  /// Same geometry and the same atom list, index by index.
  bool aligned_with(const DiscreteMeasure& other, double tol = 1e-12) const;

  /// New measure on the same support with reweighted atoms (renormalized).
  DiscreteMeasure reweighted(const Eigen::VectorXd& new_weights) const;

 private:
  Eigen::MatrixXd points_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd log_weights_;
  Geometry geometry_;
};

DiscreteMeasure dirac(const Eigen::VectorXd& point, Geometry geometry);

void write_measure_csv(const DiscreteMeasure& m, const std::filesystem::path& path);
DiscreteMeasure read_measure_csv(const std::filesystem::path& path, Geometry geometry);

enum class DensityTag { StronglyLogConcave, WeaklyLogConcave, LightTails, Custom };

/// Negative log-density model U with optional derivative oracles.
struct LogDensityModel {
  DensityTag tag = DensityTag::Custom;
  double alpha = 0.0;       // strongly/weakly log-concave modulus
  double weak_l = 0.0;      // weak log-concavity defect L
  double tail_c = 0.0;      // light tails: Hessian lower bound C |x|^delta ...
  double tail_delta = 0.0;  // ... outside the ball of radius R, -L inside
  double tail_r = 0.0;
  double tail_l = 0.0;

  std::function<double(const Eigen::VectorXd&)> potential;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;  // optional
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hessian;   // optional

  static LogDensityModel strongly_log_concave(double alpha,
                                              std::function<double(const Eigen::VectorXd&)> u,
                                              std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad = {});
  static LogDensityModel weakly_log_concave(double alpha, double L,
                                            std::function<double(const Eigen::VectorXd&)> u,
                                            std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad = {});
  static LogDensityModel light_tails(double C, double delta, double R, double L,
                                     std::function<double(const Eigen::VectorXd&)> u,
                                     std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad = {});
  static LogDensityModel custom(std::function<double(const Eigen::VectorXd&)> u,
                                std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad = {});
};

/// Isotropic Gaussian model U(x) = alpha |x - center|^2 / 2.
LogDensityModel gaussian_model(double alpha, const Eigen::VectorXd& center);

using Box = std::vector<std::array<double, 2>>;

/// Atoms on the regular grid over `box` (endpoints included), weight at x
/// proportional to exp(-U(x)), renormalized. Throws when the whole grid
/// underflows to zero mass.
DiscreteMeasure build_grid_measure(const LogDensityModel& model, const Box& box,
                                   const std::vector<int>& resolution);

/// Closed-form Talagrand constant: alpha-log-concave gives TI(1/alpha).
/// Other tags have no closed form here; use ti_probe.
double ti_constant(const LogDensityModel& model);

/// Sampled convexity profile. For each radius r, the minimum over sampled
/// antipodal pairs at separation r of <grad U(x2)-grad U(x1), x2-x1>/r^2.
/// Sampling can only overestimate the true infimum.
std::vector<std::pair<double, double>> convexity_profile(const LogDensityModel& model,
                                                         const std::vector<double>& radii,
                                                         const Box& box, int sample_count,
                                                         std::uint64_t rng_seed);

/// Weak log-concavity defect f_L(r) = 2 sqrt(L) tanh(sqrt(L) r / 2).
double f_weak(double r, double L);

double tv_distance(const DiscreteMeasure& p, const DiscreteMeasure& q);

/// KL(p | q) over aligned supports, with 0 log 0 = 0.
double kl(const DiscreteMeasure& p, const DiscreteMeasure& q);

}  // namespace eotlab
