#include "eotlab/measures.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "eotlab/csv.hpp"
#include "eotlab/util.hpp"

namespace eotlab {

DiscreteMeasure::DiscreteMeasure(Eigen::MatrixXd points, Eigen::VectorXd weights,
                                 Geometry geometry)
    : geometry_(geometry) {
  if (points.rows() != weights.size())
    throw std::invalid_argument("DiscreteMeasure: one weight per atom required");
  if (points.cols() != geometry.ambient_dim())
    throw std::invalid_argument("DiscreteMeasure: point dimension does not match geometry");
  if (weights.size() == 0) throw std::invalid_argument("DiscreteMeasure: empty support");
  if ((weights.array() < 0).any())
    throw std::invalid_argument("DiscreteMeasure: negative weight");

  double total = weights.sum();
  if (!(total > 0) || !std::isfinite(total))
    throw std::invalid_argument("empty support after normalization");

  // Normalize first, then drop atoms below the representable-log threshold
  // and renormalize the survivors.
  Eigen::VectorXd w = weights / total;
  std::vector<Eigen::Index> keep;
  keep.reserve(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w[i] >= 1e-300) keep.push_back(i);
  if (keep.empty()) throw std::invalid_argument("empty support after normalization");

  points_.resize(static_cast<Eigen::Index>(keep.size()), points.cols());
  weights_.resize(static_cast<Eigen::Index>(keep.size()));
  for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(keep.size()); ++k) {
    points_.row(k) = points.row(keep[static_cast<size_t>(k)]);
    weights_[k] = w[keep[static_cast<size_t>(k)]];
  }
  weights_ /= weights_.sum();

  if (geometry_.tag == GeometryTag::Sphere) {
    for (Eigen::Index i = 0; i < points_.rows(); ++i) {
      if (std::abs(points_.row(i).norm() - 1.0) > 1e-12)
        throw std::invalid_argument("DiscreteMeasure: sphere atom is not a unit vector");
    }
  }
  log_weights_ = weights_.array().log().matrix();
}

bool DiscreteMeasure::aligned_with(const DiscreteMeasure& other, double tol) const {
  if (geometry_ != other.geometry_ || size() != other.size()) return false;
  return (points_ - other.points_).cwiseAbs().maxCoeff() <= tol;
}

DiscreteMeasure DiscreteMeasure::reweighted(const Eigen::VectorXd& new_weights) const {
  return DiscreteMeasure(points_, new_weights, geometry_);
}

DiscreteMeasure dirac(const Eigen::VectorXd& point, Geometry geometry) {
  Eigen::MatrixXd pts(1, point.size());
  pts.row(0) = point.transpose();
  return DiscreteMeasure(pts, Eigen::VectorXd::Ones(1), geometry);
}

void write_measure_csv(const DiscreteMeasure& m, const std::filesystem::path& path) {
  std::vector<std::string> header;
  for (int k = 0; k < m.points().cols(); ++k) header.push_back("x_" + std::to_string(k + 1));
  header.push_back("weight");
  CsvWriter w(header);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::vector<std::string> cells;
    for (int k = 0; k < m.points().cols(); ++k) cells.push_back(format_double(m.points()(i, k)));
    cells.push_back(format_double(m.weights()[i]));
    w.row(cells);
  }
  w.write_atomic(path);
}

DiscreteMeasure read_measure_csv(const std::filesystem::path& path, Geometry geometry) {
  CsvTable t = read_numeric_csv(path);
  if (t.header.empty() || t.header.back() != "weight")
    throw std::runtime_error("measure CSV must end with a 'weight' column");
  const int d = static_cast<int>(t.header.size()) - 1;
  Eigen::MatrixXd pts(static_cast<Eigen::Index>(t.rows.size()), d);
  Eigen::VectorXd w(static_cast<Eigen::Index>(t.rows.size()));
  for (size_t i = 0; i < t.rows.size(); ++i) {
    for (int k = 0; k < d; ++k) pts(static_cast<Eigen::Index>(i), k) = t.rows[i][static_cast<size_t>(k)];
    w[static_cast<Eigen::Index>(i)] = t.rows[i].back();
  }
  return DiscreteMeasure(pts, w, geometry);
}

LogDensityModel LogDensityModel::strongly_log_concave(
    double alpha, std::function<double(const Eigen::VectorXd&)> u,
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad) {
  if (!(alpha > 0)) throw std::invalid_argument("strongly-log-concave model needs alpha > 0");
  LogDensityModel m;
  m.tag = DensityTag::StronglyLogConcave;
  m.alpha = alpha;
  m.potential = std::move(u);
  m.gradient = std::move(grad);
  return m;
}

LogDensityModel LogDensityModel::weakly_log_concave(
    double alpha, double L, std::function<double(const Eigen::VectorXd&)> u,
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad) {
  if (!(alpha > 0) || L < 0)
    throw std::invalid_argument("weakly-log-concave model needs alpha > 0, L >= 0");
  LogDensityModel m;
  m.tag = DensityTag::WeaklyLogConcave;
  m.alpha = alpha;
  m.weak_l = L;
  m.potential = std::move(u);
  m.gradient = std::move(grad);
  return m;
}

LogDensityModel LogDensityModel::light_tails(
    double C, double delta, double R, double L, std::function<double(const Eigen::VectorXd&)> u,
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad) {
  if (!(C > 0) || !(delta > 0) || R < 0 || L < 0)
    throw std::invalid_argument("light-tails model needs C, delta > 0 and R, L >= 0");
  LogDensityModel m;
  m.tag = DensityTag::LightTails;
  m.tail_c = C;
  m.tail_delta = delta;
  m.tail_r = R;
  m.tail_l = L;
  m.potential = std::move(u);
  m.gradient = std::move(grad);
  return m;
}

LogDensityModel LogDensityModel::custom(std::function<double(const Eigen::VectorXd&)> u,
                                        std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad) {
  LogDensityModel m;
  m.tag = DensityTag::Custom;
  m.potential = std::move(u);
  m.gradient = std::move(grad);
  return m;
}

LogDensityModel gaussian_model(double alpha, const Eigen::VectorXd& center) {
  Eigen::VectorXd c = center;
  auto model = LogDensityModel::strongly_log_concave(
      alpha, [alpha, c](const Eigen::VectorXd& x) { return 0.5 * alpha * (x - c).squaredNorm(); },
      [alpha, c](const Eigen::VectorXd& x) { return (alpha * (x - c)).eval(); });
  model.hessian = [alpha, c](const Eigen::VectorXd& x) {
    return (alpha * Eigen::MatrixXd::Identity(x.size(), x.size())).eval();
  };
  return model;
}

DiscreteMeasure build_grid_measure(const LogDensityModel& model, const Box& box,
                                   const std::vector<int>& resolution) {
  if (!model.potential) throw std::invalid_argument("build_grid_measure: model has no potential");
  if (box.empty() || box.size() != resolution.size())
    throw std::invalid_argument("build_grid_measure: box and resolution must align");
  const int d = static_cast<int>(box.size());
  Eigen::Index total = 1;
  for (int k = 0; k < d; ++k) {
    if (resolution[static_cast<size_t>(k)] < 2)
      throw std::invalid_argument("build_grid_measure: resolution must be at least 2 per axis");
    if (!(box[static_cast<size_t>(k)][0] < box[static_cast<size_t>(k)][1]))
      throw std::invalid_argument("build_grid_measure: degenerate box");
    total *= resolution[static_cast<size_t>(k)];
  }

  Eigen::MatrixXd pts(total, d);
  Eigen::VectorXd u(total);
  std::vector<int> idx(static_cast<size_t>(d), 0);
  Eigen::VectorXd x(d);
  for (Eigen::Index a = 0; a < total; ++a) {
    for (int k = 0; k < d; ++k) {
      const auto& [lo, hi] = box[static_cast<size_t>(k)];
      const int res = resolution[static_cast<size_t>(k)];
      x[k] = lo + (hi - lo) * idx[static_cast<size_t>(k)] / (res - 1);
    }
    pts.row(a) = x.transpose();
    u[a] = model.potential(x);
    for (int k = d - 1; k >= 0; --k) {
      if (++idx[static_cast<size_t>(k)] < resolution[static_cast<size_t>(k)]) break;
      idx[static_cast<size_t>(k)] = 0;
    }
  }

  const double umin = u.minCoeff();
  if (!std::isfinite(umin)) throw std::invalid_argument("empty support after normalization");
  Eigen::VectorXd w(total);
  for (Eigen::Index a = 0; a < total; ++a)
    w[a] = std::isfinite(u[a]) ? std::exp(umin - u[a]) : 0.0;
  return DiscreteMeasure(std::move(pts), std::move(w), Geometry::euclidean(d));
}

double ti_constant(const LogDensityModel& model) {
  if (model.tag != DensityTag::StronglyLogConcave)
    throw std::invalid_argument("no closed-form TI constant; use ti_probe");
  return 1.0 / model.alpha;
}

std::vector<std::pair<double, double>> convexity_profile(const LogDensityModel& model,
                                                         const std::vector<double>& radii,
                                                         const Box& box, int sample_count,
                                                         std::uint64_t rng_seed) {
  if (!model.gradient) throw std::invalid_argument("convexity_profile: gradient oracle required");
  const int d = static_cast<int>(box.size());
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<std::pair<double, double>> profile;
  profile.reserve(radii.size());
  for (double r : radii) {
    if (!(r > 0)) throw std::invalid_argument("convexity_profile: radii must be positive");
    double best = std::numeric_limits<double>::infinity();
    for (int s = 0; s < sample_count; ++s) {
      Eigen::VectorXd center(d), dir(d);
      for (int k = 0; k < d; ++k)
        center[k] = box[static_cast<size_t>(k)][0] +
                    (box[static_cast<size_t>(k)][1] - box[static_cast<size_t>(k)][0]) * unif(rng);
      do {
        for (int k = 0; k < d; ++k) dir[k] = gauss(rng);
      } while (dir.norm() < 1e-12);
      dir.normalize();
      const Eigen::VectorXd x1 = center - 0.5 * r * dir;
      const Eigen::VectorXd x2 = center + 0.5 * r * dir;
      const double quot = (model.gradient(x2) - model.gradient(x1)).dot(x2 - x1) / (r * r);
      best = std::min(best, quot);
    }
    profile.emplace_back(r, best);
  }
  return profile;
}

double f_weak(double r, double L) {
  if (!(r > 0) || L < 0) throw std::invalid_argument("f_weak: need r > 0 and L >= 0");
  if (L == 0.0) return 0.0;
  const double s = std::sqrt(L);
  return 2.0 * s * std::tanh(0.5 * s * r);
}

double tv_distance(const DiscreteMeasure& p, const DiscreteMeasure& q) {
  if (!p.aligned_with(q)) throw std::invalid_argument("tv_distance: supports are not aligned");
  return 0.5 * (p.weights() - q.weights()).cwiseAbs().sum();
}

double kl(const DiscreteMeasure& p, const DiscreteMeasure& q) {
  if (!p.aligned_with(q)) throw std::invalid_argument("kl: supports are not aligned");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double pi = p.weights()[i];
    if (pi == 0.0) continue;
    const double qi = q.weights()[i];
    if (qi == 0.0) return std::numeric_limits<double>::infinity();
    acc += pi * (std::log(pi) - std::log(qi));
  }
  return acc;
}

}  // namespace eotlab
