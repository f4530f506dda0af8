#include "eotlab/exact_ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "eotlab/csv.hpp"
#include "eotlab/util.hpp"

namespace eotlab {

namespace {

constexpr double kMassTol = 1e-14;
constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

TransportPlanExact solve_transport_lp(const Eigen::MatrixXd& cost, const Eigen::VectorXd& mu,
                                      const Eigen::VectorXd& nu, ExactCostKind kind) {
  const Eigen::Index n = mu.size(), m = nu.size();
  if (cost.rows() != n || cost.cols() != m)
    throw std::invalid_argument("solve_transport_lp: cost shape mismatch");
  if ((mu.array() < 0).any() || (nu.array() < 0).any())
    throw std::invalid_argument("solve_transport_lp: negative mass");
  if (std::abs(mu.sum() - nu.sum()) > 1e-10)
    throw std::invalid_argument("solve_transport_lp: total masses differ");

  // Successive shortest paths with Johnson potentials. Node v < n is the
  // source (row) v, node n + j is the sink (column) j. All forward arcs have
  // nonnegative reduced cost c_ij + pot_i - pot_j, backward arcs exist only
  // where flow is positive; both invariants are restored after every
  // augmentation by folding the Dijkstra distances into the potentials.
  const Eigen::Index nodes = n + m;
  Eigen::MatrixXd flow = Eigen::MatrixXd::Zero(n, m);
  Eigen::VectorXd excess = mu, deficit = nu;
  std::vector<double> pot(static_cast<size_t>(nodes), 0.0);

  std::vector<double> dist(static_cast<size_t>(nodes));
  std::vector<char> done(static_cast<size_t>(nodes));
  std::vector<Eigen::Index> parent(static_cast<size_t>(nodes));

  const long max_augment = 64L * static_cast<long>(nodes) + 1024;
  long augmentations = 0;
  while (true) {
    double remaining = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) remaining += deficit[j];
    if (remaining <= kMassTol) break;
    if (++augmentations > max_augment)
      throw std::runtime_error("solve_transport_lp: augmentation limit exceeded");

    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(done.begin(), done.end(), 0);
    std::fill(parent.begin(), parent.end(), static_cast<Eigen::Index>(-1));
    for (Eigen::Index i = 0; i < n; ++i)
      if (excess[i] > kMassTol) dist[static_cast<size_t>(i)] = 0.0;

    Eigen::Index target = -1;
    while (true) {
      Eigen::Index u = -1;
      double best = kInf;
      for (Eigen::Index v = 0; v < nodes; ++v)
        if (!done[static_cast<size_t>(v)] && dist[static_cast<size_t>(v)] < best) {
          best = dist[static_cast<size_t>(v)];
          u = v;
        }
      if (u < 0) break;  // nothing reachable
      done[static_cast<size_t>(u)] = 1;
      if (u >= n && deficit[u - n] > kMassTol) {
        target = u;
        break;
      }
      if (u < n) {
        const Eigen::Index i = u;
        for (Eigen::Index j = 0; j < m; ++j) {
          const Eigen::Index v = n + j;
          if (done[static_cast<size_t>(v)]) continue;
          const double rc =
              std::max(0.0, cost(i, j) + pot[static_cast<size_t>(i)] - pot[static_cast<size_t>(v)]);
          if (dist[static_cast<size_t>(u)] + rc < dist[static_cast<size_t>(v)]) {
            dist[static_cast<size_t>(v)] = dist[static_cast<size_t>(u)] + rc;
            parent[static_cast<size_t>(v)] = u;
          }
        }
      } else {
        const Eigen::Index j = u - n;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (done[static_cast<size_t>(i)] || flow(i, j) <= 0.0) continue;
          const double rc =
              std::max(0.0, -cost(i, j) + pot[static_cast<size_t>(u)] - pot[static_cast<size_t>(i)]);
          if (dist[static_cast<size_t>(u)] + rc < dist[static_cast<size_t>(i)]) {
            dist[static_cast<size_t>(i)] = dist[static_cast<size_t>(u)] + rc;
            parent[static_cast<size_t>(i)] = u;
          }
        }
      }
    }
    if (target < 0)
      throw std::runtime_error("solve_transport_lp: residual demand unreachable");

    const double dt = dist[static_cast<size_t>(target)];
    for (Eigen::Index v = 0; v < nodes; ++v)
      pot[static_cast<size_t>(v)] += std::min(dist[static_cast<size_t>(v)], dt);

    // Bottleneck along the augmenting path.
    double delta = deficit[target - n];
    for (Eigen::Index v = target; parent[static_cast<size_t>(v)] >= 0;
         v = parent[static_cast<size_t>(v)]) {
      const Eigen::Index p = parent[static_cast<size_t>(v)];
      if (p < n && v >= n) continue;                      // forward arc, uncapacitated
      if (p >= n && v < n) delta = std::min(delta, flow(v, p - n));  // backward arc
    }
    {
      Eigen::Index root = target;
      while (parent[static_cast<size_t>(root)] >= 0) root = parent[static_cast<size_t>(root)];
      delta = std::min(delta, excess[root]);

      for (Eigen::Index v = target; parent[static_cast<size_t>(v)] >= 0;
           v = parent[static_cast<size_t>(v)]) {
        const Eigen::Index p = parent[static_cast<size_t>(v)];
        if (p < n && v >= n)
          flow(p, v - n) += delta;
        else
          flow(v, p - n) -= delta;
      }
      excess[root] = (delta == excess[root]) ? 0.0 : excess[root] - delta;
      deficit[target - n] =
          (delta == deficit[target - n]) ? 0.0 : deficit[target - n] - delta;
    }
  }

  TransportPlanExact plan;
  plan.coupling = flow;
  plan.cost_kind = kind;
  plan.objective = (flow.array() * cost.array()).sum();
  plan.dual_mu.resize(n);
  plan.dual_nu.resize(m);
  for (Eigen::Index i = 0; i < n; ++i) plan.dual_mu[i] = -pot[static_cast<size_t>(i)];
  for (Eigen::Index j = 0; j < m; ++j) plan.dual_nu[j] = pot[static_cast<size_t>(n + j)];
  plan.dual_objective = plan.dual_mu.dot(mu) + plan.dual_nu.dot(nu);
  return plan;
}

namespace {

ExactOtResult solve_on_measures(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                const std::function<double(const Eigen::VectorXd&,
                                                           const Eigen::VectorXd&)>& pair_cost,
                                ExactCostKind kind) {
  if (mu.size() * nu.size() > 1000000)
    throw std::invalid_argument(
        "exact OT: instance exceeds 10^6 atom pairs; subsample the marginals first");
  Eigen::MatrixXd cost(mu.size(), nu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const Eigen::VectorXd yi = mu.point(i);
    for (Eigen::Index j = 0; j < nu.size(); ++j) cost(i, j) = pair_cost(yi, nu.point(j));
  }
  ExactOtResult res;
  res.plan = solve_transport_lp(cost, mu.weights(), nu.weights(), kind);
  res.value = res.plan.objective;
  return res;
}

}  // namespace

ExactOtResult w2_squared(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  if (mu.geometry() != nu.geometry())
    throw std::invalid_argument("w2_squared: measures use different geometries");
  const Geometry g = mu.geometry();
  return solve_on_measures(
      mu, nu,
      [&g](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        const double d = g.distance(a, b);
        return d * d;
      },
      ExactCostKind::SquaredDistance);
}

ExactOtResult w_omega(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                      const std::function<double(const Eigen::VectorXd&,
                                                 const Eigen::VectorXd&)>& omega) {
  if (mu.geometry() != nu.geometry())
    throw std::invalid_argument("w_omega: measures use different geometries");
  auto checked = [&omega](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double w = omega(a, b);
    if (w < 0) throw std::invalid_argument("w_omega: omega must be nonnegative");
    return w;
  };
  return solve_on_measures(mu, nu, checked, ExactCostKind::Omega);
}

double monotone_coupling_value_1d(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                  const std::function<double(double, double)>& cost) {
  if (mu.geometry().tag != GeometryTag::Euclidean || mu.points().cols() != 1 ||
      nu.points().cols() != 1)
    throw std::invalid_argument("monotone_coupling_value_1d: 1-d Euclidean measures required");
  std::vector<Eigen::Index> pi(static_cast<size_t>(mu.size())), pj(static_cast<size_t>(nu.size()));
  std::iota(pi.begin(), pi.end(), 0);
  std::iota(pj.begin(), pj.end(), 0);
  std::sort(pi.begin(), pi.end(),
            [&](Eigen::Index a, Eigen::Index b) { return mu.points()(a, 0) < mu.points()(b, 0); });
  std::sort(pj.begin(), pj.end(),
            [&](Eigen::Index a, Eigen::Index b) { return nu.points()(a, 0) < nu.points()(b, 0); });

  double value = 0.0;
  size_t a = 0, b = 0;
  double ra = mu.weights()[pi[0]], rb = nu.weights()[pj[0]];
  while (true) {
    const double step = std::min(ra, rb);
    value += step * cost(mu.points()(pi[a], 0), nu.points()(pj[b], 0));
    ra -= step;
    rb -= step;
    if (ra <= 0) {
      if (++a >= pi.size()) break;
      ra = mu.weights()[pi[a]];
    }
    if (rb <= 0) {
      if (++b >= pj.size()) break;
      rb = nu.weights()[pj[b]];
    }
  }
  return value;
}

void write_plan_csv(const TransportPlanExact& plan, const std::filesystem::path& path) {
  CsvWriter w({"i", "j", "weight"});
  for (Eigen::Index i = 0; i < plan.coupling.rows(); ++i)
    for (Eigen::Index j = 0; j < plan.coupling.cols(); ++j)
      if (plan.coupling(i, j) > 0)
        w.row({std::to_string(i), std::to_string(j), format_double(plan.coupling(i, j))});
  w.write_atomic(path);
}

TiProbeResult ti_probe(const DiscreteMeasure& nu, const TiProbeSpec& spec) {
  if ((spec.form == TiForm::TIOmega || spec.form == TiForm::Gamma) && !spec.omega)
    throw std::invalid_argument("ti_probe: omega-based form needs an omega callable");
  std::mt19937_64 rng(spec.rng_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Eigen::Index d = nu.points().cols();

  auto lhs_of = [&](const DiscreteMeasure& mu) {
    if (spec.form == TiForm::TI) return w2_squared(mu, nu).value;
    return w_omega(mu, nu, spec.omega).value;
  };
  auto rhs_of = [&](double kl_val) {
    if (spec.form == TiForm::Gamma)
      return spec.tau * (kl_val + std::pow(kl_val, spec.gamma));
    return 2.0 * spec.tau * kl_val;
  };

  TiProbeResult result;
  result.max_violation = -kInf;
  for (int c = 0; c < spec.candidate_count; ++c) {
    DiscreteMeasure mu = nu;
    std::string family;
    if (c % 2 == 0) {
      family = "reweighting";
      Eigen::VectorXd a(d);
      for (Eigen::Index k = 0; k < d; ++k) a[k] = gauss(rng);
      const double scale = 0.05 + 0.75 * unif(rng);
      Eigen::VectorXd w(nu.size());
      for (Eigen::Index i = 0; i < nu.size(); ++i)
        w[i] = nu.weights()[i] * std::exp(-scale * a.dot(nu.point(i)));
      mu = nu.reweighted(w);
    } else {
      family = "mass-shift";
      const Eigen::Index k = static_cast<Eigen::Index>(unif(rng) * nu.size()) % nu.size();
      Eigen::Index nearest = -1;
      double best = kInf;
      for (Eigen::Index l = 0; l < nu.size(); ++l) {
        if (l == k) continue;
        const double dist = nu.geometry().distance(nu.point(k), nu.point(l));
        if (dist < best) {
          best = dist;
          nearest = l;
        }
      }
      Eigen::VectorXd w = nu.weights();
      const double f = 0.1 + 0.4 * unif(rng);
      w[nearest] += f * w[k];
      w[k] *= 1.0 - f;
      mu = nu.reweighted(w);
    }
    const double violation = lhs_of(mu) - rhs_of(kl(mu, nu));
    if (violation > result.max_violation) {
      result.max_violation = violation;
      result.worst_candidate = c;
      result.worst_family = family;
    }
  }
  if (spec.candidate_count == 0) result.max_violation = 0.0;
  return result;
}

}  // namespace eotlab
