#include <doctest.h>

#include <cmath>
#include <random>

#include "eotlab/rate_theory.hpp"
#include "eotlab/util.hpp"

using namespace eotlab;

TEST_CASE("contraction_main") {
  CHECK(contraction_main(1.0, 1.0, 1.0, RateVariant::ii) == doctest::Approx(0.5));
  // variant (i) resolves the min to tau*lambda when tau*lambda <= eps
  CHECK(contraction_main(2.0, 1.0, 1.0, RateVariant::i) == doctest::Approx(0.5));
  CHECK(contraction_main(0.5, 1.0, 1.0, RateVariant::i) == doctest::Approx(1.0 - 0.5 / 1.5));
  // eps -> infinity drives variant (ii) to zero
  CHECK(contraction_main(1e12, 1.0, 1.0, RateVariant::ii) < 1e-11);
  CHECK_THROWS(contraction_main(0.0, 1.0, 1.0, RateVariant::i));
  CHECK_THROWS(contraction_main(1.0, -1.0, 1.0, RateVariant::ii));

  // range and monotonicity, each variant separately
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unif(0.05, 5.0);
  for (int t = 0; t < 200; ++t) {
    const double eps = unif(rng), tau = unif(rng), lam = unif(rng);
    for (auto v : {RateVariant::i, RateVariant::ii}) {
      const double c = contraction_main(eps, tau, lam, v);
      CHECK(c > 0.0);
      CHECK(c < 1.0);
      CHECK(contraction_main(eps * 1.1, tau, lam, v) <= c + 1e-15);           // nonincreasing in eps
      CHECK(contraction_main(eps, tau * 1.1, lam, v) >= c - 1e-15);           // nondecreasing in tau*lambda
      CHECK(contraction_main(eps, tau, lam * 1.1, v) >= c - 1e-15);
    }
  }
}

TEST_CASE("rate catalog closed forms") {
  RateParams p;
  p.tau = 1.0;
  p.epsilon = 1.0;

  SUBCASE("weakly log-concave with L = 0 reduces to the log-concave rate") {
    p.alpha = 1.0;
    p.weak_l = 0.0;
    const auto weak = rate_catalog(RateSetting::WeaklyLogConcave, p);
    CHECK(weak.contraction == doctest::Approx(0.5));
    p.sigma_norm = 1.0;
    const auto logc = rate_catalog(RateSetting::LogConcave, p);
    CHECK(logc.contraction == doctest::Approx(weak.contraction));
    CHECK(logc.lambda == doctest::Approx(1.0));  // |Sigma|^2 / (eps alpha)
  }
  SUBCASE("compact support quadratic example") {
    p.g_inf = 1.0;
    const auto c = rate_catalog(RateSetting::CompactSupport, p);
    CHECK(c.contraction == doctest::Approx(0.5));
    CHECK(c.threshold_ok);
  }
  SUBCASE("sphere regular example") {
    const auto c = rate_catalog(RateSetting::SphereRegularCost, p);
    CHECK(c.contraction == doctest::Approx(0.75));
    CHECK(c.lambda == doctest::Approx(3.0));  // 2 + 1/eps
  }
  SUBCASE("missing parameters raise") {
    CHECK_THROWS(rate_catalog(RateSetting::LogConcave, p));  // no alpha/sigma_norm
    RateParams q;
    CHECK_THROWS(rate_catalog(RateSetting::CompactSupport, q));  // no tau/eps
  }
  SUBCASE("heavy-tail entry is flagged uncertified") {
    p.heavy_k = 2.0;
    const auto c = rate_catalog(RateSetting::HeavyTail, p);
    CHECK_FALSE(c.certified);
    CHECK(c.contraction == doctest::Approx(1.0 - 1.0 / 3.0));
  }
}

TEST_CASE("catalog contractions: range, monotonicity in eps, threshold continuity") {
  RateParams base;
  base.tau = 0.8;
  base.alpha = 1.3;
  base.beta = 2.0;
  base.sigma_norm = 1.1;
  base.weak_l = 0.4;
  base.tail_c = 0.9;
  base.tail_delta = 1.0;
  base.tail_r = 1.2;
  base.tail_l = 0.3;
  base.hess_upper = 1.0;
  base.hess_lower = 0.5;
  base.lip = 1.4;
  base.c_rho = 0.7;
  base.g_inf = 1.5;
  base.grad_inf = 2.0;
  base.sphere_delta = 0.9;
  base.heavy_k = 1.0;

  for (RateSetting s :
       {RateSetting::LogConcaveSemiconvex, RateSetting::LogConcave, RateSetting::WeaklyLogConcave,
        RateSetting::LightTailsGeneral, RateSetting::LightTailsQuadratic, RateSetting::LipschitzInY,
        RateSetting::LipschitzInX, RateSetting::CompactSupport, RateSetting::CompactBoth,
        RateSetting::SphereRegularCost, RateSetting::SphereDeltaCost, RateSetting::HeavyTail}) {
    double prev = 1.0;
    for (double eps = 0.05; eps <= 20.0; eps *= 1.3) {
      RateParams p = base;
      p.epsilon = eps;
      const auto c = rate_catalog(s, p);
      INFO("setting " << to_string(s) << " eps " << eps);
      CHECK(c.contraction > 0.0);
      CHECK(c.contraction < 1.0);
      CHECK(c.contraction <= prev + 1e-12);
      prev = c.contraction;
    }
    // continuity across the epsilon threshold
    RateParams p = base;
    p.epsilon = 1.0;
    const double thr = rate_catalog(s, p).epsilon_threshold;
    if (std::isfinite(thr) && thr > 0) {
      RateParams lo = base, hi = base;
      lo.epsilon = thr * (1.0 - 1e-13);
      hi.epsilon = thr * (1.0 + 1e-13);
      const double cl = rate_catalog(s, lo).contraction;
      const double ch = rate_catalog(s, hi).contraction;
      CHECK(std::abs(cl - ch) <= 1e-12);
      CHECK(rate_catalog(s, lo).threshold_ok);
      CHECK_FALSE(rate_catalog(s, hi).threshold_ok);
    }
  }
}

TEST_CASE("gaussian recursion scalar hand iteration") {
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(2, 2);
  const auto seq = gaussian_recursion(id, 1.0, 1.0, 2.0, Eigen::MatrixXd::Zero(2, 2), 2);
  REQUIRE(seq.size() == 3);
  CHECK((seq[0].b - 0.5 * id).cwiseAbs().maxCoeff() <= 1e-15);         // B0 = 1/2
  CHECK((seq[1].a - 0.4 * id).cwiseAbs().maxCoeff() <= 1e-15);         // A1 = 2/5
  CHECK((seq[1].b - (5.0 / 12.0) * id).cwiseAbs().maxCoeff() <= 1e-15);  // B1 = 5/12
}

TEST_CASE("gaussian recursion edge cases") {
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(2, 2);
  SUBCASE("stationary at the fixed point") {
    const auto lim = gaussian_limits(id, 2.0, 2.0, 0.7);
    const auto seq = gaussian_recursion(id, 2.0, 2.0, 0.7, lim.a, 5);
    for (const auto& pair : seq) {
      CHECK((pair.a - lim.a).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((pair.b - lim.b).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  SUBCASE("eps = 0 degenerates to double inversion") {
    const auto seq = gaussian_recursion(id, 1.0, 1.0, 0.0, id, 3);
    for (const auto& pair : seq) {
      CHECK((pair.a - id).cwiseAbs().maxCoeff() <= 1e-14);
      CHECK((pair.b - id).cwiseAbs().maxCoeff() <= 1e-14);
    }
  }
  SUBCASE("non-commuting start rejected") {
    Eigen::MatrixXd sigma(2, 2), a0(2, 2);
    sigma << 2, 0, 0, 1;
    a0 << 1, 0.5, 0.5, 1;
    CHECK_THROWS(gaussian_recursion(sigma, 1.0, 1.0, 1.0, a0, 3));
  }
}

TEST_CASE("gaussian limits closed forms") {
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(3, 3);
  SUBCASE("symmetric case converges to (sqrt(2)-1) I") {
    const auto lim = gaussian_limits(id, 1.0, 1.0, 2.0);
    CHECK((lim.a - (std::sqrt(2.0) - 1.0) * id).cwiseAbs().maxCoeff() <= 1e-14);
    const auto seq = gaussian_recursion(id, 1.0, 1.0, 2.0, Eigen::MatrixXd::Zero(3, 3), 200);
    CHECK((seq.back().a - lim.a).cwiseAbs().maxCoeff() <= 1e-14);
  }
  SUBCASE("eps -> 0 limits") {
    const auto lim = gaussian_limits(id, 1.0, 1.0, 0.0);
    CHECK((lim.a - id).cwiseAbs().maxCoeff() <= 1e-14);  // sqrt(alpha/beta) = 1
    const auto skew = gaussian_limits(id, 4.0, 1.0, 0.0);
    CHECK((skew.b - 0.5 * id).cwiseAbs().maxCoeff() <= 1e-14);  // sqrt(beta/alpha)
  }
  SUBCASE("fixed point residual vanishes at the closed form") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> unif(0.3, 3.0);
    for (int t = 0; t < 20; ++t) {
      Eigen::VectorXd d(2);
      d << unif(rng), unif(rng);
      const Eigen::MatrixXd sigma = d.asDiagonal();
      const double alpha = unif(rng), beta = unif(rng), eps = unif(rng);
      const auto lim = gaussian_limits(sigma, alpha, beta, eps);
      CHECK(gaussian_fixed_point_residual(sigma, alpha, beta, eps, lim) <= 1e-12);
    }
  }
}

TEST_CASE("recursion converges within 200 steps across the epsilon range") {
  // eps in {0.1, 1, 10} with alpha, beta in [0.25, 4]; Sigma eigenvalues are
  // drawn in [0.1, 0.4] so that eps*min(alpha,beta)/sigma stays large enough
  // for the 200-step budget (the asymptotic rate is (a_inf b_inf)^2).
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (double eps : {0.1, 1.0, 10.0}) {
    for (int t = 0; t < 6; ++t) {
      Eigen::VectorXd d(2);
      d << 0.1 + 0.3 * unif(rng), 0.1 + 0.3 * unif(rng);
      const Eigen::MatrixXd sigma = d.asDiagonal();
      const double alpha = 0.25 * std::pow(16.0, unif(rng));
      const double beta = 0.25 * std::pow(16.0, unif(rng));
      const auto seq = gaussian_recursion(sigma, alpha, beta, eps,
                                          Eigen::MatrixXd::Zero(2, 2), 200);
      const auto lim = gaussian_limits(sigma, alpha, beta, eps);
      INFO("eps " << eps << " alpha " << alpha << " beta " << beta);
      CHECK(operator_norm_sym(seq.back().a - lim.a) <= 1e-8);
      // each eigenvalue sequence is eventually monotone
      for (Eigen::Index k = 0; k < 2; ++k) {
        bool nondecr = true, nonincr = true;
        for (size_t n = 151; n < seq.size(); ++n) {
          const double diff = seq[n].a(k, k) - seq[n - 1].a(k, k);
          if (diff < -1e-13) nondecr = false;
          if (diff > 1e-13) nonincr = false;
        }
        CHECK((nondecr || nonincr));
      }
    }
  }
}

TEST_CASE("warm start lower bound") {
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(2, 2);
  SUBCASE("eps = 0 symmetric case is zero") {
    CHECK(warm_start_lower_bound(id, 1.5, 1.5, 0.0).cwiseAbs().maxCoeff() <= 1e-14);
  }
  SUBCASE("scalar arithmetic check") {
    const auto m = warm_start_lower_bound(id, 1.0, 1.0, 2.0);
    CHECK((m - (std::sqrt(2.0) - 2.0) * id).cwiseAbs().maxCoeff() <= 1e-14);
  }
  SUBCASE("equals -Sigma + A_inf Sigma for random parameter draws") {
    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> unif(0.3, 3.0);
    for (int t = 0; t < 20; ++t) {
      Eigen::VectorXd d(3);
      d << unif(rng), unif(rng), unif(rng);
      const Eigen::MatrixXd sigma = d.asDiagonal();
      const double alpha = unif(rng), beta = unif(rng), eps = unif(rng);
      const auto lim = gaussian_limits(sigma, alpha, beta, eps);
      const Eigen::MatrixXd expected = -sigma + lim.a * sigma;
      CHECK((warm_start_lower_bound(sigma, alpha, beta, eps) - expected).cwiseAbs().maxCoeff() <=
            1e-12);
    }
  }
}

TEST_CASE("lighttail_cov_bound") {
  // alpha = eps, H = h, L = R = 0, C = 1: bound = 2 H^2 (1 + (L+1)^2)
  CHECK(lighttail_cov_bound(1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.7, 0.7) ==
        doctest::Approx(2.0 * (1.0 + 1.0)));
  // H = 0 kills the bound
  CHECK(lighttail_cov_bound(0.0, 0.0, 1.0, 2.0, 1.0, 1.0, 0.5) == doctest::Approx(0.0));
  // monotone in L, R, H on random draws
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> unif(0.1, 2.0);
  for (int t = 0; t < 100; ++t) {
    const double h = unif(rng);
    const double hu = h + unif(rng);
    const double l = unif(rng), r = unif(rng), c = unif(rng), del = unif(rng), eps = unif(rng);
    const double base = lighttail_cov_bound(hu, h, l, r, c, del, eps);
    CHECK(lighttail_cov_bound(hu, h, l + 0.3, r, c, del, eps) >= base - 1e-12);
    CHECK(lighttail_cov_bound(hu, h, l, r + 0.3, c, del, eps) >= base - 1e-12);
    CHECK(lighttail_cov_bound(hu + 0.3, h, l, r, c, del, eps) >= base - 1e-12);
  }
}

TEST_CASE("polynomial bounds") {
  CHECK(polynomial_bound(2.0, 1.0, 1.0, 0) == doctest::Approx(1.0));
  CHECK(polynomial_bound(2.0, 1.0, 1.0, 1) == doctest::Approx(0.5));
  CHECK(polynomial_bound(2.0, 1.0, 1.0, 10) == doctest::Approx(1.0 / 11.0));
  double prev = polynomial_bound(1.7, 2.0, 0.8, 0);
  for (long k = 1; k <= 50; ++k) {
    const double v = polynomial_bound(1.7, 2.0, 0.8, k);
    CHECK(v <= prev);
    prev = v;
  }
  CHECK_THROWS(polynomial_bound(1.0, 1.0, 1.0, 1));

  CHECK(polynomial_rate_theorem(0.5, 1.0, 1.0, 1) == doctest::Approx(0.5));
  // huge kl_start: the M-term dominates
  const double g = 0.4;
  const double limit = std::pow((1.0 - g) / (g * std::pow(2.0, 1.0 / g)), -g / (1.0 - g));
  CHECK(polynomial_rate_theorem(g, 2.0, 1e12, 1) == doctest::Approx(limit).epsilon(1e-6));
  prev = polynomial_rate_theorem(0.5, 1.0, 2.0, 1);
  for (long k = 2; k <= 60; ++k) {
    const double v = polynomial_rate_theorem(0.5, 1.0, 2.0, k);
    CHECK(v <= prev + 1e-15);
    prev = v;
  }
  CHECK_THROWS(polynomial_rate_theorem(1.2, 1.0, 1.0, 1));
  CHECK_THROWS(polynomial_rate_theorem(0.0, 1.0, 1.0, 1));
}
