#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace eotlab {

// Shortest-round-trip decimal formatting, so CSV bodies are reproducible
// byte-for-byte across reruns.
std::string format_double(double x);

// max-shifted log(sum_i exp(a_i)); -inf for an empty range.
double log_sum_exp(const Eigen::VectorXd& a);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};
LinearFit linear_fit(const std::vector<double>& xs, const std::vector<double>& ys);

// Largest |eigenvalue| of a symmetric matrix.
double operator_norm_sym(const Eigen::MatrixXd& m);
double max_eigenvalue_sym(const Eigen::MatrixXd& m);
double min_eigenvalue_sym(const Eigen::MatrixXd& m);

// Runs fn(i) for i in [0, n) over at most `threads` workers. Each index is
// processed exactly once; results must be written to disjoint slots so the
// outcome does not depend on scheduling.
void parallel_for(std::int64_t n, int threads, const std::function<void(std::int64_t)>& fn);

}  // namespace eotlab
