// Shared test helpers: independent oracles and seeded generators.
// Everything here is deliberately implementation-agnostic (plain series /
// quadrature / statistics) so it can check the library without sharing code
// paths with it.

#ifndef INEKF_TESTS_TEST_SUPPORT_H
#define INEKF_TESTS_TEST_SUPPORT_H

#include <Eigen/Core>
#include <Eigen/Dense>
#include <cmath>
#include <random>

namespace test_support {

/// Truncated power-series matrix exponential, sum_{k=0}^{terms} M^k / k!.
/// Independent oracle for the closed-form group exponentials.
inline Eigen::MatrixXd expm_series(const Eigen::MatrixXd& m, int terms = 30) {
  Eigen::MatrixXd sum = Eigen::MatrixXd::Identity(m.rows(), m.cols());
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(m.rows(), m.cols());
  for (int k = 1; k <= terms; ++k) {
    term = (term * m) / static_cast<double>(k);
    sum += term;
  }
  return sum;
}

/// Central finite-difference Jacobian of f: R^n -> R^m.
template <typename F>
Eigen::MatrixXd numerical_jacobian(const F& f, const Eigen::VectorXd& x,
                                   double h = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd jac(f0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    jac.col(j) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return jac;
}

/// Seeded uniform scalar in [lo, hi].
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
  }
  Eigen::VectorXd uniform_vector(Eigen::Index n, double lo, double hi) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform(lo, hi);
    return v;
  }
  Eigen::Vector3d uniform_vec3(double lo, double hi) {
    return uniform_vector(3, lo, hi);
  }
  std::mt19937_64& gen() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

/// Regularized lower incomplete gamma P(a, x) (series + continued fraction).
inline double gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  const double log_gamma_a = std::lgamma(a);
  if (x < a + 1.0) {
    // Series representation.
    double term = 1.0 / a;
    double sum = term;
    double ap = a;
    for (int n = 0; n < 500; ++n) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - log_gamma_a);
  }
  // Continued fraction for Q(a, x), Lentz's method.
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-15) break;
  }
  const double q = std::exp(-x + a * std::log(x) - log_gamma_a) * h;
  return 1.0 - q;
}

/// Chi-square quantile via bisection on the regularized gamma CDF.
inline double chi2_quantile(int dof, double p) {
  const double a = 0.5 * dof;
  double lo = 0.0, hi = dof + 10.0 * std::sqrt(2.0 * dof) + 10.0;
  while (gamma_p(a, 0.5 * hi) < p) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (gamma_p(a, 0.5 * mid) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace test_support

#endif  // INEKF_TESTS_TEST_SUPPORT_H
