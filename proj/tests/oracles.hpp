#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

namespace oracle {

// Dense covariance sigma2 (I + lambda Z Z').
inline Eigen::MatrixXd dense_v(const std::vector<int>& groups, double sigma2, double lambda) {
  const auto n = static_cast<Eigen::Index>(groups.size());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (groups[i] == groups[j]) v(i, j) += lambda;
    }
  }
  return sigma2 * v;
}

inline double mvn_logpdf(const Eigen::VectorXd& r, const Eigen::MatrixXd& v) {
  const Eigen::LLT<Eigen::MatrixXd> llt(v);
  const Eigen::MatrixXd l = llt.matrixL();
  const double logdet = 2.0 * l.diagonal().array().log().sum();
  const double quad = r.dot(llt.solve(r));
  return -0.5 * (static_cast<double>(r.size()) * std::log(2.0 * std::numbers::pi) + logdet + quad);
}

inline double loglik(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const std::vector<int>& groups,
                     const Eigen::VectorXd& beta, double sigma2, double lambda) {
  return mvn_logpdf(y - X * beta, dense_v(groups, sigma2, lambda));
}

struct Profile {
  double loglik;
  double sigma2;
  Eigen::VectorXd beta;
  Eigen::MatrixXd cov;
};

// GLS at fixed lambda with explicit inverses.
inline Profile profile(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const std::vector<int>& groups,
                       double lambda) {
  const Eigen::MatrixXd v0 = dense_v(groups, 1.0, lambda);
  const Eigen::MatrixXd vinv = v0.inverse();
  const Eigen::MatrixXd info = X.transpose() * vinv * X;
  Profile p;
  p.beta = info.ldlt().solve(X.transpose() * vinv * y);
  const Eigen::VectorXd r = y - X * p.beta;
  p.sigma2 = r.dot(vinv * r) / static_cast<double>(y.size());
  p.cov = p.sigma2 * info.inverse();
  p.loglik = loglik(y, X, groups, p.beta, p.sigma2, lambda);
  return p;
}

// Brute force: fine log-lambda grid, local golden refinement, and lambda = 0.
inline std::pair<double, Profile> maximize(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                           const std::vector<int>& groups) {
  auto ll = [&](double x) { return profile(y, X, groups, std::exp(x)).loglik; };
  double best_x = -12.0, best = ll(-12.0);
  for (int k = 1; k <= 480; ++k) {
    const double x = -12.0 + 0.05 * k;
    const double v = ll(x);
    if (v > best) {
      best = v;
      best_x = x;
    }
  }
  double a = std::max(-12.0, best_x - 0.05), b = std::min(12.0, best_x + 0.05);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 80; ++it) {
    const double c = b - g * (b - a), d = a + g * (b - a);
    if (ll(c) >= ll(d)) {
      b = d;
    } else {
      a = c;
    }
  }
  double lambda = std::exp(0.5 * (a + b));
  Profile p = profile(y, X, groups, lambda);
  if (best > p.loglik) {
    lambda = std::exp(best_x);
    p = profile(y, X, groups, lambda);
  }
  const Profile zero = profile(y, X, groups, 0.0);
  if (zero.loglik >= p.loglik) return {0.0, zero};
  return {lambda, p};
}

// Posterior mean of each random intercept: lambda sigma2 Z' V^-1 r.
inline Eigen::VectorXd blup(const Eigen::VectorXd& r, const std::vector<int>& groups, int n_groups,
                            double sigma2, double lambda) {
  const Eigen::MatrixXd v = dense_v(groups, sigma2, lambda);
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(r.size(), n_groups);
  for (Eigen::Index i = 0; i < r.size(); ++i) z(i, groups[i]) = 1.0;
  return lambda * sigma2 * z.transpose() * v.ldlt().solve(r);
}

// Upper chi-square tail by numerical integration of the density.
inline double chi2_sf(double x, int df) {
  const double k = df / 2.0;
  const double log_norm = -k * std::log(2.0) - std::lgamma(k);
  auto pdf = [&](double t) {
    if (t <= 0.0) return 0.0;
    return std::exp(log_norm + (k - 1.0) * std::log(t) - t / 2.0);
  };
  if (x == 0.0) return 1.0;
  if (x < df) {
    boost::math::quadrature::tanh_sinh<double> integrator;
    return 1.0 - integrator.integrate(pdf, 0.0, x);
  }
  boost::math::quadrature::exp_sinh<double> integrator;
  return integrator.integrate([&](double u) { return pdf(x + u); }, 0.0,
                              std::numeric_limits<double>::infinity());
}

// Probability that a random case outranks a random control, ties count half.
inline double pairwise_c(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Kolmogorov-Smirnov distance from Uniform(0, 1).
inline double ks_uniform(std::vector<double> p) {
  std::sort(p.begin(), p.end());
  const auto n = static_cast<double>(p.size());
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    d = std::max(d, std::max((i + 1) / n - p[i], p[i] - i / n));
  }
  return d;
}

}  // namespace oracle
