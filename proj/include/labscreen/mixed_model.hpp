#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "labscreen/spline_basis.hpp"

namespace labscreen {

/// Where the variance-ratio search ended up, for per-fit verification.
struct SearchDiagnostics {
  double deviance_at_optimum = 0.0;
  double deviance_at_zero = 0.0;
  double deviance_at_lower = 0.0;  ///< log(lambda) = lower bound
  double deviance_at_upper = 0.0;  ///< log(lambda) = upper bound
  int evaluations = 0;
};

/// Maximum-likelihood fit of y = X beta + b_subject + e, with
/// b ~ N(0, lambda * sigma2) and e ~ N(0, sigma2).
struct LmmFit {
  Eigen::VectorXd beta;
  double sigma2 = 0.0;
  double lambda = 0.0;  ///< sigma_b^2 / sigma^2
  double loglik = 0.0;
  int n_params = 0;     ///< fixed effects + 2 variance parameters
  Eigen::MatrixXd cov_beta;
  std::vector<int> group_sizes;  ///< indexed by group id
  std::vector<std::string> column_names;
  SearchDiagnostics search;

  double aic() const { return 2.0 * n_params - 2.0 * loglik; }
  double sigma2_between() const { return lambda * sigma2; }
  long n_obs() const;
};

struct LmmOptions {
  double log_lambda_lower = -12.0;
  double log_lambda_upper = 12.0;
  double log_lambda_tol = 1e-8;
  /// Used in singular-design messages; may be empty.
  std::vector<std::string> column_names;
};

/// Profiled ML over log(lambda) with an explicit lambda = 0 candidate.
/// Group ids are arbitrary non-negative integers; rows need not be contiguous.
/// Throws Underdetermined (rows <= columns), SingularDesign (lists dependent
/// columns), InvalidInput (fewer than 2 non-empty groups, bad sizes).
LmmFit fit_lmm(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, std::span<const int> groups,
               const LmmOptions& options = {});
LmmFit fit_lmm(const ModelData& data);

/// Exact Gaussian log-likelihood of the random-intercept model.
double loglik_at(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, std::span<const int> groups,
                 const Eigen::VectorXd& beta, double sigma2, double lambda);

/// Profiled ML deviance (-2 loglik with beta and sigma2 at their optima) for a
/// given lambda. Exposed so the search can be checked from outside.
double profiled_deviance(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                         std::span<const int> groups, double lambda);

/// Conditional means of the random intercepts, indexed by group id.
Eigen::VectorXd blup_intercepts(const LmmFit& fit, const Eigen::VectorXd& y,
                                const Eigen::MatrixXd& X, std::span<const int> groups);

enum class Group { Case, Control };

struct PredictedCurve {
  std::vector<double> grid;
  std::vector<double> mean;
  std::vector<double> lower;
  std::vector<double> upper;
};

/// Population curve x(t)'beta with a pointwise 95% band from cov_beta only.
PredictedCurve predict_curve(const LmmFit& fit, const DesignSpec& spec, Group group,
                             const std::map<std::string, double>& covariate_profile,
                             std::span<const double> grid);

}  // namespace labscreen
