#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "labscreen/mixed_model.hpp"
#include "labscreen/spline_basis.hpp"

namespace labscreen {

/// Per-marker summary features, appended after the demographic covariates.
inline const std::vector<std::string> kMarkerFeatures{"marker_mean", "marker_slope",
                                                      "marker_recent_departure",
                                                      "marker_shrunken_intercept", "marker_missing"};

/// Label-free random-intercept fit of value ~ 1 + t, used to shrink each
/// subject's intercept toward the population line.
struct MarkerReference {
  std::optional<LmmFit> fit;  ///< empty when too little data to fit
};

MarkerReference fit_marker_reference(std::span<const SubjectObservations> subjects);

struct FeatureSet {
  std::vector<std::string> names;  ///< demographics then kMarkerFeatures
  std::vector<std::string> ids;
  Eigen::MatrixXd X;
  std::vector<int> labels;  ///< 1 = case
  int n_demographic = 0;
};

/// Window mean, OLS slope, recent departure (mean over t >= -14 minus mean
/// over -60 <= t <= -30, falling back to all t < -14 when that is empty),
/// and the shrunken intercept. Series with fewer than 2 values get slope 0
/// and missing = 1; empty series get 0 for every marker feature.
FeatureSet build_features(std::span<const SubjectObservations> subjects,
                          const std::vector<std::string>& demographic_names,
                          const MarkerReference& reference);

struct LogisticFit {
  Eigen::VectorXd coef;  ///< intercept first, then one per feature column
  bool separable = false;
  int iterations = 0;

  Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& X) const;
};

/// Bernoulli ML by iteratively reweighted least squares from a zero start.
/// Columns are standardized internally; constant columns get coefficient 0.
/// Divergence (separation) triggers a ridge refit with penalty 1e-4 and sets
/// `separable`. Throws DegenerateLabels for single-class labels.
LogisticFit fit_logistic(const Eigen::MatrixXd& X, std::span<const int> labels);

struct RocResult {
  double c = 0.5;
  long n_cases = 0;
  long n_controls = 0;
  std::vector<double> scores;
  std::vector<int> labels;
};

/// Mann-Whitney c with half credit for ties, computed from midranks.
RocResult c_statistic(std::span<const double> scores, std::span<const int> labels);

struct AucComparison {
  double c_base = 0.5;
  double c_augmented = 0.5;
  double variance = 0.0;  ///< DeLong variance of c_augmented - c_base
  double z = 0.0;
  double p = 0.5;  ///< one-sided, augmented > base
};

/// Paired DeLong test on correlated AUCs. Throws Pairing on length mismatch.
AucComparison compare_auc(std::span<const double> base, std::span<const double> augmented,
                          std::span<const int> labels);

struct LabeledSet {
  std::vector<SubjectObservations> subjects;
  std::vector<std::string> strata;  ///< parallel to subjects
};

struct ValidationResult {
  std::string marker;
  double c_base = 0.5;
  double c_marker = 0.5;
  double p_improvement = 1.0;
  long n_cases = 0;
  long n_controls = 0;
  bool separable = false;
};

/// Fits demographics-only and demographics + marker logistic models on the
/// training set, scores the validation set, and compares the AUCs.
/// Throws InconsistentInput if training and validation share a stratum.
ValidationResult validate_marker(const std::string& marker, const LabeledSet& train,
                                 const LabeledSet& validation,
                                 const std::vector<std::string>& demographic_names);

}  // namespace labscreen
