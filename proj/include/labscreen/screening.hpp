#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "labscreen/mixed_model.hpp"
#include "labscreen/spline_basis.hpp"

namespace labscreen {

struct TestResult {
  double statistic = 0.0;  ///< 2 (ll_full - ll_reduced), clamped at 0
  int df = 0;
  double p_raw = 1.0;
  double p_adjusted = 1.0;
};

/// Likelihood-ratio test of nested ML fits. p_adjusted is left equal to p_raw.
/// Throws NestingViolation when ll_full < ll_reduced - 1e-6.
TestResult lrt(double ll_full, double ll_reduced, int df);

/// min(1, m * p). Throws Domain for p outside [0, 1] or m < 1.
double bonferroni(double p, int m = 3);

struct AicEntry {
  int knots = 0;
  double aic = 0.0;  ///< NaN when that fit failed
};

struct MarkerReport {
  std::string marker;
  TestResult test_overall;          ///< case/control curves differ
  TestResult test_cases_nonlinear;  ///< cases depart from linearity
  TestResult test_controls_linear;  ///< controls stay linear
  bool passes = false;
  std::optional<int> onset_days;
  std::vector<AicEntry> aic_trace;
};

struct ScreenConfig {
  KnotVector knots = make_knots(DefaultKnots{});
  std::vector<std::string> covariate_names;
  double alpha = 0.05;
  int bonferroni_m = 3;
  int scan_max_knots = 12;
  double scan_step_days = 14.0;
};

/// Extra output of test_criteria for plotting.
struct CriteriaDetail {
  DesignSpec full_spec;
  LmmFit full_fit;
};

/// Covariates that add rank to [intercept, covariates] over subjects that have
/// measurements, kept in the given order. Constant or aliased covariates drop out.
std::vector<std::string> usable_covariates(std::span<const SubjectObservations> subjects,
                                           const std::vector<std::string>& names);

/// Runs the three nested-model tests and applies the Bonferroni correction.
/// Onset and trace are left empty. Throws InsufficientData naming the subset
/// when cases or controls have no measurements.
MarkerReport test_criteria(const std::string& marker, std::span<const SubjectObservations> subjects,
                           const ScreenConfig& config, CriteriaDetail* detail = nullptr);

struct KnotScanResult {
  std::optional<int> onset_days;  ///< empty when the linear model wins
  std::vector<AicEntry> trace;    ///< knot counts 0..max_knots
};

/// AIC scan over knot prefixes {-step}, {-2 step, -step}, ... on the case series.
/// Ties within 1e-9 go to the smaller knot count. Failed fits are recorded as
/// NaN and skipped; throws ScanFailure if every fit fails.
KnotScanResult knot_scan(std::span<const SubjectObservations> cases,
                         const std::vector<std::string>& covariate_names, int max_knots = 12,
                         double step_days = 14.0);

/// test_criteria followed by knot_scan on the cases when the marker passes.
MarkerReport screen_marker(const std::string& marker, std::span<const SubjectObservations> subjects,
                           const ScreenConfig& config, CriteriaDetail* detail = nullptr);

}  // namespace labscreen
