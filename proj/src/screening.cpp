#include "labscreen/screening.hpp"

#include <cmath>
#include <limits>

#include <fmt/core.h>

#include "labscreen/chi2.hpp"
#include "labscreen/errors.hpp"

namespace labscreen {

namespace {

constexpr double kNestingSlack = 1e-6;
constexpr double kAicTie = 1e-9;

std::vector<SubjectObservations> subset(std::span<const SubjectObservations> subjects, bool cases) {
  std::vector<SubjectObservations> out;
  for (const auto& s : subjects) {
    if (s.is_case == cases && !s.times.empty()) out.push_back(s);
  }
  return out;
}

void require_data(const std::vector<SubjectObservations>& part, const char* name) {
  if (part.empty()) {
    throw Error(ErrorKind::InsufficientData, fmt::format("no {} with measurements", name));
  }
}

// Linear-time baseline vs spline, both without case terms.
TestResult linearity_test(std::span<const SubjectObservations> part, const KnotVector& knots,
                          const std::vector<std::string>& covariates) {
  DesignSpec spline{knots, covariates, false, false};
  DesignSpec linear{KnotVector{}, covariates, false, false};
  const LmmFit full = fit_lmm(design_matrix(part, spline));
  const LmmFit reduced = fit_lmm(design_matrix(part, linear));
  return lrt(full.loglik, reduced.loglik, static_cast<int>(knots.size()));
}

}  // namespace

TestResult lrt(double ll_full, double ll_reduced, int df) {
  if (df < 1) throw Error(ErrorKind::Domain, fmt::format("LRT df must be >= 1 (got {})", df));
  if (!std::isfinite(ll_full) || !std::isfinite(ll_reduced)) {
    throw Error(ErrorKind::Domain, "LRT needs finite log-likelihoods");
  }
  const double diff = ll_full - ll_reduced;
  if (diff < -kNestingSlack) {
    throw Error(ErrorKind::NestingViolation,
                fmt::format("full model log-likelihood {} below nested model {}", ll_full, ll_reduced));
  }
  TestResult r;
  r.statistic = std::max(0.0, 2.0 * diff);
  r.df = df;
  r.p_raw = chi2_sf(r.statistic, df);
  r.p_adjusted = r.p_raw;
  return r;
}

double bonferroni(double p, int m) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::Domain, fmt::format("p-value {} outside [0, 1]", p));
  if (m < 1) throw Error(ErrorKind::Domain, fmt::format("Bonferroni m must be >= 1 (got {})", m));
  return std::min(1.0, m * p);
}

std::vector<std::string> usable_covariates(std::span<const SubjectObservations> subjects,
                                           const std::vector<std::string>& names) {
  std::vector<const SubjectObservations*> rows;
  for (const auto& s : subjects) {
    if (!s.times.empty()) rows.push_back(&s);
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  std::vector<std::string> kept;
  Eigen::MatrixXd basis = Eigen::MatrixXd::Ones(n, 1);
  Eigen::Index rank = n > 0 ? 1 : 0;
  for (const auto& name : names) {
    Eigen::VectorXd col(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      auto it = rows[static_cast<std::size_t>(i)]->covariates.find(name);
      if (it == rows[static_cast<std::size_t>(i)]->covariates.end()) {
        throw Error(ErrorKind::MissingCovariate,
                    fmt::format("subject {} is missing covariate '{}'",
                                rows[static_cast<std::size_t>(i)]->id, name));
      }
      col(i) = it->second;
    }
    const double scale = n > 0 ? col.cwiseAbs().maxCoeff() : 0.0;
    if (!(scale > 0.0)) continue;
    Eigen::MatrixXd candidate(n, basis.cols() + 1);
    candidate << basis, col / scale;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(candidate);
    qr.setThreshold(1e-9);
    if (qr.rank() > rank) {
      basis = std::move(candidate);
      rank = qr.rank();
      kept.push_back(name);
    }
  }
  return kept;
}

MarkerReport test_criteria(const std::string& marker, std::span<const SubjectObservations> subjects,
                           const ScreenConfig& config, CriteriaDetail* detail) {
  if (config.knots.empty()) {
    throw Error(ErrorKind::InvalidKnots, "screening needs at least one knot");
  }
  const auto cases = subset(subjects, true);
  const auto controls = subset(subjects, false);
  require_data(cases, "cases");
  require_data(controls, "controls");

  std::vector<SubjectObservations> all = cases;
  all.insert(all.end(), controls.begin(), controls.end());

  MarkerReport report;
  report.marker = marker;

  const auto cov_all = usable_covariates(all, config.covariate_names);
  const DesignSpec full_spec{config.knots, cov_all, true, true};
  const DesignSpec shift_spec{config.knots, cov_all, true, false};
  LmmFit full = fit_lmm(design_matrix(all, full_spec));
  const LmmFit shifted = fit_lmm(design_matrix(all, shift_spec));
  report.test_overall = lrt(full.loglik, shifted.loglik, full_spec.basis_columns());

  report.test_cases_nonlinear =
      linearity_test(cases, config.knots, usable_covariates(cases, config.covariate_names));
  report.test_controls_linear =
      linearity_test(controls, config.knots, usable_covariates(controls, config.covariate_names));

  for (TestResult* t : {&report.test_overall, &report.test_cases_nonlinear, &report.test_controls_linear}) {
    t->p_adjusted = bonferroni(t->p_raw, config.bonferroni_m);
  }
  report.passes = report.test_overall.p_adjusted < config.alpha &&
                  report.test_cases_nonlinear.p_adjusted < config.alpha &&
                  report.test_controls_linear.p_adjusted >= config.alpha;

  if (detail) {
    detail->full_spec = full_spec;
    detail->full_fit = std::move(full);
  }
  return report;
}

KnotScanResult knot_scan(std::span<const SubjectObservations> cases,
                         const std::vector<std::string>& covariate_names, int max_knots,
                         double step_days) {
  std::vector<SubjectObservations> part;
  for (const auto& s : cases) {
    if (!s.times.empty()) part.push_back(s);
  }
  require_data(part, "cases");
  const auto covariates = usable_covariates(part, covariate_names);

  KnotScanResult result;
  int best = -1;
  double best_aic = std::numeric_limits<double>::infinity();
  for (int m = 0; m <= max_knots; ++m) {
    double aic = std::numeric_limits<double>::quiet_NaN();
    try {
      const DesignSpec spec{make_knots(ScanPrefix{m, step_days}), covariates, false, false};
      aic = fit_lmm(design_matrix(part, spec)).aic();
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::InvalidKnots) throw;
    }
    result.trace.push_back({m, aic});
    if (std::isfinite(aic) && aic < best_aic - kAicTie) {
      best_aic = aic;
      best = m;
    }
  }
  if (best < 0) throw Error(ErrorKind::ScanFailure, "every knot-scan fit failed");
  if (best > 0) result.onset_days = static_cast<int>(std::lround(step_days * best));
  return result;
}

MarkerReport screen_marker(const std::string& marker, std::span<const SubjectObservations> subjects,
                           const ScreenConfig& config, CriteriaDetail* detail) {
  MarkerReport report = test_criteria(marker, subjects, config, detail);
  if (report.passes) {
    std::vector<SubjectObservations> cases;
    for (const auto& s : subjects) {
      if (s.is_case) cases.push_back(s);
    }
    auto scan = knot_scan(cases, config.covariate_names, config.scan_max_knots, config.scan_step_days);
    report.onset_days = scan.onset_days;
    report.aic_trace = std::move(scan.trace);
  }
  return report;
}

}  // namespace labscreen
