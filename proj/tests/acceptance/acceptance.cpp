#include <chrono>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "labscreen/chi2.hpp"
#include "labscreen/cohort.hpp"
#include "labscreen/errors.hpp"
#include "labscreen/marker_data.hpp"
#include "labscreen/mixed_model.hpp"
#include "labscreen/prediction.hpp"
#include "labscreen/rng.hpp"
#include "labscreen/screening.hpp"
#include "labscreen/synthetic.hpp"
#include "../oracles.hpp"

using namespace labscreen;

namespace {

// Tolerances and thresholds.
constexpr int kSplineDraws = 1000;
constexpr double kLinearityTol = 1e-10;
constexpr int kLmmInstances = 100;
constexpr double kLmmTol = 1e-6;
constexpr double kKsLrt = 0.1;
constexpr double kKsDeLong = 0.12;
constexpr double kCTol = 1e-12;
constexpr double kChi2Tol = 1e-10;
constexpr double kAlpha = 0.05;

struct Options {
  int seeds = 100;
  int null_seeds = 500;
  std::set<int> only;
  bool verbose = false;
};

struct Outcome {
  bool pass;
  std::string detail;
};

// ---------------------------------------------------------------------------

Outcome spline_correctness() {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> day(-180.0, 0.0);
  std::uniform_int_distribution<int> n_knots(1, 12), n_times(1, 40);
  std::normal_distribution<double> coef(0.0, 10.0);
  int mismatches = 0, nonlinear = 0;
  for (int draw = 0; draw < kSplineDraws; ++draw) {
    std::set<double> ks;
    const int k = n_knots(gen);
    while (static_cast<int>(ks.size()) < k) {
      const double v = day(gen);
      if (v > -180.0 && v < 0.0) ks.insert(v);
    }
    const std::vector<double> knots(ks.begin(), ks.end());
    std::vector<double> times(static_cast<std::size_t>(n_times(gen)));
    for (auto& t : times) t = day(gen);

    Eigen::MatrixXd ref(times.size(), knots.size() + 1);
    for (std::size_t r = 0; r < times.size(); ++r) ref(r, 0) = times[r];
    for (std::size_t i = 0; i < knots.size(); ++i) {
      for (std::size_t r = 0; r < times.size(); ++r) {
        double tp = std::pow(times[r] - knots[i], 3);
        tp = tp > 0 ? tp : 0;
        ref(r, i + 1) = tp;
      }
    }
    const KnotVector kv = KnotVector::from_list(knots);
    if (tps_basis(times, kv) != ref) ++mismatches;

    std::vector<double> grid;
    const double h = (knots.front() + 180.0) / 20.0;
    for (int i = 0; i <= 20; ++i) grid.push_back(-180.0 + i * h - (i == 20 ? 1e-9 : 0.0));
    const Eigen::MatrixXd b = tps_basis(grid, kv);
    Eigen::VectorXd c(b.cols());
    for (auto& v : c) v = coef(gen);
    const Eigen::VectorXd f = b * c;
    const double scale = f.cwiseAbs().maxCoeff() + 1.0;
    for (Eigen::Index i = 1; i + 1 < f.size(); ++i) {
      if (std::abs(f(i + 1) - 2 * f(i) + f(i - 1)) > kLinearityTol * scale) {
        ++nonlinear;
        break;
      }
    }
  }
  return {mismatches == 0 && nonlinear == 0,
          fmt::format("{} draws, {} basis mismatches, {} left-linearity violations", kSplineDraws,
                      mismatches, nonlinear)};
}

Outcome lmm_oracle() {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> z;
  std::uniform_int_distribution<int> n_groups(2, 8), n_obs(1, 6);
  std::uniform_real_distribution<double> sd_b(0.0, 3.0);
  double worst_ll = 0.0, worst_beta = 0.0, worst_ols = 0.0;
  int done = 0, ols_done = 0;
  while (done < kLmmInstances) {
    const int g = n_groups(gen);
    std::vector<int> groups;
    std::vector<double> t;
    for (int i = 0; i < g; ++i) {
      const int n = n_obs(gen);
      for (int j = 0; j < n; ++j) {
        groups.push_back(i);
        t.push_back(-180.0 * std::uniform_real_distribution<double>(0.0, 1.0)(gen));
      }
    }
    const auto n = static_cast<Eigen::Index>(groups.size());
    if (n <= 4) continue;
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd y(n);
    std::vector<double> b(g);
    const double sb = sd_b(gen);
    for (auto& v : b) v = sb * z(gen);
    for (Eigen::Index i = 0; i < n; ++i) {
      X(i, 0) = 1.0;
      X(i, 1) = t[i];
      X(i, 2) = z(gen);
      y(i) = 2.0 + 0.01 * t[i] + 0.3 * X(i, 2) + b[groups[i]] + z(gen);
    }
    LmmFit fit;
    try {
      fit = fit_lmm(y, X, groups);
    } catch (const Error&) {
      continue;
    }
    const auto [lam, ref] = oracle::maximize(y, X, groups);
    worst_ll = std::max(worst_ll, std::abs(fit.loglik - ref.loglik));
    worst_beta = std::max(worst_beta, (fit.beta - ref.beta).cwiseAbs().maxCoeff());
    ++done;

    // Noise orthogonal to [X | Z] leaves the GLS beta unchanged for every
    // lambda, so lambda = 0 maximises and the fit must equal OLS.
    Eigen::MatrixXd xz = Eigen::MatrixXd::Zero(n, 3 + g);
    xz.leftCols(3) = X;
    for (Eigen::Index i = 0; i < n; ++i) xz(i, 3 + groups[i]) = 1.0;
    Eigen::VectorXd noise(n);
    for (auto& v : noise) v = z(gen);
    const Eigen::VectorXd r = noise - xz * xz.colPivHouseholderQr().solve(noise);
    if (r.norm() > 1e-6) {
      const Eigen::VectorXd y0 = X * Eigen::Vector3d(2.0, 0.01, 0.3) + r;
      const auto f0 = fit_lmm(y0, X, groups);
      const Eigen::VectorXd ols = X.colPivHouseholderQr().solve(y0);
      worst_ols = std::max(worst_ols, (f0.beta - ols).cwiseAbs().maxCoeff());
      if (f0.lambda != 0.0) worst_ols = std::max(worst_ols, 1.0);
      ++ols_done;
    }
  }
  const bool pass = worst_ll <= kLmmTol && worst_beta <= kLmmTol && worst_ols <= kLmmTol && ols_done > 0;
  return {pass, fmt::format("{} instances: max |dll| {:.2e}, max |dbeta| {:.2e}; {} zero-effect instances: max |beta - ols| {:.2e}",
                            done, worst_ll, worst_beta, ols_done, worst_ols)};
}

// ---------------------------------------------------------------------------
// Synthetic end-to-end helpers.

struct SeedRun {
  std::map<std::string, MarkerReport> reports;
  std::map<std::string, std::string> errors;
  std::map<std::string, ValidationResult> validation;
};

SeedRun run_pipeline(GeneratorConfig config, std::uint64_t seed, bool validate,
                     const std::vector<std::string>& labs) {
  config.seed = seed;
  const auto data = generate(config);
  const StudyData study(data.subjects, data.series, config.ranges);
  const Cohort cohort = sample_controls(data.subjects, derive_seed(seed, 0x5a3b1e));
  const int cutoff = validate ? config.last_year() : config.last_year() + 1;
  const SplitResult split = split_cohort(cohort, cutoff);
  ScreenConfig sc;
  sc.covariate_names = kDemographicCovariates;
  SeedRun out;
  for (const auto& lab : labs) {
    try {
      out.reports[lab] = screen_marker(lab, study.observations(split.train.records, lab), sc);
    } catch (const Error& e) {
      out.errors[lab] = e.what();
    }
    if (!validate) continue;
    auto labeled = [&](const Cohort& c) {
      LabeledSet set;
      set.subjects = study.observations(c.records, lab);
      for (const auto& r : c.records) set.strata.push_back(r.stratum);
      return set;
    };
    out.validation[lab] = validate_marker(lab, labeled(split.train), labeled(split.validation), kDemographicCovariates);
  }
  return out;
}

std::vector<std::string> labs_of(const GeneratorConfig& c, std::optional<MarkerKind> kind = {}) {
  std::vector<std::string> labs;
  for (const auto& m : c.markers) {
    if (!kind || m.kind == *kind) labs.push_back(m.lab);
  }
  return labs;
}

Outcome lrt_calibration(const Options& opt) {
  GeneratorConfig config = GeneratorConfig::defaults();
  config.markers = {MarkerSpec{"albumin", MarkerKind::Null}};
  config.cases_per_year = {25, 25, 25, 25};
  config.controls_per_year = 25;
  std::vector<double> p;
  int failures = 0;
  for (int s = 0; s < opt.null_seeds; ++s) {
    const auto run = run_pipeline(config, 30000 + s, false, {"albumin"});
    if (run.reports.count("albumin")) {
      p.push_back(run.reports.at("albumin").test_overall.p_raw);
    } else {
      ++failures;
    }
  }
  const double ks = oracle::ks_uniform(p);
  return {ks < kKsLrt && failures == 0,
          fmt::format("{} null cohorts (100/side), KS distance {:.4f} (limit {}), {} failed fits", p.size(), ks,
                      kKsLrt, failures)};
}

struct ScreenStudy {
  int seeds = 0;
  std::map<std::string, int> correct;  // useful passed / null failed
  int joint = 0;
  std::map<std::string, std::map<int, int>> onsets;  // lab -> onset (0 = none) -> count
};

ScreenStudy screen_study(const Options& opt) {
  GeneratorConfig config = GeneratorConfig::defaults();
  config.cases_per_year = {125, 125, 125, 125};
  ScreenStudy st;
  const auto labs = labs_of(config);
  for (int s = 0; s < opt.seeds; ++s) {
    const auto run = run_pipeline(config, 40000 + s, false, labs);
    ++st.seeds;
    bool all = true;
    for (const auto& m : config.markers) {
      bool ok = false;
      if (auto it = run.reports.find(m.lab); it != run.reports.end()) {
        ok = (m.kind == MarkerKind::Useful) == it->second.passes;
        if (!ok && opt.verbose) {
          const auto& r = it->second;
          std::cerr << fmt::format("  seed {} {}: overall {:.3g} cases {:.3g} controls {:.3g}\n", 40000 + s, m.lab,
                                   r.test_overall.p_adjusted, r.test_cases_nonlinear.p_adjusted,
                                   r.test_controls_linear.p_adjusted);
        }
        if (m.kind == MarkerKind::Useful && it->second.passes) {
          ++st.onsets[m.lab][it->second.onset_days.value_or(0)];
        }
      }
      st.correct[m.lab] += ok;
      all = all && ok;
    }
    st.joint += all;
  }
  return st;
}

std::string onset_table(const std::map<int, int>& counts) {
  std::string out;
  for (const auto& [d, n] : counts) out += fmt::format("{}{}:{}", out.empty() ? "" : " ", d, n);
  return out;
}

Outcome screen_end_to_end(const ScreenStudy& st) {
  const int need = (95 * st.seeds + 99) / 100;
  bool pass = true;
  std::string detail;
  for (const auto& [lab, n] : st.correct) {
    pass = pass && n >= need;
    detail += fmt::format("{} {}/{}; ", lab, n, st.seeds);
  }
  detail += fmt::format("per-marker need {}; all 11 jointly correct on {}/{}", need, st.joint, st.seeds);
  return {pass, detail};
}

Outcome onset_recovery(const ScreenStudy& st) {
  const auto config = GeneratorConfig::defaults();
  bool pass = true;
  std::string detail;
  for (const auto& m : config.markers) {
    if (m.kind != MarkerKind::Useful || (m.onset_days != 28 && m.onset_days != 56)) continue;
    const int pct = m.onset_days == 28 ? 90 : 85;
    const int need = (pct * st.seeds + 99) / 100;
    const auto it = st.onsets.find(m.lab);
    const int hits = it == st.onsets.end() || !it->second.count(m.onset_days) ? 0 : it->second.at(m.onset_days);
    pass = pass && hits >= need;
    detail += fmt::format("{} (truth {}) {}/{} need {} [{}]; ", m.lab, m.onset_days, hits, st.seeds, need,
                          it == st.onsets.end() ? "" : onset_table(it->second));
  }
  return {pass, detail};
}

Outcome roc_machinery(const Options& opt) {
  std::mt19937_64 gen(6);
  std::normal_distribution<double> z;
  std::uniform_int_distribution<int> size(2, 60), level(0, 4);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int n = size(gen) + 2;
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (int i = 0; i < n; ++i) {
      l[i] = i < 2 ? i : static_cast<int>(gen() % 2);
      s[i] = rep % 2 ? z(gen) : level(gen);
    }
    worst = std::max(worst, std::abs(c_statistic(s, l).c - oracle::pairwise_c(s, l)));
  }
  const std::vector<int> labels{1, 1, 1, 0, 0, 0};
  const double perfect = c_statistic(std::vector<double>{3, 4, 5, 0, 1, 2}, labels).c;
  const double ties = c_statistic(std::vector<double>(6, 1.0), labels).c;

  std::vector<double> p;
  for (int s = 0; s < opt.null_seeds; ++s) {
    std::vector<double> a(200), b(200);
    std::vector<int> l(200);
    for (int i = 0; i < 200; ++i) {
      l[i] = i < 100;
      a[i] = z(gen);
      b[i] = z(gen);
    }
    p.push_back(compare_auc(a, b, l).p);
  }
  const double ks = oracle::ks_uniform(p);
  const bool pass = worst <= kCTol && perfect == 1.0 && ties == 0.5 && ks < kKsDeLong;
  return {pass, fmt::format("max |c - pairwise| {:.1e}; separated c {}; tied c {}; DeLong null KS {:.4f} over {} (limit {})",
                            worst, perfect, ties, ks, p.size(), kKsDeLong)};
}

Outcome validation_discrimination(const Options& opt) {
  const GeneratorConfig config = GeneratorConfig::defaults();
  const auto labs = labs_of(config);
  std::map<std::string, int> ok;
  std::map<std::string, int> screened_pass;
  int joint = 0;
  for (int s = 0; s < opt.seeds; ++s) {
    const auto run = run_pipeline(config, 70000 + s, true, labs);
    bool all = true;
    for (const auto& m : config.markers) {
      const auto rep = run.reports.find(m.lab);
      const bool passes = rep != run.reports.end() && rep->second.passes;
      const double p = run.validation.at(m.lab).p_improvement;
      bool good;
      if (m.kind == MarkerKind::Null) {
        good = p >= kAlpha;
      } else {
        screened_pass[m.lab] += passes;
        good = passes && p < kAlpha;
      }
      ok[m.lab] += good;
      if (!good && opt.verbose) {
        std::string screen = "screen failed";
        if (rep != run.reports.end()) {
          const auto& r = rep->second;
          screen = fmt::format("overall {:.3g} cases {:.3g} controls {:.3g}", r.test_overall.p_adjusted,
                               r.test_cases_nonlinear.p_adjusted, r.test_controls_linear.p_adjusted);
        }
        std::cerr << fmt::format("  seed {} {}: passes {} p_improvement {:.3g} c {:.3f} -> {:.3f} ({})\n", 70000 + s,
                                 m.lab, passes, p, run.validation.at(m.lab).c_base, run.validation.at(m.lab).c_marker,
                                 screen);
      }
      all = all && good;
    }
    joint += all;
  }
  const int need = (90 * opt.seeds + 99) / 100;
  bool pass = true;
  std::string detail;
  for (const auto& m : config.markers) {
    pass = pass && ok[m.lab] >= need;
    detail += fmt::format("{} {}/{}; ", m.lab, ok[m.lab], opt.seeds);
  }
  detail += fmt::format("per-marker need {}; all 11 jointly on {}/{}", need, joint, opt.seeds);
  return {pass, detail};
}

Outcome sampling_design(const Options& opt) {
  GeneratorConfig config = GeneratorConfig::defaults();
  config.markers = {MarkerSpec{"albumin", MarkerKind::Null}};
  int violations = 0, irreproducible = 0, later_case_controls = 0;
  for (int s = 0; s < opt.seeds; ++s) {
    config.seed = 80000 + s;
    const auto data = generate(config);
    const auto again = generate(config);
    if (format_subjects(data.subjects) != format_subjects(again.subjects) ||
        format_measurements(data.series) != format_measurements(again.series)) {
      ++irreproducible;
    }
    std::map<std::string, const SubjectRecord*> by_id;
    for (const auto& sub : data.subjects) by_id[sub.id] = &sub;
    const Cohort cohort = sample_controls(data.subjects, config.seed);
    if (format_cohort(cohort) != format_cohort(sample_controls(data.subjects, config.seed))) ++irreproducible;

    std::map<std::string, std::pair<int, int>> per_stratum;
    std::set<std::string> keys;
    for (const auto& r : cohort.records) {
      const auto& sub = *by_id.at(r.subject_id);
      if (!keys.insert(r.record_key()).second) ++violations;
      if (r.stratum != month_key(r.index_date)) ++violations;
      auto& [cases, controls] = per_stratum[r.stratum];
      if (r.role == Role::Case) {
        ++cases;
        if (!sub.event_date || *sub.event_date != r.index_date) ++violations;
      } else {
        ++controls;
        const Date month_end = last_of_month(r.index_date);
        if (sub.event_date && *sub.event_date <= month_end) ++violations;
        if (sub.obs_start > first_of_month(r.index_date) || sub.obs_end < month_end) ++violations;
        if (sub.event_date) ++later_case_controls;
      }
    }
    for (const auto& [k, v] : per_stratum) {
      if (v.first != v.second) ++violations;
    }
  }
  return {violations == 0 && irreproducible == 0,
          fmt::format("{} runs: {} invariant violations, {} non-reproducible outputs, {} controls that later became cases",
                      opt.seeds, violations, irreproducible, later_case_controls)};
}

Outcome chi2_accuracy() {
  double worst = 0.0;
  int points = 0;
  for (int df = 1; df <= 12; ++df) {
    for (int i = 0; i <= 600; ++i) {
      const double x = 0.1 * i;
      worst = std::max(worst, std::abs(chi2_sf(x, df) - oracle::chi2_sf(x, df)));
      ++points;
    }
  }
  return {worst < kChi2Tol, fmt::format("{} points, max abs error {:.2e} (limit {})", points, worst, kChi2Tol)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  Options opt;
  std::vector<int> only;
  app.add_option("--seeds", opt.seeds, "Seeds for the Monte Carlo criteria");
  app.add_option("--null-seeds", opt.null_seeds, "Seeds for the null-calibration criteria");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_flag("--verbose", opt.verbose, "Print each misclassified marker");
  CLI11_PARSE(app, argc, argv);
  opt.only = {only.begin(), only.end()};

  int failed = 0;
  std::optional<ScreenStudy> study;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& body) {
    if (!opt.only.empty() && !opt.only.count(id)) return;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !o.pass;
    std::cout << fmt::format("[{}] {}. {}: {} ({:.1f}s)", o.pass ? "PASS" : "FAIL", id, name, o.detail, secs)
              << std::endl;
  };
  auto screened = [&]() -> const ScreenStudy& {
    if (!study) study = screen_study(opt);
    return *study;
  };

  report(1, "spline correctness", spline_correctness);
  report(2, "LMM oracle equivalence", lmm_oracle);
  report(3, "LRT calibration under the null", [&] { return lrt_calibration(opt); });
  report(4, "three-criterion screen end-to-end", [&] { return screen_end_to_end(screened()); });
  report(5, "onset recovery", [&] { return onset_recovery(screened()); });
  report(6, "ROC machinery", [&] { return roc_machinery(opt); });
  report(7, "validation discrimination", [&] { return validation_discrimination(opt); });
  report(8, "sampling design", [&] { return sampling_design(opt); });
  report(9, "chi-square tail accuracy", chi2_accuracy);
  return failed == 0 ? 0 : 1;
}
