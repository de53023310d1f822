#include "labscreen/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "labscreen/cohort.hpp"
#include "labscreen/csv.hpp"
#include "labscreen/errors.hpp"
#include "labscreen/marker_data.hpp"
#include "labscreen/rng.hpp"

namespace labscreen::cli {

namespace {

const std::vector<std::string> kScreenHeader{"marker", "p_overall", "p_cases_nonlinear",
                                             "p_controls_linear", "passes", "onset_days"};
const std::vector<std::string> kValidationHeader{"marker", "c_base", "c_marker", "p_improvement",
                                                 "n_validation_cases", "n_validation_controls",
                                                 "separability_flag"};
const char* kNoOnset = "—";
const char* kPredictorNote =
    "# predictor: two-stage summary features (window mean, slope, recent departure, shrunken "
    "intercept, missingness) + logistic regression; one-sided paired DeLong test";

std::string num(double v) { return fmt::format("{:.10g}", v); }

std::string pretty_p(double p) { return p < 0.001 ? "<0.001" : fmt::format("{:.3f}", p); }

int exit_code_for(const Error& e) { return e.is_numerical() ? kNumericalFailure : kDataError; }

std::filesystem::path output_dir(const RunConfig& config) {
  std::filesystem::path dir = config.output_dir;
  if (dir.empty()) {
    const char* env = std::getenv(kOutputDirEnv);
    dir = env && *env ? env : "labscreen_out";
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  return dir;
}

RangeTable load_ranges(const RunConfig& config) {
  if (config.ranges.empty()) return RangeTable::defaults();
  return parse_ranges(read_text(config.ranges), config.ranges.string());
}

struct Study {
  StudyData data;
  Cohort cohort;
};

Study load_study(const RunConfig& config) {
  auto subjects = parse_subjects(read_text(config.subjects), config.subjects.string());
  const auto series = parse_measurements(read_text(config.measurements), config.measurements.string());
  Cohort cohort = parse_cohort(read_text(config.cohort), config.cohort.string());
  StudyData data(std::move(subjects), series, load_ranges(config));
  if (config.active_only) {
    std::erase_if(cohort.records, [&](const CohortRecord& r) {
      return r.role == Role::Case &&
             !is_active_case(data.subject(r.subject_id), data.series_for(r.subject_id));
    });
  }
  return {std::move(data), std::move(cohort)};
}

std::vector<CohortRecord> records_for(const Cohort& cohort, Split split) {
  std::vector<CohortRecord> out;
  std::copy_if(cohort.records.begin(), cohort.records.end(), std::back_inserter(out),
               [&](const CohortRecord& r) { return r.split == split; });
  return out;
}

template <typename F>
void parallel_for(std::size_t n, int threads, F&& body) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                    : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) body(i);
    });
  }
}

std::map<std::string, double> mean_profile(const std::vector<SubjectObservations>& subjects,
                                           const std::vector<std::string>& names) {
  std::map<std::string, double> profile;
  for (const auto& name : names) {
    double sum = 0.0;
    for (const auto& s : subjects) sum += s.covariates.at(name);
    profile[name] = subjects.empty() ? 0.0 : sum / static_cast<double>(subjects.size());
  }
  return profile;
}

std::vector<double> window_grid() {
  std::vector<double> grid;
  for (int t = -static_cast<int>(kWindowDays); t <= 0; ++t) grid.push_back(t);
  return grid;
}

}  // namespace

void RunConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::Config, "alpha must be in (0, 1)");
  if (!(window > 0.0)) throw Error(ErrorKind::Config, "window must be positive");
  if (window != kWindowDays) {
    throw Error(ErrorKind::Config, fmt::format("only {}-day windows are supported", kWindowDays));
  }
  if (bonferroni_m < 1) throw Error(ErrorKind::Config, "bonferroni m must be >= 1");
  if (scan_max_knots < 0) throw Error(ErrorKind::Config, "scan max knots must be >= 0");
  if (!(scan_step > 0.0)) throw Error(ErrorKind::Config, "scan step must be positive");
}

KnotVector parse_knots_flag(const std::string& text) {
  if (text == "default") return make_knots(DefaultKnots{});
  std::vector<double> knots;
  for (const auto& field : csv::split_line(text)) knots.push_back(csv::to_double(field, "--knots"));
  std::sort(knots.begin(), knots.end());
  return make_knots(ExplicitKnots{knots});
}

std::string format_screen_report(const std::vector<ScreenRow>& rows) {
  std::string out = csv::join(kScreenHeader) + "\n";
  for (const auto& row : rows) {
    if (row.error) {
      out += fmt::format("{},NA,NA,NA,error,{}\n", row.marker, kNoOnset);
      continue;
    }
    const auto& r = row.report;
    out += fmt::format("{},{},{},{},{},{}\n", row.marker, num(r.test_overall.p_adjusted),
                       num(r.test_cases_nonlinear.p_adjusted), num(r.test_controls_linear.p_adjusted),
                       r.passes ? "true" : "false",
                       r.onset_days ? std::to_string(*r.onset_days) : std::string(kNoOnset));
  }
  return out;
}

std::vector<ScreenRow> parse_screen_report(std::string_view text) {
  const auto table = csv::parse(text, "screen report");
  csv::require_header(table, kScreenHeader, "screen report");
  std::vector<ScreenRow> rows;
  for (const auto& f : table.rows) {
    ScreenRow row;
    row.marker = f[0];
    row.report.marker = f[0];
    if (f[4] == "error") {
      row.error = "failed";
    } else {
      row.report.test_overall.p_adjusted = csv::to_double(f[1], "p_overall");
      row.report.test_cases_nonlinear.p_adjusted = csv::to_double(f[2], "p_cases_nonlinear");
      row.report.test_controls_linear.p_adjusted = csv::to_double(f[3], "p_controls_linear");
      if (f[4] != "true" && f[4] != "false") throw Error(ErrorKind::Parse, "passes must be true/false");
      row.report.passes = f[4] == "true";
      if (f[5] != kNoOnset) row.report.onset_days = static_cast<int>(csv::to_long(f[5], "onset_days"));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_screen_table(const std::vector<ScreenRow>& rows) {
  std::string out = fmt::format("{:<16} {:>12} {:>12} {:>12} {:>6} {:>12}\n", "Lab", "LRT overall",
                                "LRT cases", "LRT controls", "Pass", "Optimal fit");
  for (const auto& row : rows) {
    if (row.error) {
      out += fmt::format("{:<16} failed: {}\n", row.marker, *row.error);
      continue;
    }
    const auto& r = row.report;
    out += fmt::format("{:<16} {:>12} {:>12} {:>12} {:>6} {:>12}\n", row.marker,
                       pretty_p(r.test_overall.p_adjusted), pretty_p(r.test_cases_nonlinear.p_adjusted),
                       pretty_p(r.test_controls_linear.p_adjusted), r.passes ? "yes" : "no",
                       r.onset_days ? fmt::format("{} days", *r.onset_days) : std::string(kNoOnset));
  }
  return out;
}

std::string format_validation_report(double c_base, long n_cases, long n_controls,
                                     const std::vector<ValidationResult>& rows) {
  std::string out = std::string(kPredictorNote) + "\n" + csv::join(kValidationHeader) + "\n";
  out += fmt::format("demographics_only,{},{},NA,{},{},false\n", num(c_base), num(c_base), n_cases, n_controls);
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{}\n", r.marker, num(r.c_base), num(r.c_marker),
                       num(r.p_improvement), r.n_cases, r.n_controls, r.separable ? "true" : "false");
  }
  return out;
}

std::vector<ValidationResult> parse_validation_report(std::string_view text) {
  const auto table = csv::parse(text, "validation report");
  csv::require_header(table, kValidationHeader, "validation report");
  std::vector<ValidationResult> rows;
  for (const auto& f : table.rows) {
    ValidationResult r;
    r.marker = f[0];
    r.c_base = csv::to_double(f[1], "c_base");
    r.c_marker = csv::to_double(f[2], "c_marker");
    r.p_improvement = f[3] == "NA" ? std::numeric_limits<double>::quiet_NaN() : csv::to_double(f[3], "p");
    r.n_cases = csv::to_long(f[4], "n_validation_cases");
    r.n_controls = csv::to_long(f[5], "n_validation_controls");
    r.separable = f[6] == "true";
    rows.push_back(r);
  }
  return rows;
}

std::string marker_json(const MarkerReport& report, long n_records, long n_measurements) {
  auto test = [](const TestResult& t) {
    nlohmann::ordered_json j;
    j["statistic"] = t.statistic;
    j["df"] = t.df;
    j["p_raw"] = t.p_raw;
    j["p_adjusted"] = t.p_adjusted;
    return j;
  };
  nlohmann::ordered_json j;
  j["marker"] = report.marker;
  j["passes"] = report.passes;
  j["onset_days"] = report.onset_days ? nlohmann::ordered_json(*report.onset_days) : nlohmann::ordered_json();
  j["n_records"] = n_records;
  j["n_measurements"] = n_measurements;
  j["tests"]["overall"] = test(report.test_overall);
  j["tests"]["cases_nonlinear"] = test(report.test_cases_nonlinear);
  j["tests"]["controls_linear"] = test(report.test_controls_linear);
  j["aic_trace"] = nlohmann::ordered_json::array();
  for (const auto& e : report.aic_trace) {
    nlohmann::ordered_json entry;
    entry["knots"] = e.knots;
    entry["aic"] = std::isfinite(e.aic) ? nlohmann::ordered_json(e.aic) : nlohmann::ordered_json();
    j["aic_trace"].push_back(entry);
  }
  return j.dump(2) + "\n";
}

std::string format_curves(const PredictedCurve& cases, const PredictedCurve& controls) {
  std::string out = "t,group,mean,lo,hi\n";
  for (const auto& [curve, name] : {std::pair{&cases, "case"}, std::pair{&controls, "control"}}) {
    for (std::size_t i = 0; i < curve->grid.size(); ++i) {
      out += fmt::format("{},{},{},{},{}\n", num(curve->grid[i]), name, num(curve->mean[i]),
                         num(curve->lower[i]), num(curve->upper[i]));
    }
  }
  return out;
}

std::string tps_demo(std::uint64_t seed) {
  Rng rng(seed);
  auto truth = [](double t) {
    const double u = std::max(0.0, (t + 45.0) / 45.0);
    return 1.0 + 0.004 * t - 1.5 * u * u * u;
  };
  std::vector<double> times, values;
  for (int t = -180; t <= 0; t += 3) {
    times.push_back(t);
    values.push_back(truth(t) + rng.normal(0.0, 0.15));
  }
  std::string out = "curve,first_knot,t,value\n";
  for (std::size_t i = 0; i < times.size(); ++i) out += fmt::format("truth,NA,{},{}\n", times[i], num(truth(times[i])));
  for (std::size_t i = 0; i < times.size(); ++i) out += fmt::format("data,NA,{},{}\n", times[i], num(values[i]));

  const std::vector<std::vector<double>> knot_sets{
      {-120.0, -90.0, -60.0, -30.0, -14.0}, {-60.0, -30.0, -14.0}, {-30.0, -14.0}};
  const Eigen::Map<const Eigen::VectorXd> y(values.data(), static_cast<Eigen::Index>(values.size()));
  for (const auto& set : knot_sets) {
    const KnotVector knots = make_knots(ExplicitKnots{set});
    const BasisMatrix basis = tps_basis(times, knots);
    Eigen::MatrixXd X(basis.rows(), basis.cols() + 1);
    X << Eigen::VectorXd::Ones(basis.rows()), basis;
    const Eigen::VectorXd coef = X.colPivHouseholderQr().solve(y);
    const Eigen::VectorXd fitted = X * coef;
    for (std::size_t i = 0; i < times.size(); ++i) {
      out += fmt::format("fit,{},{},{}\n", knots.leftmost(), times[i], num(fitted(static_cast<Eigen::Index>(i))));
    }
  }
  return out;
}

int cmd_generate(const GeneratorConfig& config, const std::filesystem::path& out) {
  try {
    const auto data = generate(config);
    RunConfig rc;
    rc.output_dir = out;
    const auto dir = output_dir(rc);
    write_dataset(data, config, dir);
    std::size_t n_meas = 0;
    for (const auto& s : data.series) n_meas += s.points.size();
    std::cout << fmt::format("wrote {} subjects, {} measurements to {}\n", data.subjects.size(), n_meas,
                             dir.string());
    return kSuccess;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

int cmd_sample(const RunConfig& config) {
  try {
    config.validate();
    const auto subjects = parse_subjects(read_text(config.subjects), config.subjects.string());
    const Cohort sampled = sample_controls(subjects, config.seed);
    const SplitResult split = split_cohort(sampled, config.cutoff_year);
    for (const auto& w : split.warnings) std::cerr << "warning: " << w << "\n";
    Cohort out;
    out.records = split.train.records;
    out.records.insert(out.records.end(), split.validation.records.begin(), split.validation.records.end());
    const auto dir = output_dir(config);
    csv::write_file(dir / "cohort.csv", format_cohort(out));
    std::cout << fmt::format("cohort: {} records ({} train, {} validation) -> {}\n", out.records.size(),
                             split.train.records.size(), split.validation.records.size(),
                             (dir / "cohort.csv").string());
    return kSuccess;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

int cmd_screen(const RunConfig& config) {
  try {
    config.validate();
    const auto dir = output_dir(config);
    const Study study = load_study(config);
    const auto train = records_for(study.cohort, Split::Train);
    if (train.empty()) throw Error(ErrorKind::InsufficientData, "training cohort is empty");

    ScreenConfig sc;
    sc.knots = parse_knots_flag(config.knots);
    sc.covariate_names = kDemographicCovariates;
    sc.alpha = config.alpha;
    sc.bonferroni_m = config.bonferroni_m;
    sc.scan_max_knots = config.scan_max_knots;
    sc.scan_step_days = config.scan_step;

    const auto labs = study.data.labs();
    std::vector<ScreenRow> rows(labs.size());
    std::vector<std::string> curves(labs.size()), jsons(labs.size());
    std::vector<bool> numerical(labs.size(), false);
    parallel_for(labs.size(), config.threads, [&](std::size_t i) {
      rows[i].marker = labs[i];
      try {
        const auto obs = study.data.observations(train, labs[i]);
        CriteriaDetail detail;
        rows[i].report = screen_marker(labs[i], obs, sc, &detail);
        const auto profile = mean_profile(obs, detail.full_spec.covariate_names);
        const auto grid = window_grid();
        curves[i] = format_curves(predict_curve(detail.full_fit, detail.full_spec, Group::Case, profile, grid),
                                  predict_curve(detail.full_fit, detail.full_spec, Group::Control, profile, grid));
        long n_meas = 0;
        for (const auto& o : obs) n_meas += static_cast<long>(o.times.size());
        jsons[i] = marker_json(rows[i].report, static_cast<long>(obs.size()), n_meas);
      } catch (const Error& e) {
        rows[i].error = e.what();
        numerical[i] = e.is_numerical();
      }
    });

    csv::write_file(dir / "screen_report.csv", format_screen_report(rows));
    for (std::size_t i = 0; i < labs.size(); ++i) {
      if (!jsons[i].empty()) csv::write_file(dir / ("marker_" + labs[i] + ".json"), jsons[i]);
      if (!curves[i].empty()) csv::write_file(dir / ("curve_" + labs[i] + ".csv"), curves[i]);
    }
    csv::write_file(dir / "tps_demo.csv", tps_demo(config.seed));
    std::cout << format_screen_table(rows);

    int failed = 0;
    bool any_numerical = false;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].error) {
        ++failed;
        any_numerical = any_numerical || numerical[i];
      }
    }
    if (failed) {
      std::cerr << fmt::format("{} of {} markers failed; partial results written to {}\n", failed, rows.size(),
                               dir.string());
      return any_numerical ? kNumericalFailure : kDataError;
    }
    return kSuccess;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

int cmd_validate(const RunConfig& config) {
  try {
    config.validate();
    const auto dir = output_dir(config);
    const Study study = load_study(config);
    const auto train = records_for(study.cohort, Split::Train);
    const auto valid = records_for(study.cohort, Split::Validation);
    if (valid.empty()) throw Error(ErrorKind::InsufficientData, "validation cohort is empty");
    if (train.empty()) throw Error(ErrorKind::InsufficientData, "training cohort is empty");

    auto labeled = [&](const std::vector<CohortRecord>& recs, const std::string& lab) {
      LabeledSet set;
      set.subjects = study.data.observations(recs, lab);
      for (const auto& r : recs) set.strata.push_back(r.stratum);
      return set;
    };

    const auto labs = study.data.labs();
    std::vector<ValidationResult> rows(labs.size());
    std::vector<std::string> errors(labs.size());
    parallel_for(labs.size(), config.threads, [&](std::size_t i) {
      try {
        rows[i] = validate_marker(labs[i], labeled(train, labs[i]), labeled(valid, labs[i]), kDemographicCovariates);
      } catch (const Error& e) {
        errors[i] = e.what();
      }
    });
    for (std::size_t i = 0; i < labs.size(); ++i) {
      if (!errors[i].empty()) throw Error(ErrorKind::InvalidInput, fmt::format("{}: {}", labs[i], errors[i]));
    }
    const double c_base = rows.empty() ? 0.5 : rows.front().c_base;
    const long n1 = rows.empty() ? 0 : rows.front().n_cases;
    const long n0 = rows.empty() ? 0 : rows.front().n_controls;
    csv::write_file(dir / "validation_report.csv", format_validation_report(c_base, n1, n0, rows));

    std::cout << fmt::format("{:<16} {:>8} {:>10} {:>12}\n", "Lab", "c", "p(improve)", "significant");
    std::cout << fmt::format("{:<16} {:>8.3f} {:>10} {:>12}\n", "demographics", c_base, "", "");
    for (const auto& r : rows) {
      std::cout << fmt::format("{:<16} {:>8.3f} {:>10} {:>12}\n", r.marker, r.c_marker, pretty_p(r.p_improvement),
                               r.p_improvement < config.alpha ? "yes" : "no");
    }
    return kSuccess;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

int cmd_demo_tps(const RunConfig& config) {
  try {
    const auto dir = output_dir(config);
    csv::write_file(dir / "tps_demo.csv", tps_demo(config.seed));
    std::cout << "wrote " << (dir / "tps_demo.csv").string() << "\n";
    return kSuccess;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Screen irregular longitudinal lab series for pre-event signal"};
  app.require_subcommand(1);

  RunConfig rc;
  auto add_data_flags = [&](CLI::App* sub) {
    sub->add_option("--subjects", rc.subjects, "Subjects file")->required();
    sub->add_option("--measurements", rc.measurements, "Measurements file")->required();
    sub->add_option("--cohort", rc.cohort, "Cohort file from `sample`")->required();
    sub->add_option("--ranges", rc.ranges, "Acceptable-range overrides");
    sub->add_option("--out", rc.output_dir, "Output directory");
    sub->add_option("--alpha", rc.alpha, "Significance level");
    sub->add_option("--window", rc.window, "Lookback window in days");
    sub->add_flag("--active-only", rc.active_only, "Drop cases without a lab in the 14 days before the event");
    sub->add_option("--threads", rc.threads, "Worker threads (0 = all cores)");
  };

  GeneratorConfig gc = GeneratorConfig::defaults();
  std::filesystem::path gen_out;
  std::vector<std::string> marker_specs;
  std::optional<double> amplitude;
  auto* gen = app.add_subcommand("generate", "Write a synthetic cohort with known truth");
  gen->add_option("--seed", gc.seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_option("--first-year", gc.first_year, "First calendar year");
  gen->add_option("--cases-per-year", gc.cases_per_year, "Incident cases per year");
  gen->add_option("--controls-per-year", gc.controls_per_year, "Never-event subjects per year");
  gen->add_option("--marker", marker_specs, "LAB=null or LAB=useful:ONSET:drop|rise:AMPLITUDE[:cubic|ramp]");
  gen->add_option("--amplitude", amplitude, "Amplitude (noise SDs) for every useful marker");

  auto* sample = app.add_subcommand("sample", "Nested case-control sampling and train/validation split");
  sample->add_option("--subjects", rc.subjects, "Subjects file")->required();
  sample->add_option("--seed", rc.seed, "Sampling seed");
  sample->add_option("--cutoff-year", rc.cutoff_year, "First validation year");
  sample->add_option("--out", rc.output_dir, "Output directory");

  auto* screen = app.add_subcommand("screen", "Three-criterion screen and onset scan per lab");
  add_data_flags(screen);
  screen->add_option("--knots", rc.knots, "'default' or comma-separated knot days (negative)");
  screen->add_option("--bonferroni-m", rc.bonferroni_m, "Tests per marker for Bonferroni");
  screen->add_option("--scan-max-knots", rc.scan_max_knots, "Knot scan length");
  screen->add_option("--scan-step", rc.scan_step, "Knot scan spacing in days");
  screen->add_option("--seed", rc.seed, "Seed for the spline demo data");

  auto* validate = app.add_subcommand("validate", "Held-out discrimination per lab");
  add_data_flags(validate);

  auto* demo = app.add_subcommand("demo-tps", "Truncated power spline illustration data");
  demo->add_option("--out", rc.output_dir, "Output directory");
  demo->add_option("--seed", rc.seed, "Seed for the toy data");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kSuccess : kUsage;
  }

  if (*gen) {
    try {
      for (const auto& spec : marker_specs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) throw Error(ErrorKind::Config, fmt::format("config field 'markers': bad '{}'", spec));
        const std::string lab = spec.substr(0, eq);
        MarkerSpec parsed = parse_marker_spec(lab, spec.substr(eq + 1));
        auto it = std::find_if(gc.markers.begin(), gc.markers.end(), [&](const MarkerSpec& m) { return m.lab == lab; });
        if (it == gc.markers.end()) {
          gc.markers.push_back(parsed);
        } else {
          *it = parsed;
        }
      }
      if (amplitude) {
        for (auto& m : gc.markers) {
          if (m.kind == MarkerKind::Useful) m.amplitude = *amplitude;
        }
      }
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kUsage;
    }
    if (gen_out.empty()) {
      const char* env = std::getenv(kOutputDirEnv);
      gen_out = env && *env ? env : "labscreen_out";
    }
    return cmd_generate(gc, gen_out);
  }
  if (*sample) return cmd_sample(rc);
  if (*screen) return cmd_screen(rc);
  if (*validate) return cmd_validate(rc);
  if (*demo) return cmd_demo_tps(rc);
  return kUsage;
}

}  // namespace labscreen::cli
