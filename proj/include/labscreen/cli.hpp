#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "labscreen/prediction.hpp"
#include "labscreen/screening.hpp"
#include "labscreen/synthetic.hpp"

namespace labscreen::cli {

enum ExitCode : int { kSuccess = 0, kUsage = 1, kDataError = 2, kNumericalFailure = 3 };

/// Environment variable that replaces the default output directory.
inline constexpr const char* kOutputDirEnv = "LABSCREEN_OUT";

struct RunConfig {
  std::filesystem::path subjects;
  std::filesystem::path measurements;
  std::filesystem::path cohort;
  std::filesystem::path ranges;  ///< empty = built-in table
  std::filesystem::path output_dir;
  std::string knots = "default";  ///< "default" or comma-separated days
  double alpha = 0.05;
  int bonferroni_m = 3;
  int scan_max_knots = 12;
  double scan_step = 14.0;
  double window = 180.0;
  int cutoff_year = 2008;
  std::uint64_t seed = 1;
  bool active_only = false;
  int threads = 0;  ///< 0 = hardware concurrency

  void validate() const;
};

/// Parses the --knots flag value.
KnotVector parse_knots_flag(const std::string& text);

struct ScreenRow {
  std::string marker;
  MarkerReport report;
  std::optional<std::string> error;
};

std::string format_screen_report(const std::vector<ScreenRow>& rows);
std::vector<ScreenRow> parse_screen_report(std::string_view text);
std::string format_screen_table(const std::vector<ScreenRow>& rows);

/// First row is the demographics-only baseline (marker "demographics_only").
std::string format_validation_report(double c_base, long n_cases, long n_controls,
                                     const std::vector<ValidationResult>& rows);
std::vector<ValidationResult> parse_validation_report(std::string_view text);

std::string marker_json(const MarkerReport& report, long n_records, long n_measurements);
std::string format_curves(const PredictedCurve& cases, const PredictedCurve& controls);

/// Toy illustration of linearity left of the first knot: long-format rows
/// curve,first_knot,t,value.
std::string tps_demo(std::uint64_t seed);

int cmd_generate(const GeneratorConfig& config, const std::filesystem::path& out);
int cmd_sample(const RunConfig& config);
int cmd_screen(const RunConfig& config);
int cmd_validate(const RunConfig& config);
int cmd_demo_tps(const RunConfig& config);

/// Full command-line entry point.
int run(int argc, char** argv);

}  // namespace labscreen::cli
