#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "labscreen/cohort.hpp"

namespace labscreen {

enum class MarkerKind { Null, Useful };
enum class Direction { Drop, Rise };
enum class DepartureShape { Cubic, LogisticRamp };

/// Generating truth for one lab. Null markers follow the same linear process
/// in cases and controls. Useful markers add, in cases only, a departure that
/// starts `onset_days` before the event and reaches `amplitude` noise SDs at
/// the event date.
struct MarkerSpec {
  std::string lab;
  MarkerKind kind = MarkerKind::Null;
  int onset_days = 0;
  Direction direction = Direction::Drop;
  double amplitude = 0.0;
  DepartureShape shape = DepartureShape::Cubic;
};

/// Latent process parameters for one lab.
struct LabProfile {
  double mean = 0.0;
  double noise_sd = 1.0;
  double subject_sd = 1.0;
  double slope_per_year = 0.0;
};

/// Built-in profiles for the eleven standard labs; throws Config for others.
LabProfile lab_profile(const std::string& lab);

struct GeneratorConfig {
  int first_year = 2004;
  std::vector<int> cases_per_year{92, 92, 92, 92, 109};
  int controls_per_year = 400;  ///< never-event subjects added to the population per year
  std::vector<MarkerSpec> markers;
  double cadence_jitter = 0.3;  ///< gaps drawn from cadence * U(1 - j, 1 + j)
  std::uint64_t seed = 1;
  RangeTable ranges = RangeTable::defaults();

  /// Five useful markers (albumin, hemoglobin, iron saturation, platelets,
  /// WBC) and six null ones over 2004-2008.
  static GeneratorConfig defaults();

  int last_year() const { return first_year + static_cast<int>(cases_per_year.size()) - 1; }
  /// Throws Config naming the offending field.
  void validate() const;
};

/// Departure added to a case's latent mean `t` days relative to its event (t <= 0).
double departure(const MarkerSpec& spec, double noise_sd, double t);

struct SyntheticData {
  std::vector<SubjectRecord> subjects;
  std::vector<MeasurementSeries> series;
};

SyntheticData generate(const GeneratorConfig& config);

/// JSON manifest: seed, generator algorithm, per-marker spec.
std::string truth_json(const GeneratorConfig& config);

/// Writes subjects.csv, measurements.csv, ranges.csv and truth.json into `dir`
/// (created when missing).
void write_dataset(const SyntheticData& data, const GeneratorConfig& config,
                   const std::filesystem::path& dir);

const char* to_string(MarkerKind kind);
const char* to_string(Direction direction);
const char* to_string(DepartureShape shape);

/// Parses "null" or "useful:ONSET:drop|rise:AMPLITUDE[:cubic|ramp]". Throws Config.
MarkerSpec parse_marker_spec(const std::string& lab, const std::string& text);

}  // namespace labscreen
