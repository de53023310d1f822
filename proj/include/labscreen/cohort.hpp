#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "labscreen/dates.hpp"

namespace labscreen {

/// One row of the subjects file. Eligibility screening happens upstream.
struct SubjectRecord {
  std::string id;
  std::optional<Date> event_date;
  Date exposure_start;  ///< vintage origin
  double age_at_start = 0.0;
  std::string sex;   ///< "M" or "F"
  std::string race;  ///< see kRaceCategories
  Date obs_start;
  Date obs_end;

  long vintage_days(Date at) const { return days_between(exposure_start, at); }
};

inline const std::vector<std::string> kRaceCategories{"caucasian", "african_american", "hispanic",
                                                      "asian", "other"};

struct Measurement {
  Date date;
  double value = 0.0;
};

/// One subject's values for one lab, sorted by date.
struct MeasurementSeries {
  std::string subject_id;
  std::string lab;
  std::vector<Measurement> points;
};

struct WindowedPoint {
  double t = 0.0;  ///< days relative to the index date, in [-180, 0]
  double value = 0.0;
};

struct WindowedSeries {
  std::string subject_id;
  std::string lab;
  std::vector<WindowedPoint> points;
};

struct LabRange {
  std::string lab;
  double lo = 0.0;
  double hi = 0.0;
  double frequency_days = 30.0;
};

/// Acceptable value ranges per lab, inclusive at both ends.
class RangeTable {
 public:
  /// The eleven standard dialysis labs.
  static RangeTable defaults();

  const LabRange& at(const std::string& lab) const;  ///< throws UnknownLab
  bool contains(const std::string& lab) const;
  void set(LabRange range);
  const std::vector<LabRange>& entries() const { return entries_; }

 private:
  std::vector<LabRange> entries_;
};

struct FilterResult {
  MeasurementSeries series;
  std::size_t dropped = 0;
};

/// Removes values outside the lab's range; retained values are untouched.
FilterResult filter_ranges(const MeasurementSeries& series, const RangeTable& ranges);

enum class Role { Case, Control };
enum class Split { Train, Validation };

const char* to_string(Role role);
const char* to_string(Split split);

struct CohortRecord {
  std::string subject_id;
  Role role = Role::Case;
  Date index_date;
  std::string stratum;  ///< calendar month "YYYY-MM"
  Split split = Split::Train;

  /// Key unique within a cohort (a subject can recur across strata).
  std::string record_key() const { return subject_id + "@" + stratum; }
};

struct Cohort {
  std::vector<CohortRecord> records;
};

/// Calendar-month nested case-control sampling. For each month with k cases,
/// k controls are drawn uniformly without replacement from subjects under
/// observation for the whole month and event-free through its last day; each
/// control inherits the event date of a randomly paired case.
/// Throws InsufficientControls naming the month, InvalidInput if no events.
Cohort sample_controls(std::span<const SubjectRecord> subjects, std::uint64_t seed);

/// Measurements within [index - 180, index], as days relative to the index.
/// Series with no points in the window are kept empty.
std::vector<WindowedSeries> abstract_window(const SubjectRecord& subject, Date index_date,
                                            std::span<const MeasurementSeries> series);

struct SplitResult {
  Cohort train;
  Cohort validation;
  std::vector<std::string> warnings;
};

/// Strata before `cutoff_year` train, strata in `cutoff_year` validate.
/// Later strata are dropped with a warning; an empty side is a warning.
SplitResult split_cohort(const Cohort& cohort, int cutoff_year);

/// Case with any measurement within 14 days before (or on) its event date.
bool is_active_case(const SubjectRecord& subject, std::span<const MeasurementSeries> series);

// File formats.
std::vector<SubjectRecord> parse_subjects(std::string_view text, std::string_view source = "subjects");
std::string format_subjects(std::span<const SubjectRecord> subjects);

/// Groups rows into per-(subject, lab) series sorted by date, ordered by subject then lab.
std::vector<MeasurementSeries> parse_measurements(std::string_view text,
                                                  std::string_view source = "measurements");
std::string format_measurements(std::span<const MeasurementSeries> series);

RangeTable parse_ranges(std::string_view text, std::string_view source = "ranges");
std::string format_ranges(const RangeTable& ranges);

Cohort parse_cohort(std::string_view text, std::string_view source = "cohort");
std::string format_cohort(const Cohort& cohort);

std::string read_text(const std::filesystem::path& path);

}  // namespace labscreen
