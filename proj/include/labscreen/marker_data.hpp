#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "labscreen/cohort.hpp"
#include "labscreen/spline_basis.hpp"

namespace labscreen {

/// Adjustment covariates: age at exposure start, sex, race (caucasian is the
/// reference level) and vintage at the index date, held constant over the window.
inline const std::vector<std::string> kDemographicCovariates{
    "age_at_start", "male", "race_african_american", "race_hispanic", "race_asian",
    "race_other",   "vintage_days"};

std::map<std::string, double> demographic_covariates(const SubjectRecord& subject, Date index_date);

/// Subjects plus their range-filtered series, indexed by subject id.
class StudyData {
 public:
  StudyData(std::vector<SubjectRecord> subjects, const std::vector<MeasurementSeries>& series,
            const RangeTable& ranges);

  const SubjectRecord& subject(const std::string& id) const;
  std::span<const MeasurementSeries> series_for(const std::string& id) const;
  const std::vector<SubjectRecord>& subjects() const { return subjects_; }
  /// Labs with at least one retained value, sorted.
  std::vector<std::string> labs() const;
  std::size_t dropped() const { return dropped_; }

  /// One entry per cohort record for `lab`; id is the record key, times are
  /// relative to the record's index date. Records without values get empty series.
  std::vector<SubjectObservations> observations(std::span<const CohortRecord> records,
                                                const std::string& lab) const;

 private:
  std::vector<SubjectRecord> subjects_;
  std::map<std::string, std::size_t> subject_pos_;
  std::map<std::string, std::vector<MeasurementSeries>> series_;
  std::size_t dropped_ = 0;
};

}  // namespace labscreen
