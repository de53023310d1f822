#include "labscreen/marker_data.hpp"

#include <set>

#include <fmt/core.h>

#include "labscreen/errors.hpp"

namespace labscreen {

std::map<std::string, double> demographic_covariates(const SubjectRecord& subject, Date index_date) {
  std::map<std::string, double> cov;
  cov["age_at_start"] = subject.age_at_start;
  cov["male"] = subject.sex == "M" ? 1.0 : 0.0;
  cov["race_african_american"] = subject.race == "african_american" ? 1.0 : 0.0;
  cov["race_hispanic"] = subject.race == "hispanic" ? 1.0 : 0.0;
  cov["race_asian"] = subject.race == "asian" ? 1.0 : 0.0;
  cov["race_other"] = subject.race == "other" ? 1.0 : 0.0;
  cov["vintage_days"] = static_cast<double>(subject.vintage_days(index_date));
  return cov;
}

StudyData::StudyData(std::vector<SubjectRecord> subjects, const std::vector<MeasurementSeries>& series,
                     const RangeTable& ranges)
    : subjects_(std::move(subjects)) {
  for (std::size_t i = 0; i < subjects_.size(); ++i) {
    if (!subject_pos_.emplace(subjects_[i].id, i).second) {
      throw Error(ErrorKind::InvalidInput, fmt::format("duplicate subject id {}", subjects_[i].id));
    }
  }
  for (const auto& s : series) {
    if (!subject_pos_.count(s.subject_id)) {
      throw Error(ErrorKind::InconsistentInput,
                  fmt::format("measurements for unknown subject {}", s.subject_id));
    }
    auto filtered = filter_ranges(s, ranges);
    dropped_ += filtered.dropped;
    series_[s.subject_id].push_back(std::move(filtered.series));
  }
}

const SubjectRecord& StudyData::subject(const std::string& id) const {
  auto it = subject_pos_.find(id);
  if (it == subject_pos_.end()) {
    throw Error(ErrorKind::InconsistentInput, fmt::format("unknown subject {}", id));
  }
  return subjects_[it->second];
}

std::span<const MeasurementSeries> StudyData::series_for(const std::string& id) const {
  auto it = series_.find(id);
  if (it == series_.end()) return {};
  return it->second;
}

std::vector<std::string> StudyData::labs() const {
  std::set<std::string> labs;
  for (const auto& [id, list] : series_) {
    for (const auto& s : list) {
      if (!s.points.empty()) labs.insert(s.lab);
    }
  }
  return {labs.begin(), labs.end()};
}

std::vector<SubjectObservations> StudyData::observations(std::span<const CohortRecord> records,
                                                         const std::string& lab) const {
  std::vector<SubjectObservations> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    const SubjectRecord& subject = this->subject(rec.subject_id);
    SubjectObservations obs;
    obs.id = rec.record_key();
    obs.is_case = rec.role == Role::Case;
    obs.covariates = demographic_covariates(subject, rec.index_date);
    for (const auto& s : series_for(rec.subject_id)) {
      if (s.lab != lab) continue;
      const auto windows = abstract_window(subject, rec.index_date, std::span(&s, 1));
      for (const auto& p : windows.front().points) {
        obs.times.push_back(p.t);
        obs.values.push_back(p.value);
      }
    }
    out.push_back(std::move(obs));
  }
  return out;
}

}  // namespace labscreen
