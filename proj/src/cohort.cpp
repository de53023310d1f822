#include "labscreen/cohort.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/core.h>

#include "labscreen/csv.hpp"
#include "labscreen/errors.hpp"
#include "labscreen/rng.hpp"

namespace labscreen {

namespace {

const std::vector<std::string> kSubjectsHeader{"subject_id", "event_date", "exposure_start_date",
                                               "age_at_start", "sex", "race", "obs_start", "obs_end"};
const std::vector<std::string> kMeasurementsHeader{"subject_id", "lab_name", "date", "value"};
const std::vector<std::string> kRangesHeader{"lab_name", "lo", "hi", "frequency_days"};
const std::vector<std::string> kCohortHeader{"subject_id", "role", "index_date", "stratum", "split"};

constexpr long kActiveDays = 14;

std::string fmt_value(double v) { return fmt::format("{:.6g}", v); }

}  // namespace

RangeTable RangeTable::defaults() {
  RangeTable t;
  t.entries_ = {
      {"albumin", 0.1, 6.0, 30.0},     {"calcium", 5.0, 20.0, 7.0},
      {"co2", 2.0, 50.0, 30.0},        {"creatinine", 0.1, 30.0, 30.0},
      {"ferritin", 0.0, 10000.0, 90.0}, {"hemoglobin", 2.0, 20.0, 7.0},
      {"iron_saturation", 0.0, 100.0, 30.0}, {"phosphorus", 0.5, 20.0, 7.0},
      {"platelets", 0.0, 5000.0, 30.0}, {"potassium", 1.0, 9.0, 30.0},
      {"wbc", 0.0, 100.0, 30.0},
  };
  return t;
}

const LabRange& RangeTable::at(const std::string& lab) const {
  for (const auto& r : entries_) {
    if (r.lab == lab) return r;
  }
  throw Error(ErrorKind::UnknownLab, fmt::format("unknown lab '{}'", lab));
}

bool RangeTable::contains(const std::string& lab) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const LabRange& r) { return r.lab == lab; });
}

void RangeTable::set(LabRange range) {
  if (!(range.lo <= range.hi)) {
    throw Error(ErrorKind::InvalidInput, fmt::format("range for '{}' has lo > hi", range.lab));
  }
  for (auto& r : entries_) {
    if (r.lab == range.lab) {
      r = std::move(range);
      return;
    }
  }
  entries_.push_back(std::move(range));
}

FilterResult filter_ranges(const MeasurementSeries& series, const RangeTable& ranges) {
  FilterResult out;
  out.series.subject_id = series.subject_id;
  out.series.lab = series.lab;
  const LabRange& range = ranges.at(series.lab);
  for (const auto& m : series.points) {
    if (m.value >= range.lo && m.value <= range.hi) {
      out.series.points.push_back(m);
    } else {
      ++out.dropped;
    }
  }
  return out;
}

const char* to_string(Role role) { return role == Role::Case ? "case" : "control"; }
const char* to_string(Split split) { return split == Split::Train ? "train" : "validation"; }

Cohort sample_controls(std::span<const SubjectRecord> subjects, std::uint64_t seed) {
  std::vector<const SubjectRecord*> by_id;
  by_id.reserve(subjects.size());
  for (const auto& s : subjects) by_id.push_back(&s);
  std::sort(by_id.begin(), by_id.end(),
            [](const SubjectRecord* a, const SubjectRecord* b) { return a->id < b->id; });

  std::map<std::string, std::vector<const SubjectRecord*>> cases_by_month;
  for (const auto* s : by_id) {
    if (s->event_date) cases_by_month[month_key(*s->event_date)].push_back(s);
  }
  if (cases_by_month.empty()) throw Error(ErrorKind::InvalidInput, "no subject has an event");

  Rng rng(seed);
  Cohort cohort;
  for (auto& [month, cases] : cases_by_month) {
    std::stable_sort(cases.begin(), cases.end(), [](const SubjectRecord* a, const SubjectRecord* b) {
      return *a->event_date < *b->event_date;
    });
    const Date first = first_of_month(*cases.front()->event_date);
    const Date last = last_of_month(first);

    std::vector<const SubjectRecord*> risk_set;
    for (const auto* s : by_id) {
      const bool observed = s->obs_start <= first && s->obs_end >= last;
      const bool event_free = !s->event_date || *s->event_date > last;
      if (observed && event_free) risk_set.push_back(s);
    }
    if (risk_set.size() < cases.size()) {
      throw Error(ErrorKind::InsufficientControls,
                  fmt::format("month {}: {} cases but only {} eligible controls", month, cases.size(),
                              risk_set.size()));
    }
    const auto drawn = rng.sample_without_replacement(risk_set.size(), cases.size());
    std::vector<std::size_t> pairing(cases.size());
    for (std::size_t i = 0; i < pairing.size(); ++i) pairing[i] = i;
    rng.shuffle(pairing);

    std::vector<CohortRecord> controls(cases.size());
    for (std::size_t j = 0; j < drawn.size(); ++j) {
      const auto* case_subject = cases[pairing[j]];
      controls[pairing[j]] = {risk_set[drawn[j]]->id, Role::Control, *case_subject->event_date, month,
                              Split::Train};
    }
    for (std::size_t i = 0; i < cases.size(); ++i) {
      cohort.records.push_back({cases[i]->id, Role::Case, *cases[i]->event_date, month, Split::Train});
      cohort.records.push_back(controls[i]);
    }
  }
  return cohort;
}

std::vector<WindowedSeries> abstract_window(const SubjectRecord& subject, Date index_date,
                                            std::span<const MeasurementSeries> series) {
  if (index_date < subject.obs_start || index_date > subject.obs_end) {
    throw Error(ErrorKind::InvalidInput,
                fmt::format("index date {} outside observation of subject {}", format_date(index_date),
                            subject.id));
  }
  std::vector<WindowedSeries> out;
  for (const auto& s : series) {
    if (s.subject_id != subject.id) continue;
    WindowedSeries w{s.subject_id, s.lab, {}};
    for (const auto& m : s.points) {
      const long t = days_between(index_date, m.date);
      if (t >= -180 && t <= 0) w.points.push_back({static_cast<double>(t), m.value});
    }
    std::stable_sort(w.points.begin(), w.points.end(),
                     [](const WindowedPoint& a, const WindowedPoint& b) { return a.t < b.t; });
    out.push_back(std::move(w));
  }
  return out;
}

SplitResult split_cohort(const Cohort& cohort, int cutoff_year) {
  SplitResult out;
  std::size_t dropped = 0;
  for (auto rec : cohort.records) {
    const int year = year_of(parse_date(rec.stratum + "-01"));
    if (year < cutoff_year) {
      rec.split = Split::Train;
      out.train.records.push_back(std::move(rec));
    } else if (year == cutoff_year) {
      rec.split = Split::Validation;
      out.validation.records.push_back(std::move(rec));
    } else {
      ++dropped;
    }
  }
  if (dropped) out.warnings.push_back(fmt::format("{} records after {} dropped", dropped, cutoff_year));
  if (out.train.records.empty()) out.warnings.push_back("training split is empty");
  if (out.validation.records.empty()) out.warnings.push_back("validation split is empty");
  return out;
}

bool is_active_case(const SubjectRecord& subject, std::span<const MeasurementSeries> series) {
  if (!subject.event_date) return false;
  for (const auto& s : series) {
    if (s.subject_id != subject.id) continue;
    for (const auto& m : s.points) {
      const long d = days_between(m.date, *subject.event_date);
      if (d >= 0 && d <= kActiveDays) return true;
    }
  }
  return false;
}

std::vector<SubjectRecord> parse_subjects(std::string_view text, std::string_view source) {
  const auto table = csv::parse(text, source);
  csv::require_header(table, kSubjectsHeader, source);
  std::vector<SubjectRecord> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    SubjectRecord s;
    s.id = row[0];
    if (s.id.empty()) throw Error(ErrorKind::Parse, fmt::format("{}: empty subject_id", source));
    if (!row[1].empty()) s.event_date = parse_date(row[1]);
    s.exposure_start = parse_date(row[2]);
    s.age_at_start = csv::to_double(row[3], fmt::format("{}: age_at_start", source));
    s.sex = row[4];
    s.race = row[5];
    s.obs_start = parse_date(row[6]);
    s.obs_end = parse_date(row[7]);
    if (s.sex != "M" && s.sex != "F") {
      throw Error(ErrorKind::Parse, fmt::format("{}: subject {} sex must be M or F", source, s.id));
    }
    if (std::find(kRaceCategories.begin(), kRaceCategories.end(), s.race) == kRaceCategories.end()) {
      throw Error(ErrorKind::Parse, fmt::format("{}: subject {} has unknown race '{}'", source, s.id, s.race));
    }
    if (s.obs_end < s.obs_start) {
      throw Error(ErrorKind::Parse, fmt::format("{}: subject {} observation ends before it starts", source, s.id));
    }
    if (s.event_date && (*s.event_date < s.obs_start || *s.event_date > s.obs_end)) {
      throw Error(ErrorKind::Parse, fmt::format("{}: subject {} event outside observation", source, s.id));
    }
    if (s.exposure_start > s.obs_start) {
      throw Error(ErrorKind::Parse,
                  fmt::format("{}: subject {} exposure starts after observation start", source, s.id));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string format_subjects(std::span<const SubjectRecord> subjects) {
  std::string out = csv::join(kSubjectsHeader) + "\n";
  for (const auto& s : subjects) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", s.id, s.event_date ? format_date(*s.event_date) : "",
                       format_date(s.exposure_start), fmt_value(s.age_at_start), s.sex, s.race,
                       format_date(s.obs_start), format_date(s.obs_end));
  }
  return out;
}

std::vector<MeasurementSeries> parse_measurements(std::string_view text, std::string_view source) {
  std::map<std::pair<std::string, std::string>, std::vector<Measurement>> grouped;
  bool have_header = false;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    auto fields = csv::split_line(line);
    if (!have_header) {
      if (fields != kMeasurementsHeader) {
        throw Error(ErrorKind::Parse, fmt::format("{}: header must be '{}'", source, csv::join(kMeasurementsHeader)));
      }
      have_header = true;
      continue;
    }
    if (fields.size() != 4) {
      throw Error(ErrorKind::Parse, fmt::format("{}:{}: expected 4 fields", source, line_no));
    }
    const Date date = parse_date(fields[2]);
    const double value = csv::to_double(fields[3], fmt::format("{}:{}", source, line_no));
    grouped[{fields[0], fields[1]}].push_back({date, value});
  }
  if (!have_header) throw Error(ErrorKind::Parse, fmt::format("{}: missing header", source));
  std::vector<MeasurementSeries> out;
  out.reserve(grouped.size());
  for (auto& [key, points] : grouped) {
    std::stable_sort(points.begin(), points.end(),
                     [](const Measurement& a, const Measurement& b) { return a.date < b.date; });
    out.push_back({key.first, key.second, std::move(points)});
  }
  return out;
}

std::string format_measurements(std::span<const MeasurementSeries> series) {
  std::string out = csv::join(kMeasurementsHeader) + "\n";
  for (const auto& s : series) {
    for (const auto& m : s.points) {
      out += s.subject_id;
      out += ',';
      out += s.lab;
      out += ',';
      out += format_date(m.date);
      out += ',';
      out += fmt_value(m.value);
      out += '\n';
    }
  }
  return out;
}

RangeTable parse_ranges(std::string_view text, std::string_view source) {
  const auto table = csv::parse(text, source);
  csv::require_header(table, kRangesHeader, source);
  RangeTable ranges = RangeTable::defaults();
  for (const auto& row : table.rows) {
    const std::string ctx = fmt::format("{}: {}", source, row[0]);
    LabRange r{row[0], csv::to_double(row[1], ctx), csv::to_double(row[2], ctx), csv::to_double(row[3], ctx)};
    if (!(r.frequency_days > 0.0)) {
      throw Error(ErrorKind::Parse, fmt::format("{}: frequency_days must be positive", ctx));
    }
    ranges.set(std::move(r));
  }
  return ranges;
}

std::string format_ranges(const RangeTable& ranges) {
  std::string out = csv::join(kRangesHeader) + "\n";
  for (const auto& r : ranges.entries()) {
    out += fmt::format("{},{},{},{}\n", r.lab, fmt_value(r.lo), fmt_value(r.hi), fmt_value(r.frequency_days));
  }
  return out;
}

Cohort parse_cohort(std::string_view text, std::string_view source) {
  const auto table = csv::parse(text, source);
  csv::require_header(table, kCohortHeader, source);
  Cohort cohort;
  for (const auto& row : table.rows) {
    CohortRecord r;
    r.subject_id = row[0];
    if (row[1] == "case") {
      r.role = Role::Case;
    } else if (row[1] == "control") {
      r.role = Role::Control;
    } else {
      throw Error(ErrorKind::Parse, fmt::format("{}: bad role '{}'", source, row[1]));
    }
    r.index_date = parse_date(row[2]);
    r.stratum = row[3];
    if (month_key(r.index_date) != r.stratum) {
      throw Error(ErrorKind::Parse,
                  fmt::format("{}: stratum {} does not match index date {}", source, r.stratum, row[2]));
    }
    if (row[4] == "train") {
      r.split = Split::Train;
    } else if (row[4] == "validation") {
      r.split = Split::Validation;
    } else {
      throw Error(ErrorKind::Parse, fmt::format("{}: bad split '{}'", source, row[4]));
    }
    cohort.records.push_back(std::move(r));
  }
  return cohort;
}

std::string format_cohort(const Cohort& cohort) {
  std::string out = csv::join(kCohortHeader) + "\n";
  for (const auto& r : cohort.records) {
    out += fmt::format("{},{},{},{},{}\n", r.subject_id, to_string(r.role), format_date(r.index_date),
                       r.stratum, to_string(r.split));
  }
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, fmt::format("cannot open {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace labscreen
