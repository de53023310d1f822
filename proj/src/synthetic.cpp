#include "labscreen/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "labscreen/csv.hpp"
#include "labscreen/errors.hpp"
#include "labscreen/rng.hpp"

namespace labscreen {

namespace {

constexpr std::uint64_t kSubjectStream = 1;
constexpr std::uint64_t kMarkerStream = 2;
constexpr double kDaysPerYear = 365.25;

Date make_date(int y, unsigned m, unsigned d) {
  return std::chrono::sys_days{std::chrono::year{y} / std::chrono::month{m} / std::chrono::day{d}};
}

Error config_error(const std::string& field, const std::string& msg) {
  return Error(ErrorKind::Config, fmt::format("config field '{}': {}", field, msg));
}

}  // namespace

LabProfile lab_profile(const std::string& lab) {
  static const std::map<std::string, LabProfile> profiles{
      {"albumin", {3.8, 0.25, 0.30, -0.05}},
      {"calcium", {9.0, 0.50, 0.40, 0.0}},
      {"co2", {22.0, 2.0, 1.5, 0.2}},
      {"creatinine", {7.5, 0.8, 2.0, 0.1}},
      {"ferritin", {700.0, 120.0, 200.0, 20.0}},
      {"hemoglobin", {11.5, 0.6, 0.8, 0.0}},
      {"iron_saturation", {30.0, 5.0, 6.0, 0.0}},
      {"phosphorus", {5.5, 0.7, 0.8, 0.0}},
      {"platelets", {220.0, 25.0, 50.0, 0.0}},
      {"potassium", {4.8, 0.4, 0.35, 0.0}},
      {"wbc", {7.0, 0.8, 1.5, 0.1}},
  };
  auto it = profiles.find(lab);
  if (it == profiles.end()) throw config_error("markers", fmt::format("no generator profile for lab '{}'", lab));
  return it->second;
}

GeneratorConfig GeneratorConfig::defaults() {
  GeneratorConfig c;
  auto useful = [](std::string lab, int onset, Direction dir, double amp) {
    return MarkerSpec{std::move(lab), MarkerKind::Useful, onset, dir, amp, DepartureShape::Cubic};
  };
  auto null = [](std::string lab) { return MarkerSpec{std::move(lab), MarkerKind::Null, 0, Direction::Drop, 0.0}; };
  c.markers = {
      useful("albumin", 28, Direction::Drop, 3.0),
      null("calcium"),
      null("co2"),
      null("creatinine"),
      null("ferritin"),
      useful("hemoglobin", 28, Direction::Drop, 2.5),
      useful("iron_saturation", 84, Direction::Drop, 2.0),
      null("phosphorus"),
      useful("platelets", 14, Direction::Rise, 10.0),
      null("potassium"),
      useful("wbc", 56, Direction::Rise, 6.0),
  };
  return c;
}

void GeneratorConfig::validate() const {
  if (cases_per_year.empty()) throw config_error("cases_per_year", "must list at least one year");
  for (int n : cases_per_year) {
    if (n < 0) throw config_error("cases_per_year", "counts must be non-negative");
  }
  if (controls_per_year < 0) throw config_error("controls_per_year", "must be non-negative");
  if (first_year < 1900 || last_year() > 2200) throw config_error("first_year", "out of range");
  if (!(cadence_jitter >= 0.0 && cadence_jitter < 1.0)) {
    throw config_error("cadence_jitter", "must be in [0, 1)");
  }
  std::set<std::string> seen;
  for (const auto& m : markers) {
    if (!seen.insert(m.lab).second) throw config_error("markers", fmt::format("duplicate lab '{}'", m.lab));
    if (!ranges.contains(m.lab)) throw config_error("markers", fmt::format("no range for lab '{}'", m.lab));
    if (!(ranges.at(m.lab).frequency_days > 0.0)) throw config_error("cadence", "must be positive");
    lab_profile(m.lab);
    if (!(m.amplitude >= 0.0) || !std::isfinite(m.amplitude)) {
      throw config_error("amplitude", fmt::format("{} for lab '{}' must be >= 0", m.amplitude, m.lab));
    }
    if (m.kind == MarkerKind::Useful) {
      if (m.onset_days <= 0 || m.onset_days % 14 != 0 || m.onset_days > 168) {
        throw config_error("onset_days",
                           fmt::format("{} for lab '{}' must be a multiple of 14 in [14, 168]", m.onset_days, m.lab));
      }
    }
  }
}

double departure(const MarkerSpec& spec, double noise_sd, double t) {
  if (spec.kind == MarkerKind::Null || spec.amplitude == 0.0) return 0.0;
  const double onset = spec.onset_days;
  if (t <= -onset || t > 0.0) return 0.0;
  const double sign = spec.direction == Direction::Drop ? -1.0 : 1.0;
  double fraction = 0.0;
  if (spec.shape == DepartureShape::Cubic) {
    const double u = (t + onset) / onset;
    fraction = u * u * u;
  } else {
    const double centre = -onset / 2.0;
    const double width = onset / 8.0;
    auto logistic = [&](double x) { return 1.0 / (1.0 + std::exp(-(x - centre) / width)); };
    fraction = (logistic(t) - logistic(-onset)) / (logistic(0.0) - logistic(-onset));
  }
  return sign * spec.amplitude * noise_sd * fraction;
}

SyntheticData generate(const GeneratorConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, kSubjectStream));

  const Date obs_origin = make_date(config.first_year - 1, 7, 1);
  const Date span_end = make_date(config.last_year(), 12, 31);
  const std::vector<double> race_weights{0.70, 0.26, 0.025, 0.01, 0.005};

  SyntheticData data;
  auto add_subject = [&](std::optional<Date> event) {
    SubjectRecord s;
    s.id = fmt::format("S{:06d}", data.subjects.size() + 1);
    s.event_date = event;
    s.obs_start = obs_origin - std::chrono::days{static_cast<int>(rng.uniform_index(61))};
    s.obs_end = event ? *event : span_end;
    s.exposure_start = s.obs_start - std::chrono::days{static_cast<int>(rng.uniform_index(2500))};
    s.age_at_start = std::max(67.0, std::round(rng.normal(75.0, 5.0) * 10.0) / 10.0);
    s.sex = rng.bernoulli(0.5) ? "M" : "F";
    s.race = kRaceCategories[rng.categorical(race_weights)];
    data.subjects.push_back(std::move(s));
  };

  for (std::size_t y = 0; y < config.cases_per_year.size(); ++y) {
    const int year = config.first_year + static_cast<int>(y);
    const Date jan1 = make_date(year, 1, 1);
    const long year_days = days_between(jan1, make_date(year, 12, 31)) + 1;
    for (int k = 0; k < config.cases_per_year[y]; ++k) {
      const auto offset = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(year_days)));
      add_subject(jan1 + std::chrono::days{offset});
    }
    for (int k = 0; k < config.controls_per_year; ++k) add_subject(std::nullopt);
  }

  for (std::size_t m = 0; m < config.markers.size(); ++m) {
    const MarkerSpec& spec = config.markers[m];
    const LabProfile profile = lab_profile(spec.lab);
    const LabRange& range = config.ranges.at(spec.lab);
    const double cadence = range.frequency_days;
    for (std::size_t i = 0; i < data.subjects.size(); ++i) {
      const SubjectRecord& s = data.subjects[i];
      Rng mrng(derive_seed(derive_seed(config.seed, kMarkerStream + i), m));
      const double subject_effect = mrng.normal(0.0, profile.subject_sd);
      MeasurementSeries series{s.id, spec.lab, {}};
      double day = mrng.uniform(0.0, cadence);
      const long span = days_between(s.obs_start, s.obs_end);
      while (true) {
        const auto offset = static_cast<long>(std::floor(day));
        if (offset > span) break;
        const Date date = s.obs_start + std::chrono::days{offset};
        const double years = days_between(obs_origin, date) / kDaysPerYear;
        double value = profile.mean + subject_effect + profile.slope_per_year * years +
                       mrng.normal(0.0, profile.noise_sd);
        if (s.event_date) {
          value += departure(spec, profile.noise_sd, static_cast<double>(days_between(*s.event_date, date)));
        }
        value = std::clamp(value, range.lo, range.hi);
        series.points.push_back({date, value});
        day += std::max(1.0, cadence * mrng.uniform(1.0 - config.cadence_jitter, 1.0 + config.cadence_jitter));
      }
      data.series.push_back(std::move(series));
    }
  }
  std::stable_sort(data.series.begin(), data.series.end(), [](const auto& a, const auto& b) {
    return std::tie(a.subject_id, a.lab) < std::tie(b.subject_id, b.lab);
  });
  return data;
}

const char* to_string(MarkerKind kind) { return kind == MarkerKind::Null ? "null" : "useful"; }
const char* to_string(Direction direction) { return direction == Direction::Drop ? "drop" : "rise"; }
const char* to_string(DepartureShape shape) { return shape == DepartureShape::Cubic ? "cubic" : "ramp"; }

std::string truth_json(const GeneratorConfig& config) {
  nlohmann::ordered_json j;
  j["seed"] = config.seed;
  j["rng"] = Rng::kAlgorithm;
  j["first_year"] = config.first_year;
  j["cases_per_year"] = config.cases_per_year;
  j["controls_per_year"] = config.controls_per_year;
  nlohmann::ordered_json markers = nlohmann::ordered_json::object();
  for (const auto& m : config.markers) {
    nlohmann::ordered_json e;
    e["kind"] = to_string(m.kind);
    if (m.kind == MarkerKind::Useful) {
      e["onset_days"] = m.onset_days;
      e["direction"] = to_string(m.direction);
      e["amplitude_sd"] = m.amplitude;
      e["shape"] = to_string(m.shape);
    }
    markers[m.lab] = e;
  }
  j["markers"] = markers;
  return j.dump(2) + "\n";
}

void write_dataset(const SyntheticData& data, const GeneratorConfig& config,
                   const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  csv::write_file(dir / "subjects.csv", format_subjects(data.subjects));
  csv::write_file(dir / "measurements.csv", format_measurements(data.series));
  csv::write_file(dir / "ranges.csv", format_ranges(config.ranges));
  csv::write_file(dir / "truth.json", truth_json(config));
}

MarkerSpec parse_marker_spec(const std::string& lab, const std::string& text) {
  MarkerSpec spec;
  spec.lab = lab;
  if (text == "null") return spec;
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(':', start);
    fields.push_back(text.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  if (fields.size() < 4 || fields.size() > 5 || fields[0] != "useful") {
    throw config_error("markers", fmt::format("bad spec '{}' for lab '{}'", text, lab));
  }
  spec.kind = MarkerKind::Useful;
  try {
    spec.onset_days = static_cast<int>(csv::to_long(fields[1], "onset_days"));
  } catch (const Error&) {
    throw config_error("onset_days", fmt::format("not an integer: '{}'", fields[1]));
  }
  if (fields[2] == "drop") {
    spec.direction = Direction::Drop;
  } else if (fields[2] == "rise") {
    spec.direction = Direction::Rise;
  } else {
    throw config_error("direction", fmt::format("'{}' is not drop or rise", fields[2]));
  }
  try {
    spec.amplitude = csv::to_double(fields[3], "amplitude");
  } catch (const Error&) {
    throw config_error("amplitude", fmt::format("not a number: '{}'", fields[3]));
  }
  if (fields.size() == 5) {
    if (fields[4] == "cubic") {
      spec.shape = DepartureShape::Cubic;
    } else if (fields[4] == "ramp") {
      spec.shape = DepartureShape::LogisticRamp;
    } else {
      throw config_error("shape", fmt::format("'{}' is not cubic or ramp", fields[4]));
    }
  }
  return spec;
}

}  // namespace labscreen
