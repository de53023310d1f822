#include <doctest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "labscreen/errors.hpp"
#include "labscreen/synthetic.hpp"

using namespace labscreen;

namespace {

GeneratorConfig small(std::uint64_t seed) {
  GeneratorConfig c = GeneratorConfig::defaults();
  c.cases_per_year = {10, 10};
  c.controls_per_year = 15;
  c.seed = seed;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config_field(const GeneratorConfig& c) {
  try {
    c.validate();
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("departure shape") {
  const MarkerSpec spec{"albumin", MarkerKind::Useful, 28, Direction::Drop, 3.0};
  CHECK(departure(spec, 0.4, -29.0) == 0.0);
  CHECK(departure(spec, 0.4, -28.0) == 0.0);
  CHECK(departure(spec, 0.4, 0.0) == doctest::Approx(-1.2));
  CHECK(departure(spec, 0.4, -14.0) == doctest::Approx(-1.2 * 0.125));
  CHECK(departure(spec, 0.4, 1.0) == 0.0);
  MarkerSpec rise = spec;
  rise.direction = Direction::Rise;
  rise.shape = DepartureShape::LogisticRamp;
  CHECK(departure(rise, 0.4, 0.0) == doctest::Approx(1.2));
  CHECK(departure(rise, 0.4, -28.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(departure(rise, 0.4, -10.0) > departure(rise, 0.4, -20.0));
  const MarkerSpec none{"albumin", MarkerKind::Null, 0, Direction::Drop, 0.0};
  CHECK(departure(none, 0.4, -1.0) == 0.0);
}

TEST_CASE("generation is deterministic") {
  const auto dir = std::filesystem::temp_directory_path() / "labscreen_synth_test";
  std::filesystem::remove_all(dir);
  const auto c = small(5);
  write_dataset(generate(c), c, dir / "a");
  write_dataset(generate(c), c, dir / "b");
  for (const char* f : {"subjects.csv", "measurements.csv", "ranges.csv", "truth.json"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    CHECK_FALSE(slurp(dir / "a" / f).empty());
  }
  write_dataset(generate(small(6)), small(6), dir / "c");
  CHECK(slurp(dir / "a" / "measurements.csv") != slurp(dir / "c" / "measurements.csv"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("generated values respect the range table") {
  const auto c = small(11);
  const auto data = generate(c);
  CHECK(data.subjects.size() == 50);
  CHECK(data.series.size() == 50 * c.markers.size());
  for (const auto& s : data.series) {
    CHECK(filter_ranges(s, c.ranges).dropped == 0);
    for (std::size_t i = 1; i < s.points.size(); ++i) CHECK(s.points[i - 1].date < s.points[i].date);
  }
}

TEST_CASE("measurement counts follow the cadence") {
  const auto c = small(13);
  const auto data = generate(c);
  std::map<std::string, const SubjectRecord*> by_id;
  for (const auto& s : data.subjects) by_id[s.id] = &s;
  for (const auto& m : c.markers) {
    double expected = 0.0, got = 0.0;
    for (const auto& s : data.series) {
      if (s.lab != m.lab) continue;
      const auto* subj = by_id.at(s.subject_id);
      expected += days_between(subj->obs_start, subj->obs_end) / c.ranges.at(m.lab).frequency_days;
      got += static_cast<double>(s.points.size());
    }
    CHECK(got == doctest::Approx(expected).epsilon(0.05));
  }
}

TEST_CASE("zero amplitude matches a null marker") {
  auto useful = small(17);
  auto null = useful;
  for (auto& m : useful.markers) {
    if (m.kind == MarkerKind::Useful) m.amplitude = 0.0;
  }
  for (auto& m : null.markers) m = MarkerSpec{m.lab, MarkerKind::Null};
  const auto a = generate(useful), b = generate(null);
  REQUIRE(a.series.size() == b.series.size());
  for (std::size_t i = 0; i < a.series.size(); ++i) {
    REQUIRE(a.series[i].points.size() == b.series[i].points.size());
    for (std::size_t j = 0; j < a.series[i].points.size(); ++j) {
      CHECK(a.series[i].points[j].value == b.series[i].points[j].value);
    }
  }
}

TEST_CASE("configuration errors name the field") {
  auto c = small(1);
  c.cases_per_year = {};
  CHECK(config_field(c).find("cases_per_year") != std::string::npos);
  c = small(1);
  c.controls_per_year = -1;
  CHECK(config_field(c).find("controls_per_year") != std::string::npos);
  c = small(1);
  c.markers[0].amplitude = -1.0;
  CHECK(config_field(c).find("amplitude") != std::string::npos);
  c = small(1);
  c.markers[0] = MarkerSpec{"albumin", MarkerKind::Useful, 30, Direction::Drop, 1.0};
  CHECK(config_field(c).find("onset_days") != std::string::npos);
  c = small(1);
  c.markers.push_back(c.markers[0]);
  CHECK(config_field(c).find("markers") != std::string::npos);
  c = small(1);
  c.markers.push_back(MarkerSpec{"sodium"});
  CHECK(config_field(c).find("markers") != std::string::npos);
  c = small(1);
  c.cadence_jitter = 1.0;
  CHECK(config_field(c).find("cadence_jitter") != std::string::npos);
  CHECK(config_field(small(1)).empty());
}

TEST_CASE("marker spec parsing") {
  const auto u = parse_marker_spec("wbc", "useful:56:rise:2.5");
  CHECK(u.kind == MarkerKind::Useful);
  CHECK(u.onset_days == 56);
  CHECK(u.direction == Direction::Rise);
  CHECK(u.amplitude == 2.5);
  CHECK(u.shape == DepartureShape::Cubic);
  CHECK(parse_marker_spec("wbc", "useful:28:drop:1:ramp").shape == DepartureShape::LogisticRamp);
  CHECK(parse_marker_spec("wbc", "null").kind == MarkerKind::Null);
  for (const char* bad : {"", "useful", "useful:x:drop:1", "useful:28:up:1", "useful:28:drop:1:spline", "nul"}) {
    CHECK_THROWS_AS(parse_marker_spec("wbc", bad), Error);
  }
}

TEST_CASE("truth manifest") {
  const auto c = small(23);
  const auto j = nlohmann::json::parse(truth_json(c));
  CHECK(j["seed"] == 23);
  CHECK(j["rng"].is_string());
  CHECK(j["markers"].size() == c.markers.size());
  CHECK(j["markers"]["albumin"]["kind"] == "useful");
  CHECK(j["markers"]["albumin"]["onset_days"] == 28);
  CHECK(j["markers"]["calcium"]["kind"] == "null");
}
