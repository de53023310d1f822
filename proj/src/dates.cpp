#include "labscreen/dates.hpp"

#include <charconv>

#include <fmt/core.h>

#include "labscreen/errors.hpp"

namespace labscreen {

namespace {

int parse_digits(std::string_view text, std::string_view whole) {
  int value = 0;
  for (char c : text) {
    if (c < '0' || c > '9') {
      throw Error(ErrorKind::Parse, fmt::format("malformed date '{}'", whole));
    }
  }
  std::from_chars(text.data(), text.data() + text.size(), value);
  return value;
}

}  // namespace

Date parse_date(std::string_view text) {
  using namespace std::chrono;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw Error(ErrorKind::Parse, fmt::format("malformed date '{}'", text));
  }
  const int y = parse_digits(text.substr(0, 4), text);
  const int m = parse_digits(text.substr(5, 2), text);
  const int d = parse_digits(text.substr(8, 2), text);
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw Error(ErrorKind::Parse, fmt::format("invalid date '{}'", text));
  return sys_days{ymd};
}

std::string format_date(Date date) {
  const std::chrono::year_month_day ymd{date};
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

std::string month_key(Date date) {
  const std::chrono::year_month_day ymd{date};
  return fmt::format("{:04d}-{:02d}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()));
}

int year_of(Date date) {
  return static_cast<int>(std::chrono::year_month_day{date}.year());
}

Date first_of_month(Date date) {
  const std::chrono::year_month_day ymd{date};
  return std::chrono::sys_days{ymd.year() / ymd.month() / std::chrono::day{1}};
}

Date last_of_month(Date date) {
  const std::chrono::year_month_day ymd{date};
  return std::chrono::sys_days{std::chrono::year_month_day_last{ymd.year(), std::chrono::month_day_last{ymd.month()}}};
}

}  // namespace labscreen
