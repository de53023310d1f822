#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace labscreen {

using Date = std::chrono::sys_days;

/// Strict ISO-8601 calendar date (YYYY-MM-DD). Throws Parse.
Date parse_date(std::string_view text);
std::string format_date(Date date);

/// Stratum key for calendar-month sampling, "YYYY-MM".
std::string month_key(Date date);

int year_of(Date date);
Date first_of_month(Date date);
Date last_of_month(Date date);

inline long days_between(Date from, Date to) { return (to - from).count(); }

}  // namespace labscreen
