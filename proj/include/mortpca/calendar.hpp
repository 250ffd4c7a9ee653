#pragma once

#include <charconv>
#include <chrono>
#include <compare>
#include <cstdio>
#include <string>
#include <string_view>

#include "mortpca/error.hpp"

namespace mortpca {

inline constexpr int kWeeksPerYear = 52;

/// A calendar week on the strict 52-week grid together with its signed
/// offset `w` from the calendar anchor.
struct WeekIndex {
  int year = 0;
  int week = 1;  // 1..52
  int w = 0;

  friend bool operator==(const WeekIndex&, const WeekIndex&) = default;
  friend auto operator<=>(const WeekIndex& a, const WeekIndex& b) {
    return a.w <=> b.w;
  }
};

/// Maps (year, week) to the week offset `w`. w = 0 at the anchor week
/// (default: calendar week 31 of 2000) and increases by one per week.
struct WeekCalendar {
  int anchor_year = 2000;
  int anchor_week = 31;

  int offset(int year, int week) const {
    if (week < 1 || week > kWeeksPerYear) {
      throw DataError("week " + std::to_string(week) +
                      " outside 1..52 on the weekly grid");
    }
    return (year - anchor_year) * kWeeksPerYear + (week - anchor_week);
  }

  WeekIndex at(int year, int week) const {
    return WeekIndex{year, week, offset(year, week)};
  }

  WeekIndex from_offset(int w) const {
    const int since_jan = w + anchor_week - 1;
    int years = since_jan / kWeeksPerYear;
    int rem = since_jan % kWeeksPerYear;
    if (rem < 0) {
      rem += kWeeksPerYear;
      --years;
    }
    return WeekIndex{anchor_year + years, rem + 1, w};
  }

  friend bool operator==(const WeekCalendar&, const WeekCalendar&) = default;
};

/// "YYYY-WW" label used in CSV output and command-line flags.
inline std::string week_label(const WeekIndex& wk) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d", wk.year, wk.week);
  return buf;
}

namespace detail {

inline int parse_int(std::string_view text, const char* what) {
  int value = 0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw DataError(std::string("cannot parse ") + what + " from '" +
                    std::string(text) + "'");
  }
  return value;
}

}  // namespace detail

/// Parses "YYYY-WW" (as accepted by --baseline-end and --anchor).
inline std::pair<int, int> parse_year_week(std::string_view text) {
  const auto dash = text.find('-');
  if (dash == std::string_view::npos) {
    throw UsageError("expected YEAR-WEEK, got '" + std::string(text) + "'");
  }
  try {
    return {detail::parse_int(text.substr(0, dash), "year"),
            detail::parse_int(text.substr(dash + 1), "week")};
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
}

using Date = std::chrono::sys_days;

/// Parses an ISO date "YYYY-MM-DD"; throws DataError on malformed input.
inline Date parse_iso_date(std::string_view text) {
  using namespace std::chrono;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw DataError("unparseable date '" + std::string(text) + "'");
  }
  const int y = detail::parse_int(text.substr(0, 4), "year");
  const int m = detail::parse_int(text.substr(5, 2), "month");
  const int d = detail::parse_int(text.substr(8, 2), "day");
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(m)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) {
    throw DataError("invalid calendar date '" + std::string(text) + "'");
  }
  return sys_days{ymd};
}

inline std::string format_iso_date(Date date) {
  using namespace std::chrono;
  const year_month_day ymd{date};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()));
  return buf;
}

struct IsoWeek {
  int year = 0;
  int week = 0;  // 1..53
};

/// ISO-8601 week of a date (weeks start on Monday; week 1 contains the
/// year's first Thursday).
inline IsoWeek iso_week(Date date) {
  using namespace std::chrono;
  const weekday wd{date};
  const int iso_wd = static_cast<int>(wd.iso_encoding());  // Mon=1..Sun=7
  const sys_days thursday = date + days{4 - iso_wd};
  const year_month_day ymd{thursday};
  const sys_days jan1 = sys_days{ymd.year() / January / 1};
  const int ordinal = (thursday - jan1).count();
  return IsoWeek{int(ymd.year()), ordinal / 7 + 1};
}

}  // namespace mortpca
