#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mortpca/calendar.hpp"
#include "mortpca/csv.hpp"
#include "mortpca/error.hpp"

namespace mortpca {

enum class Sex { male, female };

/// Age groups of the modelled panel, in ascending order.
enum class AgeGroup { under65, age65_74, age75_84, age85plus };

inline constexpr AgeGroup kAgeGroups[] = {AgeGroup::under65, AgeGroup::age65_74,
                                          AgeGroup::age75_84,
                                          AgeGroup::age85plus};

inline std::string to_string(Sex s) { return s == Sex::male ? "M" : "F"; }

inline std::string to_string(AgeGroup a) {
  switch (a) {
    case AgeGroup::under65: return "0-64";
    case AgeGroup::age65_74: return "65-74";
    case AgeGroup::age75_84: return "75-84";
    case AgeGroup::age85plus: return "85+";
  }
  return "?";
}

inline std::optional<Sex> parse_sex(std::string_view s) {
  if (s == "M" || s == "m" || s == "male") return Sex::male;
  if (s == "F" || s == "f" || s == "female") return Sex::female;
  return std::nullopt;
}

inline std::optional<AgeGroup> parse_age_group(std::string_view s) {
  if (s == "0-64" || s == "<65") return AgeGroup::under65;
  if (s == "65-74") return AgeGroup::age65_74;
  if (s == "75-84") return AgeGroup::age75_84;
  if (s == "85+" || s == ">84") return AgeGroup::age85plus;
  return std::nullopt;
}

struct SeriesKey {
  std::string country;
  Sex sex = Sex::male;
  AgeGroup age_group = AgeGroup::under65;

  friend bool operator==(const SeriesKey&, const SeriesKey&) = default;
  friend auto operator<=>(const SeriesKey&, const SeriesKey&) = default;
};

inline std::string label(const SeriesKey& k) {
  return k.country + ":" + to_string(k.sex) + ":" + to_string(k.age_group);
}

/// Series layout: country blocks (in `country_order`, or lexicographic order
/// of the identifiers when empty); within a country males then females, ages
/// ascending. With HMD country codes the lexicographic order is the
/// published series numbering (AUT, BEL, CHE, ESP, ...).
inline std::vector<SeriesKey> order_series(std::vector<SeriesKey> keys,
                                           const std::vector<std::string>&
                                               country_order = {}) {
  std::unordered_map<std::string, std::size_t> rank;
  for (std::size_t i = 0; i < country_order.size(); ++i) {
    rank[country_order[i]] = i;
  }
  auto country_rank = [&](const std::string& c) {
    auto it = rank.find(c);
    return it == rank.end() ? country_order.size() : it->second;
  };
  std::sort(keys.begin(), keys.end(),
            [&](const SeriesKey& a, const SeriesKey& b) {
              return std::forward_as_tuple(country_rank(a.country), a.country,
                                           a.sex, a.age_group) <
                     std::forward_as_tuple(country_rank(b.country), b.country,
                                           b.sex, b.age_group);
            });
  return keys;
}

/// Full 4-age x 2-sex series list for the given countries.
inline std::vector<SeriesKey> full_series(
    const std::vector<std::string>& countries) {
  std::vector<SeriesKey> keys;
  for (const auto& c : countries) {
    for (Sex s : {Sex::male, Sex::female}) {
      for (AgeGroup a : kAgeGroups) keys.push_back({c, s, a});
    }
  }
  return keys;
}

/// Weeks x series panel of weekly mortality rates.
struct RatePanel {
  std::vector<WeekIndex> weeks;
  std::vector<SeriesKey> series;
  Eigen::MatrixXd rates;
  Eigen::MatrixXd exposures;
  std::optional<Eigen::MatrixXd> deaths;

  Eigen::Index n_weeks() const { return static_cast<Eigen::Index>(weeks.size()); }
  Eigen::Index n_series() const {
    return static_cast<Eigen::Index>(series.size());
  }

  /// Observed deaths, or rate x exposure when the panel carries none.
  Eigen::MatrixXd death_counts() const {
    if (deaths) return *deaths;
    return rates.cwiseProduct(exposures);
  }

  std::optional<Eigen::Index> series_index(const SeriesKey& key) const {
    auto it = std::find(series.begin(), series.end(), key);
    if (it == series.end()) return std::nullopt;
    return static_cast<Eigen::Index>(it - series.begin());
  }

  std::optional<Eigen::Index> week_row(int w) const {
    if (weeks.empty() || w < weeks.front().w || w > weeks.back().w) {
      return std::nullopt;
    }
    return static_cast<Eigen::Index>(w - weeks.front().w);
  }
};

/// Rows [first, first + count) of a panel.
inline RatePanel slice_rows(const RatePanel& p, Eigen::Index first,
                            Eigen::Index count) {
  if (first < 0 || count < 0 || first + count > p.n_weeks()) {
    throw DataError("week slice out of range");
  }
  RatePanel out;
  out.weeks.assign(p.weeks.begin() + first, p.weeks.begin() + first + count);
  out.series = p.series;
  out.rates = p.rates.middleRows(first, count);
  out.exposures = p.exposures.middleRows(first, count);
  if (p.deaths) out.deaths = p.deaths->middleRows(first, count);
  return out;
}

/// Weeks with first.w <= w <= last.w.
inline RatePanel slice_weeks(const RatePanel& p, int first_w, int last_w) {
  Eigen::Index lo = 0;
  while (lo < p.n_weeks() && p.weeks[lo].w < first_w) ++lo;
  Eigen::Index hi = lo;
  while (hi < p.n_weeks() && p.weeks[hi].w <= last_w) ++hi;
  return slice_rows(p, lo, hi - lo);
}

/// One row of the long-format input, before assembly into a panel. The age
/// label is kept as text so the 5-band raw variant can pass through the same
/// parser.
struct RateRecord {
  int year = 0;
  int week = 0;
  std::string country;
  Sex sex = Sex::male;
  std::string age_label;
  double rate = 0.0;
  double exposure = 0.0;
  std::optional<double> deaths;
  std::size_t line = 0;
};

struct SchemaConfig {
  WeekCalendar calendar;
  /// Explicit country block order; lexicographic when empty.
  std::vector<std::string> country_order;
  /// Relative tolerance for |deaths - rate x exposure| / max(deaths, 1).
  double consistency_tolerance = 0.05;
};

struct PanelParseResult {
  RatePanel panel;
  std::size_t dropped_week53 = 0;
  /// Rows outside the weeks common to every series.
  std::size_t dropped_outside_common = 0;
};

/// Reads `year,week,country,sex,age_group,rate,exposure[,deaths]`.
inline std::vector<RateRecord> parse_rate_records(std::istream& in) {
  csv::Reader reader(in);
  const auto c_year = reader.column("year");
  const auto c_week = reader.column("week");
  const auto c_country = reader.column("country");
  const auto c_sex = reader.column("sex");
  const auto c_age = reader.column("age_group");
  const auto c_rate = reader.column("rate");
  const auto c_exposure = reader.column("exposure");
  const auto c_deaths = reader.optional_column("deaths");

  std::vector<RateRecord> records;
  std::vector<std::string> row;
  while (reader.next(row)) {
    const auto line = reader.line();
    RateRecord r;
    r.line = line;
    r.year = csv::to_int(row[c_year], line, "year");
    r.week = csv::to_int(row[c_week], line, "week");
    r.country = row[c_country];
    if (r.country.empty()) {
      throw DataError("row " + std::to_string(line) + ": empty country");
    }
    auto sex = parse_sex(row[c_sex]);
    if (!sex) {
      throw DataError("row " + std::to_string(line) + ": unknown sex '" +
                      row[c_sex] + "'");
    }
    r.sex = *sex;
    r.age_label = row[c_age];
    r.rate = csv::to_double(row[c_rate], line, "rate");
    r.exposure = csv::to_double(row[c_exposure], line, "exposure");
    if (c_deaths && !row[*c_deaths].empty()) {
      r.deaths = csv::to_double(row[*c_deaths], line, "deaths");
    }
    records.push_back(std::move(r));
  }
  return records;
}

/// Assembles long-format records into a rectangular panel.
///
/// Week-53 rows are dropped. The panel spans the weeks present in every
/// series (so a series that starts one week late moves the start for all);
/// any hole inside that span is an error naming the series and week.
inline PanelParseResult assemble_panel(const std::vector<RateRecord>& records,
                                       const SchemaConfig& config = {}) {
  PanelParseResult result;
  struct Cell {
    double rate, exposure;
    std::optional<double> deaths;
  };
  std::map<SeriesKey, std::map<int, Cell>> cells;

  for (const auto& r : records) {
    const std::string where = "row " + std::to_string(r.line);
    if (r.week == 53) {
      ++result.dropped_week53;
      continue;
    }
    if (r.week < 1 || r.week > 53) {
      throw DataError(where + ": week " + std::to_string(r.week) +
                      " out of range");
    }
    auto age = parse_age_group(r.age_label);
    if (!age) {
      throw DataError(where + ": unknown age group '" + r.age_label + "'");
    }
    if (!(r.rate > 0.0 && r.rate < 1.0)) {
      throw DataError(where + ": rate " + csv::format(r.rate) +
                      " outside (0, 1)");
    }
    if (!(r.exposure >= 0.0) || !std::isfinite(r.exposure)) {
      throw DataError(where + ": negative or non-finite exposure");
    }
    if (r.deaths) {
      const double d = *r.deaths;
      if (!(d >= 0.0) || !std::isfinite(d)) {
        throw DataError(where + ": negative or non-finite death count");
      }
      const double implied = r.rate * r.exposure;
      if (std::abs(d - implied) / std::max(d, 1.0) >
          config.consistency_tolerance) {
        throw DataError(where + ": deaths " + csv::format(d) +
                        " inconsistent with rate x exposure " +
                        csv::format(implied));
      }
    }
    SeriesKey key{r.country, r.sex, *age};
    const int w = config.calendar.offset(r.year, r.week);
    auto [it, inserted] =
        cells[key].emplace(w, Cell{r.rate, r.exposure, r.deaths});
    if (!inserted) {
      throw DataError(where + ": duplicate cell for series " + label(key) +
                      " week " + std::to_string(r.year) + "-" +
                      std::to_string(r.week));
    }
  }
  if (cells.empty()) throw DataError("no usable rows in rate panel input");

  int first = std::numeric_limits<int>::min();
  int last = std::numeric_limits<int>::max();
  std::vector<SeriesKey> keys;
  for (const auto& [key, by_week] : cells) {
    keys.push_back(key);
    first = std::max(first, by_week.begin()->first);
    last = std::min(last, by_week.rbegin()->first);
  }
  if (first > last) {
    throw DataError("series share no common week");
  }
  keys = order_series(std::move(keys), config.country_order);

  RatePanel& p = result.panel;
  p.series = keys;
  const Eigen::Index n_w = last - first + 1;
  const auto n_s = static_cast<Eigen::Index>(keys.size());
  for (int w = first; w <= last; ++w) {
    p.weeks.push_back(config.calendar.from_offset(w));
  }
  p.rates.resize(n_w, n_s);
  p.exposures.resize(n_w, n_s);
  Eigen::MatrixXd deaths(n_w, n_s);
  bool any_deaths = false;

  for (Eigen::Index j = 0; j < n_s; ++j) {
    const auto& by_week = cells.at(keys[j]);
    for (const auto& [w, cell] : by_week) {
      if (w < first || w > last) ++result.dropped_outside_common;
    }
    for (Eigen::Index i = 0; i < n_w; ++i) {
      const int w = first + static_cast<int>(i);
      auto it = by_week.find(w);
      if (it == by_week.end()) {
        const auto wk = p.weeks[i];
        throw DataError("missing cell: series " + label(keys[j]) + " year " +
                        std::to_string(wk.year) + " week " +
                        std::to_string(wk.week));
      }
      p.rates(i, j) = it->second.rate;
      p.exposures(i, j) = it->second.exposure;
      if (it->second.deaths) {
        any_deaths = true;
        deaths(i, j) = *it->second.deaths;
      } else {
        deaths(i, j) = it->second.rate * it->second.exposure;
      }
    }
  }
  if (any_deaths) p.deaths = std::move(deaths);
  return result;
}

inline PanelParseResult parse_rate_panel(std::istream& in,
                                         const SchemaConfig& config = {}) {
  return assemble_panel(parse_rate_records(in), config);
}

/// Writes a panel in the input schema (12 significant digits).
inline void write_rate_panel_csv(const RatePanel& p, std::ostream& out) {
  out << "year,week,country,sex,age_group,rate,exposure,deaths\n";
  for (Eigen::Index i = 0; i < p.n_weeks(); ++i) {
    for (Eigen::Index j = 0; j < p.n_series(); ++j) {
      const auto& k = p.series[j];
      out << p.weeks[i].year << ',' << p.weeks[i].week << ',' << k.country
          << ',' << to_string(k.sex) << ',' << to_string(k.age_group) << ','
          << csv::format(p.rates(i, j)) << ','
          << csv::format(p.exposures(i, j)) << ',';
      if (p.deaths) out << csv::format((*p.deaths)(i, j));
      out << '\n';
    }
  }
}

/// Maps raw age-band labels onto the modelled age groups.
struct MergeSpec {
  std::map<std::string, AgeGroup> band_to_group;

  /// <15 and 15-64 merge into 0-64; the older bands pass through.
  static MergeSpec standard() {
    return MergeSpec{{{"0-14", AgeGroup::under65},
                      {"15-64", AgeGroup::under65},
                      {"65-74", AgeGroup::age65_74},
                      {"75-84", AgeGroup::age75_84},
                      {"85+", AgeGroup::age85plus}}};
  }
};

/// Merges raw age bands: merged rate = sum of deaths / sum of exposures.
/// Bands without a mapping are an error; records are returned in the
/// modelled 4-group labelling with deaths attached.
inline std::vector<RateRecord> aggregate_age_groups(
    const std::vector<RateRecord>& raw, const MergeSpec& spec) {
  struct Acc {
    double deaths = 0.0, exposure = 0.0;
    std::size_t line = 0;
  };
  std::map<std::tuple<std::string, Sex, int, int, AgeGroup>, Acc> acc;
  std::vector<std::tuple<std::string, Sex, int, int, AgeGroup>> order;
  for (const auto& r : raw) {
    auto it = spec.band_to_group.find(r.age_label);
    if (it == spec.band_to_group.end()) {
      throw DataError("row " + std::to_string(r.line) + ": age band '" +
                      r.age_label + "' has no merge target");
    }
    auto key = std::make_tuple(r.country, r.sex, r.year, r.week, it->second);
    auto [slot, inserted] = acc.try_emplace(key);
    if (inserted) {
      order.push_back(key);
      slot->second.line = r.line;
    }
    slot->second.deaths += r.deaths ? *r.deaths : r.rate * r.exposure;
    slot->second.exposure += r.exposure;
  }
  std::vector<RateRecord> out;
  out.reserve(order.size());
  for (const auto& key : order) {
    const auto& a = acc.at(key);
    const auto& [country, sex, year, week, group] = key;
    if (!(a.exposure > 0.0)) {
      throw DataError("zero merged exposure for " + country + ":" +
                      to_string(sex) + ":" + to_string(group) + " week " +
                      std::to_string(year) + "-" + std::to_string(week));
    }
    RateRecord r;
    r.year = year;
    r.week = week;
    r.country = country;
    r.sex = sex;
    r.age_label = to_string(group);
    r.rate = a.deaths / a.exposure;
    r.exposure = a.exposure;
    r.deaths = a.deaths;
    r.line = a.line;
    out.push_back(std::move(r));
  }
  return out;
}

/// Adapter from the HMD Short-term Mortality Fluctuations layout
/// (CountryCode,Year,Week,Sex,D0_14..D85p,R0_14..R85p,...) to raw 5-band
/// records. STMF rates are annualised, so weekly rate = R / 52 and weekly
/// exposure = D / (R / 52). Cells with zero deaths carry no exposure
/// information; they take the exposure of the nearest week of the same
/// series and band. Rows for both sexes combined ("b") are skipped.
inline std::vector<RateRecord> parse_stmf(std::istream& in) {
  csv::Reader reader(in);
  const auto c_country = reader.column("CountryCode");
  const auto c_year = reader.column("Year");
  const auto c_week = reader.column("Week");
  const auto c_sex = reader.column("Sex");
  static const char* kBands[] = {"0_14", "15_64", "65_74", "75_84", "85p"};
  static const char* kLabels[] = {"0-14", "15-64", "65-74", "75-84", "85+"};
  std::size_t c_d[5], c_r[5];
  for (int b = 0; b < 5; ++b) {
    c_d[b] = reader.column(std::string("D") + kBands[b]);
    c_r[b] = reader.column(std::string("R") + kBands[b]);
  }
  std::vector<RateRecord> out;
  std::vector<std::string> row;
  while (reader.next(row)) {
    const auto line = reader.line();
    if (row[c_sex] == "b") continue;
    auto sex = parse_sex(row[c_sex]);
    if (!sex) {
      throw DataError("row " + std::to_string(line) + ": unknown sex '" +
                      row[c_sex] + "'");
    }
    for (int b = 0; b < 5; ++b) {
      RateRecord r;
      r.line = line;
      r.country = row[c_country];
      r.year = csv::to_int(row[c_year], line, "Year");
      r.week = csv::to_int(row[c_week], line, "Week");
      r.sex = *sex;
      r.age_label = kLabels[b];
      const double d = csv::to_double(row[c_d[b]], line, "deaths");
      const double annual = csv::to_double(row[c_r[b]], line, "rate");
      r.deaths = d;
      r.rate = annual / kWeeksPerYear;
      r.exposure = (d > 0.0 && r.rate > 0.0)
                       ? d / r.rate
                       : std::numeric_limits<double>::quiet_NaN();
      out.push_back(std::move(r));
    }
  }
  // Fill undefined exposures from the nearest defined week of the series.
  std::map<std::tuple<std::string, Sex, std::string>, std::vector<std::size_t>>
      by_series;
  for (std::size_t i = 0; i < out.size(); ++i) {
    by_series[{out[i].country, out[i].sex, out[i].age_label}].push_back(i);
  }
  for (auto& [key, idx] : by_series) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return std::tie(out[a].year, out[a].week) <
             std::tie(out[b].year, out[b].week);
    });
    std::vector<std::size_t> defined;  // positions within idx
    for (std::size_t pos = 0; pos < idx.size(); ++pos) {
      if (!std::isnan(out[idx[pos]].exposure)) defined.push_back(pos);
    }
    if (defined.empty()) {
      throw DataError("no week with positive deaths for STMF series " +
                      std::get<0>(key) + ":" + to_string(std::get<1>(key)) +
                      ":" + std::get<2>(key));
    }
    std::size_t k = 0;
    for (std::size_t pos = 0; pos < idx.size(); ++pos) {
      while (k + 1 < defined.size() && defined[k + 1] <= pos) ++k;
      auto& rec = out[idx[pos]];
      if (!std::isnan(rec.exposure)) continue;
      std::size_t nearest = defined[k];
      if (k + 1 < defined.size() &&
          (nearest > pos || defined[k + 1] - pos < pos - nearest)) {
        nearest = defined[k + 1];
      }
      rec.exposure = out[idx[nearest]].exposure;
    }
  }
  return out;
}

/// Daily cause-specific death counts, contiguous per country.
struct DailyDeaths {
  struct CountrySeries {
    Date first{};
    std::vector<double> counts;
  };
  std::map<std::string, CountrySeries> by_country;

  double total() const {
    double t = 0.0;
    for (const auto& [c, s] : by_country) {
      for (double v : s.counts) t += v;
    }
    return t;
  }

  std::size_t n_records() const {
    std::size_t n = 0;
    for (const auto& [c, s] : by_country) n += s.counts.size();
    return n;
  }
};

/// Reads `date,country,deaths`; gaps between a country's first and last
/// date are zero-filled.
inline DailyDeaths parse_covid_daily(std::istream& in) {
  csv::Reader reader(in);
  const auto c_date = reader.column("date");
  const auto c_country = reader.column("country");
  const auto c_deaths = reader.column("deaths");
  std::map<std::string, std::map<Date, double>> raw;
  std::vector<std::string> row;
  while (reader.next(row)) {
    const auto line = reader.line();
    Date date;
    try {
      date = parse_iso_date(row[c_date]);
    } catch (const DataError& e) {
      throw DataError("row " + std::to_string(line) + ": " + e.what());
    }
    const double d = csv::to_double(row[c_deaths], line, "deaths");
    if (d < 0.0 || !std::isfinite(d)) {
      throw DataError("row " + std::to_string(line) +
                      ": negative death count");
    }
    if (!raw[row[c_country]].emplace(date, d).second) {
      throw DataError("row " + std::to_string(line) + ": duplicate record for " +
                      row[c_country] + " on " + row[c_date]);
    }
  }
  DailyDeaths out;
  for (const auto& [country, by_date] : raw) {
    auto& s = out.by_country[country];
    s.first = by_date.begin()->first;
    const auto span = (by_date.rbegin()->first - s.first).count() + 1;
    s.counts.assign(static_cast<std::size_t>(span), 0.0);
    for (const auto& [date, d] : by_date) {
      s.counts[static_cast<std::size_t>((date - s.first).count())] = d;
    }
  }
  return out;
}

/// Weekly sums of daily counts on the panel's (ISO year, week) grid. Days in
/// ISO week 53 are folded into week 52 of the same ISO year. Result is
/// weeks x countries; a (week, country) cell with no covered day is an error.
inline Eigen::MatrixXd weekly_covid_deaths(
    const DailyDeaths& daily, const WeekCalendar& calendar,
    const std::vector<WeekIndex>& weeks,
    const std::vector<std::string>& countries) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(weeks.size()),
      static_cast<Eigen::Index>(countries.size()));
  for (std::size_t c = 0; c < countries.size(); ++c) {
    std::map<int, std::pair<double, int>> by_week;  // w -> (sum, days)
    auto it = daily.by_country.find(countries[c]);
    if (it != daily.by_country.end()) {
      const auto& s = it->second;
      for (std::size_t d = 0; d < s.counts.size(); ++d) {
        const auto iw =
            iso_week(s.first + std::chrono::days{static_cast<int>(d)});
        const int w = calendar.offset(iw.year, std::min(iw.week, kWeeksPerYear));
        auto& slot = by_week[w];
        slot.first += s.counts[d];
        slot.second += 1;
      }
    }
    for (std::size_t i = 0; i < weeks.size(); ++i) {
      auto wk = by_week.find(weeks[i].w);
      if (wk == by_week.end() || wk->second.second == 0) {
        throw DataError("no daily records for " + countries[c] + " in week " +
                        week_label(weeks[i]));
      }
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
          wk->second.first;
    }
  }
  return out;
}

}  // namespace mortpca
