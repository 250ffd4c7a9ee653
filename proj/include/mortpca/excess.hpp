#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mortpca/error.hpp"
#include "mortpca/ingest.hpp"
#include "mortpca/pca.hpp"
#include "mortpca/residual.hpp"
#include "mortpca/simulate.hpp"
#include "mortpca/transform.hpp"
#include "mortpca/trend.hpp"

namespace mortpca {

enum class Significance { none, inconclusive, significant_high, significant_low };

inline std::string to_string(Significance s) {
  switch (s) {
    case Significance::none: return "none";
    case Significance::inconclusive: return "inconclusive";
    case Significance::significant_high: return "significant_high";
    case Significance::significant_low: return "significant_low";
  }
  return "?";
}

/// One group across all panel series.
inline std::vector<SeriesGroup> group_all(const std::vector<SeriesKey>& series,
                                          std::string name = "all") {
  SeriesGroup g{std::move(name), {}};
  for (std::size_t k = 0; k < series.size(); ++k) g.series.push_back(k);
  return {g};
}

/// One group per country, in series order.
inline std::vector<SeriesGroup> group_by_country(
    const std::vector<SeriesKey>& series) {
  std::vector<SeriesGroup> out;
  std::map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < series.size(); ++k) {
    auto [it, fresh] = index.try_emplace(series[k].country, out.size());
    if (fresh) out.push_back({series[k].country, {}});
    out[it->second].series.push_back(k);
  }
  return out;
}

/// One group per sex x age stratum, pooled across countries.
inline std::vector<SeriesGroup> group_by_sex_age(
    const std::vector<SeriesKey>& series) {
  std::vector<SeriesGroup> out;
  for (Sex s : {Sex::male, Sex::female}) {
    for (AgeGroup a : kAgeGroups) {
      SeriesGroup g{to_string(s) + ":" + to_string(a), {}};
      for (std::size_t k = 0; k < series.size(); ++k) {
        if (series[k].sex == s && series[k].age_group == a) g.series.push_back(k);
      }
      if (!g.series.empty()) out.push_back(std::move(g));
    }
  }
  return out;
}

inline std::vector<SeriesGroup> make_groups(const std::string& by,
                                            const std::vector<SeriesKey>& series) {
  if (by == "country") return group_by_country(series);
  if (by == "sex-age") return group_by_sex_age(series);
  if (by == "all") return group_all(series);
  throw UsageError("unknown grouping '" + by + "' (country|sex-age|all)");
}

struct ExcessRow {
  WeekIndex week;
  std::size_t group = 0;
  double observed = 0.0;
  double expected_median = 0.0;
  double lower = 0.0, upper = 0.0;      // report-level band
  double lower75 = 0.0, upper75 = 0.0;  // inner 75% band
  double excess_median = 0.0;
  double excess_lower = 0.0;  // observed - upper
  double excess_upper = 0.0;  // observed - lower
  bool significant_high = false;
  bool significant_low = false;
  Significance label = Significance::none;
};

struct ExcessReport {
  double level = 0.95;
  std::vector<SeriesGroup> groups;
  std::vector<ExcessRow> rows;  // week-major, then group
};

/// Observed group deaths against the ensemble's group-total distribution.
/// Flags use strict inequalities against the equal-tailed bounds at
/// `level`; "inconclusive" marks weeks above the 75% but not the report
/// band.
inline ExcessReport excess_report(const RatePanel& observed,
                                  const ForecastEnsemble& ensemble,
                                  const std::vector<SeriesGroup>& groups,
                                  double level = 0.95) {
  if (!(level > 0.0 && level < 1.0)) {
    throw UsageError("report level must lie in (0, 1)");
  }
  const auto n_series = ensemble.series.size();
  for (const auto& g : groups) {
    for (auto k : g.series) {
      if (k >= n_series) {
        throw DataError("group '" + g.name + "' references unknown series");
      }
    }
  }
  // Column of each ensemble series in the observed panel.
  std::vector<Eigen::Index> column(n_series, -1);
  for (std::size_t k = 0; k < n_series; ++k) {
    auto idx = observed.series_index(ensemble.series[k]);
    if (idx) column[k] = *idx;
  }
  const Eigen::MatrixXd deaths = observed.death_counts();
  const std::vector<double> levels = {(1.0 - level) / 2.0, 0.125, 0.5, 0.875,
                                      (1.0 + level) / 2.0};

  ExcessReport report;
  report.level = level;
  report.groups = groups;
  for (std::size_t t = 0; t < ensemble.weeks.size(); ++t) {
    auto row_idx = observed.week_row(ensemble.weeks[t].w);
    if (!row_idx) continue;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      double obs = 0.0;
      for (auto k : groups[g].series) {
        if (column[k] < 0) {
          throw DataError("observed panel lacks series " +
                          label(ensemble.series[k]) + " of group '" +
                          groups[g].name + "'");
        }
        obs += deaths(*row_idx, column[k]);
      }
      std::vector<double> sample(ensemble.n_sims);
      for (std::size_t s = 0; s < ensemble.n_sims; ++s) {
        double sum = 0.0;
        for (auto k : groups[g].series) sum += ensemble.deaths(s, t, k);
        sample[s] = sum;
      }
      const auto q = sample_quantiles(std::move(sample), levels);
      ExcessRow r;
      r.week = ensemble.weeks[t];
      r.group = g;
      r.observed = obs;
      r.lower = q[0];
      r.lower75 = q[1];
      r.expected_median = q[2];
      r.upper75 = q[3];
      r.upper = q[4];
      r.excess_median = obs - r.expected_median;
      r.excess_lower = obs - r.upper;
      r.excess_upper = obs - r.lower;
      r.significant_high = obs > r.upper;
      r.significant_low = obs < r.lower;
      if (r.significant_high) {
        r.label = Significance::significant_high;
      } else if (r.significant_low) {
        r.label = Significance::significant_low;
      } else if (obs > r.upper75) {
        r.label = Significance::inconclusive;
      }
      report.rows.push_back(r);
    }
  }
  if (report.rows.empty()) {
    throw DataError("observed weeks do not overlap the forecast horizon");
  }
  return report;
}

struct TrackingRow {
  WeekIndex week;
  double observed_index = 0.0;
  double forecast_median = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool below_lower = false;
};

/// Projects observed logit rows onto the fixed baseline component 1 and
/// compares them with the theoretical band. A low index means high
/// mortality, so the flag is raised below the lower bound.
inline std::vector<TrackingRow> pc1_tracking(const PcaDecomposition& pca,
                                             const LogitPanel& observed,
                                             const TrendModel& trend,
                                             const ResidualModel& residual,
                                             int baseline_end_w, double level,
                                             const WeekCalendar& calendar = {}) {
  if (observed.values.cols() != pca.n_series()) {
    throw DataError("observed rows do not match the decomposition's series");
  }
  if (observed.weeks.empty()) throw DataError("no observed weeks to track");
  int max_h = 0;
  for (const auto& wk : observed.weeks) {
    const int h = wk.w - baseline_end_w;
    if (h < 1) {
      throw DataError("observed week " + week_label(wk) +
                      " is not after the baseline end");
    }
    max_h = std::max(max_h, h);
  }
  std::vector<WeekIndex> horizon;
  for (int h = 1; h <= max_h; ++h) {
    horizon.push_back(calendar.from_offset(baseline_end_w + h));
  }
  const auto band = theoretical_pc1_interval(trend, residual, horizon, level);
  std::vector<TrackingRow> out;
  for (Eigen::Index i = 0; i < observed.values.rows(); ++i) {
    const auto& wk = observed.weeks[static_cast<std::size_t>(i)];
    const auto& b = band[static_cast<std::size_t>(wk.w - baseline_end_w - 1)];
    TrackingRow r;
    r.week = wk;
    r.observed_index =
        project_week(pca, observed.values.row(i).transpose())(0);
    r.forecast_median = b.median;
    r.lower = b.lower;
    r.upper = b.upper;
    r.below_lower = r.observed_index < r.lower;
    out.push_back(r);
  }
  return out;
}

struct AdjustedRow {
  ExcessRow base;
  double covid_deaths = 0.0;
  double adjusted_median = 0.0;
  double adjusted_lower = 0.0;
  double adjusted_upper = 0.0;
  bool significant_high = false;  // adjusted lower bound > 0
  bool significant_low = false;   // adjusted upper bound < 0
};

struct AdjustedReport {
  double level = 0.95;
  std::vector<SeriesGroup> groups;
  std::vector<AdjustedRow> rows;
  std::vector<std::string> warnings;
};

/// Subtracts weekly reported cause-specific deaths from each excess
/// quantile. Every group must be a union of whole countries. Weeks or
/// countries absent from the matrix, and NaN cells, count as zero with a
/// warning.
inline AdjustedReport covid_adjusted_report(
    const ExcessReport& report, const std::vector<SeriesKey>& series,
    const Eigen::MatrixXd& covid_weekly,
    const std::vector<WeekIndex>& covid_weeks,
    const std::vector<std::string>& covid_countries) {
  if (covid_weekly.rows() != static_cast<Eigen::Index>(covid_weeks.size()) ||
      covid_weekly.cols() != static_cast<Eigen::Index>(covid_countries.size())) {
    throw DataError("covid matrix shape does not match its labels");
  }
  // Countries of each group; each must be fully contained.
  std::vector<std::vector<std::string>> group_countries;
  for (const auto& g : report.groups) {
    std::set<std::string> countries;
    std::set<std::size_t> members(g.series.begin(), g.series.end());
    for (auto k : g.series) countries.insert(series.at(k).country);
    for (std::size_t k = 0; k < series.size(); ++k) {
      if (countries.count(series[k].country) && !members.count(k)) {
        throw DataError("group '" + g.name +
                        "' covers only part of country " + series[k].country +
                        "; cannot map reported deaths");
      }
    }
    group_countries.emplace_back(countries.begin(), countries.end());
  }

  AdjustedReport out;
  out.level = report.level;
  out.groups = report.groups;
  std::set<std::string> warned;
  for (const auto& r : report.rows) {
    AdjustedRow a;
    a.base = r;
    std::optional<Eigen::Index> wrow;
    for (std::size_t i = 0; i < covid_weeks.size(); ++i) {
      if (covid_weeks[i].w == r.week.w) wrow = static_cast<Eigen::Index>(i);
    }
    for (const auto& c : group_countries[r.group]) {
      auto it = std::find(covid_countries.begin(), covid_countries.end(), c);
      const double v = (wrow && it != covid_countries.end())
                           ? covid_weekly(*wrow, it - covid_countries.begin())
                           : std::numeric_limits<double>::quiet_NaN();
      if (std::isnan(v)) {
        const std::string key = c + "@" + week_label(r.week);
        if (warned.insert(key).second) {
          out.warnings.push_back("no reported deaths for " + c + " in week " +
                                 week_label(r.week) + "; using 0");
        }
        continue;
      }
      a.covid_deaths += v;
    }
    a.adjusted_median = r.excess_median - a.covid_deaths;
    a.adjusted_lower = r.excess_lower - a.covid_deaths;
    a.adjusted_upper = r.excess_upper - a.covid_deaths;
    a.significant_high = a.adjusted_lower > 0.0;
    a.significant_low = a.adjusted_upper < 0.0;
    out.rows.push_back(a);
  }
  return out;
}

}  // namespace mortpca
