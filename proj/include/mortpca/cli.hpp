#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mortpca/csv.hpp"
#include "mortpca/error.hpp"
#include "mortpca/excess.hpp"
#include "mortpca/ingest.hpp"
#include "mortpca/model_file.hpp"
#include "mortpca/pipeline.hpp"
#include "mortpca/plot.hpp"
#include "mortpca/simulate.hpp"
#include "mortpca/synthetic.hpp"

namespace mortpca::cli {

namespace fs = std::filesystem;

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

inline std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  return out;
}

inline WeekCalendar parse_anchor(const std::string& text) {
  const auto [y, w] = parse_year_week(text);
  if (w < 1 || w > kWeeksPerYear) throw UsageError("anchor week outside 1..52");
  return WeekCalendar{y, w};
}

inline unsigned resolve_threads(unsigned flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("MORTPCA_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("MORTPCA_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

/// Reads a rate panel in the fixed CSV schema or the STMF layout.
inline RatePanel read_panel(const std::string& path, const std::string& format,
                            const WeekCalendar& calendar, std::ostream& err) {
  auto in = open_input(path);
  SchemaConfig schema;
  schema.calendar = calendar;
  PanelParseResult parsed;
  if (format == "csv") {
    parsed = run_stage("ingest", [&] { return parse_rate_panel(in, schema); });
  } else if (format == "stmf") {
    parsed = run_stage("ingest", [&] {
      return assemble_panel(aggregate_age_groups(parse_stmf(in), MergeSpec::standard()), schema);
    });
  } else {
    throw UsageError("unknown input format '" + format + "' (csv|stmf)");
  }
  if (parsed.dropped_week53 > 0) {
    err << "note: dropped " << parsed.dropped_week53 << " week-53 rows\n";
  }
  if (parsed.dropped_outside_common > 0) {
    err << "note: dropped " << parsed.dropped_outside_common
        << " rows outside the weeks common to all series\n";
  }
  return parsed.panel;
}

inline void print_comparison(const FittedModel& fm, std::ostream& out) {
  const auto& models = fm.comparison.models;
  auto cell = [&](double v) {
    std::ostringstream s;
    s << std::setw(11) << std::setprecision(5) << v;
    return s.str();
  };
  out << std::left << std::setw(12) << "" << std::right;
  for (const auto& m : models) out << std::setw(11) << to_string(m.model_id);
  out << '\n';
  auto row = [&](const char* name, auto get, auto present) {
    out << std::left << std::setw(12) << name << std::right;
    for (const auto& m : models) {
      out << (present(m) ? cell(get(m)) : std::string(10, ' ') + "-");
    }
    out << '\n';
  };
  auto always = [](const TrendModel&) { return true; };
  auto logistic = [](const TrendModel& m) { return m.has_logistic(); };
  auto dummies = [](const TrendModel& m) { return m.has_dummies(); };
  row("intercept", [](const TrendModel& m) { return m.intercept; }, always);
  row("cos", [](const TrendModel& m) { return m.cosine_amp; }, always);
  row("logistic", [](const TrendModel& m) { return m.logistic_scale; }, logistic);
  row("spring", [](const TrendModel& m) { return m.spring; }, dummies);
  row("summer", [](const TrendModel& m) { return m.summer; }, dummies);
  row("autumn", [](const TrendModel& m) { return m.autumn; }, dummies);
  row("t0", [](const TrendModel& m) { return m.t0; }, logistic);
  row("beta", [](const TrendModel& m) { return m.beta; }, logistic);
  row("R2", [](const TrendModel& m) { return m.r_squared; }, always);
  row("AIC", [](const TrendModel& m) { return m.aic; }, always);
  row("BIC", [](const TrendModel& m) { return m.bic; }, always);
  out << "AIC prefers " << to_string(models[fm.comparison.aic_best].model_id)
      << ", BIC prefers " << to_string(models[fm.comparison.bic_best].model_id)
      << "; selected " << to_string(fm.selected) << '\n';
  const auto& r = fm.components.pc1_residual;
  out << "component 1 residual: SARIMA(" << r.spec.p << ',' << r.spec.d << ',' << r.spec.q
      << ")(" << r.spec.P << ',' << r.spec.D << ',' << r.spec.Q << ")" << r.spec.s;
  for (double v : r.ar) out << " ar=" << v;
  for (double v : r.ma) out << " ma=" << v;
  for (double v : r.seasonal_ar) out << " sar=" << v;
  for (double v : r.seasonal_ma) out << " sma=" << v;
  out << " sd=" << r.innovation_sd << '\n';
  out << "component 1 explains " << std::setprecision(4)
      << 100.0 * fm.pca.explained_variance_shares(0) << "% of the variance\n";
}

struct FitArgs {
  std::string input;
  std::string input_format = "csv";
  std::string baseline_end;
  std::string anchor = "2000-31";
  std::string model;  // empty: select by BIC
  std::string out;
};

inline FittedModel cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  const WeekCalendar calendar = parse_anchor(a.anchor);
  const auto [ey, ew] = parse_year_week(a.baseline_end);
  const int end_w = calendar.offset(ey, ew);
  const RatePanel panel = read_panel(a.input, a.input_format, calendar, err);
  if (panel.weeks.empty() || end_w < panel.weeks.front().w) {
    throw DataError("baseline end " + a.baseline_end + " is before the first data week");
  }
  const RatePanel baseline = slice_weeks(panel, panel.weeks.front().w, end_w);
  FitOptions options;
  if (!a.model.empty()) options.force_model = parse_trend_model_id(a.model);
  FittedModel fm = fit_model(baseline, options, calendar);
  for (const auto& w : fm.warnings) err << "warning: " << w << '\n';
  Provenance prov{file_digest(a.input), utc_timestamp()};
  save_model(fm, prov, a.out);
  out << "baseline " << week_label(baseline.weeks.front()) << " to "
      << week_label(baseline.weeks.back()) << ": " << baseline.n_weeks() << " weeks x "
      << baseline.n_series() << " series\n";
  print_comparison(fm, out);
  return fm;
}

/// Exposures for the given weeks from `year,week,country,sex,age_group,exposure`.
inline Eigen::MatrixXd read_exposures(std::istream& in, const std::vector<SeriesKey>& series,
                                      const std::vector<WeekIndex>& weeks,
                                      const WeekCalendar& calendar) {
  csv::Reader reader(in);
  const auto c_year = reader.column("year");
  const auto c_week = reader.column("week");
  const auto c_country = reader.column("country");
  const auto c_sex = reader.column("sex");
  const auto c_age = reader.column("age_group");
  const auto c_exp = reader.column("exposure");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(weeks.size()),
                                                static_cast<Eigen::Index>(series.size()), nan);
  std::vector<std::string> row;
  while (reader.next(row)) {
    const auto line = reader.line();
    const int year = csv::to_int(row[c_year], line, "year");
    const int week = csv::to_int(row[c_week], line, "week");
    if (week == 53) continue;
    const int w = calendar.offset(year, week);
    if (w < weeks.front().w || w > weeks.back().w) continue;
    auto sex = parse_sex(row[c_sex]);
    auto age = parse_age_group(row[c_age]);
    if (!sex || !age) {
      throw DataError("row " + std::to_string(line) + ": unknown sex or age group");
    }
    const SeriesKey key{row[c_country], *sex, *age};
    auto it = std::find(series.begin(), series.end(), key);
    if (it == series.end()) continue;
    const double v = csv::to_double(row[c_exp], line, "exposure");
    if (v < 0.0 || !std::isfinite(v)) {
      throw DataError("row " + std::to_string(line) + ": exposure must be finite and >= 0");
    }
    m(w - weeks.front().w, it - series.begin()) = v;
  }
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      if (std::isnan(m(t, k))) {
        throw DataError("exposures missing for " + label(series[static_cast<std::size_t>(k)]) +
                        " in week " + week_label(weeks[static_cast<std::size_t>(t)]));
      }
    }
  }
  return m;
}

inline void write_exposures(const Eigen::MatrixXd& m, const std::vector<SeriesKey>& series,
                            const std::vector<WeekIndex>& weeks, std::ostream& out) {
  out << "year,week,country,sex,age_group,exposure\n";
  for (std::size_t t = 0; t < weeks.size(); ++t) {
    for (std::size_t k = 0; k < series.size(); ++k) {
      out << weeks[t].year << ',' << weeks[t].week << ',' << series[k].country << ','
          << to_string(series[k].sex) << ',' << to_string(series[k].age_group) << ','
          << csv::format(m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)), 17)
          << '\n';
    }
  }
}

/// Default aggregate groups: the whole panel, then each country.
inline std::vector<SeriesGroup> summary_groups(const std::vector<SeriesKey>& series) {
  auto groups = group_all(series);
  for (auto& g : group_by_country(series)) groups.push_back(std::move(g));
  return groups;
}

struct ForecastArgs {
  std::string model;
  std::string exposures;
  int weeks = 0;
  std::size_t sims = 10000;
  std::uint64_t seed = 0;
  unsigned threads = 0;  // 0: MORTPCA_THREADS or 1
  std::string out;
  bool trajectories = false;
};

inline ForecastEnsemble cmd_forecast(const ForecastArgs& a, std::ostream& out,
                                     std::ostream& /*err*/) {
  if (a.weeks <= 0) throw UsageError("--weeks must be positive");
  if (a.sims < 1) throw UsageError("--sims must be at least 1");
  const FittedModel fm = load_model(a.model);
  const auto horizon = forecast_weeks(fm, a.weeks);
  auto exp_in = open_input(a.exposures);
  const Eigen::MatrixXd exposures =
      run_stage("ingest", [&] { return read_exposures(exp_in, fm.series, horizon, fm.calendar); });
  SimulationOptions opts;
  opts.threads = resolve_threads(a.threads);
  opts.keep_scores = a.trajectories;
  const ForecastEnsemble e = run_stage("simulate", [&] {
    return forecast(fm, exposures, a.weeks, a.sims, a.seed, opts);
  });

  const fs::path dir(a.out);
  fs::create_directories(dir);
  std::vector<std::string> labels;
  for (const auto& k : fm.series) labels.push_back(label(k));
  const auto levels = default_levels();
  {
    auto f = open_output(dir / "series_deaths_quantiles.csv");
    write_quantiles_csv(prediction_intervals(e, levels, Quantity::deaths), horizon, labels,
                        "series", f);
  }
  {
    auto f = open_output(dir / "series_rates_quantiles.csv");
    write_quantiles_csv(prediction_intervals(e, levels, Quantity::rates), horizon, labels,
                        "series", f);
  }
  const auto groups = summary_groups(fm.series);
  std::vector<std::string> group_names;
  for (const auto& g : groups) group_names.push_back(g.name);
  const auto agg = aggregate_intervals(e, groups, levels);
  {
    auto f = open_output(dir / "aggregate_deaths_quantiles.csv");
    write_quantiles_csv(agg, horizon, group_names, "group", f);
  }
  {
    auto f = open_output(dir / "exposures.csv");
    write_exposures(exposures, fm.series, horizon, f);
  }
  if (a.trajectories) {
    write_tensor_binary((dir / "trajectories_deaths.bin").string(), e.deaths, "deaths");
    write_tensor_binary((dir / "trajectories_rates.bin").string(), e.rates, "rates");
    write_tensor_binary((dir / "trajectories_scores.bin").string(), e.scores, "scores");
  }
  nlohmann::json manifest = {{"model_digest", file_digest(a.model)},
                             {"first_week", week_label(horizon.front())},
                             {"weeks", a.weeks},
                             {"sims", a.sims},
                             {"seed", a.seed},
                             {"exposures", "exposures.csv"},
                             {"levels", levels}};
  {
    auto f = open_output(dir / "forecast.json");
    f << manifest.dump(1) << '\n';
  }

  out << "aggregate deaths, all series (" << a.sims << " trajectories)\n";
  out << "week         lo95       lo75     median       hi75       hi95\n";
  for (std::size_t w = 0; w < horizon.size(); ++w) {
    out << week_label(horizon[w]);
    for (std::size_t l : {0, 1, 2, 3, 4}) {
      out << ' ' << std::setw(10) << std::fixed << std::setprecision(1) << agg(w, 0, l);
    }
    out << '\n';
  }
  out.unsetf(std::ios::fixed);
  return e;
}

struct ExcessArgs {
  std::string model;
  std::string forecast;
  std::string observed;
  std::string covid;  // optional
  std::string group_by = "all";
  double level = 0.95;
  std::string out;
  unsigned threads = 0;
};

inline std::string file_stem(const std::string& name) {
  std::string s;
  for (char c : name) s += (std::isalnum(static_cast<unsigned char>(c)) || c == '-') ? c : '_';
  return s;
}

struct ExcessOutputs {
  ExcessReport report;
  std::optional<AdjustedReport> adjusted;
  std::vector<TrackingRow> tracking;
};

inline ExcessOutputs cmd_excess(const ExcessArgs& a, std::ostream& out, std::ostream& err) {
  if (!(a.level > 0.0 && a.level < 1.0)) throw UsageError("--level must lie in (0, 1)");
  const FittedModel fm = load_model(a.model);
  const fs::path fdir(a.forecast);
  nlohmann::json manifest;
  {
    auto in = open_input((fdir / "forecast.json").string());
    try {
      manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("forecast manifest: ") + e.what());
    }
  }
  if (manifest.at("model_digest").get<std::string>() != file_digest(a.model)) {
    throw DataError("forecast directory was produced from a different model file");
  }
  const int n_weeks = manifest.at("weeks").get<int>();
  const auto horizon = forecast_weeks(fm, n_weeks);
  auto exp_in = open_input((fdir / manifest.at("exposures").get<std::string>()).string());
  const Eigen::MatrixXd exposures = read_exposures(exp_in, fm.series, horizon, fm.calendar);
  SimulationOptions opts;
  opts.threads = resolve_threads(a.threads);
  opts.keep_scores = false;
  const ForecastEnsemble e = run_stage("simulate", [&] {
    return forecast(fm, exposures, n_weeks, manifest.at("sims").get<std::size_t>(),
                    manifest.at("seed").get<std::uint64_t>(), opts);
  });

  const RatePanel observed = read_panel(a.observed, "csv", fm.calendar, err);
  const auto groups = make_groups(a.group_by, fm.series);
  ExcessOutputs res;
  res.report = run_stage("excess", [&] { return excess_report(observed, e, groups, a.level); });

  std::vector<WeekIndex> report_weeks;
  for (const auto& r : res.report.rows) {
    if (report_weeks.empty() || report_weeks.back().w != r.week.w) report_weeks.push_back(r.week);
  }
  if (!a.covid.empty()) {
    auto in = open_input(a.covid);
    const DailyDeaths daily = run_stage("ingest", [&] { return parse_covid_daily(in); });
    std::vector<std::string> countries;
    for (const auto& k : fm.series) {
      if (std::find(countries.begin(), countries.end(), k.country) == countries.end()) {
        countries.push_back(k.country);
      }
    }
    Eigen::MatrixXd covid(static_cast<Eigen::Index>(report_weeks.size()),
                          static_cast<Eigen::Index>(countries.size()));
    for (std::size_t t = 0; t < report_weeks.size(); ++t) {
      for (std::size_t c = 0; c < countries.size(); ++c) {
        double v = std::numeric_limits<double>::quiet_NaN();
        try {
          v = weekly_covid_deaths(daily, fm.calendar, {report_weeks[t]}, {countries[c]})(0, 0);
        } catch (const DataError&) {
        }
        covid(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = v;
      }
    }
    res.adjusted = run_stage("excess", [&] {
      return covid_adjusted_report(res.report, fm.series, covid, report_weeks, countries);
    });
    for (const auto& w : res.adjusted->warnings) err << "warning: " << w << '\n';
  } else {
    err << "warning: no --covid file; adjusted columns left empty\n";
  }

  // Component-1 tracking on the observed weeks inside the horizon.
  {
    std::vector<Eigen::Index> cols;
    for (const auto& k : fm.series) {
      auto idx = observed.series_index(k);
      if (!idx) throw DataError("observed panel lacks series " + label(k));
      cols.push_back(*idx);
    }
    LogitPanel lp;
    lp.series = fm.series;
    lp.values.resize(static_cast<Eigen::Index>(report_weeks.size()),
                     static_cast<Eigen::Index>(cols.size()));
    for (std::size_t t = 0; t < report_weeks.size(); ++t) {
      const auto row = *observed.week_row(report_weeks[t].w);
      for (std::size_t k = 0; k < cols.size(); ++k) {
        lp.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) =
            logit(observed.rates(row, cols[k]));
      }
    }
    lp.weeks = report_weeks;
    res.tracking = run_stage("excess", [&] {
      return pc1_tracking(fm.pca, lp, fm.components.pc1_trend, fm.components.pc1_residual,
                          fm.baseline_end(), a.level, fm.calendar);
    });
  }

  const fs::path dir(a.out);
  fs::create_directories(dir);
  {
    auto f = open_output(dir / "excess_report.csv");
    f << "week,group,observed,expected_median,lo75,hi75,lo95,hi95,excess_median,covid_deaths,"
         "adjusted_median,flag\n";
    for (std::size_t i = 0; i < res.report.rows.size(); ++i) {
      const auto& r = res.report.rows[i];
      f << week_label(r.week) << ',' << groups[r.group].name << ',' << csv::format(r.observed, 17)
        << ',' << csv::format(r.expected_median, 17) << ',' << csv::format(r.lower75, 17) << ','
        << csv::format(r.upper75, 17) << ',' << csv::format(r.lower, 17) << ','
        << csv::format(r.upper, 17) << ',' << csv::format(r.excess_median, 17) << ',';
      if (res.adjusted) {
        const auto& adj = res.adjusted->rows[i];
        f << csv::format(adj.covid_deaths, 17) << ',' << csv::format(adj.adjusted_median, 17);
      } else {
        f << ',';
      }
      f << ',' << to_string(r.label) << '\n';
    }
  }
  if (res.adjusted) {
    auto f = open_output(dir / "adjusted_report.csv");
    f << "week,group,covid_deaths,adjusted_lower,adjusted_median,adjusted_upper,flag\n";
    for (const auto& r : res.adjusted->rows) {
      f << week_label(r.base.week) << ',' << groups[r.base.group].name << ','
        << csv::format(r.covid_deaths, 17) << ',' << csv::format(r.adjusted_lower, 17) << ','
        << csv::format(r.adjusted_median, 17) << ',' << csv::format(r.adjusted_upper, 17) << ','
        << (r.significant_high ? "significant_high" : r.significant_low ? "significant_low" : "none")
        << '\n';
    }
  }
  {
    auto f = open_output(dir / "pc1_tracking.csv");
    f << "week,observed_index,forecast_median,lower,upper,below_lower\n";
    for (const auto& r : res.tracking) {
      f << week_label(r.week) << ',' << csv::format(r.observed_index, 17) << ','
        << csv::format(r.forecast_median, 17) << ',' << csv::format(r.lower, 17) << ','
        << csv::format(r.upper, 17) << ',' << (r.below_lower ? 1 : 0) << '\n';
    }
  }

  const std::string level_name = csv::format(100.0 * a.level) + "% PI";
  for (std::size_t g = 0; g < groups.size(); ++g) {
    plot::BandChart chart;
    chart.title = "Observed and predicted weekly deaths: " + groups[g].name;
    chart.y_label = "deaths";
    chart.outer_name = level_name;
    for (const auto& r : res.report.rows) {
      if (r.group != g) continue;
      chart.points.push_back({week_label(r.week), r.observed, r.expected_median, r.lower, r.upper,
                              r.lower75, r.upper75, r.significant_high});
    }
    auto f = open_output(dir / ("excess_" + file_stem(groups[g].name) + ".svg"));
    plot::write_band_svg(chart, f);
  }
  {
    plot::BandChart chart;
    chart.title = "Component 1 index: observed projection and forecast";
    chart.y_label = "index";
    chart.outer_name = level_name;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : res.tracking) {
      chart.points.push_back({week_label(r.week), r.observed_index, r.forecast_median, r.lower,
                              r.upper, nan, nan, r.below_lower});
    }
    auto f = open_output(dir / "pc1_tracking.svg");
    plot::write_band_svg(chart, f);
  }

  std::size_t high = 0, low = 0;
  for (const auto& r : res.report.rows) {
    high += r.significant_high;
    low += r.significant_low;
  }
  out << res.report.rows.size() << " (week, group) cells: " << high << " significantly high, "
      << low << " significantly low at the " << level_name << '\n';
  for (const auto& r : res.report.rows) {
    if (r.significant_high) {
      out << "  " << week_label(r.week) << ' ' << groups[r.group].name << ": observed "
          << csv::format(r.observed, 6) << " > upper " << csv::format(r.upper, 6) << '\n';
    }
  }
  return res;
}

struct SynthArgs {
  std::string config;  // empty: defaults
  std::uint64_t seed = 0;
  std::string out;
  std::string truth;  // empty: <out>.truth.json
};

inline SyntheticPanel cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream& /*err*/) {
  SyntheticConfig config;
  if (!a.config.empty()) {
    auto in = open_input(a.config);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("synthetic config " + a.config + ": " + e.what());
    }
    config = config_from_json(j);
  }
  SyntheticPanel sp = generate_synthetic_panel(config, a.seed);
  {
    auto f = open_output(a.out);
    write_rate_panel_csv(sp.panel, f);
  }
  const std::string truth_path = a.truth.empty() ? a.out + ".truth.json" : a.truth;
  {
    auto f = open_output(truth_path);
    f << truth_to_json(config, sp.truth).dump(1) << '\n';
  }
  out << "wrote " << sp.panel.n_weeks() << " weeks x " << sp.panel.n_series() << " series to "
      << a.out << "; truth in " << truth_path << '\n';
  return sp;
}

/// Parses the command line and runs one subcommand; returns the exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Weekly mortality forecasting and excess-death reporting"};
  app.require_subcommand(1);

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "fit the baseline model to a rate panel");
  c_fit->add_option("--input", fit.input, "rate panel file")->required();
  c_fit->add_option("--input-format", fit.input_format, "csv or stmf")
      ->check(CLI::IsMember({"csv", "stmf"}));
  c_fit->add_option("--baseline-end", fit.baseline_end, "last baseline week, YYYY-WW")->required();
  c_fit->add_option("--anchor", fit.anchor, "week with offset 0, YYYY-WW");
  c_fit->add_option("--model", fit.model, "force trend model M1_1, M1_2 or M1_3");
  c_fit->add_option("--out", fit.out, "model file to write")->required();

  ForecastArgs fc;
  auto* c_fc = app.add_subcommand("forecast", "simulate future rates and deaths");
  c_fc->add_option("--model", fc.model, "model file")->required();
  c_fc->add_option("--exposures", fc.exposures, "exposures CSV covering the horizon")->required();
  c_fc->add_option("--weeks", fc.weeks, "horizon in weeks")->required();
  c_fc->add_option("--sims", fc.sims, "number of trajectories");
  c_fc->add_option("--seed", fc.seed, "random seed");
  c_fc->add_option("--threads", fc.threads, "worker threads (default MORTPCA_THREADS or 1)");
  c_fc->add_option("--out", fc.out, "output directory")->required();
  c_fc->add_flag("--trajectories", fc.trajectories, "also write raw trajectory tensors");

  ExcessArgs ex;
  auto* c_ex = app.add_subcommand("excess", "compare observed deaths with a forecast");
  c_ex->add_option("--model", ex.model, "model file")->required();
  c_ex->add_option("--forecast", ex.forecast, "forecast output directory")->required();
  c_ex->add_option("--observed", ex.observed, "observed rate panel CSV")->required();
  c_ex->add_option("--covid", ex.covid, "daily reported deaths CSV");
  c_ex->add_option("--group-by", ex.group_by, "country, sex-age or all")
      ->check(CLI::IsMember({"country", "sex-age", "all"}));
  c_ex->add_option("--level", ex.level, "prediction interval level");
  c_ex->add_option("--threads", ex.threads, "worker threads (default MORTPCA_THREADS or 1)");
  c_ex->add_option("--out", ex.out, "output directory")->required();

  SynthArgs sy;
  auto* c_sy = app.add_subcommand("synth", "generate a synthetic rate panel");
  c_sy->add_option("--config", sy.config, "JSON generator config");
  c_sy->add_option("--seed", sy.seed, "random seed");
  c_sy->add_option("--out", sy.out, "panel CSV to write")->required();
  c_sy->add_option("--truth", sy.truth, "truth JSON to write (default <out>.truth.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::usage);
  }

  const char* stage = "";
  try {
    if (*c_fit) {
      stage = "fit";
      cmd_fit(fit, out, err);
    } else if (*c_fc) {
      stage = "forecast";
      cmd_forecast(fc, out, err);
    } else if (*c_ex) {
      stage = "excess";
      cmd_excess(ex, out, err);
    } else if (*c_sy) {
      stage = "synth";
      cmd_synth(sy, out, err);
    }
  } catch (const Error& e) {
    err << "error (" << stage << "): " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    err << "error (" << stage << "): " << e.what() << '\n';
    return static_cast<int>(ExitCode::data);
  }
  return 0;
}

}  // namespace mortpca::cli
