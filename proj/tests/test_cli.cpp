#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mortpca/cli.hpp"

using namespace mortpca;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_binary(const std::string& args, const fs::path& log) {
  const std::string cmd =
      std::string(MORTPCA_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

SyntheticConfig small_config() {
  SyntheticConfig c;
  c.countries = {"DEU"};
  c.n_weeks = 1039 + 26;
  c.pc1_scale = std::sqrt(8.0 / 152.0);
  return c;
}

// Synthetic panel, config and fitted model shared by the tests below.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::path(::testing::TempDir()) / "mortpca_cli_test";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    SyntheticConfig c = small_config();
    const WeekCalendar cal;
    ShockConfig shock;
    for (int h = 1; h <= 4; ++h) {
      const auto wk = cal.from_offset(cal.offset(2000, 2) + 1038 + h);
      shock.weeks.push_back({wk.year, wk.week});
    }
    shock.multiplier = 1.6;
    c.shock = shock;
    {
      std::ofstream f(dir_ / "config.json");
      f << config_to_json(c).dump(1);
    }
    std::ostringstream out, err;
    cli::cmd_synth({(dir_ / "config.json").string(), 7, (dir_ / "panel.csv").string(), ""}, out,
                   err);
    cli::FitArgs fit;
    fit.input = (dir_ / "panel.csv").string();
    fit.baseline_end = "2019-52";
    fit.out = (dir_ / "model.json").string();
    cli::cmd_fit(fit, out, err);
  }

  static fs::path dir_;
};

fs::path CliPipeline::dir_;

cli::ForecastArgs forecast_args(const fs::path& model, const fs::path& panel, const fs::path& out,
                                std::size_t sims, unsigned threads) {
  cli::ForecastArgs a;
  a.model = model.string();
  a.exposures = panel.string();
  a.weeks = 26;
  a.sims = sims;
  a.seed = 11;
  a.threads = threads;
  a.out = out.string();
  return a;
}

}  // namespace

TEST_F(CliPipeline, SynthIsRepeatableAndRecordsShock) {
  std::ostringstream out, err;
  const auto again = dir_ / "again.csv";
  cli::cmd_synth({(dir_ / "config.json").string(), 7, again.string(), ""}, out, err);
  EXPECT_EQ(slurp(again), slurp(dir_ / "panel.csv"));
  cli::cmd_synth({(dir_ / "config.json").string(), 8, again.string(), ""}, out, err);
  EXPECT_NE(slurp(again), slurp(dir_ / "panel.csv"));

  const auto truth = nlohmann::json::parse(slurp(dir_ / "panel.csv.truth.json"));
  ASSERT_EQ(truth.at("shock_weeks").size(), 4u);
  EXPECT_EQ(truth.at("shock_weeks")[0], "2020-01");
  EXPECT_EQ(truth.at("shock_weeks")[3], "2020-04");
  EXPECT_EQ(truth.at("seed"), 7);
}

TEST_F(CliPipeline, FitIsDeterministicApartFromTimestamp) {
  std::ostringstream out, err;
  cli::FitArgs fit;
  fit.input = (dir_ / "panel.csv").string();
  fit.baseline_end = "2019-52";
  fit.out = (dir_ / "model2.json").string();
  cli::cmd_fit(fit, out, err);
  auto a = nlohmann::json::parse(slurp(dir_ / "model.json"));
  auto b = nlohmann::json::parse(slurp(dir_ / "model2.json"));
  a["provenance"].erase("created");
  b["provenance"].erase("created");
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_NE(out.str().find("M1_3"), std::string::npos);
  EXPECT_NE(out.str().find("BIC"), std::string::npos);

  fit.baseline_end = "1999-30";
  EXPECT_THROW(cli::cmd_fit(fit, out, err), DataError);
}

TEST_F(CliPipeline, SavedModelForecastsLikeInMemoryFit) {
  std::ostringstream err;
  const RatePanel panel = cli::read_panel((dir_ / "panel.csv").string(), "csv", {}, err);
  const FittedModel fm = fit_model(slice_weeks(panel, panel.weeks.front().w, WeekCalendar{}.offset(2019, 52)));
  const FittedModel loaded = load_model((dir_ / "model.json").string());
  const auto horizon = forecast_weeks(fm, 26);
  const Eigen::MatrixXd exposures = slice_weeks(panel, horizon.front().w, horizon.back().w).exposures;
  const auto a = forecast(fm, exposures, 26, 50, 3);
  const auto b = forecast(loaded, exposures, 26, 50, 3);
  EXPECT_EQ(a.rates.data, b.rates.data);
  EXPECT_EQ(a.deaths.data, b.deaths.data);
}

TEST_F(CliPipeline, ForecastOutputsIndependentOfThreads) {
  std::ostringstream out, err;
  cli::cmd_forecast(forecast_args(dir_ / "model.json", dir_ / "panel.csv", dir_ / "fc1", 300, 1),
                    out, err);
  cli::cmd_forecast(forecast_args(dir_ / "model.json", dir_ / "panel.csv", dir_ / "fc3", 300, 3),
                    out, err);
  for (const char* name : {"series_deaths_quantiles.csv", "series_rates_quantiles.csv",
                           "aggregate_deaths_quantiles.csv", "exposures.csv", "forecast.json"}) {
    EXPECT_EQ(slurp(dir_ / "fc1" / name), slurp(dir_ / "fc3" / name)) << name;
  }
  const auto agg = slurp(dir_ / "fc1" / "aggregate_deaths_quantiles.csv");
  EXPECT_EQ(agg.substr(0, agg.find('\n')), "week,group,level,value");
  EXPECT_NE(agg.find("2020-01,DEU,0.975,"), std::string::npos);
  EXPECT_NE(out.str().find("hi95"), std::string::npos);

  auto one = forecast_args(dir_ / "model.json", dir_ / "panel.csv", dir_ / "single", 1, 1);
  one.trajectories = true;
  cli::cmd_forecast(one, out, err);
  const auto first = slurp(dir_ / "single" / "series_deaths_quantiles.csv");
  cli::cmd_forecast(one, out, err);
  EXPECT_EQ(first, slurp(dir_ / "single" / "series_deaths_quantiles.csv"));
  EXPECT_EQ(fs::file_size(dir_ / "single" / "trajectories_deaths.bin"), 26u * 8u * 8u);
}

TEST_F(CliPipeline, DegenerateModelHasEqualQuantiles) {
  FittedModel fm = load_model((dir_ / "model.json").string());
  fm.components.pc1_residual.innovation_sd = 0.0;
  for (auto& m : fm.components.other) m.innovation_sd = 0.0;
  save_model(fm, Provenance{}, (dir_ / "flat.json").string());
  std::ostringstream out, err;
  const auto e = cli::cmd_forecast(
      forecast_args(dir_ / "flat.json", dir_ / "panel.csv", dir_ / "flat", 20, 1), out, err);
  const auto q = aggregate_intervals(e, cli::summary_groups(e.series), default_levels());
  for (std::size_t w = 0; w < q.n_weeks; ++w) {
    for (std::size_t l = 1; l < 5; ++l) ASSERT_EQ(q(w, 0, l), q(w, 0, 0));
  }
}

TEST_F(CliPipeline, ExcessFlagsShockWeeksAndWritesPlots) {
  std::ostringstream out, err;
  cli::cmd_forecast(forecast_args(dir_ / "model.json", dir_ / "panel.csv", dir_ / "fcx", 1000, 1),
                    out, err);
  {
    std::ofstream covid(dir_ / "covid.csv");
    covid << "date,country,deaths\n";
    const auto first = parse_iso_date("2019-12-30");  // Monday of ISO week 1, 2020
    for (int d = 0; d < 7 * 12; ++d) {
      covid << format_iso_date(first + std::chrono::days{d}) << ",DEU,10\n";
    }
  }
  cli::ExcessArgs a;
  a.model = (dir_ / "model.json").string();
  a.forecast = (dir_ / "fcx").string();
  a.observed = (dir_ / "panel.csv").string();
  a.covid = (dir_ / "covid.csv").string();
  a.out = (dir_ / "excess").string();
  const auto res = cli::cmd_excess(a, out, err);
  ASSERT_EQ(res.report.rows.size(), 26u);
  for (std::size_t t = 0; t < 4; ++t) {
    EXPECT_TRUE(res.report.rows[t].significant_high) << t;
    EXPECT_TRUE(res.tracking[t].below_lower) << t;
  }
  ASSERT_TRUE(res.adjusted);
  EXPECT_EQ(res.adjusted->rows[0].covid_deaths, 70.0);
  EXPECT_EQ(res.adjusted->rows[13].covid_deaths, 0.0);
  EXPECT_NE(err.str().find("no reported deaths for DEU in week 2020-13"), std::string::npos);

  const auto csv = slurp(dir_ / "excess" / "excess_report.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "week,group,observed,expected_median,lo75,hi75,lo95,hi95,excess_median,covid_deaths,"
            "adjusted_median,flag");
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  std::getline(lines, line);
  EXPECT_EQ(line.substr(0, 12), "2020-01,all,");
  EXPECT_EQ(line.substr(line.rfind(',') + 1), "significant_high");
  const auto svg = slurp(dir_ / "excess" / "excess_all.svg");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("class=\"flagged\""), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "excess" / "pc1_tracking.svg"));
  EXPECT_TRUE(fs::exists(dir_ / "excess" / "adjusted_report.csv"));

  cli::ExcessArgs no_covid = a;
  no_covid.covid.clear();
  no_covid.group_by = "sex-age";
  no_covid.out = (dir_ / "excess2").string();
  std::ostringstream err2;
  const auto res2 = cli::cmd_excess(no_covid, out, err2);
  EXPECT_FALSE(res2.adjusted);
  EXPECT_NE(err2.str().find("adjusted columns left empty"), std::string::npos);
  std::istringstream lines2(slurp(dir_ / "excess2" / "excess_report.csv"));
  std::getline(lines2, line);
  std::getline(lines2, line);
  EXPECT_NE(line.find(",,,"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "excess2" / "excess_M_65-74.svg"));
}

TEST_F(CliPipeline, BinaryExitCodes) {
  const auto log = dir_ / "log.txt";
  EXPECT_EQ(run_binary("", log), 1);
  EXPECT_EQ(run_binary("--help", log), 0);
  EXPECT_NE(slurp(log).find("forecast"), std::string::npos);
  EXPECT_EQ(run_binary("fit --input " + (dir_ / "missing.csv").string() +
                           " --baseline-end 2019-52 --out " + (dir_ / "m.json").string(),
                       log),
            2);
  EXPECT_NE(slurp(log).find("cannot open"), std::string::npos);
  EXPECT_EQ(run_binary("forecast --model " + (dir_ / "model.json").string() + " --exposures " +
                           (dir_ / "panel.csv").string() + " --weeks 0 --out " +
                           (dir_ / "bad").string(),
                       log),
            1);
}

TEST(CliFit, RecoversGeneratorTrendAtLowNoise) {
  const fs::path dir = fs::path(::testing::TempDir()) / "mortpca_cli_recovery";
  fs::create_directories(dir);
  SyntheticConfig c = small_config();
  c.n_weeks = 1039;
  c.innovation_sd = 1e-3;
  c.minor_sd = 1e-4;
  {
    std::ofstream f(dir / "config.json");
    f << config_to_json(c).dump();
  }
  std::ostringstream out, err;
  const auto sp = cli::cmd_synth({(dir / "config.json").string(), 4, (dir / "panel.csv").string(), ""},
                                 out, err);
  cli::FitArgs fit;
  fit.input = (dir / "panel.csv").string();
  fit.baseline_end = "2019-52";
  fit.model = "M1_3";
  fit.out = (dir / "model.json").string();
  const FittedModel fm = cli::cmd_fit(fit, out, err);
  const auto& got = fm.components.pc1_trend;
  const auto& want = sp.truth.expected_trend;
  const double s = c.pc1_scale;
  EXPECT_NEAR(got.cosine_amp, want.cosine_amp, 0.01 * s);
  EXPECT_NEAR(got.spring, want.spring, 0.01 * s);
  EXPECT_NEAR(got.summer, want.summer, 0.01 * s);
  EXPECT_NEAR(got.autumn, want.autumn, 0.01 * s);
  EXPECT_NEAR(got.logistic_scale, want.logistic_scale, 0.05 * std::abs(want.logistic_scale));
  EXPECT_NEAR(got.intercept, want.intercept, 0.05 * std::abs(want.logistic_scale));
  EXPECT_NEAR(got.t0, want.t0, 25.0);
  EXPECT_NEAR(std::abs(fm.pca.directions.col(0).dot(sp.truth.directions.col(0))), 1.0, 1e-4);
}

TEST(CliRun, EndToEndThroughBinary) {
  const fs::path dir = fs::path(::testing::TempDir()) / "mortpca_cli_binary";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "config.json");
    f << config_to_json(small_config()).dump();
  }
  const auto log = dir / "log.txt";
  const std::string p = dir.string() + "/";
  ASSERT_EQ(run_binary("synth --config " + p + "config.json --seed 3 --out " + p + "panel.csv", log), 0)
      << slurp(log);
  ASSERT_EQ(run_binary("fit --input " + p + "panel.csv --baseline-end 2019-52 --out " + p +
                           "model.json",
                       log),
            0)
      << slurp(log);
  for (const char* t : {"1", "2"}) {
    ASSERT_EQ(run_binary("forecast --model " + p + "model.json --exposures " + p +
                             "panel.csv --weeks 26 --sims 200 --seed 5 --threads " + t +
                             " --out " + p + "fc" + t,
                         log),
              0)
        << slurp(log);
  }
  EXPECT_EQ(slurp(dir / "fc1" / "series_deaths_quantiles.csv"),
            slurp(dir / "fc2" / "series_deaths_quantiles.csv"));
  ASSERT_EQ(run_binary("excess --model " + p + "model.json --forecast " + p + "fc1 --observed " +
                           p + "panel.csv --group-by country --out " + p + "ex",
                       log),
            0)
      << slurp(log);
  EXPECT_NE(slurp(log).find("warning: no --covid file"), std::string::npos);
  const auto report = slurp(dir / "ex" / "excess_report.csv");
  EXPECT_NE(report.find("2020-26,DEU,"), std::string::npos);

  // A forecast directory belongs to the model that produced it.
  ASSERT_EQ(run_binary("fit --input " + p + "panel.csv --baseline-end 2019-52 --model M1_1 --out " +
                           p + "other.json",
                       log),
            0);
  EXPECT_EQ(run_binary("excess --model " + p + "other.json --forecast " + p + "fc1 --observed " +
                           p + "panel.csv --out " + p + "ex2",
                       log),
            2);
  EXPECT_NE(slurp(log).find("different model file"), std::string::npos);
}
