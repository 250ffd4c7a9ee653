#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mortpca/calendar.hpp"
#include "mortpca/error.hpp"
#include "mortpca/ingest.hpp"
#include "mortpca/residual.hpp"
#include "mortpca/rng.hpp"
#include "mortpca/transform.hpp"
#include "mortpca/trend.hpp"

namespace mortpca {

inline const std::vector<std::string>& default_countries() {
  static const std::vector<std::string> codes = {
      "AUT", "BEL", "CHE",     "ESP", "EST", "FIN", "FRA",
      "GBR_SCO", "HUN", "ISR", "LTU", "LVA", "NLD", "NOR",
      "POL", "PRT", "SVK",     "SVN", "SWE"};
  return codes;
}

/// Component-1 trend coefficients of the generator (model M1_3 form).
struct TrendTruth {
  double intercept = 32.95;
  double cosine_amp = 1.05;
  double logistic_scale = 9.74;
  double t0 = 220.0;
  double beta = 482.05;
  double spring = 0.71;
  double summer = 0.55;
  double autumn = 0.50;

  friend bool operator==(const TrendTruth&, const TrendTruth&) = default;
};

inline TrendModel trend_model(const TrendTruth& t, double scale = 1.0) {
  TrendModel m;
  m.model_id = TrendModelId::M1_3;
  m.intercept = scale * t.intercept;
  m.cosine_amp = scale * t.cosine_amp;
  m.logistic_scale = scale * t.logistic_scale;
  m.t0 = t.t0;
  m.beta = t.beta;
  m.spring = scale * t.spring;
  m.summer = scale * t.summer;
  m.autumn = scale * t.autumn;
  return m;
}

struct ShockConfig {
  std::vector<std::pair<int, int>> weeks;  // (year, week)
  double multiplier = 1.0;

  friend bool operator==(const ShockConfig&, const ShockConfig&) = default;
};

/// Generator of a rate panel with known low-rank logit structure:
///
///   logit r_i(w) = base_i + scale * q1_i * (trend(w) - intercept + alpha(w))
///                  + sum_{k>=2} q_ki z_k(w)
///
/// where q is an orthonormal basis with a negative first column (older ages
/// weighted more), alpha follows the seasonal ARIMA residual model and the
/// z_k are driftless random walks with geometrically decaying sds.
struct SyntheticConfig {
  std::vector<std::string> countries = default_countries();
  int start_year = 2000;
  int start_week = 2;
  int n_weeks = 1039;
  WeekCalendar calendar;

  TrendTruth trend;
  double seasonal_ar = 0.16;
  double ma = -0.26;
  double innovation_sd = 0.32;

  /// Multiplier on component 1; sqrt(n_series / 152) keeps per-series
  /// variability comparable across panel sizes.
  double pc1_scale = 1.0;
  double minor_sd = 0.02;
  double minor_decay = 0.9;

  double country_sd = 0.15;
  double population_growth = 0.003;  // per year
  std::optional<ShockConfig> shock;

  std::size_t n_series() const { return countries.size() * 8; }

  friend bool operator==(const SyntheticConfig&, const SyntheticConfig&) = default;
};

inline void validate(const SyntheticConfig& c) {
  if (c.countries.empty()) throw DataError("synthetic config: no countries");
  if (c.n_weeks < 2) throw DataError("synthetic config: n_weeks must be >= 2");
  if (c.start_week < 1 || c.start_week > kWeeksPerYear) {
    throw DataError("synthetic config: start_week outside 1..52");
  }
  if (!(c.trend.beta > 0.0)) throw DataError("synthetic config: beta must be positive");
  if (!(c.innovation_sd >= 0.0) || !(c.minor_sd >= 0.0)) {
    throw DataError("synthetic config: sds must be non-negative");
  }
  if (!(std::abs(c.seasonal_ar) < 1.0) || !(std::abs(c.ma) < 1.0)) {
    throw DataError("synthetic config: |seasonal_ar| and |ma| must be < 1");
  }
  if (!(c.pc1_scale > 0.0)) throw DataError("synthetic config: pc1_scale must be positive");
  if (!(c.minor_decay > 0.0)) throw DataError("synthetic config: minor_decay must be positive");
  if (c.shock) {
    if (!(c.shock->multiplier > 0.0)) {
      throw DataError("synthetic config: shock multiplier must be positive");
    }
    for (const auto& [y, wk] : c.shock->weeks) c.calendar.offset(y, wk);
  }
}

struct SyntheticTruth {
  std::uint64_t seed = 0;
  std::vector<WeekIndex> weeks;
  std::vector<SeriesKey> series;
  Eigen::MatrixXd directions;   // n_series x n_series, column 1 = q1
  Eigen::VectorXd base_logits;  // per series
  Eigen::VectorXd pc1_trend;    // trend(w) per week, unscaled
  Eigen::VectorXd pc1_residual; // alpha(w) per week, unscaled
  Eigen::MatrixXd minor_paths;  // weeks x (n_series - 1)
  /// Component-1 score model implied by the generator: coefficients scaled
  /// by pc1_scale, intercept shifted by the column centring.
  TrendModel expected_trend;
  std::vector<WeekIndex> shock_weeks;
};

struct SyntheticPanel {
  RatePanel panel;
  SyntheticTruth truth;
};

namespace detail {

inline constexpr double kAgeLogit[] = {-10.1, -8.1, -7.0, -5.8};
inline constexpr double kAgePopulation[] = {4.0e6, 5.0e5, 3.0e5, 1.0e5};
inline constexpr double kFemalePopulation[] = {1.0, 1.1, 1.3, 2.0};
inline constexpr double kFemaleLogit = -0.35;

}  // namespace detail

/// Deterministic synthetic panel and its ground truth.
inline SyntheticPanel generate_synthetic_panel(const SyntheticConfig& config,
                                               std::uint64_t seed) {
  validate(config);
  const auto n = static_cast<Eigen::Index>(config.n_series());
  const int T = config.n_weeks;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::normal_distribution<double> basis_normal(0.0, 1.0);

  SyntheticPanel out;
  auto& truth = out.truth;
  truth.seed = seed;
  truth.series = full_series(config.countries);
  const int w0 = config.calendar.offset(config.start_year, config.start_week);
  for (int t = 0; t < T; ++t) truth.weeks.push_back(config.calendar.from_offset(w0 + t));

  // Series levels and populations.
  auto level_rng = make_stream(seed, 0, 1);
  std::vector<double> country_shift, country_size;
  for (std::size_t c = 0; c < config.countries.size(); ++c) {
    country_shift.push_back(config.country_sd * normal(level_rng));
    country_size.push_back(std::exp(0.5 * normal(level_rng)));
  }
  truth.base_logits.resize(n);
  Eigen::VectorXd population(n);
  Eigen::VectorXd q1(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& key = truth.series[static_cast<std::size_t>(i)];
    const auto c = static_cast<std::size_t>(i / 8);
    const int age = static_cast<int>(key.age_group);
    const bool female = key.sex == Sex::female;
    truth.base_logits(i) = detail::kAgeLogit[age] + country_shift[c] +
                           (female ? detail::kFemaleLogit : 0.0);
    population(i) = country_size[c] * detail::kAgePopulation[age] *
                    (female ? detail::kFemalePopulation[age] : 1.0);
    q1(i) = -(1.0 + 0.4 * age + 0.1 * normal(level_rng));
  }
  q1.normalize();

  // Orthonormal basis with q1 first.
  auto basis_rng = make_stream(seed, 0, 2);
  Eigen::MatrixXd raw(n, n);
  raw.col(0) = q1;
  for (Eigen::Index k = 1; k < n; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) raw(i, k) = basis_normal(basis_rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
  truth.directions = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  truth.directions.col(0) = q1;

  // Component 1: trend plus seasonal ARIMA residual.
  const TrendModel trend = trend_model(config.trend);
  truth.pc1_trend = evaluate_trend(trend, truth.weeks);
  {
    auto rng = make_stream(seed, 0, 3);
    const auto model = sarima_model(SarimaSpec{}, {}, {config.ma},
                                    {config.seasonal_ar}, {}, config.innovation_sd);
    const auto path = simulate_path(model, T, rng);
    truth.pc1_residual = Eigen::Map<const Eigen::VectorXd>(path.data(), T);
  }

  // Remaining components: random walks.
  truth.minor_paths = Eigen::MatrixXd::Zero(T, n - 1);
  double sd = config.minor_sd;
  for (Eigen::Index k = 1; k < n; ++k, sd *= config.minor_decay) {
    if (sd == 0.0) continue;
    auto rng = make_stream(seed, 0, 4 + static_cast<std::uint64_t>(k));
    const auto path = simulate_path(random_walk_model(sd), T, rng);
    for (int t = 0; t < T; ++t) truth.minor_paths(t, k - 1) = path[t];
  }

  const double s = config.pc1_scale;
  Eigen::VectorXd pc1 =
      truth.pc1_trend + truth.pc1_residual -
      Eigen::VectorXd::Constant(T, config.trend.intercept);
  Eigen::MatrixXd scores(T, n);
  scores.col(0) = s * pc1;
  scores.rightCols(n - 1) = truth.minor_paths;
  Eigen::MatrixXd logits = scores * truth.directions.transpose();
  logits.rowwise() += truth.base_logits.transpose();

  RatePanel& p = out.panel;
  p.weeks = truth.weeks;
  p.series = truth.series;
  p.rates = inverse_logit(logits);
  p.exposures.resize(T, n);
  for (int t = 0; t < T; ++t) {
    const double growth = std::pow(1.0 + config.population_growth, t / 52.0);
    p.exposures.row(t) = growth * population.transpose();
  }
  if (config.shock) {
    for (const auto& [y, wk] : config.shock->weeks) {
      const auto week = config.calendar.at(y, wk);
      auto row = p.week_row(week.w);
      if (!row) continue;
      p.rates.row(*row) *= config.shock->multiplier;
      truth.shock_weeks.push_back(week);
    }
  }
  if (!((p.rates.array() > 0.0).all() && (p.rates.array() < 1.0).all())) {
    throw DomainError("synthetic config implies rates outside (0, 1)");
  }

  // The fitted component-1 score is centred; its expected trend is the
  // scaled generator trend shifted by the column centring.
  truth.expected_trend = trend_model(config.trend, s);
  truth.expected_trend.intercept = -s * pc1.mean();
  return out;
}

/// Generator trend series with optional Gaussian noise, for trend-fit tests.
inline TrendSeries synthetic_trend_series(const TrendModel& model, int first_w,
                                          int n_weeks, double noise_sd,
                                          std::uint64_t seed,
                                          const WeekCalendar& calendar = {}) {
  TrendSeries ts;
  for (int t = 0; t < n_weeks; ++t) ts.weeks.push_back(calendar.from_offset(first_w + t));
  ts.values = evaluate_trend(model, ts.weeks);
  if (noise_sd > 0.0) {
    auto rng = make_stream(seed, 0, 0);
    std::normal_distribution<double> normal(0.0, noise_sd);
    for (auto& v : ts.values) v += normal(rng);
  }
  return ts;
}

// JSON mapping for configs and truth files.

inline void to_json(nlohmann::json& j, const TrendTruth& t) {
  j = {{"intercept", t.intercept}, {"cosine_amp", t.cosine_amp},
       {"logistic_scale", t.logistic_scale}, {"t0", t.t0}, {"beta", t.beta},
       {"spring", t.spring}, {"summer", t.summer}, {"autumn", t.autumn}};
}

inline void from_json(const nlohmann::json& j, TrendTruth& t) {
  t.intercept = j.value("intercept", t.intercept);
  t.cosine_amp = j.value("cosine_amp", t.cosine_amp);
  t.logistic_scale = j.value("logistic_scale", t.logistic_scale);
  t.t0 = j.value("t0", t.t0);
  t.beta = j.value("beta", t.beta);
  t.spring = j.value("spring", t.spring);
  t.summer = j.value("summer", t.summer);
  t.autumn = j.value("autumn", t.autumn);
}

inline nlohmann::json config_to_json(const SyntheticConfig& c) {
  nlohmann::json j;
  j["countries"] = c.countries;
  j["start_year"] = c.start_year;
  j["start_week"] = c.start_week;
  j["n_weeks"] = c.n_weeks;
  j["anchor"] = {c.calendar.anchor_year, c.calendar.anchor_week};
  j["trend"] = c.trend;
  j["seasonal_ar"] = c.seasonal_ar;
  j["ma"] = c.ma;
  j["innovation_sd"] = c.innovation_sd;
  j["pc1_scale"] = c.pc1_scale;
  j["minor_sd"] = c.minor_sd;
  j["minor_decay"] = c.minor_decay;
  j["country_sd"] = c.country_sd;
  j["population_growth"] = c.population_growth;
  if (c.shock) {
    nlohmann::json weeks = nlohmann::json::array();
    for (const auto& [y, w] : c.shock->weeks) weeks.push_back({y, w});
    j["shock"] = {{"weeks", weeks}, {"multiplier", c.shock->multiplier}};
  }
  return j;
}

/// Reads a config; missing keys keep their defaults, unknown keys are errors.
inline SyntheticConfig config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {
      "countries", "start_year", "start_week", "n_weeks", "anchor",
      "trend", "seasonal_ar", "ma", "innovation_sd", "pc1_scale",
      "minor_sd", "minor_decay", "country_sd", "population_growth", "shock"};
  if (!j.is_object()) throw DataError("synthetic config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw DataError("synthetic config: unknown key '" + key + "'");
    }
  }
  SyntheticConfig c;
  try {
    c.countries = j.value("countries", c.countries);
    c.start_year = j.value("start_year", c.start_year);
    c.start_week = j.value("start_week", c.start_week);
    c.n_weeks = j.value("n_weeks", c.n_weeks);
    if (j.contains("anchor")) {
      c.calendar.anchor_year = j["anchor"].at(0).get<int>();
      c.calendar.anchor_week = j["anchor"].at(1).get<int>();
    }
    if (j.contains("trend")) c.trend = j["trend"].get<TrendTruth>();
    c.seasonal_ar = j.value("seasonal_ar", c.seasonal_ar);
    c.ma = j.value("ma", c.ma);
    c.innovation_sd = j.value("innovation_sd", c.innovation_sd);
    c.pc1_scale = j.value("pc1_scale", c.pc1_scale);
    c.minor_sd = j.value("minor_sd", c.minor_sd);
    c.minor_decay = j.value("minor_decay", c.minor_decay);
    c.country_sd = j.value("country_sd", c.country_sd);
    c.population_growth = j.value("population_growth", c.population_growth);
    if (j.contains("shock")) {
      ShockConfig s;
      for (const auto& w : j["shock"].at("weeks")) {
        s.weeks.emplace_back(w.at(0).get<int>(), w.at(1).get<int>());
      }
      s.multiplier = j["shock"].value("multiplier", 1.0);
      c.shock = s;
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("synthetic config: ") + e.what());
  }
  validate(c);
  return c;
}

inline nlohmann::json truth_to_json(const SyntheticConfig& config,
                                    const SyntheticTruth& truth) {
  nlohmann::json j;
  j["seed"] = truth.seed;
  j["config"] = config_to_json(config);
  std::vector<std::string> labels;
  for (const auto& k : truth.series) labels.push_back(label(k));
  j["series"] = labels;
  j["first_week"] = week_label(truth.weeks.front());
  j["last_week"] = week_label(truth.weeks.back());
  std::vector<std::string> shocks;
  for (const auto& w : truth.shock_weeks) shocks.push_back(week_label(w));
  j["shock_weeks"] = shocks;
  const auto& e = truth.expected_trend;
  j["expected_pc1_trend"] = {
      {"model", to_string(e.model_id)}, {"intercept", e.intercept},
      {"cosine_amp", e.cosine_amp},     {"logistic_scale", e.logistic_scale},
      {"t0", e.t0},                     {"beta", e.beta},
      {"spring", e.spring},             {"summer", e.summer},
      {"autumn", e.autumn}};
  j["pc1_residual_model"] = {{"seasonal_ar", config.seasonal_ar},
                             {"ma", config.ma},
                             {"innovation_sd", config.innovation_sd * config.pc1_scale},
                             {"ma_sign_convention", kMaSignConvention}};
  j["base_logits"] = std::vector<double>(truth.base_logits.data(),
                                         truth.base_logits.data() + truth.base_logits.size());
  const Eigen::VectorXd q1 = truth.directions.col(0);
  j["pc1_direction"] = std::vector<double>(q1.data(), q1.data() + q1.size());
  return j;
}

}  // namespace mortpca
