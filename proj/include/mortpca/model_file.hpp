#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "mortpca/error.hpp"
#include "mortpca/ingest.hpp"
#include "mortpca/pipeline.hpp"

namespace mortpca {

inline constexpr int kModelFormatVersion = 1;

struct Provenance {
  std::string input_digest;  // FNV-1a 64 of the input bytes, hex
  std::string created;       // UTC, ISO 8601
  std::string seed_policy =
      "forecast seed given at run time; trajectory j, component k draws from "
      "stream (seed, j, k)";
};

/// 64-bit FNV-1a digest as 16 hex digits.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a_hex(bytes);
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace detail {

using nlohmann::json;

inline json vec_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline json mat_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_json(m.row(i).transpose()));
  return rows;
}

inline Eigen::VectorXd json_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Eigen::MatrixXd json_mat(const json& j) {
  if (j.empty()) return {};
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& r = j.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(r.size()) != cols) throw DataError("model file: ragged matrix");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = r.at(static_cast<std::size_t>(k)).get<double>();
  }
  return m;
}

inline json spec_json(const SarimaSpec& s) {
  return {{"p", s.p}, {"d", s.d}, {"q", s.q}, {"P", s.P}, {"D", s.D}, {"Q", s.Q}, {"s", s.s}};
}

inline SarimaSpec json_spec(const json& j) {
  return {j.at("p").get<int>(), j.at("d").get<int>(), j.at("q").get<int>(),
          j.at("P").get<int>(), j.at("D").get<int>(), j.at("Q").get<int>(),
          j.at("s").get<int>()};
}

inline json trend_json(const TrendModel& m) {
  return {{"model", to_string(m.model_id)},
          {"intercept", m.intercept},
          {"cosine_amp", m.cosine_amp},
          {"sine_amp", m.sine_amp},
          {"has_sine", m.has_sine},
          {"logistic_scale", m.logistic_scale},
          {"t0", m.t0},
          {"beta", m.beta},
          {"spring", m.spring},
          {"summer", m.summer},
          {"autumn", m.autumn},
          {"r_squared", m.r_squared},
          {"aic", m.aic},
          {"bic", m.bic},
          {"rss", m.rss},
          {"n_obs", m.n_obs},
          {"n_params", m.n_params},
          {"boundary_warning", m.boundary_warning},
          {"param_names", m.param_names},
          {"param_values", vec_json(m.param_values)},
          {"covariance", mat_json(m.covariance)},
          {"residual_df", m.residual_df},
          {"ci_method", m.ci_method == CiMethod::full_jacobian ? "full_jacobian" : "conditional"}};
}

inline TrendModel json_trend(const json& j) {
  TrendModel m;
  m.model_id = parse_trend_model_id(j.at("model").get<std::string>());
  m.intercept = j.at("intercept").get<double>();
  m.cosine_amp = j.at("cosine_amp").get<double>();
  m.sine_amp = j.at("sine_amp").get<double>();
  m.has_sine = j.at("has_sine").get<bool>();
  m.logistic_scale = j.at("logistic_scale").get<double>();
  m.t0 = j.at("t0").get<double>();
  m.beta = j.at("beta").get<double>();
  m.spring = j.at("spring").get<double>();
  m.summer = j.at("summer").get<double>();
  m.autumn = j.at("autumn").get<double>();
  m.r_squared = j.at("r_squared").get<double>();
  m.aic = j.at("aic").get<double>();
  m.bic = j.at("bic").get<double>();
  m.rss = j.at("rss").get<double>();
  m.n_obs = j.at("n_obs").get<int>();
  m.n_params = j.at("n_params").get<int>();
  m.boundary_warning = j.at("boundary_warning").get<bool>();
  m.param_names = j.at("param_names").get<std::vector<std::string>>();
  m.param_values = json_vec(j.at("param_values"));
  m.covariance = json_mat(j.at("covariance"));
  m.residual_df = j.at("residual_df").get<double>();
  m.ci_method = j.at("ci_method").get<std::string>() == "conditional"
                    ? CiMethod::conditional
                    : CiMethod::full_jacobian;
  return m;
}

inline json residual_json(const ResidualModel& m) {
  return {{"kind", m.kind == ResidualKind::sarima ? "sarima" : "random_walk"},
          {"spec", spec_json(m.spec)},
          {"ar", m.ar},
          {"ma", m.ma},
          {"seasonal_ar", m.seasonal_ar},
          {"seasonal_ma", m.seasonal_ma},
          {"ma_sign_convention", kMaSignConvention},
          {"innovation_sd", m.innovation_sd},
          {"drift", m.drift},
          {"history_tail", m.history},
          {"innovations_tail", m.innovations},
          {"boundary_warning", m.boundary_warning},
          {"iterations", m.iterations}};
}

inline ResidualModel json_residual(const json& j) {
  ResidualModel m;
  m.kind = j.at("kind").get<std::string>() == "sarima" ? ResidualKind::sarima
                                                       : ResidualKind::random_walk;
  m.spec = json_spec(j.at("spec"));
  m.ar = j.at("ar").get<std::vector<double>>();
  m.ma = j.at("ma").get<std::vector<double>>();
  m.seasonal_ar = j.at("seasonal_ar").get<std::vector<double>>();
  m.seasonal_ma = j.at("seasonal_ma").get<std::vector<double>>();
  if (j.at("ma_sign_convention").get<std::string>() != kMaSignConvention) {
    throw DataError("model file uses a different MA sign convention");
  }
  m.innovation_sd = j.at("innovation_sd").get<double>();
  m.drift = j.at("drift").get<double>();
  m.history = j.at("history_tail").get<std::vector<double>>();
  m.innovations = j.at("innovations_tail").get<std::vector<double>>();
  m.boundary_warning = j.at("boundary_warning").get<bool>();
  m.iterations = j.at("iterations").get<int>();
  return m;
}

inline json trend_config_json(const TrendFitConfig& c) {
  json j = {{"t0_step", c.t0_step},
            {"beta_min", c.beta_min},
            {"n_beta", c.n_beta},
            {"include_sine", c.include_sine},
            {"ci_method", c.ci_method == CiMethod::full_jacobian ? "full_jacobian" : "conditional"}};
  j["t0_min"] = c.t0_min ? json(*c.t0_min) : json(nullptr);
  j["t0_max"] = c.t0_max ? json(*c.t0_max) : json(nullptr);
  j["beta_max"] = c.beta_max ? json(*c.beta_max) : json(nullptr);
  return j;
}

inline TrendFitConfig json_trend_config(const json& j) {
  TrendFitConfig c;
  c.t0_step = j.at("t0_step").get<int>();
  c.beta_min = j.at("beta_min").get<double>();
  c.n_beta = j.at("n_beta").get<int>();
  c.include_sine = j.at("include_sine").get<bool>();
  c.ci_method = j.at("ci_method").get<std::string>() == "conditional"
                    ? CiMethod::conditional
                    : CiMethod::full_jacobian;
  if (!j.at("t0_min").is_null()) c.t0_min = j["t0_min"].get<int>();
  if (!j.at("t0_max").is_null()) c.t0_max = j["t0_max"].get<int>();
  if (!j.at("beta_max").is_null()) c.beta_max = j["beta_max"].get<double>();
  return c;
}

inline SeriesKey parse_series_label(const std::string& text) {
  const auto a = text.find(':');
  const auto b = text.find(':', a == std::string::npos ? a : a + 1);
  if (a == std::string::npos || b == std::string::npos) {
    throw DataError("bad series label '" + text + "'");
  }
  auto sex = parse_sex(text.substr(a + 1, b - a - 1));
  auto age = parse_age_group(text.substr(b + 1));
  if (!sex || !age) throw DataError("bad series label '" + text + "'");
  return {text.substr(0, a), *sex, *age};
}

}  // namespace detail

/// Structured text form of a fitted model. Numbers are written in the
/// shortest form that reads back to the same double.
inline nlohmann::json model_to_json(const FittedModel& fm, const Provenance& prov) {
  using detail::json;
  json j;
  j["format_version"] = kModelFormatVersion;
  j["calendar"] = {{"anchor_year", fm.calendar.anchor_year},
                   {"anchor_week", fm.calendar.anchor_week}};
  std::vector<std::string> labels;
  for (const auto& k : fm.series) labels.push_back(label(k));
  j["series"] = labels;
  j["baseline"] = {{"first_week", week_label(fm.baseline_weeks.front())},
                   {"last_week", week_label(fm.baseline_weeks.back())},
                   {"first_w", fm.baseline_weeks.front().w},
                   {"n_weeks", fm.baseline_weeks.size()}};
  j["pca"] = {{"column_means", detail::vec_json(fm.pca.column_means)},
              {"directions", detail::mat_json(fm.pca.directions)},
              {"singular_values", detail::vec_json(fm.pca.singular_values)},
              {"explained_variance_shares", detail::vec_json(fm.pca.explained_variance_shares)},
              {"scores", detail::mat_json(fm.pca.scores)},
              {"warnings", fm.pca.warnings}};
  json models = json::array();
  for (const auto& m : fm.comparison.models) models.push_back(detail::trend_json(m));
  j["trend"] = {{"selected", to_string(fm.selected)},
                {"aic_best", to_string(fm.comparison.models[fm.comparison.aic_best].model_id)},
                {"bic_best", to_string(fm.comparison.models[fm.comparison.bic_best].model_id)},
                {"comparison", models},
                {"pc1_model", detail::trend_json(fm.components.pc1_trend)}};
  json others = json::array();
  for (const auto& m : fm.components.other) others.push_back(detail::residual_json(m));
  j["residual"] = {{"pc1", detail::residual_json(fm.components.pc1_residual)},
                   {"other_components", others}};
  j["fit_config"] = {
      {"force_model", fm.options.force_model ? json(to_string(*fm.options.force_model))
                                             : json(nullptr)},
      {"trend", detail::trend_config_json(fm.options.trend)},
      {"sarima", detail::spec_json(fm.options.sarima)},
      {"random_walk_drift", fm.options.random_walk_drift}};
  j["warnings"] = fm.warnings;
  j["provenance"] = {{"input_digest", prov.input_digest},
                     {"created", prov.created},
                     {"seed_policy", prov.seed_policy}};
  return j;
}

inline FittedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion) {
      throw DataError("unsupported model file version");
    }
    FittedModel fm;
    fm.calendar.anchor_year = j.at("calendar").at("anchor_year").get<int>();
    fm.calendar.anchor_week = j.at("calendar").at("anchor_week").get<int>();
    for (const auto& s : j.at("series")) fm.series.push_back(detail::parse_series_label(s.get<std::string>()));
    const int first_w = j.at("baseline").at("first_w").get<int>();
    const auto n_weeks = j.at("baseline").at("n_weeks").get<std::size_t>();
    for (std::size_t t = 0; t < n_weeks; ++t) {
      fm.baseline_weeks.push_back(fm.calendar.from_offset(first_w + static_cast<int>(t)));
    }
    const auto& p = j.at("pca");
    fm.pca.column_means = detail::json_vec(p.at("column_means"));
    fm.pca.directions = detail::json_mat(p.at("directions"));
    fm.pca.singular_values = detail::json_vec(p.at("singular_values"));
    fm.pca.explained_variance_shares = detail::json_vec(p.at("explained_variance_shares"));
    fm.pca.scores = detail::json_mat(p.at("scores"));
    fm.pca.warnings = p.at("warnings").get<std::vector<std::string>>();

    const auto& t = j.at("trend");
    for (const auto& m : t.at("comparison")) fm.comparison.models.push_back(detail::json_trend(m));
    for (std::size_t k = 0; k < fm.comparison.models.size(); ++k) {
      const auto id = to_string(fm.comparison.models[k].model_id);
      if (id == t.at("aic_best").get<std::string>()) fm.comparison.aic_best = k;
      if (id == t.at("bic_best").get<std::string>()) fm.comparison.bic_best = k;
    }
    fm.selected = parse_trend_model_id(t.at("selected").get<std::string>());
    fm.components.pc1_trend = detail::json_trend(t.at("pc1_model"));

    // Residual series are not stored; they follow from the baseline scores.
    const Eigen::VectorXd pc1 = fm.pca.scores.col(0);
    for (auto* m : {&fm.components.pc1_trend}) {
      m->residuals = pc1 - evaluate_trend(*m, fm.baseline_weeks);
    }
    for (auto& m : fm.comparison.models) {
      m.residuals = pc1 - evaluate_trend(m, fm.baseline_weeks);
    }

    const auto& r = j.at("residual");
    fm.components.pc1_residual = detail::json_residual(r.at("pc1"));
    for (const auto& m : r.at("other_components")) fm.components.other.push_back(detail::json_residual(m));

    const auto& c = j.at("fit_config");
    if (!c.at("force_model").is_null()) {
      fm.options.force_model = parse_trend_model_id(c["force_model"].get<std::string>());
    }
    fm.options.trend = detail::json_trend_config(c.at("trend"));
    fm.options.sarima = detail::json_spec(c.at("sarima"));
    fm.options.random_walk_drift = c.at("random_walk_drift").get<bool>();
    fm.warnings = j.at("warnings").get<std::vector<std::string>>();

    if (fm.pca.directions.rows() != static_cast<Eigen::Index>(fm.series.size()) ||
        fm.pca.column_means.size() != static_cast<Eigen::Index>(fm.series.size()) ||
        fm.pca.scores.rows() != static_cast<Eigen::Index>(n_weeks) ||
        fm.components.other.size() + 1 != static_cast<std::size_t>(fm.pca.directions.cols())) {
      throw DataError("model file: inconsistent dimensions");
    }
    return fm;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
}

inline void save_model(const FittedModel& fm, const Provenance& prov, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << model_to_json(fm, prov).dump(1) << '\n';
  if (!out) throw DataError("failed writing " + path);
}

inline FittedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("model file " + path + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace mortpca
