#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mortpca/calendar.hpp"
#include "mortpca/error.hpp"
#include "mortpca/ingest.hpp"
#include "mortpca/pca.hpp"
#include "mortpca/residual.hpp"
#include "mortpca/simulate.hpp"
#include "mortpca/transform.hpp"
#include "mortpca/trend.hpp"

namespace mortpca {

struct FitOptions {
  /// Forces the trend model; otherwise the BIC-best model is used.
  std::optional<TrendModelId> force_model;
  TrendFitConfig trend;
  SarimaSpec sarima;
  SarimaFitOptions sarima_options;
  bool random_walk_drift = false;
};

/// Everything needed to forecast: the baseline decomposition, the component
/// models and the metadata of the panel they were fitted on.
struct FittedModel {
  WeekCalendar calendar;
  std::vector<SeriesKey> series;
  std::vector<WeekIndex> baseline_weeks;
  PcaDecomposition pca;
  ModelComparison comparison;
  TrendModelId selected = TrendModelId::M1_3;
  ComponentModels components;
  FitOptions options;
  std::vector<std::string> warnings;

  int baseline_end() const { return baseline_weeks.back().w; }
};

/// Error raised by a pipeline stage, prefixed with the stage name.
template <class E>
[[noreturn]] void rethrow_in_stage(const char* stage, const E& e) {
  throw E(std::string(stage) + ": " + e.what());
}

template <class F>
auto run_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const UsageError& e) {
    rethrow_in_stage(stage, e);
  } catch (const DomainError& e) {
    rethrow_in_stage(stage, e);
  } catch (const DataError& e) {
    rethrow_in_stage(stage, e);
  } catch (const NumericalError& e) {
    rethrow_in_stage(stage, e);
  }
}

/// logit -> PCA -> trend comparison on component 1 -> seasonal ARIMA on
/// the trend residuals -> random walks for the remaining components.
inline FittedModel fit_model(const RatePanel& baseline,
                             const FitOptions& options = {},
                             const WeekCalendar& calendar = {}) {
  if (baseline.n_weeks() < 3 * kWeeksPerYear) {
    throw DataError("baseline needs at least 3 full years (156 weeks), got " +
                    std::to_string(baseline.n_weeks()));
  }
  FittedModel fm;
  fm.calendar = calendar;
  fm.series = baseline.series;
  fm.baseline_weeks = baseline.weeks;
  fm.options = options;

  const LogitPanel lp = run_stage("transform", [&] { return logit_panel(baseline); });
  fm.pca = run_stage("pca", [&] { return decompose(lp); });
  fm.warnings.insert(fm.warnings.end(), fm.pca.warnings.begin(), fm.pca.warnings.end());

  TrendSeries pc1{baseline.weeks, fm.pca.scores.col(0)};
  fm.comparison = run_stage("trend", [&] { return model_comparison(pc1, options.trend); });
  fm.selected = options.force_model
                    ? *options.force_model
                    : fm.comparison.models[fm.comparison.bic_best].model_id;
  const TrendModel& trend = fm.comparison.models[static_cast<std::size_t>(fm.selected)];
  if (trend.boundary_warning) {
    fm.warnings.push_back("trend: (t0, beta) estimate on the search-grid boundary");
  }
  fm.components.pc1_trend = trend;
  fm.components.pc1_residual = run_stage("residual", [&] {
    return fit_sarima(trend.residuals, options.sarima, options.sarima_options);
  });
  if (fm.components.pc1_residual.boundary_warning) {
    fm.warnings.push_back("residual: coefficient estimate near the stationarity boundary");
  }

  const double sv_tol = static_cast<double>(baseline.n_weeks()) *
                        std::numeric_limits<double>::epsilon() *
                        fm.pca.singular_values(0);
  for (Eigen::Index k = 1; k < fm.pca.n_components(); ++k) {
    const Eigen::VectorXd scores = fm.pca.scores.col(k);
    if (fm.pca.singular_values(k) <= sv_tol) {
      fm.components.other.push_back(random_walk_model(0.0, scores(scores.size() - 1)));
      continue;
    }
    fm.components.other.push_back(run_stage("residual", [&] {
      return fit_random_walk(scores, options.random_walk_drift);
    }));
  }
  return fm;
}

inline const TrendModel& selected_trend(const FittedModel& fm) {
  return fm.components.pc1_trend;
}

/// The `n` weeks following the baseline.
inline std::vector<WeekIndex> forecast_weeks(const FittedModel& fm, int n) {
  if (n <= 0) throw UsageError("forecast horizon must be positive");
  std::vector<WeekIndex> out;
  for (int h = 1; h <= n; ++h) out.push_back(fm.calendar.from_offset(fm.baseline_end() + h));
  return out;
}

inline ForecastEnsemble forecast(const FittedModel& fm,
                                 const Eigen::MatrixXd& exposures, int n_weeks,
                                 std::size_t n_sims, std::uint64_t seed,
                                 const SimulationOptions& options = {}) {
  return simulate_ensemble(fm.pca, fm.components, fm.series, exposures,
                           forecast_weeks(fm, n_weeks), n_sims, seed, options);
}

}  // namespace mortpca
