#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "mortpca/calendar.hpp"
#include "mortpca/csv.hpp"
#include "mortpca/error.hpp"
#include "mortpca/ingest.hpp"
#include "mortpca/pca.hpp"
#include "mortpca/residual.hpp"
#include "mortpca/rng.hpp"
#include "mortpca/transform.hpp"
#include "mortpca/trend.hpp"

namespace mortpca {

/// Dense row-major (sim, week, series) tensor.
struct Tensor3 {
  std::size_t n_sims = 0, n_weeks = 0, n_series = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(std::size_t s, std::size_t w, std::size_t k)
      : n_sims(s), n_weeks(w), n_series(k), data(s * w * k, 0.0) {}

  double& operator()(std::size_t s, std::size_t w, std::size_t k) {
    return data[(s * n_weeks + w) * n_series + k];
  }
  double operator()(std::size_t s, std::size_t w, std::size_t k) const {
    return data[(s * n_weeks + w) * n_series + k];
  }
  bool empty() const { return data.empty(); }
};

struct ForecastEnsemble {
  std::vector<WeekIndex> weeks;
  std::vector<SeriesKey> series;
  std::size_t n_sims = 0;
  std::uint64_t seed = 0;
  Tensor3 scores;  // sim x week x component
  Tensor3 rates;   // sim x week x series
  Tensor3 deaths;  // sim x week x series
  Eigen::MatrixXd exposures;
};

/// Fitted component models that drive the simulation.
struct ComponentModels {
  TrendModel pc1_trend;
  ResidualModel pc1_residual;
  /// Random walks for components 2..n, in component order.
  std::vector<ResidualModel> other;
};

struct SimulationOptions {
  unsigned threads = 1;
  bool keep_scores = true;
};

inline Eigen::MatrixXd deaths_from_rates(const Eigen::MatrixXd& rates,
                                         const Eigen::MatrixXd& exposures) {
  if (rates.rows() != exposures.rows() || rates.cols() != exposures.cols()) {
    throw DataError("deaths_from_rates: rate and exposure shapes differ");
  }
  if ((exposures.array() < 0.0).any()) {
    throw DataError("deaths_from_rates: negative exposure");
  }
  return rates.cwiseProduct(exposures);
}

/// Monte Carlo ensemble of future rates and deaths.
///
/// Trajectory j draws component 1 as trend + residual path from stream
/// (seed, j, 0) and component k from stream (seed, j, k); scores are
/// mapped back through the decomposition and the inverse logit, and deaths
/// are rates times exposures. Results do not depend on the thread count.
inline ForecastEnsemble simulate_ensemble(const PcaDecomposition& pca,
                                          const ComponentModels& models,
                                          const std::vector<SeriesKey>& series,
                                          const Eigen::MatrixXd& exposures,
                                          const std::vector<WeekIndex>& horizon,
                                          std::size_t n_sims,
                                          std::uint64_t seed,
                                          const SimulationOptions& options = {}) {
  const auto n_comp = static_cast<std::size_t>(pca.n_components());
  const auto n_series = static_cast<std::size_t>(pca.n_series());
  const auto h = horizon.size();
  if (models.other.size() + 1 != n_comp) {
    throw DataError("component models (" +
                    std::to_string(models.other.size() + 1) +
                    ") do not match decomposition components (" +
                    std::to_string(n_comp) + ")");
  }
  if (series.size() != n_series) {
    throw DataError("series list does not match decomposition");
  }
  if (n_sims < 1) throw UsageError("n_sims must be at least 1");
  if (h == 0) throw UsageError("forecast horizon must be positive");
  if (static_cast<std::size_t>(exposures.rows()) != h ||
      static_cast<std::size_t>(exposures.cols()) != n_series) {
    throw DataError("exposures must be horizon x series");
  }
  if ((exposures.array() < 0.0).any() || !exposures.allFinite()) {
    throw DataError("exposures contain negative or non-finite values");
  }

  ForecastEnsemble e;
  e.weeks = horizon;
  e.series = series;
  e.n_sims = n_sims;
  e.seed = seed;
  e.exposures = exposures;
  if (options.keep_scores) e.scores = Tensor3(n_sims, h, n_comp);
  e.rates = Tensor3(n_sims, h, n_series);
  e.deaths = Tensor3(n_sims, h, n_series);

  const Eigen::VectorXd trend = evaluate_trend(models.pc1_trend, horizon);
  const int hi = static_cast<int>(h);
  const Eigen::MatrixXd directions_t = pca.directions.transpose();

  auto run = [&](std::size_t first, std::size_t last) {
    Eigen::MatrixXd scores(h, n_comp);
    Eigen::MatrixXd logits(h, n_series);
    for (std::size_t j = first; j < last; ++j) {
      {
        auto rng = make_stream(seed, j, 0);
        const auto path = simulate_path(models.pc1_residual, hi, rng);
        for (std::size_t t = 0; t < h; ++t) scores(t, 0) = trend(t) + path[t];
      }
      for (std::size_t k = 1; k < n_comp; ++k) {
        auto rng = make_stream(seed, j, k);
        const auto path = simulate_path(models.other[k - 1], hi, rng);
        for (std::size_t t = 0; t < h; ++t) scores(t, k) = path[t];
      }
      logits.noalias() = scores * directions_t;
      logits.rowwise() += pca.column_means.transpose();
      for (std::size_t t = 0; t < h; ++t) {
        for (std::size_t i = 0; i < n_series; ++i) {
          const double r = inverse_logit(logits(t, i));
          e.rates(j, t, i) = r;
          e.deaths(j, t, i) = r * exposures(t, i);
        }
        if (options.keep_scores) {
          for (std::size_t k = 0; k < n_comp; ++k) e.scores(j, t, k) = scores(t, k);
        }
      }
    }
  };

  const unsigned threads =
      std::max(1u, std::min<unsigned>(options.threads,
                                      static_cast<unsigned>(n_sims)));
  if (threads == 1) {
    run(0, n_sims);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n_sims + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t first = t * chunk;
      const std::size_t last = std::min(n_sims, first + chunk);
      if (first >= last) break;
      pool.emplace_back(run, first, last);
    }
    for (auto& th : pool) th.join();
  }
  return e;
}

/// Type-7 sample quantile of already sorted values.
inline double sorted_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw DataError("quantile of empty sample");
  const double hpos = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(hpos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (hpos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Type-7 quantiles of an unsorted sample at each level.
inline std::vector<double> sample_quantiles(std::vector<double> values,
                                            const std::vector<double>& levels) {
  std::sort(values.begin(), values.end());
  std::vector<double> out;
  out.reserve(levels.size());
  for (double p : levels) out.push_back(sorted_quantile(values, p));
  return out;
}

inline void check_levels(const std::vector<double>& levels) {
  for (double p : levels) {
    if (!(p > 0.0 && p < 1.0)) {
      throw UsageError("quantile level " + csv::format(p) + " outside (0, 1)");
    }
  }
}

/// Default reporting levels: 95% and 75% equal-tailed bands plus median.
inline std::vector<double> default_levels() {
  return {0.025, 0.125, 0.5, 0.875, 0.975};
}

/// Empirical quantiles per (week, column, level).
struct QuantileSummary {
  std::vector<double> levels;
  std::size_t n_weeks = 0, n_columns = 0;
  std::vector<double> values;

  double operator()(std::size_t week, std::size_t column,
                    std::size_t level) const {
    return values[(week * n_columns + column) * levels.size() + level];
  }
};

enum class Quantity { rates, deaths };

inline QuantileSummary prediction_intervals(const ForecastEnsemble& e,
                                            const std::vector<double>& levels,
                                            Quantity what = Quantity::deaths) {
  check_levels(levels);
  const Tensor3& t = what == Quantity::deaths ? e.deaths : e.rates;
  QuantileSummary q{levels, t.n_weeks, t.n_series, {}};
  q.values.resize(t.n_weeks * t.n_series * levels.size());
  std::vector<double> sample(t.n_sims);
  for (std::size_t w = 0; w < t.n_weeks; ++w) {
    for (std::size_t k = 0; k < t.n_series; ++k) {
      for (std::size_t s = 0; s < t.n_sims; ++s) sample[s] = t(s, w, k);
      std::sort(sample.begin(), sample.end());
      for (std::size_t l = 0; l < levels.size(); ++l) {
        q.values[(w * t.n_series + k) * levels.size() + l] =
            sorted_quantile(sample, levels[l]);
      }
    }
  }
  return q;
}

struct SeriesGroup {
  std::string name;
  std::vector<std::size_t> series;
};

/// Per-trajectory group totals of deaths: n_sims x weeks.
inline Eigen::MatrixXd aggregate_samples(const ForecastEnsemble& e,
                                         const SeriesGroup& group) {
  for (auto k : group.series) {
    if (k >= e.deaths.n_series) {
      throw DataError("group '" + group.name + "' references unknown series " +
                      std::to_string(k));
    }
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(e.n_sims),
                      static_cast<Eigen::Index>(e.weeks.size()));
  for (std::size_t s = 0; s < e.n_sims; ++s) {
    for (std::size_t w = 0; w < e.weeks.size(); ++w) {
      double sum = 0.0;
      for (auto k : group.series) sum += e.deaths(s, w, k);
      out(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(w)) = sum;
    }
  }
  return out;
}

/// Quantiles of group death totals; totals are formed per trajectory
/// before the quantiles, so cross-series dependence is kept.
inline QuantileSummary aggregate_intervals(const ForecastEnsemble& e,
                                           const std::vector<SeriesGroup>& groups,
                                           const std::vector<double>& levels) {
  check_levels(levels);
  QuantileSummary q{levels, e.weeks.size(), groups.size(), {}};
  q.values.resize(q.n_weeks * q.n_columns * levels.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const Eigen::MatrixXd totals = aggregate_samples(e, groups[g]);
    for (std::size_t w = 0; w < q.n_weeks; ++w) {
      std::vector<double> sample(totals.col(static_cast<Eigen::Index>(w)).data(),
                                 totals.col(static_cast<Eigen::Index>(w)).data() +
                                     totals.rows());
      const auto qs = sample_quantiles(std::move(sample), levels);
      for (std::size_t l = 0; l < levels.size(); ++l) {
        q.values[(w * q.n_columns + g) * levels.size() + l] = qs[l];
      }
    }
  }
  return q;
}

struct Pc1Interval {
  WeekIndex week;
  double lower = 0.0;
  double median = 0.0;
  double upper = 0.0;
};

/// Gaussian forecast band for component 1: trend + residual point forecast
/// +/- z * sqrt(forecast variance). Level 0 collapses the band.
inline std::vector<Pc1Interval> theoretical_pc1_interval(
    const TrendModel& trend, const ResidualModel& residual,
    const std::vector<WeekIndex>& horizon, double level) {
  if (!(level >= 0.0 && level < 1.0)) {
    throw UsageError("prediction level must lie in [0, 1)");
  }
  const int h = static_cast<int>(horizon.size());
  const auto mean = forecast_mean(residual, h);
  const auto var = forecast_variance(residual, h);
  const double z =
      level == 0.0 ? 0.0
                   : boost::math::quantile(boost::math::normal(), 0.5 + level / 2.0);
  std::vector<Pc1Interval> out;
  out.reserve(horizon.size());
  for (int t = 0; t < h; ++t) {
    const double med = evaluate_trend(trend, horizon[t]) + mean[t];
    const double half = z * std::sqrt(var[t]);
    out.push_back({horizon[t], med - half, med, med + half});
  }
  return out;
}

/// `week,series,level,value`
inline void write_quantiles_csv(const QuantileSummary& q,
                                const std::vector<WeekIndex>& weeks,
                                const std::vector<std::string>& columns,
                                const char* column_header, std::ostream& out) {
  out << "week," << column_header << ",level,value\n";
  for (std::size_t w = 0; w < q.n_weeks; ++w) {
    for (std::size_t k = 0; k < q.n_columns; ++k) {
      for (std::size_t l = 0; l < q.levels.size(); ++l) {
        out << week_label(weeks[w]) << ',' << columns[k] << ','
            << csv::format(q.levels[l]) << ',' << csv::format(q(w, k, l), 17)
            << '\n';
      }
    }
  }
}

/// Raw tensor as little-endian 8-byte floats, row-major (sim, week, series),
/// with a text sidecar `<path>.txt` describing the dimensions.
inline void write_tensor_binary(const std::string& path, const Tensor3& t,
                                const std::string& quantity) {
  std::ofstream bin(path, std::ios::binary);
  if (!bin) throw DataError("cannot open " + path + " for writing");
  static_assert(sizeof(double) == 8);
  for (double v : t.data) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
    bin.write(reinterpret_cast<const char*>(bytes), 8);
  }
  std::ofstream side(path + ".txt");
  side << "quantity " << quantity << "\n"
       << "layout row-major sim,week,series\n"
       << "dtype float64 little-endian\n"
       << "n_sims " << t.n_sims << "\n"
       << "n_weeks " << t.n_weeks << "\n"
       << "n_series " << t.n_series << "\n";
}

}  // namespace mortpca
