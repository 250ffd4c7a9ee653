#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "mortpca/calendar.hpp"
#include "mortpca/error.hpp"

namespace mortpca {

/// Nested deterministic trend models for the mortality index:
///   M1_1: intercept + cos(pi w / 26)
///   M1_2: M1_1 + inverse-logistic growth term
///   M1_3: M1_2 + spring/summer/autumn dummies (winter is the baseline)
enum class TrendModelId { M1_1, M1_2, M1_3 };

inline std::string to_string(TrendModelId id) {
  switch (id) {
    case TrendModelId::M1_1: return "M1_1";
    case TrendModelId::M1_2: return "M1_2";
    case TrendModelId::M1_3: return "M1_3";
  }
  return "?";
}

inline TrendModelId parse_trend_model_id(std::string_view s) {
  if (s == "M1_1" || s == "1.1") return TrendModelId::M1_1;
  if (s == "M1_2" || s == "1.2") return TrendModelId::M1_2;
  if (s == "M1_3" || s == "1.3") return TrendModelId::M1_3;
  throw UsageError("unknown trend model '" + std::string(s) + "'");
}

struct SeasonFlags {
  int f = 0;  // spring, weeks 13-25
  int s = 0;  // summer, weeks 26-38
  int a = 0;  // autumn, weeks 39-51

  friend bool operator==(const SeasonFlags&, const SeasonFlags&) = default;
};

inline SeasonFlags seasonal_indicator(int week_of_year) {
  if (week_of_year < 1 || week_of_year > kWeeksPerYear) {
    throw DataError("seasonal_indicator: week " +
                    std::to_string(week_of_year) + " outside 1..52");
  }
  if (week_of_year >= 13 && week_of_year <= 25) return {1, 0, 0};
  if (week_of_year >= 26 && week_of_year <= 38) return {0, 1, 0};
  if (week_of_year >= 39 && week_of_year <= 51) return {0, 0, 1};
  return {};
}

namespace detail {

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double seasonal_cos(double w) {
  return std::cos(std::numbers::pi * w / 26.0);
}

inline double seasonal_sin(double w) {
  return std::sin(std::numbers::pi * w / 26.0);
}

}  // namespace detail

/// exp((w - t0) / beta) / (1 + exp((w - t0) / beta)).
inline double inverse_logistic_regressor(double w, double t0, double beta) {
  if (!(beta > 0.0)) {
    throw DomainError("inverse_logistic_regressor: beta must be positive");
  }
  return detail::sigmoid((w - t0) / beta);
}

enum class CiMethod {
  /// Linearised covariance of the full nonlinear least-squares problem,
  /// (t0, beta) included.
  full_jacobian,
  /// Plain OLS covariance of the linear coefficients with (t0, beta) held at
  /// their selected values.
  conditional,
};

struct TrendFitConfig {
  /// t0 grid bounds; default: first and last week offset of the series.
  std::optional<int> t0_min, t0_max;
  int t0_step = 1;
  /// Log-spaced beta grid; default upper bound is 10x the series span.
  double beta_min = 2.0;
  std::optional<double> beta_max;
  int n_beta = 32;
  bool include_sine = false;
  CiMethod ci_method = CiMethod::full_jacobian;

  friend bool operator==(const TrendFitConfig&, const TrendFitConfig&) = default;
};

struct TrendSeries {
  std::vector<WeekIndex> weeks;
  Eigen::VectorXd values;
};

struct TrendModel {
  TrendModelId model_id = TrendModelId::M1_1;
  double intercept = 0.0;
  double cosine_amp = 0.0;
  double sine_amp = 0.0;
  double logistic_scale = 0.0;
  double t0 = 0.0;
  double beta = 1.0;
  double spring = 0.0;
  double summer = 0.0;
  double autumn = 0.0;
  bool has_sine = false;

  double r_squared = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  double rss = 0.0;
  int n_obs = 0;
  /// Estimated parameters counted by the information criteria (regression
  /// coefficients, t0 and beta when present, residual variance).
  int n_params = 0;
  bool boundary_warning = false;
  Eigen::VectorXd residuals;

  /// Parameter names, estimates and covariance for interval estimation.
  std::vector<std::string> param_names;
  Eigen::VectorXd param_values;
  Eigen::MatrixXd covariance;
  double residual_df = 0.0;
  CiMethod ci_method = CiMethod::full_jacobian;

  bool has_logistic() const { return model_id != TrendModelId::M1_1; }
  bool has_dummies() const { return model_id == TrendModelId::M1_3; }
};

inline double evaluate_trend(const TrendModel& m, const WeekIndex& week) {
  const double w = week.w;
  double value = m.intercept + m.cosine_amp * detail::seasonal_cos(w);
  if (m.has_sine) value += m.sine_amp * detail::seasonal_sin(w);
  if (m.logistic_scale != 0.0) {
    value += m.logistic_scale * inverse_logistic_regressor(w, m.t0, m.beta);
  }
  const auto flags = seasonal_indicator(week.week);
  value += m.spring * flags.f + m.summer * flags.s + m.autumn * flags.a;
  return value;
}

inline Eigen::VectorXd evaluate_trend(const TrendModel& m,
                                      const std::vector<WeekIndex>& weeks) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(weeks.size()));
  for (std::size_t i = 0; i < weeks.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = evaluate_trend(m, weeks[i]);
  }
  return out;
}

namespace detail {

/// Regressors other than the logistic term, in parameter order:
/// intercept, cos, [sin], [spring, summer, autumn].
inline Eigen::MatrixXd fixed_design(const std::vector<WeekIndex>& weeks,
                                    TrendModelId id, bool sine) {
  const auto n = static_cast<Eigen::Index>(weeks.size());
  const Eigen::Index p =
      2 + (sine ? 1 : 0) + (id == TrendModelId::M1_3 ? 3 : 0);
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& wk = weeks[static_cast<std::size_t>(i)];
    Eigen::Index c = 0;
    x(i, c++) = 1.0;
    x(i, c++) = seasonal_cos(wk.w);
    if (sine) x(i, c++) = seasonal_sin(wk.w);
    if (id == TrendModelId::M1_3) {
      const auto flags = seasonal_indicator(wk.week);
      x(i, c++) = flags.f;
      x(i, c++) = flags.s;
      x(i, c++) = flags.a;
    }
  }
  return x;
}

inline Eigen::VectorXd logistic_column(const std::vector<WeekIndex>& weeks,
                                       double t0, double beta) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(weeks.size()));
  for (std::size_t i = 0; i < weeks.size(); ++i) {
    x(static_cast<Eigen::Index>(i)) = sigmoid((weeks[i].w - t0) / beta);
  }
  return x;
}

/// Full design: fixed columns with the logistic column inserted after the
/// seasonal terms (intercept, cos, [sin], logistic, [f, s, a]).
inline Eigen::MatrixXd full_design(const Eigen::MatrixXd& fixed,
                                   const Eigen::VectorXd& logistic,
                                   bool sine) {
  const Eigen::Index lead = sine ? 3 : 2;
  Eigen::MatrixXd x(fixed.rows(), fixed.cols() + 1);
  x.leftCols(lead) = fixed.leftCols(lead);
  x.col(lead) = logistic;
  x.rightCols(fixed.cols() - lead) = fixed.rightCols(fixed.cols() - lead);
  return x;
}

struct LinearFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd residuals;
  double rss = 0.0;
};

inline LinearFit least_squares(const Eigen::MatrixXd& x,
                               const Eigen::VectorXd& y) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < x.cols()) {
    throw NumericalError("trend design matrix is rank-deficient");
  }
  LinearFit fit;
  fit.coef = qr.solve(y);
  fit.residuals = y - x * fit.coef;
  fit.rss = fit.residuals.squaredNorm();
  return fit;
}

/// Golden-section minimisation of f on [lo, hi].
template <typename F>
double golden_section(F&& f, double lo, double hi, int iterations = 60) {
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - ratio * (b - a), d = a + ratio * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < iterations && (b - a) > 1e-12 * (1.0 + std::abs(a));
       ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = f(d);
    }
  }
  return fc <= fd ? c : d;
}

inline double information_criterion(double rss, int n, int k, double penalty) {
  const double floor_rss = std::max(rss, std::numeric_limits<double>::min());
  return n * std::log(floor_rss / n) + penalty * k;
}

}  // namespace detail

/// Fits one trend model. For models with the logistic term, (t0, beta) are
/// chosen by profile least squares: an integer t0 grid crossed with a
/// log-spaced beta grid, refined by golden-section searches around the best
/// cell and polished by Levenberg-Marquardt on the full parameter vector.
///
/// `warm_starts` are extra (t0, beta) candidates considered before the
/// polish; model_comparison passes the M1_2 solution to M1_3 so the nested
/// R^2 ordering holds exactly.
inline TrendModel fit_trend(
    const TrendSeries& series, TrendModelId model_id,
    const TrendFitConfig& config = {},
    const std::vector<std::pair<double, double>>& warm_starts = {}) {
  const auto& weeks = series.weeks;
  const Eigen::VectorXd& y = series.values;
  const auto n = static_cast<Eigen::Index>(weeks.size());
  if (y.size() != n) throw DataError("trend series: weeks/values mismatch");
  if (n < 3 * kWeeksPerYear) {
    throw DataError("trend fit needs at least 3 full years of weeks, got " +
                    std::to_string(n));
  }
  const double tss = (y.array() - y.mean()).matrix().squaredNorm();
  if (!(tss > 0.0)) {
    throw DataError("degenerate design: trend input series is constant");
  }

  const bool sine = config.include_sine;
  const Eigen::MatrixXd fixed = detail::fixed_design(weeks, model_id, sine);

  TrendModel m;
  m.model_id = model_id;
  m.has_sine = sine;
  m.n_obs = static_cast<int>(n);
  m.ci_method = config.ci_method;

  Eigen::VectorXd coef;  // in full-design order
  Eigen::MatrixXd design;

  if (model_id == TrendModelId::M1_1) {
    auto fit = detail::least_squares(fixed, y);
    coef = fit.coef;
    design = fixed;
  } else {
    const int w_min = weeks.front().w;
    const int w_max = weeks.back().w;
    const int t0_lo = config.t0_min.value_or(w_min);
    const int t0_hi = config.t0_max.value_or(w_max);
    const int step = std::max(1, config.t0_step);
    const double span = static_cast<double>(w_max - w_min);
    const double b_lo = config.beta_min;
    const double b_hi = config.beta_max.value_or(10.0 * span);
    if (t0_lo > t0_hi || !(b_lo > 0.0) || !(b_hi > b_lo) ||
        config.n_beta < 2) {
      throw UsageError("invalid trend fit grid configuration");
    }
    std::vector<int> t0_grid;
    for (int t = t0_lo; t <= t0_hi; t += step) t0_grid.push_back(t);
    std::vector<double> beta_grid(static_cast<std::size_t>(config.n_beta));
    for (int k = 0; k < config.n_beta; ++k) {
      beta_grid[k] = std::exp(std::log(b_lo) + (std::log(b_hi) - std::log(b_lo)) *
                                                   k / (config.n_beta - 1));
    }

    // Profile RSS via the normal equations: the fixed regressors are
    // factored once; each cell only adds the logistic column.
    const Eigen::MatrixXd gram = fixed.transpose() * fixed;
    const Eigen::LLT<Eigen::MatrixXd> gram_llt(gram);
    if (gram_llt.info() != Eigen::Success) {
      throw NumericalError("trend design matrix is rank-deficient");
    }
    const Eigen::VectorXd fty = fixed.transpose() * y;
    const Eigen::VectorXd g_inv_fty = gram_llt.solve(fty);
    const double rss_fixed = y.squaredNorm() - fty.dot(g_inv_fty);

    std::vector<int> offsets(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) offsets[i] = weeks[i].w;
    const int k_min = w_min - t0_grid.back();
    const int k_max = w_max - t0_grid.front();
    std::vector<double> table(static_cast<std::size_t>(k_max - k_min + 1));
    Eigen::VectorXd x(n), ftx(fixed.cols());

    double best_rss = std::numeric_limits<double>::infinity();
    std::size_t best_t = 0, best_b = 0;
    for (std::size_t bi = 0; bi < beta_grid.size(); ++bi) {
      for (int k = k_min; k <= k_max; ++k) {
        table[k - k_min] = detail::sigmoid(k / beta_grid[bi]);
      }
      for (std::size_t ti = 0; ti < t0_grid.size(); ++ti) {
        const int shift = t0_grid[ti] + k_min;
        for (Eigen::Index i = 0; i < n; ++i) x(i) = table[offsets[i] - shift];
        ftx.noalias() = fixed.transpose() * x;
        const Eigen::VectorXd u = gram_llt.solve(ftx);
        const double schur = x.squaredNorm() - ftx.dot(u);
        if (!(schur > 1e-12 * x.squaredNorm())) continue;
        const double r = x.dot(y) - u.dot(fty);
        const double rss = rss_fixed - r * r / schur;
        const bool better =
            rss < best_rss ||
            (rss == best_rss &&
             (t0_grid[ti] < t0_grid[best_t] ||
              (t0_grid[ti] == t0_grid[best_t] && bi < best_b)));
        if (better) {
          best_rss = rss;
          best_t = ti;
          best_b = bi;
        }
      }
    }
    if (!std::isfinite(best_rss)) {
      throw NumericalError("trend profile search found no admissible cell");
    }
    m.boundary_warning = (t0_grid.size() > 1 &&
                          (best_t == 0 || best_t + 1 == t0_grid.size())) ||
                         best_b == 0 || best_b + 1 == beta_grid.size();

    auto profile_rss = [&](double t0, double beta) {
      const Eigen::MatrixXd xd =
          detail::full_design(fixed, detail::logistic_column(weeks, t0, beta),
                              sine);
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xd);
      if (qr.rank() < xd.cols()) return std::numeric_limits<double>::infinity();
      return (y - xd * qr.solve(y)).squaredNorm();
    };

    // Coordinate-wise golden-section refinement inside the neighbouring
    // grid cells.
    double t0 = t0_grid[best_t];
    double log_beta = std::log(beta_grid[best_b]);
    const double t_lo = t0 - step, t_hi = t0 + step;
    const double lb_lo = std::log(beta_grid[best_b > 0 ? best_b - 1 : 0]);
    const double lb_hi =
        std::log(beta_grid[std::min(best_b + 1, beta_grid.size() - 1)]);
    for (int round = 0; round < 4; ++round) {
      t0 = detail::golden_section(
          [&](double t) { return profile_rss(t, std::exp(log_beta)); }, t_lo,
          t_hi);
      if (lb_hi > lb_lo) {
        log_beta = detail::golden_section(
            [&](double lb) { return profile_rss(t0, std::exp(lb)); }, lb_lo,
            lb_hi);
      }
    }
    double beta = std::exp(log_beta);
    double start_rss = profile_rss(t0, beta);
    for (const auto& [ws_t0, ws_beta] : warm_starts) {
      if (!(ws_beta > 0.0)) continue;
      const double r = profile_rss(ws_t0, ws_beta);
      if (r < start_rss) {
        start_rss = r;
        t0 = ws_t0;
        beta = ws_beta;
      }
    }

    // Levenberg-Marquardt polish over (coefficients, t0, beta).
    const Eigen::Index lead = sine ? 3 : 2;
    auto design_at = [&](double t, double b) {
      return detail::full_design(fixed, detail::logistic_column(weeks, t, b),
                                 sine);
    };
    Eigen::MatrixXd xd = design_at(t0, beta);
    Eigen::VectorXd c = detail::least_squares(xd, y).coef;
    auto residual_of = [&](const Eigen::VectorXd& cc, double t, double b) {
      return Eigen::VectorXd(y - design_at(t, b) * cc);
    };
    auto jacobian = [&](const Eigen::VectorXd& cc, double t, double b) {
      Eigen::MatrixXd j(n, cc.size() + 2);
      const Eigen::MatrixXd d = design_at(t, b);
      j.leftCols(cc.size()) = d;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double s = d(i, lead);
        const double ds = s * (1.0 - s);
        j(i, cc.size()) = cc(lead) * ds * (-1.0 / b);
        j(i, cc.size() + 1) = cc(lead) * ds * (-(weeks[i].w - t) / (b * b));
      }
      return j;
    };
    double rss = residual_of(c, t0, beta).squaredNorm();
    double lambda = 1e-3;
    for (int it = 0; it < 200 && rss > 0.0; ++it) {
      const Eigen::MatrixXd j = jacobian(c, t0, beta);
      const Eigen::VectorXd r = residual_of(c, t0, beta);
      const Eigen::MatrixXd jtj = j.transpose() * j;
      const Eigen::VectorXd jtr = j.transpose() * r;
      bool accepted = false;
      while (lambda < 1e12) {
        Eigen::MatrixXd a = jtj;
        a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-300);
        const Eigen::VectorXd delta = a.ldlt().solve(jtr);
        Eigen::VectorXd c_new = c + delta.head(c.size());
        const double t_new = t0 + delta(c.size());
        const double b_new = beta + delta(c.size() + 1);
        if (b_new > 0.0 && std::isfinite(t_new)) {
          const double rss_new = residual_of(c_new, t_new, b_new).squaredNorm();
          if (rss_new < rss) {
            const double gain = (rss - rss_new) / rss;
            c = c_new;
            t0 = t_new;
            beta = b_new;
            rss = rss_new;
            lambda = std::max(lambda / 10.0, 1e-12);
            accepted = true;
            if (gain < 1e-15) it = 1 << 20;
            break;
          }
        }
        lambda *= 10.0;
      }
      if (!accepted) break;
    }
    m.t0 = t0;
    m.beta = beta;
    design = design_at(t0, beta);
    coef = detail::least_squares(design, y).coef;
  }

  // Unpack coefficients (full-design order).
  Eigen::Index c = 0;
  m.intercept = coef(c++);
  m.cosine_amp = coef(c++);
  if (sine) m.sine_amp = coef(c++);
  if (m.has_logistic()) m.logistic_scale = coef(c++);
  if (m.has_dummies()) {
    m.spring = coef(c++);
    m.summer = coef(c++);
    m.autumn = coef(c++);
  }

  m.residuals = y - design * coef;
  m.rss = m.residuals.squaredNorm();
  m.r_squared = std::clamp(1.0 - m.rss / tss, 0.0, 1.0);
  const int n_nonlinear = m.has_logistic() ? 2 : 0;
  m.n_params = static_cast<int>(coef.size()) + n_nonlinear + 1;
  m.aic = detail::information_criterion(m.rss, m.n_obs, m.n_params, 2.0);
  m.bic = detail::information_criterion(m.rss, m.n_obs, m.n_params,
                                        std::log(static_cast<double>(n)));

  // Parameter table and covariance for interval estimation.
  m.param_names = {"intercept", "cos"};
  if (sine) m.param_names.push_back("sin");
  if (m.has_logistic()) m.param_names.push_back("logistic");
  if (m.has_dummies()) {
    m.param_names.insert(m.param_names.end(), {"spring", "summer", "autumn"});
  }
  const bool full = m.has_logistic() && config.ci_method == CiMethod::full_jacobian;
  Eigen::MatrixXd j = design;
  m.param_values = coef;
  if (full) {
    const Eigen::Index lead = sine ? 3 : 2;
    j.conservativeResize(n, coef.size() + 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = design(i, lead);
      const double ds = s * (1.0 - s);
      j(i, coef.size()) = coef(lead) * ds * (-1.0 / m.beta);
      j(i, coef.size() + 1) =
          coef(lead) * ds * (-(weeks[i].w - m.t0) / (m.beta * m.beta));
    }
    m.param_names.insert(m.param_names.end(), {"t0", "beta"});
    m.param_values.conservativeResize(coef.size() + 2);
    m.param_values(coef.size()) = m.t0;
    m.param_values(coef.size() + 1) = m.beta;
  }
  m.residual_df = static_cast<double>(n - j.cols());
  const double sigma2 = m.rss / m.residual_df;
  const Eigen::MatrixXd jtj = j.transpose() * j;
  m.covariance = sigma2 * jtj.ldlt().solve(
                              Eigen::MatrixXd::Identity(jtj.rows(), jtj.cols()));
  return m;
}

struct CoefficientInterval {
  std::string name;
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Student-t intervals from the stored parameter covariance.
inline std::vector<CoefficientInterval> confidence_intervals(
    const TrendModel& m, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw UsageError("confidence level must lie in (0, 1)");
  }
  if (!(m.residual_df > 0.0)) {
    throw NumericalError("no residual degrees of freedom for intervals");
  }
  boost::math::students_t dist(m.residual_df);
  const double q = boost::math::quantile(dist, 0.5 + level / 2.0);
  std::vector<CoefficientInterval> out;
  for (std::size_t k = 0; k < m.param_names.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    const double half = q * std::sqrt(std::max(m.covariance(i, i), 0.0));
    out.push_back({m.param_names[k], m.param_values(i),
                   m.param_values(i) - half, m.param_values(i) + half});
  }
  return out;
}

struct ModelComparison {
  std::vector<TrendModel> models;  // M1_1, M1_2, M1_3
  std::size_t aic_best = 0;
  std::size_t bic_best = 0;
};

inline ModelComparison model_comparison(const TrendSeries& series,
                                        const TrendFitConfig& config = {}) {
  ModelComparison out;
  out.models.push_back(fit_trend(series, TrendModelId::M1_1, config));
  out.models.push_back(fit_trend(series, TrendModelId::M1_2, config));
  const auto& m12 = out.models.back();
  out.models.push_back(
      fit_trend(series, TrendModelId::M1_3, config, {{m12.t0, m12.beta}}));
  for (std::size_t k = 1; k < out.models.size(); ++k) {
    if (out.models[k].aic < out.models[out.aic_best].aic) out.aic_best = k;
    if (out.models[k].bic < out.models[out.bic_best].bic) out.bic_best = k;
  }
  return out;
}

}  // namespace mortpca
