#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "mortpca/calendar.hpp"
#include "mortpca/csv.hpp"
#include "mortpca/error.hpp"
#include "mortpca/ingest.hpp"

namespace mortpca {

/// ln(rate / (1 - rate)) for 0 < rate < 1.
inline double logit(double rate) {
  if (!(rate > 0.0 && rate < 1.0)) {
    throw DomainError("logit: rate " + csv::format(rate) + " outside (0, 1)");
  }
  return std::log(rate) - std::log1p(-rate);
}

/// 1 / (1 + exp(-x)), evaluated on the side that cannot overflow. For
/// x <= -745 the result underflows to 0 (exp(-700) ~ 1e-304 is still
/// representable).
inline double inverse_logit(double x) {
  if (!std::isfinite(x)) {
    throw DomainError("inverse_logit: non-finite argument");
  }
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Weeks x series panel of logit rates.
struct LogitPanel {
  std::vector<WeekIndex> weeks;
  std::vector<SeriesKey> series;
  Eigen::MatrixXd values;
};

inline LogitPanel logit_panel(const RatePanel& panel) {
  LogitPanel out{panel.weeks, panel.series,
                 Eigen::MatrixXd(panel.rates.rows(), panel.rates.cols())};
  for (Eigen::Index j = 0; j < panel.rates.cols(); ++j) {
    for (Eigen::Index i = 0; i < panel.rates.rows(); ++i) {
      try {
        out.values(i, j) = logit(panel.rates(i, j));
      } catch (const DomainError& e) {
        throw DomainError(std::string(e.what()) + " at week " +
                          week_label(panel.weeks[i]) + ", series " +
                          label(panel.series[j]));
      }
    }
  }
  return out;
}

/// Elementwise inverse logit of a matrix.
inline Eigen::MatrixXd inverse_logit(const Eigen::MatrixXd& values) {
  Eigen::MatrixXd out(values.rows(), values.cols());
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      out(i, j) = inverse_logit(values(i, j));
    }
  }
  return out;
}

/// Back to rate space; `exposures` must match the logit panel's shape.
inline RatePanel rate_panel(const LogitPanel& lp,
                            const Eigen::MatrixXd& exposures) {
  if (exposures.rows() != lp.values.rows() ||
      exposures.cols() != lp.values.cols()) {
    throw DataError("rate_panel: exposure shape does not match logit panel");
  }
  RatePanel out;
  out.weeks = lp.weeks;
  out.series = lp.series;
  out.exposures = exposures;
  out.rates.resize(lp.values.rows(), lp.values.cols());
  for (Eigen::Index j = 0; j < lp.values.cols(); ++j) {
    for (Eigen::Index i = 0; i < lp.values.rows(); ++i) {
      try {
        out.rates(i, j) = inverse_logit(lp.values(i, j));
      } catch (const DomainError& e) {
        throw DomainError(std::string(e.what()) + " at week " +
                          week_label(lp.weeks[i]) + ", series " +
                          label(lp.series[j]));
      }
    }
  }
  return out;
}

}  // namespace mortpca
