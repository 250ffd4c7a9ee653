#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mortpca/error.hpp"
#include "mortpca/transform.hpp"

namespace mortpca {

/// Column-centred principal component decomposition of a logit panel.
///
/// `directions` holds orthonormal component directions in its columns and
/// `scores` = (values - means) * directions. Component 1 is oriented so that
/// its correlation loadings are non-positive: a higher index means lower
/// mortality. Columns are centred but not scaled.
struct PcaDecomposition {
  Eigen::VectorXd column_means;
  Eigen::MatrixXd directions;
  Eigen::MatrixXd scores;
  Eigen::VectorXd singular_values;
  Eigen::VectorXd explained_variance_shares;
  std::vector<std::string> warnings;

  Eigen::Index n_series() const { return column_means.size(); }
  Eigen::Index n_components() const { return directions.cols(); }
};

namespace detail {

inline double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd ac = a.array() - a.mean();
  const Eigen::VectorXd bc = b.array() - b.mean();
  const double denom = std::sqrt(ac.squaredNorm() * bc.squaredNorm());
  if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return ac.dot(bc) / denom;
}

}  // namespace detail

inline PcaDecomposition decompose(const Eigen::MatrixXd& values) {
  const Eigen::Index n_weeks = values.rows();
  const Eigen::Index n_series = values.cols();
  if (n_series == 0 || n_weeks <= n_series) {
    throw DataError("PCA needs more weeks (" + std::to_string(n_weeks) +
                    ") than series (" + std::to_string(n_series) + ")");
  }
  PcaDecomposition d;
  d.column_means = values.colwise().mean().transpose();
  const Eigen::MatrixXd centered = values.rowwise() - d.column_means.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  d.singular_values = svd.singularValues();
  d.directions = svd.matrixV();
  const double total = d.singular_values.squaredNorm();
  if (!(total > 0.0)) throw DataError("logit panel has zero variance");

  // Deterministic orientation: each direction's largest-magnitude entry is
  // positive, then component 1 is flipped to the mortality-index sign.
  for (Eigen::Index k = 0; k < n_series; ++k) {
    Eigen::Index imax = 0;
    d.directions.col(k).cwiseAbs().maxCoeff(&imax);
    if (d.directions(imax, k) < 0.0) d.directions.col(k) *= -1.0;
  }
  d.scores = centered * d.directions;
  double corr_sum = 0.0;
  for (Eigen::Index i = 0; i < n_series; ++i) {
    const double c = detail::pearson(values.col(i), d.scores.col(0));
    if (!std::isnan(c)) corr_sum += c;
  }
  if (corr_sum > 0.0) {
    d.directions.col(0) *= -1.0;
    d.scores.col(0) *= -1.0;
  }

  d.explained_variance_shares = d.singular_values.array().square() / total;
  const double tol = static_cast<double>(std::max(n_weeks, n_series)) *
                     std::numeric_limits<double>::epsilon() *
                     d.singular_values(0);
  Eigen::Index rank = 0;
  for (Eigen::Index k = 0; k < n_series; ++k) {
    if (d.singular_values(k) > tol) ++rank;
  }
  if (rank < n_series) {
    d.warnings.push_back("logit panel is rank-deficient: rank " +
                         std::to_string(rank) + " of " +
                         std::to_string(n_series) +
                         "; trailing components have zero variance");
  }
  return d;
}

inline PcaDecomposition decompose(const LogitPanel& lp) {
  return decompose(lp.values);
}

/// Pearson correlation of each series with each component score series
/// (n_series x n_components). For reporting only. Zero-variance components
/// get loading 0.
inline Eigen::MatrixXd correlation_loadings(const PcaDecomposition& d,
                                            const LogitPanel& lp) {
  if (lp.values.cols() != d.n_series() ||
      lp.values.rows() != d.scores.rows()) {
    throw DataError("correlation_loadings: panel does not match decomposition");
  }
  Eigen::MatrixXd out(d.n_series(), d.n_components());
  for (Eigen::Index i = 0; i < d.n_series(); ++i) {
    const Eigen::VectorXd x = lp.values.col(i);
    if ((x.array() - x.mean()).matrix().squaredNorm() == 0.0) {
      throw DataError("series " + label(lp.series[i]) +
                      " has zero variance; correlation undefined");
    }
    for (Eigen::Index k = 0; k < d.n_components(); ++k) {
      const double c = detail::pearson(x, d.scores.col(k));
      out(i, k) = std::isnan(c) ? 0.0 : c;
    }
  }
  return out;
}

/// Scores of a single week under the fixed baseline decomposition.
inline Eigen::VectorXd project_week(const PcaDecomposition& d,
                                    const Eigen::VectorXd& logit_row) {
  if (logit_row.size() != d.n_series()) {
    throw DataError("project_week: row has " +
                    std::to_string(logit_row.size()) + " entries, expected " +
                    std::to_string(d.n_series()));
  }
  return d.directions.transpose() * (logit_row - d.column_means);
}

/// Logit rows from score rows: scores * directions^T + means.
inline Eigen::MatrixXd reconstruct(const PcaDecomposition& d,
                                   const Eigen::MatrixXd& score_rows) {
  if (score_rows.cols() != d.n_components()) {
    throw DataError("reconstruct: score rows have " +
                    std::to_string(score_rows.cols()) + " columns, expected " +
                    std::to_string(d.n_components()));
  }
  Eigen::MatrixXd out = score_rows * d.directions.transpose();
  out.rowwise() += d.column_means.transpose();
  return out;
}

}  // namespace mortpca
