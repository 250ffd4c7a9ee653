#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mortpca/pca.hpp"
#include "mortpca/transform.hpp"

using namespace mortpca;

namespace {

LogitPanel random_logit_panel(Eigen::Index weeks, Eigen::Index series, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  LogitPanel lp;
  lp.values.resize(weeks, series);
  for (Eigen::Index i = 0; i < weeks; ++i) {
    for (Eigen::Index k = 0; k < series; ++k) lp.values(i, k) = -6.0 + normal(rng);
  }
  for (Eigen::Index k = 0; k < series; ++k) {
    lp.series.push_back({"C" + std::to_string(k / 8), k % 8 < 4 ? Sex::male : Sex::female,
                         kAgeGroups[k % 4]});
  }
  WeekCalendar cal;
  for (Eigen::Index i = 0; i < weeks; ++i) lp.weeks.push_back(cal.from_offset(static_cast<int>(i)));
  return lp;
}

}  // namespace

TEST(Logit, KnownValues) {
  EXPECT_EQ(logit(0.5), 0.0);
  EXPECT_NEAR(logit(0.001), -6.906754778648554, 1e-12);
  EXPECT_DOUBLE_EQ(logit(0.2), -logit(0.8));
  EXPECT_EQ(inverse_logit(0.0), 0.5);
  EXPECT_THROW(logit(0.0), DomainError);
  EXPECT_THROW(logit(1.0), DomainError);
  EXPECT_THROW(logit(std::nan("")), DomainError);
  EXPECT_THROW(inverse_logit(INFINITY), DomainError);
}

TEST(Logit, RoundTripOnChosenRates) {
  for (double r : {1e-6, 0.3, 0.999}) EXPECT_NEAR(inverse_logit(logit(r)), r, 1e-12);
}

TEST(Logit, FarNegativeArgumentStaysPositive) {
  const double v = inverse_logit(-700.0);
  const long double oracle = std::exp(-700.0L) / (1.0L + std::exp(-700.0L));
  EXPECT_GT(v, 0.0);
  EXPECT_LT(v, 1e-300);
  EXPECT_NEAR(v / static_cast<double>(oracle), 1.0, 1e-12);
  EXPECT_EQ(inverse_logit(700.0), 1.0);
}

TEST(Logit, MonotoneOnRandomPairs) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(1e-8, 1.0 - 1e-8);
  for (int i = 0; i < 100000; ++i) {
    double a = u(rng), b = u(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    ASSERT_LT(logit(a), logit(b)) << a << ' ' << b;
  }
}

TEST(LogitPanel, ElementwiseAndRoundTrip) {
  RatePanel p;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(1e-6, 0.2);
  p.rates.resize(30, 5);
  p.exposures = Eigen::MatrixXd::Constant(30, 5, 1000.0);
  for (Eigen::Index i = 0; i < 30; ++i) {
    for (Eigen::Index k = 0; k < 5; ++k) p.rates(i, k) = u(rng);
  }
  WeekCalendar cal;
  for (int i = 0; i < 30; ++i) p.weeks.push_back(cal.from_offset(i));
  for (int k = 0; k < 5; ++k) p.series.push_back({"X", Sex::male, kAgeGroups[k % 4]});
  const auto lp = logit_panel(p);
  for (Eigen::Index i = 0; i < 30; ++i) {
    for (Eigen::Index k = 0; k < 5; ++k) {
      ASSERT_NEAR(lp.values(i, k), std::log(p.rates(i, k) / (1.0 - p.rates(i, k))), 1e-12);
    }
  }
  const auto back = rate_panel(lp, p.exposures);
  EXPECT_LT((back.rates - p.rates).cwiseAbs().maxCoeff(), 1e-12);

  RatePanel half = p;
  half.rates.setConstant(0.5);
  EXPECT_EQ(logit_panel(half).values.cwiseAbs().maxCoeff(), 0.0);

  p.rates(7, 3) = 1.0;
  try {
    logit_panel(p);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find(week_label(p.weeks[7])), std::string::npos);
  }
}

TEST(Pca, InvariantsOnRandomPanel) {
  const auto lp = random_logit_panel(500, 40, 1);
  const auto d = decompose(lp);
  const auto n = d.n_components();
  EXPECT_LT((d.directions.transpose() * d.directions - Eigen::MatrixXd::Identity(n, n))
                .cwiseAbs()
                .maxCoeff(),
            1e-10);
  EXPECT_NEAR(d.explained_variance_shares.sum(), 1.0, 1e-12);
  for (Eigen::Index k = 1; k < n; ++k) EXPECT_LE(d.singular_values(k), d.singular_values(k - 1));
  const Eigen::MatrixXd centred = lp.values.rowwise() - d.column_means.transpose();
  EXPECT_NEAR(d.scores.squaredNorm() / centred.squaredNorm(), 1.0, 1e-8);
  // Component 1 loadings are non-positive after orientation, summed.
  const auto load = correlation_loadings(d, lp);
  EXPECT_LE(load.col(0).sum(), 0.0);
}

TEST(Pca, ProjectionAndReconstructionAreInverse) {
  const auto lp = random_logit_panel(300, 24, 8);
  const auto d = decompose(lp);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < lp.values.rows(); ++i) {
    const Eigen::VectorXd row = lp.values.row(i).transpose();
    const Eigen::VectorXd s = project_week(d, row);
    worst = std::max(worst, (s.transpose() - d.scores.row(i)).cwiseAbs().maxCoeff());
    const Eigen::MatrixXd back = reconstruct(d, s.transpose());
    ASSERT_LT((back.transpose() - row).cwiseAbs().maxCoeff(), 1e-10);
  }
  EXPECT_LT(worst, 1e-10);
  EXPECT_LT(project_week(d, d.column_means).cwiseAbs().maxCoeff(), 1e-12);
  const double eps = 0.37;
  const Eigen::VectorXd s1 = project_week(d, d.column_means + eps * d.directions.col(0));
  EXPECT_NEAR(s1(0), eps, 1e-12);
  EXPECT_LT(s1.tail(s1.size() - 1).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(reconstruct(d, Eigen::MatrixXd::Zero(1, d.n_components())).row(0).transpose(),
            d.column_means);
  EXPECT_THROW(project_week(d, Eigen::VectorXd::Zero(3)), DataError);
  EXPECT_THROW(reconstruct(d, Eigen::MatrixXd::Zero(1, 3)), DataError);
}

TEST(Pca, ScorePerturbationMovesAlongDirection) {
  const auto lp = random_logit_panel(120, 10, 4);
  const auto d = decompose(lp);
  Eigen::MatrixXd s = d.scores.topRows(1);
  const Eigen::MatrixXd base = reconstruct(d, s);
  for (Eigen::Index k = 0; k < d.n_components(); ++k) {
    Eigen::MatrixXd t = s;
    t(0, k) += 0.25;
    const Eigen::VectorXd delta = (reconstruct(d, t) - base).row(0).transpose();
    EXPECT_LT((delta - 0.25 * d.directions.col(k)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Pca, DuplicatedSeriesIsRankOne) {
  LogitPanel lp = random_logit_panel(50, 2, 3);
  lp.values.col(1) = lp.values.col(0);
  const auto d = decompose(lp);
  EXPECT_NEAR(d.explained_variance_shares(0), 1.0, 1e-12);
  EXPECT_FALSE(d.warnings.empty());
  const auto load = correlation_loadings(d, lp);
  EXPECT_NEAR(load(0, 0), -1.0, 1e-12);
  EXPECT_NEAR(load(1, 0), -1.0, 1e-12);
  EXPECT_EQ(load(0, 1), 0.0);
}

TEST(Pca, SubspaceIdempotence) {
  const auto lp = random_logit_panel(200, 12, 6);
  const auto d = decompose(lp);
  const auto again = decompose(reconstruct(d, d.scores));
  EXPECT_LT((again.singular_values - d.singular_values).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((again.column_means - d.column_means).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Pca, PlantedFactorShares) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index weeks = 2000, series = 20;
  Eigen::MatrixXd g(series, series);
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = normal(rng);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  Eigen::MatrixXd x(weeks, series);
  const double sd[] = {3.0, 2.0, 1.0};
  x.setZero();
  for (Eigen::Index i = 0; i < weeks; ++i) {
    for (int f = 0; f < 3; ++f) x.row(i) += sd[f] * normal(rng) * q.col(f).transpose();
  }
  const auto d = decompose(x);
  EXPECT_NEAR(d.explained_variance_shares(0), 9.0 / 14.0, 0.02);
  EXPECT_NEAR(d.explained_variance_shares(1), 4.0 / 14.0, 0.02);
  EXPECT_NEAR(d.explained_variance_shares(2), 1.0 / 14.0, 0.02);
}

TEST(Pca, LoadingsMatchPairwiseCorrelationOracle) {
  const auto lp = random_logit_panel(150, 8, 21);
  const auto d = decompose(lp);
  const auto load = correlation_loadings(d, lp);
  const auto n = static_cast<double>(lp.values.rows());
  for (Eigen::Index i = 0; i < 8; ++i) {
    for (Eigen::Index k = 0; k < 8; ++k) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (Eigen::Index t = 0; t < lp.values.rows(); ++t) {
        const double a = lp.values(t, i), b = d.scores(t, k);
        sx += a, sy += b, sxx += a * a, syy += b * b, sxy += a * b;
      }
      const double r = (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
      ASSERT_NEAR(load(i, k), r, 1e-10);
    }
  }
  LogitPanel flat = lp;
  flat.values.col(2).setConstant(-5.0);
  const auto d2 = decompose(flat);
  EXPECT_THROW(correlation_loadings(d2, flat), DataError);
}

TEST(Pca, SignFlipLeavesReconstructionUnchanged) {
  const auto lp = random_logit_panel(100, 6, 2);
  auto d = decompose(lp);
  const Eigen::MatrixXd before = reconstruct(d, d.scores);
  d.directions.col(2) *= -1.0;
  d.scores.col(2) *= -1.0;
  EXPECT_LT((reconstruct(d, d.scores) - before).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Pca, RequiresMoreWeeksThanSeries) {
  EXPECT_THROW(decompose(Eigen::MatrixXd::Random(5, 5)), DataError);
  EXPECT_THROW(decompose(Eigen::MatrixXd::Constant(10, 2, 1.0)), DataError);
}
