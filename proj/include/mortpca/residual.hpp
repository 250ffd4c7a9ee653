#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mortpca/error.hpp"
#include "mortpca/rng.hpp"

namespace mortpca {

/// SARIMA(p, d, q)(P, D, Q)_s orders.
struct SarimaSpec {
  int p = 0, d = 1, q = 1;
  int P = 1, D = 0, Q = 0;
  int s = 52;

  friend bool operator==(const SarimaSpec&, const SarimaSpec&) = default;
};

enum class ResidualKind { sarima, random_walk };

inline constexpr const char* kMaSignConvention =
    "theta(B) = 1 + theta_1 B + ...; x_t includes + theta_1 * e_{t-1}";

/// Stochastic model of a component series.
///
/// Polynomials follow phi(B) Phi(B^s) (1-B)^d (1-B^s)^D x_t =
/// theta(B) Theta(B^s) e_t with phi(B) = 1 - sum phi_i B^i and
/// theta(B) = 1 + sum theta_j B^j, so an "- 0.26 e(w-1)" term is
/// ma = {-0.26}. A random walk is (0,1,0) with optional drift.
struct ResidualModel {
  ResidualKind kind = ResidualKind::sarima;
  SarimaSpec spec;
  std::vector<double> ar, ma, seasonal_ar, seasonal_ma;
  double innovation_sd = 0.0;
  double drift = 0.0;
  /// Most recent observations (oldest first), enough for the expanded
  /// autoregressive recursion.
  std::vector<double> history;
  /// Most recent fitted innovations (oldest first) for the MA terms.
  std::vector<double> innovations;
  bool boundary_warning = false;
  int iterations = 0;
};

/// The expanded recursion x_t = c + sum a_i x_{t-i} + e_t + sum m_j e_{t-j}.
struct LinearRecursion {
  std::vector<double> a;  // a[i-1] multiplies x_{t-i}
  std::vector<double> m;  // m[j-1] multiplies e_{t-j}
  double c = 0.0;
};

namespace detail {

using Poly = std::vector<double>;  // coefficients of B^0, B^1, ...

inline Poly poly_mul(const Poly& x, const Poly& y) {
  Poly out(x.size() + y.size() - 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < y.size(); ++j) out[i + j] += x[i] * y[j];
  }
  return out;
}

/// 1 - sum c_i B^{i * stride}
inline Poly ar_poly(const std::vector<double>& c, int stride) {
  Poly out(c.size() * static_cast<std::size_t>(stride) + 1, 0.0);
  out[0] = 1.0;
  for (std::size_t i = 0; i < c.size(); ++i) out[(i + 1) * stride] = -c[i];
  return out;
}

/// 1 + sum c_j B^{j * stride}
inline Poly ma_poly(const std::vector<double>& c, int stride) {
  Poly out(c.size() * static_cast<std::size_t>(stride) + 1, 0.0);
  out[0] = 1.0;
  for (std::size_t i = 0; i < c.size(); ++i) out[(i + 1) * stride] = c[i];
  return out;
}

inline Poly difference_poly(int d, int big_d, int s) {
  Poly out{1.0};
  for (int k = 0; k < d; ++k) out = poly_mul(out, Poly{1.0, -1.0});
  Poly seasonal(static_cast<std::size_t>(s) + 1, 0.0);
  seasonal[0] = 1.0;
  seasonal[s] = -1.0;
  for (int k = 0; k < big_d; ++k) out = poly_mul(out, seasonal);
  return out;
}

inline void trim_trailing_zeros(Poly& p) {
  while (p.size() > 1 && p.back() == 0.0) p.pop_back();
}

/// Maps partial autocorrelations in (-1, 1) to AR coefficients of a
/// stationary polynomial 1 - sum phi_i B^i (Durbin-Levinson).
inline std::vector<double> pacf_to_ar(const std::vector<double>& pacf) {
  std::vector<double> phi;
  for (std::size_t k = 0; k < pacf.size(); ++k) {
    std::vector<double> next(k + 1);
    next[k] = pacf[k];
    for (std::size_t j = 0; j < k; ++j) {
      next[j] = phi[j] - pacf[k] * phi[k - 1 - j];
    }
    phi = std::move(next);
  }
  return phi;
}

/// Inverse of pacf_to_ar (step-down recursion).
inline std::vector<double> ar_to_pacf(std::vector<double> phi) {
  std::vector<double> pacf(phi.size());
  for (std::size_t k = phi.size(); k-- > 0;) {
    const double r = phi[k];
    pacf[k] = r;
    if (k == 0) break;
    const double denom = 1.0 - r * r;
    std::vector<double> prev(k);
    for (std::size_t j = 0; j < k; ++j) {
      prev[j] = (phi[j] + r * phi[k - 1 - j]) / denom;
    }
    phi = std::move(prev);
  }
  return pacf;
}

}  // namespace detail

inline LinearRecursion expand(const ResidualModel& m) {
  using namespace detail;
  LinearRecursion r;
  if (m.kind == ResidualKind::random_walk) {
    r.a = {1.0};
    r.c = m.drift;
    return r;
  }
  const auto& sp = m.spec;
  Poly ar = poly_mul(poly_mul(ar_poly(m.ar, 1), ar_poly(m.seasonal_ar, sp.s)),
                     difference_poly(sp.d, sp.D, sp.s));
  Poly ma = poly_mul(ma_poly(m.ma, 1), ma_poly(m.seasonal_ma, sp.s));
  trim_trailing_zeros(ar);
  trim_trailing_zeros(ma);
  for (std::size_t i = 1; i < ar.size(); ++i) r.a.push_back(-ar[i]);
  for (std::size_t j = 1; j < ma.size(); ++j) r.m.push_back(ma[j]);
  r.c = m.drift;
  return r;
}

namespace detail {

/// Runs the recursion forward `horizon` steps from the stored history with
/// the given future innovations (empty = all zero).
inline std::vector<double> iterate(const ResidualModel& m, int horizon,
                                   const std::vector<double>& future_eps) {
  const auto rec = expand(m);
  const std::size_t la = rec.a.size(), lm = rec.m.size();
  if (m.history.size() < la) {
    throw DataError("residual model history shorter than its recursion");
  }
  std::vector<double> x(m.history.end() - static_cast<std::ptrdiff_t>(la),
                        m.history.end());
  std::vector<double> e(lm, 0.0);
  for (std::size_t j = 0; j < lm && j < m.innovations.size(); ++j) {
    e[lm - 1 - j] = m.innovations[m.innovations.size() - 1 - j];
  }
  std::vector<double> out(static_cast<std::size_t>(horizon));
  for (int h = 0; h < horizon; ++h) {
    const double eps = future_eps.empty() ? 0.0 : future_eps[h];
    double v = rec.c + eps;
    for (std::size_t i = 1; i <= la; ++i) v += rec.a[i - 1] * x[x.size() - i];
    for (std::size_t j = 1; j <= lm; ++j) v += rec.m[j - 1] * e[e.size() - j];
    out[h] = v;
    x.push_back(v);
    e.push_back(eps);
  }
  return out;
}

}  // namespace detail

/// Minimum-MSE point forecast: future innovations at zero, fitted past
/// innovations kept.
inline std::vector<double> forecast_mean(const ResidualModel& m, int horizon) {
  if (horizon <= 0) throw UsageError("forecast horizon must be positive");
  return detail::iterate(m, horizon, {});
}

/// psi weights of the MA(infinity) representation, psi_0 = 1.
inline std::vector<double> psi_weights(const ResidualModel& m, int count) {
  const auto rec = expand(m);
  std::vector<double> psi(static_cast<std::size_t>(count), 0.0);
  for (int j = 0; j < count; ++j) {
    double v = j == 0 ? 1.0 : (j <= static_cast<int>(rec.m.size()) ? rec.m[j - 1] : 0.0);
    for (int i = 1; i <= std::min<int>(j, static_cast<int>(rec.a.size())); ++i) {
      v += rec.a[i - 1] * psi[j - i];
    }
    psi[j] = v;
  }
  return psi;
}

/// h-step forecast variances sd^2 * sum_{j<h} psi_j^2 for h = 1..horizon.
inline std::vector<double> forecast_variance(const ResidualModel& m,
                                             int horizon) {
  if (horizon <= 0) throw UsageError("forecast horizon must be positive");
  const auto psi = psi_weights(m, horizon);
  std::vector<double> out(static_cast<std::size_t>(horizon));
  const double var = m.innovation_sd * m.innovation_sd;
  double acc = 0.0;
  for (int h = 0; h < horizon; ++h) {
    acc += psi[h] * psi[h];
    out[h] = var * acc;
  }
  return out;
}

/// One simulated future path with Gaussian innovations from `rng`.
inline std::vector<double> simulate_path(const ResidualModel& m, int horizon,
                                         Rng& rng) {
  if (horizon <= 0) throw UsageError("forecast horizon must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> eps(static_cast<std::size_t>(horizon));
  for (auto& e : eps) e = m.innovation_sd * normal(rng);
  return detail::iterate(m, horizon, eps);
}

/// Model with the given coefficients and an all-zero past; the starting
/// point for simulating a series from scratch.
inline ResidualModel sarima_model(const SarimaSpec& spec, std::vector<double> ar,
                                  std::vector<double> ma,
                                  std::vector<double> seasonal_ar,
                                  std::vector<double> seasonal_ma, double sd) {
  if (static_cast<int>(ar.size()) != spec.p ||
      static_cast<int>(ma.size()) != spec.q ||
      static_cast<int>(seasonal_ar.size()) != spec.P ||
      static_cast<int>(seasonal_ma.size()) != spec.Q) {
    throw UsageError("coefficient counts do not match the SARIMA orders");
  }
  if (!(sd >= 0.0)) throw UsageError("innovation sd must be non-negative");
  ResidualModel m;
  m.spec = spec;
  m.ar = std::move(ar);
  m.ma = std::move(ma);
  m.seasonal_ar = std::move(seasonal_ar);
  m.seasonal_ma = std::move(seasonal_ma);
  m.innovation_sd = sd;
  const auto rec = expand(m);
  m.history.assign(rec.a.size(), 0.0);
  m.innovations.assign(rec.m.size(), 0.0);
  return m;
}

/// Driftless random walk started at `start`.
inline ResidualModel random_walk_model(double sd, double start = 0.0) {
  if (!(sd >= 0.0)) throw UsageError("innovation sd must be non-negative");
  ResidualModel m;
  m.kind = ResidualKind::random_walk;
  m.spec = SarimaSpec{0, 1, 0, 0, 0, 0, 1};
  m.innovation_sd = sd;
  m.history = {start};
  return m;
}

/// Driftless random walk; innovation sd is the sample standard deviation of
/// the first differences.
inline ResidualModel fit_random_walk(const Eigen::VectorXd& series,
                                     bool with_drift = false) {
  if (series.size() < 20) {
    throw DataError("random walk fit needs at least 20 observations");
  }
  const Eigen::Index n = series.size() - 1;
  const Eigen::VectorXd diff = series.tail(n) - series.head(n);
  const double mean = diff.mean();
  const double var = (diff.array() - mean).square().sum() / double(n - 1);
  const double scale = std::max(1.0, series.cwiseAbs().maxCoeff());
  if (!(std::sqrt(var) > 1e-12 * scale)) {
    throw NumericalError("random walk differences have zero variance");
  }
  ResidualModel m;
  m.kind = ResidualKind::random_walk;
  m.spec = SarimaSpec{0, 1, 0, 0, 0, 0, 1};
  m.innovation_sd = std::sqrt(var);
  m.drift = with_drift ? mean : 0.0;
  m.history = {series(series.size() - 1)};
  return m;
}

struct SarimaFitOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-9;
  /// |partial autocorrelation| above this marks a boundary solution.
  double boundary_pacf = 0.995;
};

namespace detail {

struct CssProblem {
  std::vector<double> y;  // differenced series
  SarimaSpec spec;
  int start = 0;          // first index with all AR lags available

  struct Coefs {
    std::vector<double> ar, ma, sar, sma;
  };

  Coefs unpack(const Eigen::VectorXd& u) const {
    auto take = [&](int offset, int count) {
      std::vector<double> v(static_cast<std::size_t>(count));
      for (int k = 0; k < count; ++k) v[k] = std::tanh(u(offset + k));
      return v;
    };
    Coefs c;
    int o = 0;
    c.ar = pacf_to_ar(take(o, spec.p));
    o += spec.p;
    c.ma = pacf_to_ar(take(o, spec.q));
    for (auto& v : c.ma) v = -v;
    o += spec.q;
    c.sar = pacf_to_ar(take(o, spec.P));
    o += spec.P;
    c.sma = pacf_to_ar(take(o, spec.Q));
    for (auto& v : c.sma) v = -v;
    return c;
  }

  /// One-step innovations; entries before `start` are zero.
  std::vector<double> innovations(const Coefs& c) const {
    Poly ar = poly_mul(ar_poly(c.ar, 1), ar_poly(c.sar, spec.s));
    Poly ma = poly_mul(ma_poly(c.ma, 1), ma_poly(c.sma, spec.s));
    std::vector<std::pair<int, double>> ar_terms, ma_terms;
    for (std::size_t i = 1; i < ar.size(); ++i) {
      if (ar[i] != 0.0) ar_terms.emplace_back(static_cast<int>(i), ar[i]);
    }
    for (std::size_t j = 1; j < ma.size(); ++j) {
      if (ma[j] != 0.0) ma_terms.emplace_back(static_cast<int>(j), ma[j]);
    }
    std::vector<double> e(y.size(), 0.0);
    for (std::size_t t = static_cast<std::size_t>(start); t < y.size(); ++t) {
      double v = y[t];
      for (const auto& [lag, coef] : ar_terms) v += coef * y[t - lag];
      for (const auto& [lag, coef] : ma_terms) {
        if (static_cast<std::size_t>(lag) <= t) v -= coef * e[t - lag];
      }
      e[t] = v;
    }
    return e;
  }

  double objective(const Eigen::VectorXd& u) const {
    const auto e = innovations(unpack(u));
    double ss = 0.0;
    for (std::size_t t = static_cast<std::size_t>(start); t < e.size(); ++t) {
      ss += e[t] * e[t];
    }
    return ss / static_cast<double>(y.size() - start);
  }
};

inline Eigen::VectorXd numeric_gradient(const CssProblem& prob,
                                        const Eigen::VectorXd& u,
                                        double scale) {
  Eigen::VectorXd g(u.size());
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    const double h = 1e-6 * std::max(1.0, std::abs(u(k)));
    Eigen::VectorXd up = u, dn = u;
    up(k) += h;
    dn(k) -= h;
    g(k) = (prob.objective(up) - prob.objective(dn)) / (2.0 * h) / scale;
  }
  return g;
}

}  // namespace detail

/// Conditional-sum-of-squares SARIMA fit.
///
/// The series is differenced by (1-B)^d (1-B^s)^D, then the ARMA
/// coefficients minimise the sum of squared one-step innovations over a
/// partial-autocorrelation parameterisation (stationary AR, invertible MA)
/// with BFGS started from zero coefficients.
inline ResidualModel fit_sarima(const Eigen::VectorXd& series,
                                const SarimaSpec& spec = {},
                                const SarimaFitOptions& options = {}) {
  if (spec.s < 1 || spec.p < 0 || spec.d < 0 || spec.q < 0 || spec.P < 0 ||
      spec.D < 0 || spec.Q < 0) {
    throw UsageError("invalid SARIMA orders");
  }
  if (spec.p > 2 || spec.q > 2 || spec.P > 2 || spec.Q > 2) {
    throw UsageError("SARIMA orders p, q, P, Q are limited to 2");
  }
  const Eigen::Index n = series.size();
  if (n < 4 * spec.s + 20) {
    throw DataError("SARIMA fit needs at least 4s + 20 = " +
                    std::to_string(4 * spec.s + 20) + " observations, got " +
                    std::to_string(n));
  }

  const auto diff = detail::difference_poly(spec.d, spec.D, spec.s);
  const int lost = static_cast<int>(diff.size()) - 1;
  detail::CssProblem prob;
  prob.spec = spec;
  prob.start = spec.p + spec.s * spec.P;
  prob.y.resize(static_cast<std::size_t>(n - lost));
  for (Eigen::Index t = lost; t < n; ++t) {
    double v = 0.0;
    for (std::size_t k = 0; k < diff.size(); ++k) {
      v += diff[k] * series(t - static_cast<Eigen::Index>(k));
    }
    prob.y[static_cast<std::size_t>(t - lost)] = v;
  }
  if (static_cast<int>(prob.y.size()) <= prob.start + 10) {
    throw DataError("too few observations after differencing");
  }
  double y_ss = 0.0;
  for (double v : prob.y) y_ss += v * v;
  const double scale_ref = std::max(1.0, series.squaredNorm() / double(n));
  if (!(y_ss / double(prob.y.size()) > 1e-24 * scale_ref)) {
    throw NumericalError("degenerate variance: differenced series is constant zero");
  }

  const int k = spec.p + spec.q + spec.P + spec.Q;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(k);
  const double scale = y_ss / double(prob.y.size());
  int iterations = 0;
  if (k > 0) {
    // BFGS on the scaled objective with backtracking line search; the
    // unconstrained parameters are bounded to keep |pacf| < tanh(7).
    const double bound = 7.0;
    double f = prob.objective(u) / scale;
    Eigen::VectorXd g = detail::numeric_gradient(prob, u, scale);
    Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(k, k);
    bool converged = g.lpNorm<Eigen::Infinity>() < options.gradient_tolerance;
    while (!converged && iterations < options.max_iterations) {
      ++iterations;
      Eigen::VectorXd dir = -h_inv * g;
      if (dir.dot(g) >= 0.0) {
        h_inv.setIdentity();
        dir = -g;
      }
      double step = 1.0;
      Eigen::VectorXd u_new;
      double f_new = f;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls) {
        u_new = (u + step * dir).cwiseMax(-bound).cwiseMin(bound);
        f_new = prob.objective(u_new) / scale;
        if (f_new <= f + 1e-4 * step * g.dot(dir)) {
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) {
        converged = g.lpNorm<Eigen::Infinity>() < 1e-5;
        break;
      }
      const Eigen::VectorXd g_new = detail::numeric_gradient(prob, u_new, scale);
      const Eigen::VectorXd s_vec = u_new - u;
      const Eigen::VectorXd y_vec = g_new - g;
      const double sy = s_vec.dot(y_vec);
      if (sy > 1e-12 * s_vec.norm() * y_vec.norm()) {
        const double rho = 1.0 / sy;
        const Eigen::MatrixXd ident = Eigen::MatrixXd::Identity(k, k);
        h_inv = (ident - rho * s_vec * y_vec.transpose()) * h_inv *
                    (ident - rho * y_vec * s_vec.transpose()) +
                rho * s_vec * s_vec.transpose();
      }
      const double improvement = f - f_new;
      u = u_new;
      f = f_new;
      g = g_new;
      converged = g.lpNorm<Eigen::Infinity>() < options.gradient_tolerance ||
                  improvement < 1e-15 * std::max(1.0, std::abs(f));
    }
    if (!converged) {
      throw NumericalError("SARIMA CSS did not converge after " +
                           std::to_string(iterations) +
                           " iterations; gradient norm " +
                           std::to_string(g.norm()));
    }
  }

  const auto coefs = prob.unpack(u);
  const auto e = prob.innovations(coefs);
  double ss = 0.0;
  for (std::size_t t = static_cast<std::size_t>(prob.start); t < e.size(); ++t) {
    ss += e[t] * e[t];
  }
  const auto n_eff = static_cast<double>(e.size() - prob.start);

  ResidualModel m;
  m.kind = ResidualKind::sarima;
  m.spec = spec;
  m.ar = coefs.ar;
  m.ma = coefs.ma;
  m.seasonal_ar = coefs.sar;
  m.seasonal_ma = coefs.sma;
  m.innovation_sd = std::sqrt(ss / n_eff);
  m.iterations = iterations;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (std::abs(std::tanh(u(i))) > options.boundary_pacf) {
      m.boundary_warning = true;
    }
  }
  if (!(m.innovation_sd > 0.0)) {
    throw NumericalError("degenerate variance: zero innovation variance");
  }

  const auto rec = expand(m);
  const std::size_t la = std::min<std::size_t>(rec.a.size(), n);
  m.history.assign(series.data() + (n - static_cast<Eigen::Index>(la)),
                   series.data() + n);
  const std::size_t lm = rec.m.size();
  m.innovations.assign(lm, 0.0);
  for (std::size_t j = 0; j < lm && j < e.size(); ++j) {
    m.innovations[lm - 1 - j] = e[e.size() - 1 - j];
  }
  return m;
}

}  // namespace mortpca
