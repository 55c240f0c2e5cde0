#pragma once

// Independent reference implementations used by the tests. Deliberately
// naive: direct quadrature, pair enumeration, Jacobi rotations, dense loops.

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

namespace oracle {

/// Piecewise-linear path through `points` (n x d, row-major), parameterised
/// by s in [0, n-1] with segment k covering [k, k+1].
struct Path {
  std::size_t n = 0, d = 0;
  std::vector<double> points;
  double increment(std::size_t seg, std::size_t ch) const { return points[(seg + 1) * d + ch] - points[seg * d + ch]; }
};

/// Iterated integral over the word w = (i_1..i_k):
///   F_{()}(s) = 1,  F_{w i}(s) = int_0^s F_w(u) dX^i(u).
/// Each level is a polynomial on every segment, so 10-point Gauss-Legendre
/// is exact up to rounding for k <= 3 (degree <= 19).
inline double iterated_integral(const Path& p, const std::vector<std::size_t>& w) {
  using boost::math::quadrature::gauss;
  std::function<double(std::size_t, double)> F = [&](std::size_t len, double s) -> double {
    if (len == 0) return 1.0;
    const std::size_t ch = w[len - 1];
    double total = 0.0;
    for (std::size_t seg = 0; seg + 1 < p.n; ++seg) {
      const double a = static_cast<double>(seg);
      if (s <= a) break;
      const double b = std::min(s, a + 1.0);
      const double dx = p.increment(seg, ch);
      if (dx == 0.0) continue;
      total += dx * gauss<double, 10>::integrate([&](double u) { return F(len - 1, u); }, a, b);
    }
    return total;
  };
  return F(w.size(), static_cast<double>(p.n - 1));
}

/// All words of levels 0..L in level-major lexicographic order.
inline std::vector<double> signature_by_quadrature(const Path& p, std::size_t L) {
  std::vector<double> out{1.0};
  std::vector<std::size_t> w;
  for (std::size_t k = 1; k <= L; ++k) {
    std::size_t count = 1;
    for (std::size_t j = 0; j < k; ++j) count *= p.d;
    for (std::size_t idx = 0; idx < count; ++idx) {
      w.assign(k, 0);
      std::size_t rem = idx;
      for (std::size_t j = k; j-- > 0;) {
        w[j] = rem % p.d;
        rem /= p.d;
      }
      out.push_back(iterated_integral(p, w));
    }
  }
  return out;
}

struct PairCounts {
  double concordant = 0.0;
  double comparable = 0.0;
};

/// All ordered pairs (j, i): comparable when T_j < T_i and delta_j = 1.
inline PairCounts cindex_pairs(const std::vector<double>& T, const std::vector<std::uint8_t>& delta,
                               const std::vector<double>& eta) {
  PairCounts c;
  for (std::size_t j = 0; j < T.size(); ++j) {
    for (std::size_t i = 0; i < T.size(); ++i) {
      if (!(T[j] < T[i] && delta[j])) continue;
      c.comparable += 1.0;
      if (eta[j] > eta[i]) c.concordant += 1.0;
      else if (eta[j] == eta[i]) c.concordant += 0.5;
    }
  }
  return c;
}

/// Unweighted case/control AUC at t: cases delta_j = 1 and T_j <= t, controls T_i > t.
inline double td_auc_pairs(const std::vector<double>& T, const std::vector<std::uint8_t>& delta,
                           const std::vector<double>& eta, double t) {
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < T.size(); ++j) {
    if (!(delta[j] && T[j] <= t)) continue;
    for (std::size_t i = 0; i < T.size(); ++i) {
      if (!(T[i] > t)) continue;
      den += 1.0;
      if (eta[j] > eta[i]) num += 1.0;
      else if (eta[j] == eta[i]) num += 0.5;
    }
  }
  return den > 0.0 ? num / den : std::nan("");
}

/// Product-limit survival at t by direct enumeration of distinct times <= t.
inline double km_at(const std::vector<double>& T, const std::vector<std::uint8_t>& target, double t) {
  std::vector<double> times = T;
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  double s = 1.0;
  for (double u : times) {
    if (u > t) break;
    double at_risk = 0.0, d = 0.0;
    for (std::size_t i = 0; i < T.size(); ++i) {
      if (T[i] >= u) at_risk += 1.0;
      if (T[i] == u && target[i]) d += 1.0;
    }
    if (d > 0.0) s *= 1.0 - d / at_risk;
  }
  return s;
}

/// Eigenvalues (descending) and eigenvectors (columns) of a symmetric matrix
/// by cyclic Jacobi rotations.
struct Eigen {
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;  ///< vectors[k] is the k-th eigenvector
};

inline Eigen jacobi_eigen(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });
  Eigen e;
  for (auto k : order) {
    e.values.push_back(a[k][k]);
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = v[i][k];
    e.vectors.push_back(std::move(col));
  }
  return e;
}

/// Sample covariance (denominator n - 1) of row vectors.
inline std::vector<std::vector<double>> covariance(const std::vector<std::vector<double>>& x) {
  const std::size_t n = x.size(), p = x.front().size();
  std::vector<double> mean(p, 0.0);
  for (const auto& r : x)
    for (std::size_t k = 0; k < p; ++k) mean[k] += r[k] / static_cast<double>(n);
  std::vector<std::vector<double>> c(p, std::vector<double>(p, 0.0));
  for (const auto& r : x)
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = 0; b < p; ++b) c[a][b] += (r[a] - mean[a]) * (r[b] - mean[b]) / static_cast<double>(n - 1);
  return c;
}

/// Negative Cox log partial likelihood with Breslow ties, O(n^2):
///   -sum_{i: delta_i} [ x_i b - log sum_{j: T_j >= T_i} exp(x_j b) ].
inline double cox_neg_loglik(const std::vector<std::vector<double>>& X, const std::vector<double>& T,
                             const std::vector<std::uint8_t>& delta, const std::vector<double>& beta) {
  const std::size_t n = T.size();
  std::vector<double> eta(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < beta.size(); ++k) eta[i] += X[i][k] * beta[k];
  double f = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!delta[i]) continue;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (T[j] >= T[i]) s += std::exp(eta[j]);
    f -= eta[i] - std::log(s);
  }
  return f;
}

/// Central-difference gradient.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double x0 = x[k];
    x[k] = x0 + h;
    const double fp = f(x);
    x[k] = x0 - h;
    const double fm = f(x);
    x[k] = x0;
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace oracle
