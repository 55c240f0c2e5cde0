#pragma once

// Censoring-aware evaluation metrics.

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "sigsurv/cox.hpp"
#include "sigsurv/error.hpp"
#include "sigsurv/step_function.hpp"

namespace sigsurv {

namespace detail {

inline void check_lengths(const SurvivalData& data, std::size_t n, const char* who) {
  if (data.size() != n) throw DimensionError(std::string(who) + ": score vector length differs from outcomes");
}

/// Average ranks (1-based), ties share the mean rank.
inline std::vector<double> average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(n);
  for (std::size_t b = 0; b < n;) {
    std::size_t e = b + 1;
    while (e < n && x[order[e]] == x[order[b]]) ++e;
    const double avg = 0.5 * static_cast<double>(b + 1 + e);
    for (std::size_t k = b; k < e; ++k) r[order[k]] = avg;
    b = e;
  }
  return r;
}

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  /// Number of inserted ranks < i.
  std::size_t prefix(std::size_t i) const {
    std::size_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::size_t> tree_;
};

inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

struct ConcordanceCounts {
  double concordant = 0.0;  ///< ties in risk count 1/2
  double comparable = 0.0;
};

/// Pairs (j, i) with T_j < T_i and delta_j = 1 are comparable; concordant when
/// eta_j > eta_i. O(n log n).
inline ConcordanceCounts concordance_counts(const SurvivalData& data, std::span<const double> eta) {
  detail::check_lengths(data, eta.size(), "concordance_index");
  const std::size_t n = eta.size();
  std::vector<double> sorted_eta(eta.begin(), eta.end());
  std::sort(sorted_eta.begin(), sorted_eta.end());
  sorted_eta.erase(std::unique(sorted_eta.begin(), sorted_eta.end()), sorted_eta.end());
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    rank[i] = static_cast<std::size_t>(std::lower_bound(sorted_eta.begin(), sorted_eta.end(), eta[i]) - sorted_eta.begin());
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return data.time[a] > data.time[b]; });
  detail::Fenwick tree(sorted_eta.size());
  std::size_t inserted = 0;
  ConcordanceCounts c;
  for (std::size_t b = 0; b < n;) {
    std::size_t e = b + 1;
    while (e < n && data.time[order[e]] == data.time[order[b]]) ++e;
    for (std::size_t k = b; k < e; ++k) {
      const auto j = order[k];
      if (!data.event[j]) continue;
      const std::size_t less = tree.prefix(rank[j]);
      const std::size_t equal = tree.prefix(rank[j] + 1) - less;
      c.concordant += static_cast<double>(less) + 0.5 * static_cast<double>(equal);
      c.comparable += static_cast<double>(inserted);
    }
    for (std::size_t k = b; k < e; ++k) tree.add(rank[order[k]]);
    inserted += e - b;
    b = e;
  }
  return c;
}

inline double concordance_index(const SurvivalData& data, std::span<const double> eta) {
  const auto c = concordance_counts(data, eta);
  if (c.comparable == 0.0) throw DegenerateInputError("concordance_index: no comparable pairs");
  return c.concordant / c.comparable;
}

/// Product-limit estimator for the indicator `target` (pass 1 - delta for the
/// censoring distribution). Knots only where the indicator jumps.
inline StepFunction kaplan_meier(std::span<const double> time, std::span<const std::uint8_t> target) {
  if (time.size() != target.size()) throw DimensionError("kaplan_meier: length mismatch");
  const std::size_t n = time.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return time[a] < time[b]; });
  std::vector<double> knots, values;
  double s = 1.0;
  std::size_t at_risk = n;
  for (std::size_t b = 0; b < n;) {
    std::size_t e = b + 1;
    while (e < n && time[order[e]] == time[order[b]]) ++e;
    std::size_t d = 0;
    for (std::size_t k = b; k < e; ++k) d += target[order[k]] ? 1 : 0;
    if (d > 0) {
      s *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
      knots.push_back(time[order[b]]);
      values.push_back(s);
    }
    at_risk -= e - b;
    b = e;
  }
  return StepFunction(1.0, std::move(knots), std::move(values));
}

inline StepFunction kaplan_meier(const SurvivalData& data) { return kaplan_meier(data.time, data.event); }

/// Kaplan-Meier estimate of the censoring survival function G.
inline StepFunction censoring_km(const SurvivalData& data) {
  std::vector<std::uint8_t> reversed(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) reversed[i] = data.event[i] ? 0 : 1;
  return kaplan_meier(data.time, reversed);
}

enum class AucWeighting { unweighted, ipcw };

/// Cases: delta_j = 1 and T_j <= t. Controls: T_i > t. Ties in risk count 1/2.
/// With ipcw weighting each case carries 1 / G(T_j-).
inline double td_auc(const SurvivalData& data, std::span<const double> eta, double t,
                     AucWeighting weighting = AucWeighting::unweighted, const StepFunction* G = nullptr) {
  detail::check_lengths(data, eta.size(), "td_auc");
  if (weighting == AucWeighting::ipcw && !G) throw Error("td_auc: IPCW weighting needs a censoring estimate");
  std::vector<double> controls;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.time[i] > t) controls.push_back(eta[i]);
  }
  std::sort(controls.begin(), controls.end());
  double num = 0.0, den = 0.0;
  std::size_t cases = 0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    if (!(data.event[j] && data.time[j] <= t)) continue;
    double w = 1.0;
    if (weighting == AucWeighting::ipcw) {
      const double g = G->left_limit(data.time[j]);
      if (!(g > 0.0)) continue;
      w = 1.0 / g;
    }
    ++cases;
    const auto lo = std::lower_bound(controls.begin(), controls.end(), eta[j]);
    const auto hi = std::upper_bound(lo, controls.end(), eta[j]);
    num += w * (static_cast<double>(lo - controls.begin()) + 0.5 * static_cast<double>(hi - lo));
    den += w * static_cast<double>(controls.size());
  }
  if (cases == 0 || controls.empty() || den == 0.0) {
    throw DegenerateInputError("td_auc: no cases or no controls at t=" + text::format_double(t));
  }
  return num / den;
}

/// Distinct event times in (tau1, tau2].
inline std::vector<double> event_time_grid(const SurvivalData& data, double tau1, double tau2) {
  std::vector<double> g;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.event[i] && data.time[i] > tau1 && data.time[i] <= tau2) g.push_back(data.time[i]);
  }
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

inline std::vector<double> uniform_grid(double tau1, double tau2, std::size_t points) {
  std::vector<double> g;
  for (std::size_t k = 1; k <= points; ++k) {
    g.push_back(tau1 + (tau2 - tau1) * static_cast<double>(k) / static_cast<double>(points));
  }
  return g;
}

enum class MeanAucReference { event_km, censoring_km };

struct MeanAucOptions {
  AucWeighting weighting = AucWeighting::unweighted;
  MeanAucReference reference = MeanAucReference::event_km;
  const StepFunction* G = nullptr;  ///< censoring estimate for ipcw weighting
};

/// Stieltjes mean of AUC(t) against a Kaplan-Meier curve K over (tau1, tau2]:
/// sum_k AUC(g_k) (K(g_{k-1}) - K(g_k)) / sum of the same masses, g_0 = tau1.
/// The default grid is the set of jump times of K. Grid points where AUC is
/// undefined are skipped together with their mass.
inline double mean_auc(const SurvivalData& data, std::span<const double> eta, double tau1, double tau2,
                       std::span<const double> grid = {}, const MeanAucOptions& opts = {}) {
  if (!(tau1 < tau2)) throw Error("mean_auc: tau1 must be smaller than tau2");
  const StepFunction K = opts.reference == MeanAucReference::event_km ? kaplan_meier(data) : censoring_km(data);
  std::vector<double> g;
  if (grid.empty()) {
    for (double t : K.times()) {
      if (t > tau1 && t <= tau2) g.push_back(t);
    }
  } else {
    g.assign(grid.begin(), grid.end());
  }
  double num = 0.0, mass = 0.0;
  double prev = tau1;
  for (double t : g) {
    const double dk = K(prev) - K(t);
    prev = t;
    if (dk == 0.0) continue;
    double auc;
    try {
      auc = td_auc(data, eta, t, opts.weighting, opts.G);
    } catch (const DegenerateInputError&) {
      continue;
    }
    num += auc * dk;
    mass += dk;
  }
  if (mass == 0.0) throw DegenerateInputError("mean_auc: no Kaplan-Meier mass in the evaluation window");
  return num / mass;
}

struct BrierResult {
  double value = 0.0;
  std::size_t dropped = 0;  ///< terms whose censoring weight was zero
};

/// IPCW Brier score at t. `survival[i]` is the predicted S(t | x_i). Uses
/// G(T_i-) for observed events and G(t) for patients still at risk.
inline BrierResult brier_score(const SurvivalData& data, std::span<const double> survival, double t,
                               const StepFunction& G) {
  detail::check_lengths(data, survival.size(), "brier_score");
  if (data.size() == 0) throw DegenerateInputError("brier_score: empty cohort");
  BrierResult r;
  double sum = 0.0;
  const double g_t = G(t);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double s = survival[i];
    if (s < 0.0 || s > 1.0) throw Error("brier_score: predicted probability outside [0,1]");
    if (data.time[i] <= t) {
      if (!data.event[i]) continue;
      const double g = G.left_limit(data.time[i]);
      if (!(g > 0.0)) {
        ++r.dropped;
        continue;
      }
      sum += s * s / g;
    } else {
      if (!(g_t > 0.0)) {
        ++r.dropped;
        continue;
      }
      sum += (1.0 - s) * (1.0 - s) / g_t;
    }
  }
  r.value = sum / static_cast<double>(data.size());
  return r;
}

/// Predicted S(t | x_i) of patient i.
using SurvivalFn = std::function<double(std::size_t, double)>;

/// Trapezoidal average of BS(t) over [tau1, tau2]; the integration nodes are
/// tau1, the grid points strictly inside, and tau2.
inline double integrated_brier(const SurvivalData& data, const SurvivalFn& survival, double tau1, double tau2,
                               std::span<const double> grid, const StepFunction& G) {
  if (!(tau1 < tau2)) throw Error("integrated_brier: tau1 must be smaller than tau2");
  std::vector<double> nodes{tau1};
  for (double t : grid) {
    if (t > tau1 && t < tau2) nodes.push_back(t);
  }
  nodes.push_back(tau2);
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  std::vector<double> s(data.size());
  std::vector<double> bs;
  for (double t : nodes) {
    for (std::size_t i = 0; i < data.size(); ++i) s[i] = survival(i, t);
    bs.push_back(brier_score(data, s, t, G).value);
  }
  double area = 0.0;
  for (std::size_t k = 1; k < nodes.size(); ++k) area += 0.5 * (bs[k] + bs[k - 1]) * (nodes[k] - nodes[k - 1]);
  return area / (tau2 - tau1);
}

struct JackknifeResult {
  double estimate = 0.0;
  double se = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Leave-one-patient-out jackknife of the C-index with a normal-approximation
/// interval centred at the full-sample estimate.
inline JackknifeResult jackknife_ci(const SurvivalData& data, std::span<const double> eta, double alpha = 0.05) {
  detail::check_lengths(data, eta.size(), "jackknife_ci");
  const std::size_t n = data.size();
  std::vector<double> cnum(n, 0.0), cden(n, 0.0);
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (!data.event[j]) continue;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(data.time[j] < data.time[i])) continue;
      const double s = eta[j] > eta[i] ? 1.0 : (eta[j] == eta[i] ? 0.5 : 0.0);
      cnum[j] += s;
      cnum[i] += s;
      cden[j] += 1.0;
      cden[i] += 1.0;
      num += s;
      den += 1.0;
    }
  }
  if (den == 0.0) throw DegenerateInputError("jackknife_ci: no comparable pairs");
  JackknifeResult r;
  r.estimate = num / den;
  std::vector<double> loo;
  for (std::size_t k = 0; k < n; ++k) {
    if (den - cden[k] > 0.0) loo.push_back((num - cnum[k]) / (den - cden[k]));
  }
  if (loo.size() < 2) {
    r.lo = r.hi = r.estimate;
    return r;
  }
  const double m = static_cast<double>(loo.size());
  const double mean = std::accumulate(loo.begin(), loo.end(), 0.0) / m;
  double ss = 0.0;
  for (double v : loo) ss += (v - mean) * (v - mean);
  r.se = std::sqrt((m - 1.0) / m * ss);
  const double z = boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - alpha / 2.0);
  r.lo = r.estimate - z * r.se;
  r.hi = r.estimate + z * r.se;
  return r;
}

struct CorrelationResult {
  std::size_t n = 0;
  double pearson = 0.0;
  double pearson_p = 1.0;
  double spearman = 0.0;
  double spearman_p = 1.0;
};

namespace detail {

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Two-sided p-value of a correlation coefficient under the t approximation.
inline double correlation_p_value(double r, std::size_t n) {
  if (!std::isfinite(r) || n < 3) return std::numeric_limits<double>::quiet_NaN();
  if (std::abs(r) >= 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  const double t = std::abs(r) * std::sqrt(df / (1.0 - r * r));
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t_distribution<double>(df), t));
}

}  // namespace detail

/// Pearson and Spearman correlation of log T with eta over uncensored patients.
inline CorrelationResult risk_time_correlation(const SurvivalData& data, std::span<const double> eta) {
  detail::check_lengths(data, eta.size(), "risk_time_correlation");
  std::vector<double> lt, e;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.event[i]) {
      lt.push_back(std::log(data.time[i]));
      e.push_back(eta[i]);
    }
  }
  if (lt.size() < 3) throw DegenerateInputError("risk_time_correlation: need at least three uncensored patients");
  CorrelationResult r;
  r.n = lt.size();
  r.pearson = detail::pearson(lt, e);
  r.pearson_p = detail::correlation_p_value(r.pearson, r.n);
  const auto rl = detail::average_ranks(lt);
  const auto re = detail::average_ranks(e);
  r.spearman = detail::pearson(rl, re);
  r.spearman_p = detail::correlation_p_value(r.spearman, r.n);
  return r;
}

struct QuartileStats {
  int quartile = 0;  ///< 1 = lowest predicted risk, 4 = highest
  std::size_t n = 0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  double mean = 0.0;
};

struct QuartileReport {
  std::vector<QuartileStats> groups;
  std::vector<int> assignment;  ///< per patient, 1..4
  double kruskal_h = 0.0;
  double kruskal_p = 1.0;
  double anova_f = 0.0;
  double anova_p = 1.0;
};

/// Risk quartiles (ranked by eta ascending, ties broken by patient order) with
/// log-duration summaries, Kruskal-Wallis H and one-way ANOVA F across groups.
inline QuartileReport risk_quartile_summary(const SurvivalData& data, std::span<const double> eta) {
  detail::check_lengths(data, eta.size(), "risk_quartile_summary");
  const std::size_t n = data.size();
  if (n < 8) throw DegenerateInputError("risk_quartile_summary: need at least eight patients");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return eta[a] < eta[b]; });
  QuartileReport rep;
  rep.assignment.assign(n, 0);
  for (std::size_t r = 0; r < n; ++r) rep.assignment[order[r]] = static_cast<int>(4 * r / n) + 1;

  std::vector<double> logt(n);
  for (std::size_t i = 0; i < n; ++i) logt[i] = std::log(data.time[i]);
  std::vector<std::vector<double>> groups(4);
  for (std::size_t i = 0; i < n; ++i) groups[static_cast<std::size_t>(rep.assignment[i] - 1)].push_back(logt[i]);
  const double grand = std::accumulate(logt.begin(), logt.end(), 0.0) / static_cast<double>(n);
  double ssb = 0.0, ssw = 0.0;
  for (std::size_t q = 0; q < 4; ++q) {
    auto g = groups[q];
    std::sort(g.begin(), g.end());
    QuartileStats s;
    s.quartile = static_cast<int>(q) + 1;
    s.n = g.size();
    s.median = detail::quantile_sorted(g, 0.5);
    s.q25 = detail::quantile_sorted(g, 0.25);
    s.q75 = detail::quantile_sorted(g, 0.75);
    s.mean = std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
    ssb += static_cast<double>(g.size()) * (s.mean - grand) * (s.mean - grand);
    for (double v : g) ssw += (v - s.mean) * (v - s.mean);
    rep.groups.push_back(s);
  }
  const double k = 4.0;
  const double N = static_cast<double>(n);
  if (ssw > 0.0) {
    rep.anova_f = (ssb / (k - 1.0)) / (ssw / (N - k));
    rep.anova_p = boost::math::cdf(boost::math::complement(boost::math::fisher_f_distribution<double>(k - 1.0, N - k),
                                                           rep.anova_f));
  } else {
    rep.anova_f = std::numeric_limits<double>::quiet_NaN();
    rep.anova_p = std::numeric_limits<double>::quiet_NaN();
  }
  const auto ranks = detail::average_ranks(logt);
  std::vector<double> rank_sum(4, 0.0);
  for (std::size_t i = 0; i < n; ++i) rank_sum[static_cast<std::size_t>(rep.assignment[i] - 1)] += ranks[i];
  double h = 0.0;
  for (std::size_t q = 0; q < 4; ++q) h += rank_sum[q] * rank_sum[q] / static_cast<double>(groups[q].size());
  h = 12.0 / (N * (N + 1.0)) * h - 3.0 * (N + 1.0);
  // Tie correction.
  std::vector<double> sorted = logt;
  std::sort(sorted.begin(), sorted.end());
  double ties = 0.0;
  for (std::size_t b = 0; b < n;) {
    std::size_t e = b + 1;
    while (e < n && sorted[e] == sorted[b]) ++e;
    const double t = static_cast<double>(e - b);
    ties += t * t * t - t;
    b = e;
  }
  const double corr = 1.0 - ties / (N * N * N - N);
  if (corr > 0.0) {
    rep.kruskal_h = h / corr;
    rep.kruskal_p = boost::math::cdf(
        boost::math::complement(boost::math::chi_squared_distribution<double>(k - 1.0), std::max(0.0, rep.kruskal_h)));
  } else {
    rep.kruskal_h = std::numeric_limits<double>::quiet_NaN();
    rep.kruskal_p = std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Aggregate report

struct EvaluationOptions {
  double tau1 = 0.0;
  double tau2 = 3650.0;
  std::vector<double> ibs_horizons{1095.0, 1825.0, 3650.0};
  AucWeighting auc_weighting = AucWeighting::unweighted;
  MeanAucReference mean_auc_reference = MeanAucReference::event_km;
  bool uniform_grid = false;
  std::size_t grid_points = 100;
  double alpha = 0.05;
};

struct EvaluationReport {
  std::size_t n_patients = 0;
  std::size_t n_events = 0;
  double c_index = std::numeric_limits<double>::quiet_NaN();
  JackknifeResult c_index_ci;
  double tau2_effective = 0.0;
  std::vector<std::pair<double, double>> td_auc;
  double mean_auc = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::pair<double, double>> brier;
  std::map<double, double> ibs_by_horizon;
  CorrelationResult correlation;
  QuartileReport quartiles;
  std::vector<std::string> warnings;
};

/// Full evaluation of risk scores on one cohort. `survival(i, t)` predicts
/// S(t | x_i); `G` is the censoring survival estimate used for IPCW. Metrics
/// that are undefined on this cohort are left NaN and listed in `warnings`.
inline EvaluationReport evaluate(const SurvivalData& data, std::span<const double> eta, const SurvivalFn& survival,
                                 const StepFunction& G, const EvaluationOptions& opts) {
  detail::check_lengths(data, eta.size(), "evaluate");
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  EvaluationReport rep;
  rep.n_patients = data.size();
  rep.n_events = data.n_events();
  auto guard = [&](const char* what, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      rep.warnings.push_back(std::string(what) + ": " + e.what());
    }
  };
  guard("c_index", [&] {
    rep.c_index_ci = jackknife_ci(data, eta, opts.alpha);
    rep.c_index = concordance_index(data, eta);
  });

  // Clip the window to times that still have patients at risk.
  std::vector<double> times = data.time;
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  const double last_with_controls = times.size() >= 2 ? times[times.size() - 2] : opts.tau1;
  rep.tau2_effective = std::min(opts.tau2, last_with_controls);
  const double tau2 = rep.tau2_effective;

  std::vector<double> grid;
  if (tau2 > opts.tau1) {
    grid = opts.uniform_grid ? uniform_grid(opts.tau1, tau2, opts.grid_points) : event_time_grid(data, opts.tau1, tau2);
  } else {
    rep.warnings.push_back("evaluation window is empty after clipping to the observed range");
  }
  const StepFunction* Gp = opts.auc_weighting == AucWeighting::ipcw ? &G : nullptr;
  std::vector<double> s(data.size());
  for (double t : grid) {
    try {
      rep.td_auc.emplace_back(t, td_auc(data, eta, t, opts.auc_weighting, Gp));
    } catch (const DegenerateInputError&) {
    }
    for (std::size_t i = 0; i < data.size(); ++i) s[i] = survival(i, t);
    rep.brier.emplace_back(t, brier_score(data, s, t, G).value);
  }
  if (tau2 > opts.tau1) {
    guard("mean_auc", [&] {
      MeanAucOptions mo{opts.auc_weighting, opts.mean_auc_reference, Gp};
      rep.mean_auc = mean_auc(data, eta, opts.tau1, tau2, opts.uniform_grid ? std::span<const double>(grid) : std::span<const double>{}, mo);
    });
  }
  for (double h : opts.ibs_horizons) {
    const double end = std::min(h, tau2);
    rep.ibs_by_horizon[h] = nan;
    if (end > opts.tau1) {
      guard("ibs", [&] { rep.ibs_by_horizon[h] = integrated_brier(data, survival, opts.tau1, end, grid, G); });
    }
  }
  rep.correlation.pearson = rep.correlation.spearman = nan;
  rep.correlation.pearson_p = rep.correlation.spearman_p = nan;
  guard("correlation", [&] { rep.correlation = risk_time_correlation(data, eta); });
  guard("quartiles", [&] { rep.quartiles = risk_quartile_summary(data, eta); });
  return rep;
}

}  // namespace sigsurv
