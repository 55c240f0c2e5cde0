#pragma once

// LASSO-penalized Cox proportional-hazards model.
//
// Minimizes  F(beta) = f(beta) + lambda * ||beta||_1  with
//   f(beta) = -sum_{i: delta_i = 1} [ x_i beta - log sum_{j: T_j >= T_i} exp(x_j beta) ]
// (Breslow handling of ties; lambda is not scaled by n).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sigsurv/error.hpp"
#include "sigsurv/ingest.hpp"
#include "sigsurv/signature.hpp"
#include "sigsurv/step_function.hpp"
#include "sigsurv/text_io.hpp"

namespace sigsurv {

struct SurvivalData {
  std::vector<double> time;
  std::vector<std::uint8_t> event;

  std::size_t size() const noexcept { return time.size(); }
  std::size_t n_events() const {
    return static_cast<std::size_t>(std::count(event.begin(), event.end(), std::uint8_t{1}));
  }
};

inline SurvivalData survival_data(const Cohort& c) {
  SurvivalData d;
  for (const auto& p : c.patients) {
    d.time.push_back(p.outcome.duration);
    d.event.push_back(p.outcome.event ? 1 : 0);
  }
  return d;
}

inline Eigen::MatrixXd to_matrix(const FeatureMatrix& fm) {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const RowMajor>(fm.values.data(), static_cast<Eigen::Index>(fm.rows()),
                                    static_cast<Eigen::Index>(fm.cols()));
}

/// Smooth part f of the objective, with risk sets precomputed from the times.
class CoxPartialLikelihood {
 public:
  CoxPartialLikelihood(const Eigen::MatrixXd& X, const SurvivalData& data) : X_(X), data_(data) {
    const std::size_t n = data.size();
    if (static_cast<std::size_t>(X.rows()) != n) throw DimensionError("Cox: design rows differ from outcomes");
    for (std::size_t i = 0; i < n; ++i) {
      if (!(data.time[i] > 0.0) || !std::isfinite(data.time[i])) throw Error("Cox: durations must be positive");
      if (data.event[i] > 1) throw Error("Cox: event indicators must be 0 or 1");
    }
    if (!X.allFinite()) throw Error("Cox: design matrix has non-finite entries");
    if (data.n_events() == 0) throw DegenerateInputError("Cox: no events");
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(),
                     [&](std::size_t a, std::size_t b) { return data.time[a] > data.time[b]; });
    // Tie groups in descending time.
    for (std::size_t b = 0; b < n;) {
      std::size_t e = b + 1;
      while (e < n && data.time[order_[e]] == data.time[order_[b]]) ++e;
      group_end_.push_back(e);
      b = e;
    }
  }

  std::size_t n_features() const noexcept { return static_cast<std::size_t>(X_.cols()); }
  const Eigen::MatrixXd& design() const noexcept { return X_; }

  /// f evaluated from linear predictors; +inf when a risk-set sum underflows.
  double value_from_eta(const Eigen::VectorXd& eta) const {
    const double m = eta.maxCoeff();
    double s0 = 0.0;
    double loss = 0.0;
    std::size_t b = 0;
    for (const auto e : group_end_) {
      for (std::size_t k = b; k < e; ++k) s0 += std::exp(eta(static_cast<Eigen::Index>(order_[k])) - m);
      if (!(s0 > 0.0) || !std::isfinite(s0)) return std::numeric_limits<double>::infinity();
      const double log_s0 = std::log(s0) + m;
      for (std::size_t k = b; k < e; ++k) {
        const auto i = order_[k];
        if (data_.event[i]) loss += log_s0 - eta(static_cast<Eigen::Index>(i));
      }
      b = e;
    }
    return loss;
  }

  double value(const Eigen::VectorXd& beta) const { return value_from_eta(X_ * beta); }

  /// Returns f(beta) and writes its gradient X^T c, where
  /// c_j = w_j * sum_{events i: T_i <= T_j} 1 / S0(T_i) - delta_j.
  double value_and_gradient(const Eigen::VectorXd& beta, Eigen::VectorXd& grad) const {
    const Eigen::VectorXd eta = X_ * beta;
    const double m = eta.maxCoeff();
    const std::size_t n = order_.size();
    Eigen::VectorXd w(static_cast<Eigen::Index>(n));
    std::vector<double> s0_group(group_end_.size());
    double s0 = 0.0;
    double loss = 0.0;
    std::size_t b = 0;
    for (std::size_t g = 0; g < group_end_.size(); ++g) {
      const auto e = group_end_[g];
      for (std::size_t k = b; k < e; ++k) {
        const auto i = static_cast<Eigen::Index>(order_[k]);
        w(i) = std::exp(eta(i) - m);
        s0 += w(i);
      }
      if (!(s0 > 0.0) || !std::isfinite(s0)) {
        grad.setConstant(static_cast<Eigen::Index>(n_features()), std::numeric_limits<double>::quiet_NaN());
        return std::numeric_limits<double>::infinity();
      }
      s0_group[g] = s0;
      const double log_s0 = std::log(s0) + m;
      for (std::size_t k = b; k < e; ++k) {
        const auto i = order_[k];
        if (data_.event[i]) loss += log_s0 - eta(static_cast<Eigen::Index>(i));
      }
      b = e;
    }
    // Ascending time: accumulate d_g / S0_g.
    Eigen::VectorXd c(static_cast<Eigen::Index>(n));
    double acc = 0.0;
    for (std::size_t g = group_end_.size(); g-- > 0;) {
      const std::size_t gb = g == 0 ? 0 : group_end_[g - 1];
      const std::size_t ge = group_end_[g];
      std::size_t d = 0;
      for (std::size_t k = gb; k < ge; ++k) d += data_.event[order_[k]];
      acc += static_cast<double>(d) / s0_group[g];
      for (std::size_t k = gb; k < ge; ++k) {
        const auto i = static_cast<Eigen::Index>(order_[k]);
        c(i) = w(i) * acc - static_cast<double>(data_.event[order_[k]]);
      }
    }
    grad = X_.transpose() * c;
    return loss;
  }

  /// f, gradient and Hessian
  ///   H = X^T diag(w * A) X - sum_g d_g mu_g mu_g^T,
  /// A_j = sum_{event groups g: T_g <= T_j} d_g / S0_g, mu_g = S1_g / S0_g.
  double value_gradient_hessian(const Eigen::VectorXd& beta, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const {
    const double loss = value_and_gradient(beta, grad);
    if (!std::isfinite(loss)) return loss;
    const Eigen::VectorXd eta = X_ * beta;
    const double m = eta.maxCoeff();
    const auto n = static_cast<Eigen::Index>(order_.size());
    const auto p = X_.cols();
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) w(i) = std::exp(eta(i) - m);
    // Risk-set moments in descending time; rows of M are sqrt(d_g) mu_g.
    std::vector<double> s0_group(group_end_.size());
    std::vector<std::size_t> d_group(group_end_.size());
    Eigen::MatrixXd M(static_cast<Eigen::Index>(group_end_.size()), p);
    Eigen::RowVectorXd s1 = Eigen::RowVectorXd::Zero(p);
    double s0 = 0.0;
    Eigen::Index rows = 0;
    std::size_t b = 0;
    for (std::size_t g = 0; g < group_end_.size(); ++g) {
      std::size_t d = 0;
      for (std::size_t k = b; k < group_end_[g]; ++k) {
        const auto i = static_cast<Eigen::Index>(order_[k]);
        s0 += w(i);
        s1.noalias() += w(i) * X_.row(i);
        d += data_.event[order_[k]];
      }
      s0_group[g] = s0;
      d_group[g] = d;
      if (d > 0) M.row(rows++) = (std::sqrt(static_cast<double>(d)) / s0) * s1;
      b = group_end_[g];
    }
    Eigen::VectorXd a(n);
    double acc = 0.0;
    for (std::size_t g = group_end_.size(); g-- > 0;) {
      const std::size_t gb = g == 0 ? 0 : group_end_[g - 1];
      acc += static_cast<double>(d_group[g]) / s0_group[g];
      for (std::size_t k = gb; k < group_end_[g]; ++k) {
        const auto i = static_cast<Eigen::Index>(order_[k]);
        a(i) = w(i) * acc;
      }
    }
    const Eigen::MatrixXd WX = a.asDiagonal() * X_;
    hess.noalias() = X_.transpose() * WX;
    hess.noalias() -= M.topRows(rows).transpose() * M.topRows(rows);
    return loss;
  }

 private:
  const Eigen::MatrixXd& X_;
  const SurvivalData& data_;
  std::vector<std::size_t> order_;      // indices by descending time
  std::vector<std::size_t> group_end_;  // exclusive ends of tie groups in order_
};

/// -log PL(beta) + lambda * ||beta||_1, computed with max-subtraction.
inline double neg_penalized_loglik(const Eigen::VectorXd& beta, const Eigen::MatrixXd& X, const SurvivalData& data,
                                   double lambda) {
  if (beta.size() != X.cols()) throw DimensionError("neg_penalized_loglik: beta length differs from design width");
  const CoxPartialLikelihood f(X, data);
  const double v = f.value(beta);
  if (!std::isfinite(v)) throw Error("neg_penalized_loglik: non-finite intermediate");
  return v + lambda * beta.lpNorm<1>();
}

/// Gradient of the smooth part.
inline Eigen::VectorXd neg_loglik_gradient(const Eigen::VectorXd& beta, const Eigen::MatrixXd& X,
                                           const SurvivalData& data) {
  const CoxPartialLikelihood f(X, data);
  Eigen::VectorXd g;
  if (!std::isfinite(f.value_and_gradient(beta, g))) throw Error("neg_loglik_gradient: non-finite intermediate");
  return g;
}

/// Largest violation of the subgradient optimality conditions.
inline double kkt_residual(const Eigen::VectorXd& beta, const Eigen::VectorXd& grad, double lambda) {
  double r = 0.0;
  for (Eigen::Index k = 0; k < beta.size(); ++k) {
    const double v = beta(k) == 0.0 ? std::max(0.0, std::abs(grad(k)) - lambda)
                                    : std::abs(grad(k) + lambda * (beta(k) > 0.0 ? 1.0 : -1.0));
    r = std::max(r, v);
  }
  return r;
}

/// proximal_newton: proximal steps in the local Hessian metric with an
/// Armijo-type line search; fista: Euclidean proximal gradient with
/// backtracking and optional acceleration.
enum class CoxSolver { proximal_newton, fista };

struct CoxFitConfig {
  double lambda = 0.0;
  CoxSolver solver = CoxSolver::proximal_newton;
  int max_iters = 10000;
  double tol = 1e-9;  ///< relative objective change that triggers the optimality check
  bool standardize = true;
  double kkt_tol = 1e-7;
  bool accelerate = true;
  bool record_objective = false;
  /// Throw ConvergenceError instead of returning an unconverged model.
  bool require_convergence = false;
};

struct CoxFitInfo {
  int iterations = 0;
  bool converged = false;
  double kkt_residual = 0.0;  ///< in the optimized (standardized) coordinates
  double objective = 0.0;
  std::vector<double> objective_trace;
  std::vector<std::size_t> dropped_columns;  ///< zero-variance columns, coefficient fixed at 0
};

struct CoxModel {
  std::vector<std::string> feature_names;
  std::vector<double> beta;  ///< original feature units
  double lambda = 0.0;
  bool standardized = false;
  std::vector<double> column_mean;
  std::vector<double> column_scale;  ///< 0 for dropped columns
  StepFunction baseline;             ///< cumulative baseline hazard H0
  CoxFitInfo info;

  std::size_t n_nonzero() const {
    return static_cast<std::size_t>(std::count_if(beta.begin(), beta.end(), [](double b) { return b != 0.0; }));
  }
};

namespace detail {

inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

struct LassoSolution {
  Eigen::VectorXd beta;
  CoxFitInfo info;
};

/// Monotone accelerated proximal gradient (FISTA with backtracking, adaptive
/// restart and a non-increasing objective sequence).
inline LassoSolution solve_fista(const CoxPartialLikelihood& f, const CoxFitConfig& cfg) {
  const auto m = static_cast<Eigen::Index>(f.n_features());
  const double lambda = cfg.lambda;
  LassoSolution sol;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd y = x, z(m), gy(m), gx(m), x_new(m);
  double Fx = f.value(x);
  if (!std::isfinite(Fx)) throw Error("fit_cox_lasso: non-finite objective at beta = 0");
  if (cfg.record_objective) sol.info.objective_trace.push_back(Fx);
  double L = 1.0;
  double t = 1.0;
  double kkt = std::numeric_limits<double>::infinity();
  int it = 0;
  while (it < cfg.max_iters) {
    ++it;
    const double fy = f.value_and_gradient(y, gy);
    double fz = 0.0;
    for (int bt = 0;; ++bt) {
      for (Eigen::Index k = 0; k < m; ++k) z(k) = soft_threshold(y(k) - gy(k) / L, lambda / L);
      fz = f.value(z);
      const Eigen::VectorXd diff = z - y;
      const double model = fy + gy.dot(diff) + 0.5 * L * diff.squaredNorm();
      if (std::isfinite(fz) && fz <= model + 1e-12 * std::abs(fy)) break;
      L *= 2.0;
      if (bt > 200) throw Error("fit_cox_lasso: line search failed");
    }
    const double Fz = fz + lambda * z.lpNorm<1>();
    const bool improved = Fz <= Fx;
    x_new = improved ? z : x;
    const double Fx_new = improved ? Fz : Fx;
    if (cfg.accelerate) {
      // Restart when the step did not descend or momentum points uphill.
      if (!improved || (y - z).dot(z - x) > 0.0) {
        t = 1.0;
        y = x_new;
      } else {
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = z + ((t - 1.0) / t_next) * (z - x);
        t = t_next;
      }
    } else {
      y = x_new;
    }
    const double rel = std::abs(Fx - Fx_new) / std::max(1.0, std::abs(Fx_new));
    x.swap(x_new);
    Fx = Fx_new;
    if (cfg.record_objective) sol.info.objective_trace.push_back(Fx);
    L *= 0.9;
    if (rel < cfg.tol || it % 10 == 0) {
      f.value_and_gradient(x, gx);
      kkt = kkt_residual(x, gx, lambda);
      if (kkt <= cfg.kkt_tol) {
        sol.info.converged = true;
        break;
      }
      if (rel < cfg.tol) break;
    }
  }
  // Near the optimum objective differences drown in rounding, so finish with
  // proximal-gradient steps whose step size is validated on gradient
  // differences (still accurate there) instead of function values.
  L /= 0.9;
  Eigen::VectorXd gz(m);
  for (int bt = 0; !sol.info.converged && it < cfg.max_iters && bt < 60;) {
    ++it;
    for (Eigen::Index k = 0; k < m; ++k) z(k) = soft_threshold(x(k) - gx(k) / L, lambda / L);
    const double dn = (z - x).norm();
    if (dn == 0.0) break;
    const double fz = f.value_and_gradient(z, gz);
    const double curvature = (gz - gx).norm() / dn;
    if (!std::isfinite(fz) || curvature > L) {
      L = std::max(2.0 * L, curvature);
      ++bt;
      continue;
    }
    x = z;
    gx = gz;
    kkt = kkt_residual(x, gx, lambda);
    Fx = fz + lambda * x.lpNorm<1>();
    if (cfg.record_objective) sol.info.objective_trace.push_back(Fx);
    sol.info.converged = kkt <= cfg.kkt_tol;
  }
  if (!sol.info.converged) {
    f.value_and_gradient(x, gx);
    kkt = kkt_residual(x, gx, lambda);
    sol.info.converged = kkt <= cfg.kkt_tol;
  }
  sol.info.iterations = it;
  sol.info.kkt_residual = kkt;
  sol.info.objective = Fx;
  sol.beta = std::move(x);
  return sol;
}

/// Minimizes g.d + 0.5 d^T H d + lambda ||x + d||_1 over d. Written in
/// z = x + d: min c.z + 0.5 z^T H z + lambda ||z||_1 with c = g - H x, solved
/// by feature-sign search (active set with sign-consistent exact solves),
/// warm-started from the support of x. Cyclic coordinate descent polishes the
/// result if the step budget runs out.
inline Eigen::VectorXd newton_direction(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Eigen::MatrixXd& H,
                                        double lambda) {
  const auto m = x.size();
  Eigen::MatrixXd Hr = H;
  const double ridge = 1e-10 * std::max(1.0, H.diagonal().maxCoeff());
  Hr.diagonal().array() += ridge;
  const Eigen::VectorXd c = g - Hr * x;
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  const double tol = 1e-11 * scale;
  auto objective = [&](const Eigen::VectorXd& v) { return c.dot(v) + 0.5 * v.dot(Hr * v) + lambda * v.lpNorm<1>(); };
  auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };

  Eigen::VectorXd z = x;
  Eigen::VectorXd theta = z.unaryExpr(sign);
  Eigen::VectorXd grad = c + Hr * z;
  bool done = false;
  const int budget = 4 * static_cast<int>(m) + 50;
  for (int step = 0; step < budget; ++step) {
    bool active_ok = true;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (theta(k) != 0.0 && std::abs(grad(k) + lambda * theta(k)) > tol) active_ok = false;
    }
    if (active_ok) {
      Eigen::Index worst = -1;
      double worst_v = lambda + tol;
      for (Eigen::Index k = 0; k < m; ++k) {
        if (theta(k) == 0.0 && std::abs(grad(k)) > worst_v) {
          worst_v = std::abs(grad(k));
          worst = k;
        }
      }
      if (worst < 0) {
        done = true;
        break;
      }
      theta(worst) = -sign(grad(worst));
    }
    // Feature-sign step: exact minimizer with the signs held fixed, then the
    // best point along the segment among the zero crossings.
    std::vector<Eigen::Index> A;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (theta(k) != 0.0) A.push_back(k);
    }
    const auto na = static_cast<Eigen::Index>(A.size());
    Eigen::MatrixXd HA(na, na);
    Eigen::VectorXd rhs(na);
    for (Eigen::Index i = 0; i < na; ++i) {
      rhs(i) = -(c(A[i]) + lambda * theta(A[i]));
      for (Eigen::Index j = 0; j < na; ++j) HA(i, j) = Hr(A[i], A[j]);
    }
    const Eigen::VectorXd zA = HA.ldlt().solve(rhs);
    if (!zA.allFinite()) break;
    Eigen::VectorXd target = Eigen::VectorXd::Zero(m);
    for (Eigen::Index i = 0; i < na; ++i) target(A[i]) = zA(i);
    Eigen::VectorXd best = target;
    double best_obj = objective(target);
    for (Eigen::Index k : A) {
      if (z(k) != 0.0 && sign(target(k)) != sign(z(k))) {
        const double t = z(k) / (z(k) - target(k));
        Eigen::VectorXd cand = z + t * (target - z);
        cand(k) = 0.0;
        const double o = objective(cand);
        if (o < best_obj) {
          best_obj = o;
          best = std::move(cand);
        }
      }
    }
    if (!(best_obj <= objective(z) + tol)) break;
    z = std::move(best);
    theta = z.unaryExpr(sign);
    grad = c + Hr * z;
  }
  if (!done) {
    for (int sweep = 0; sweep < 500; ++sweep) {
      double max_change = 0.0;
      for (Eigen::Index k = 0; k < m; ++k) {
        const double h = Hr(k, k);
        const double nz = soft_threshold(z(k) - grad(k) / h, lambda / h);
        const double delta = nz - z(k);
        if (delta != 0.0) {
          z(k) = nz;
          grad.noalias() += delta * Hr.col(k);
          max_change = std::max(max_change, std::abs(delta) * std::sqrt(h));
        }
      }
      if (max_change < 1e-13) break;
    }
  }
  return z - x;
}

inline LassoSolution solve_prox_newton(const CoxPartialLikelihood& f, const CoxFitConfig& cfg) {
  const auto m = static_cast<Eigen::Index>(f.n_features());
  const double lambda = cfg.lambda;
  LassoSolution sol;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(m), g(m), trial(m);
  Eigen::MatrixXd H(m, m);
  const double f0 = f.value_gradient_hessian(x, g, H);
  if (!std::isfinite(f0)) throw Error("fit_cox_lasso: non-finite objective at beta = 0");
  double Fx = f0;
  if (cfg.record_objective) sol.info.objective_trace.push_back(Fx);
  double kkt = kkt_residual(x, g, lambda);
  int it = 0, flat = 0;
  bool stalled = false;
  while (kkt > cfg.kkt_tol && it < cfg.max_iters) {
    ++it;
    const Eigen::VectorXd d = newton_direction(x, g, H, lambda);
    const double decrease = g.dot(d) + lambda * ((x + d).lpNorm<1>() - x.lpNorm<1>());
    if (!(decrease < 0.0)) break;  // no descent direction left at working precision
    double step = 1.0;
    double Ft = 0.0;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      trial = x + step * d;
      const double ft = f.value(trial);
      Ft = ft + lambda * trial.lpNorm<1>();
      if (std::isfinite(Ft) && Ft <= Fx + 1e-4 * step * decrease) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    x.swap(trial);
    const double rel = (Fx - Ft) / std::max(1.0, std::abs(Ft));
    Fx = Ft;
    if (cfg.record_objective) sol.info.objective_trace.push_back(Fx);
    f.value_gradient_hessian(x, g, H);
    kkt = kkt_residual(x, g, lambda);
    // Objective pinned at rounding level: the residual cannot shrink further.
    flat = rel < cfg.tol ? flat + 1 : 0;
    if (flat >= 3) {
      stalled = true;
      break;
    }
  }
  // Line search exhausted at rounding level: keep taking Newton steps as long
  // as they shrink the KKT residual, which stays accurate where F does not.
  for (int polish = 0; kkt > cfg.kkt_tol && polish < 20 && it < cfg.max_iters; ++polish) {
    ++it;
    const Eigen::VectorXd d = newton_direction(x, g, H, lambda);
    Eigen::VectorXd gt(m);
    Eigen::MatrixXd Ht(m, m);
    bool improved = false;
    for (double step = 1.0; step > 1e-3; step *= 0.5) {
      trial = x + step * d;
      const double ft = f.value_gradient_hessian(trial, gt, Ht);
      const double kt = kkt_residual(trial, gt, lambda);
      if (std::isfinite(ft) && kt < kkt) {
        x.swap(trial);
        g.swap(gt);
        H.swap(Ht);
        kkt = kt;
        Fx = ft + lambda * x.lpNorm<1>();
        if (cfg.record_objective) sol.info.objective_trace.push_back(Fx);
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  // A stalled run counts when the residual is small relative to the objective scale.
  sol.info.converged = kkt <= cfg.kkt_tol || (stalled && kkt <= cfg.kkt_tol * std::max(1.0, std::abs(Fx)));
  sol.info.iterations = it;
  sol.info.kkt_residual = kkt;
  sol.info.objective = Fx;
  sol.beta = std::move(x);
  return sol;
}

inline LassoSolution solve_cox_lasso(const CoxPartialLikelihood& f, const CoxFitConfig& cfg) {
  return cfg.solver == CoxSolver::fista ? solve_fista(f, cfg) : solve_prox_newton(f, cfg);
}

}  // namespace detail

/// Breslow estimate of the cumulative baseline hazard:
/// H0(t) = sum_{event times s <= t} d(s) / sum_{j: T_j >= s} exp(eta_j).
inline StepFunction breslow_baseline(std::span<const double> eta, const SurvivalData& data) {
  const std::size_t n = data.size();
  if (eta.size() != n) throw DimensionError("breslow_baseline: risk scores differ in length from outcomes");
  if (n == 0) return StepFunction(0.0, {}, {});
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return data.time[a] > data.time[b]; });
  const double shift = *std::max_element(eta.begin(), eta.end());
  std::vector<double> times, jumps;
  double s0 = 0.0;
  for (std::size_t b = 0; b < n;) {
    std::size_t e = b + 1;
    while (e < n && data.time[order[e]] == data.time[order[b]]) ++e;
    std::size_t d = 0;
    for (std::size_t k = b; k < e; ++k) {
      s0 += std::exp(eta[order[k]] - shift);
      d += data.event[order[k]];
    }
    if (d > 0) {
      times.push_back(data.time[order[b]]);
      jumps.push_back(static_cast<double>(d) / s0 * std::exp(-shift));
    }
    b = e;
  }
  std::reverse(times.begin(), times.end());
  std::reverse(jumps.begin(), jumps.end());
  std::partial_sum(jumps.begin(), jumps.end(), jumps.begin());
  return StepFunction(0.0, std::move(times), std::move(jumps));
}

inline double risk_score(const CoxModel& model, std::span<const double> row) {
  if (row.size() != model.beta.size()) {
    throw DimensionError("risk_score: row has " + std::to_string(row.size()) + " features, model expects " +
                         std::to_string(model.beta.size()));
  }
  double eta = 0.0;
  for (std::size_t k = 0; k < row.size(); ++k) eta += row[k] * model.beta[k];
  return eta;
}

inline std::vector<double> risk_scores(const CoxModel& model, const FeatureMatrix& fm) {
  std::vector<double> out;
  out.reserve(fm.rows());
  for (std::size_t i = 0; i < fm.rows(); ++i) out.push_back(risk_score(model, fm.row(i)));
  return out;
}

/// S(t | x) = exp(-H0(t) exp(eta)).
inline double survival_from_risk(const CoxModel& model, double eta, double t) {
  if (t < 0.0) throw Error("predict_survival: t must be non-negative");
  return std::exp(-model.baseline(t) * std::exp(eta));
}

inline double predict_survival(const CoxModel& model, std::span<const double> row, double t) {
  return survival_from_risk(model, risk_score(model, row), t);
}

/// Fits the model from beta = 0. Zero-variance columns are dropped (their
/// coefficient stays 0 and their index is listed in info.dropped_columns).
inline CoxModel fit_cox_lasso(const Eigen::MatrixXd& X, const SurvivalData& data, const CoxFitConfig& cfg,
                              std::vector<std::string> feature_names = {}) {
  if (!(cfg.lambda >= 0.0)) throw Error("fit_cox_lasso: lambda must be non-negative");
  if (!(cfg.tol > 0.0)) throw Error("fit_cox_lasso: tol must be positive");
  if (cfg.max_iters < 1) throw Error("fit_cox_lasso: max_iters must be positive");
  const auto n = X.rows();
  const auto m = X.cols();
  if (static_cast<std::size_t>(n) != data.size()) throw DimensionError("fit_cox_lasso: design rows differ from outcomes");
  if (!feature_names.empty() && feature_names.size() != static_cast<std::size_t>(m)) {
    throw DimensionError("fit_cox_lasso: feature name count differs from design width");
  }
  if (n < 2) throw DegenerateInputError("fit_cox_lasso: need at least two patients");

  CoxModel model;
  model.lambda = cfg.lambda;
  model.standardized = cfg.standardize;
  model.feature_names = std::move(feature_names);
  if (model.feature_names.empty()) {
    for (Eigen::Index k = 0; k < m; ++k) model.feature_names.push_back("x" + std::to_string(k));
  }
  model.column_mean.assign(static_cast<std::size_t>(m), 0.0);
  model.column_scale.assign(static_cast<std::size_t>(m), 0.0);
  std::vector<Eigen::Index> kept;
  for (Eigen::Index k = 0; k < m; ++k) {
    const double mean = X.col(k).mean();
    const double sd = std::sqrt((X.col(k).array() - mean).square().mean());
    model.column_mean[static_cast<std::size_t>(k)] = mean;
    if (sd > 1e-12 * (1.0 + std::abs(mean))) {
      model.column_scale[static_cast<std::size_t>(k)] = cfg.standardize ? sd : 1.0;
      kept.push_back(k);
    } else {
      model.info.dropped_columns.push_back(static_cast<std::size_t>(k));
    }
  }
  if (kept.empty()) throw DegenerateInputError("fit_cox_lasso: every feature column has zero variance");

  Eigen::MatrixXd Z(n, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) {
    const auto k = kept[j];
    const auto jj = static_cast<Eigen::Index>(j);
    if (cfg.standardize) {
      Z.col(jj) = (X.col(k).array() - model.column_mean[static_cast<std::size_t>(k)]) /
                  model.column_scale[static_cast<std::size_t>(k)];
    } else {
      Z.col(jj) = X.col(k);
    }
  }
  const CoxPartialLikelihood f(Z, data);
  auto sol = detail::solve_cox_lasso(f, cfg);
  if (!sol.info.converged && cfg.require_convergence) {
    throw ConvergenceError("fit_cox_lasso: no convergence after " + std::to_string(sol.info.iterations) +
                               " iterations (KKT violation " + text::format_double(sol.info.kkt_residual) + ")",
                           sol.info.kkt_residual);
  }
  model.beta.assign(static_cast<std::size_t>(m), 0.0);
  for (std::size_t j = 0; j < kept.size(); ++j) {
    const auto k = static_cast<std::size_t>(kept[j]);
    model.beta[k] = sol.beta(static_cast<Eigen::Index>(j)) / model.column_scale[k];
  }
  auto dropped = std::move(model.info.dropped_columns);
  model.info = std::move(sol.info);
  model.info.dropped_columns = std::move(dropped);

  std::vector<double> eta(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) acc += X(i, k) * model.beta[static_cast<std::size_t>(k)];
    eta[static_cast<std::size_t>(i)] = acc;
  }
  model.baseline = breslow_baseline(eta, data);
  return model;
}

inline CoxModel fit_cox_lasso(const FeatureMatrix& fm, const SurvivalData& data, const CoxFitConfig& cfg) {
  return fit_cox_lasso(to_matrix(fm), data, cfg, fm.column_names);
}

/// Versioned text model file; coefficients stored sparsely.
///
///   sigsurv-cox v1
///   lambda <x>
///   standardized <0|1>
///   n_features <m>
///   feature <index> <name> <mean> <scale>     (m lines)
///   coef <index> <value>                      (nonzero coefficients)
///   baseline <time> <cumulative hazard>       (one per knot)
///   fit <iterations> <converged 0|1> <kkt residual>
///   end
inline std::string serialize(const CoxModel& model) {
  using text::format_double;
  std::string s = "sigsurv-cox v1\nlambda " + format_double(model.lambda) + "\nstandardized " +
                  (model.standardized ? "1" : "0") + "\nn_features " + std::to_string(model.beta.size()) + "\n";
  for (std::size_t k = 0; k < model.beta.size(); ++k) {
    s += "feature " + std::to_string(k) + " " + model.feature_names[k] + " " + format_double(model.column_mean[k]) +
         " " + format_double(model.column_scale[k]) + "\n";
  }
  for (std::size_t k = 0; k < model.beta.size(); ++k) {
    if (model.beta[k] != 0.0) s += "coef " + std::to_string(k) + " " + format_double(model.beta[k]) + "\n";
  }
  for (std::size_t k = 0; k < model.baseline.size(); ++k) {
    s += "baseline " + format_double(model.baseline.times()[k]) + " " + format_double(model.baseline.values()[k]) + "\n";
  }
  s += "fit " + std::to_string(model.info.iterations) + " " + (model.info.converged ? "1" : "0") + " " +
       format_double(model.info.kkt_residual) + "\nend\n";
  return s;
}

inline void save_cox_model(const CoxModel& model, const std::string& path) { text::write_file(path, serialize(model)); }

inline CoxModel load_cox_model(const std::string& path) {
  const std::string content = text::read_file(path);
  text::LineReader reader(content);
  std::string_view line;
  auto fail = [&](const std::string& why) { throw ParseError(path, reader.line_number(), why); };
  if (!reader.next(line) || line != "sigsurv-cox v1") fail("expected 'sigsurv-cox v1'");
  CoxModel model;
  std::size_t m = 0;
  std::vector<double> bt, bv;
  bool ended = false;
  while (reader.next(line)) {
    if (text::trim(line).empty()) continue;
    const auto f = text::split(text::trim(line), ' ');
    const auto tag = f[0];
    auto num = [&](std::size_t i) {
      double x = 0.0;
      if (i >= f.size() || !text::parse_double(f[i], x)) fail("expected a number");
      return x;
    };
    auto idx = [&](std::size_t i) {
      std::size_t k = 0;
      if (i >= f.size() || !text::parse_int(f[i], k) || k >= m) fail("bad feature index");
      return k;
    };
    if (tag == "lambda") {
      model.lambda = num(1);
    } else if (tag == "standardized") {
      model.standardized = num(1) != 0.0;
    } else if (tag == "n_features") {
      if (f.size() != 2 || !text::parse_int(f[1], m)) fail("bad n_features");
      model.beta.assign(m, 0.0);
      model.column_mean.assign(m, 0.0);
      model.column_scale.assign(m, 0.0);
      model.feature_names.assign(m, "");
    } else if (tag == "feature") {
      if (f.size() != 5) fail("feature line needs index, name, mean and scale");
      const auto k = idx(1);
      model.feature_names[k] = std::string(f[2]);
      model.column_mean[k] = num(3);
      model.column_scale[k] = num(4);
    } else if (tag == "coef") {
      const auto k = idx(1);
      model.beta[k] = num(2);
    } else if (tag == "baseline") {
      bt.push_back(num(1));
      bv.push_back(num(2));
    } else if (tag == "fit") {
      model.info.iterations = static_cast<int>(num(1));
      model.info.converged = num(2) != 0.0;
      model.info.kkt_residual = num(3);
    } else if (tag == "end") {
      ended = true;
      break;
    } else {
      fail("unknown record '" + std::string(tag) + "'");
    }
  }
  if (!ended) throw ParseError(path, reader.line_number(), "missing 'end' record");
  model.baseline = StepFunction(0.0, std::move(bt), std::move(bv));
  return model;
}

}  // namespace sigsurv
