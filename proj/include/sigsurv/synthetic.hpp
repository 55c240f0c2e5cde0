#pragma once

// Synthetic cohorts with a known proportional-hazards ground truth whose
// signal lives partly in the slope of each patient's embedding trajectory.
//
// Per patient i, in latent space R^q:
//   x_i(u) = a_i + b_i u + noise,   u in [0, 1] spans the patient's report window
//   eta*_i = w_level a_i0 / intercept_sd + w_trend b_i1
//   (w_level, w_trend) = signal_strength (1, trend_strength) / sqrt(1 + trend_strength^2)
// Reports are lifted to R^p through a fixed random matrix with orthonormal
// columns, plus ambient noise. Event times are exponential with rate
// baseline_hazard * exp(eta*); censoring times are exponential with a hazard
// calibrated so the expected censored fraction equals censoring_rate.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sigsurv/cox.hpp"
#include "sigsurv/error.hpp"
#include "sigsurv/ingest.hpp"
#include "sigsurv/metrics.hpp"
#include "sigsurv/random.hpp"
#include "sigsurv/text_io.hpp"

namespace sigsurv {

struct SynthConfig {
  std::size_t n_patients = 2000;
  std::size_t p = 50;
  std::size_t latent_dim = 4;
  std::size_t reports_min = 3;
  std::size_t reports_max = 12;
  double trend_strength = 4.0;
  double signal_strength = 1.5;
  double intercept_sd = 2.0;
  double report_noise = 0.2;   ///< latent noise per report
  double ambient_noise = 0.05; ///< isotropic noise in R^p
  double baseline_hazard_rate = 1.0 / 3000.0;  ///< per day
  double censoring_rate = 0.3;                 ///< target censored fraction in [0, 1)
  /// Reports stop this many days before the observed duration.
  double report_gap_days = 100.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_patients == 0 || p == 0 || latent_dim < 2 || reports_min == 0 || reports_max < reports_min) {
      throw Error("SynthConfig: counts must be positive (latent_dim >= 2, reports_min <= reports_max)");
    }
    if (latent_dim > p) throw Error("SynthConfig: latent_dim must not exceed p");
    if (!(baseline_hazard_rate > 0.0)) throw Error("SynthConfig: baseline_hazard_rate must be positive");
    if (!(censoring_rate >= 0.0 && censoring_rate < 1.0)) throw Error("SynthConfig: censoring_rate must lie in [0,1)");
    if (!(trend_strength >= 0.0) || !(signal_strength >= 0.0) || !(intercept_sd > 0.0) || !(report_noise >= 0.0) ||
        !(ambient_noise >= 0.0) || !(report_gap_days >= 0.0)) {
      throw Error("SynthConfig: strengths and noise levels must be non-negative");
    }
  }
};

struct SyntheticCohort {
  Cohort cohort;
  std::vector<double> true_eta;  ///< aligned with cohort.patients
  double censoring_hazard = 0.0;
};

namespace detail {

/// p x q matrix (row-major) with orthonormal columns, by modified Gram-Schmidt
/// on Gaussian draws.
inline std::vector<double> random_orthonormal(std::size_t p, std::size_t q, Rng& rng) {
  std::vector<double> m(p * q);
  for (auto& x : m) x = rng.normal();
  for (std::size_t j = 0; j < q; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < p; ++i) dot += m[i * q + j] * m[i * q + k];
      for (std::size_t i = 0; i < p; ++i) m[i * q + j] -= dot * m[i * q + k];
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < p; ++i) norm += m[i * q + j] * m[i * q + j];
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < p; ++i) m[i * q + j] /= norm;
  }
  return m;
}

/// Hazard c with mean_i c / (c + rate_i) = target.
inline double calibrate_censoring(std::span<const double> rates, double target) {
  if (target == 0.0) return 0.0;
  auto frac = [&](double c) {
    double s = 0.0;
    for (double r : rates) s += c / (c + r);
    return s / static_cast<double>(rates.size());
  };
  double lo = 0.0, hi = *std::max_element(rates.begin(), rates.end());
  while (frac(hi) < target) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (frac(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

inline std::string synthetic_patient_id(std::size_t i) {
  std::string s = std::to_string(i + 1);
  return "P" + std::string(s.size() < 5 ? 5 - s.size() : 0, '0') + s;
}

inline SyntheticCohort generate_cohort(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n_patients, p = cfg.p, q = cfg.latent_dim;
  Rng embed_rng(stream_seed(cfg.seed, "simulate.embedding"));
  const auto Q = detail::random_orthonormal(p, q, embed_rng);

  const double norm = std::sqrt(1.0 + cfg.trend_strength * cfg.trend_strength);
  const double w_level = cfg.signal_strength / norm;
  const double w_trend = cfg.signal_strength * cfg.trend_strength / norm;

  struct Latent {
    std::vector<double> a, b;
    double eta = 0.0, event_time = 0.0;
  };
  std::vector<Latent> lat(n);
  std::vector<double> rates(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(stream_seed(cfg.seed, "simulate.patient", i));
    auto& L = lat[i];
    L.a.resize(q);
    L.b.resize(q);
    for (auto& x : L.a) x = rng.normal(0.0, cfg.intercept_sd);
    for (auto& x : L.b) x = rng.normal();
    L.eta = w_level * L.a[0] / cfg.intercept_sd + w_trend * L.b[1];
    rates[i] = cfg.baseline_hazard_rate * std::exp(L.eta);
    L.event_time = rng.exponential(rates[i]);
  }
  SyntheticCohort out;
  out.censoring_hazard = detail::calibrate_censoring(rates, cfg.censoring_rate);
  out.cohort.mode = InputMode::vector;
  out.cohort.embedding_dim = p;
  out.cohort.patients.reserve(n);
  out.true_eta.reserve(n);

  std::vector<double> z(q);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& L = lat[i];
    Rng rng(stream_seed(cfg.seed, "simulate.reports", i));
    double duration = L.event_time;
    bool event = true;
    if (out.censoring_hazard > 0.0) {
      const double c = rng.exponential(out.censoring_hazard);
      if (c < duration) {
        duration = c;
        event = false;
      }
    }
    PatientRecord rec;
    rec.outcome = {synthetic_patient_id(i), duration, event};
    const double window = duration - cfg.report_gap_days;
    const std::size_t n_reports =
        window > 0.0 ? cfg.reports_min + static_cast<std::size_t>(rng.below(cfg.reports_max - cfg.reports_min + 1)) : 1;
    std::vector<double> times{0.0};
    for (std::size_t k = 1; k < n_reports; ++k) times.push_back(window * rng.uniform_open());
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    for (double t : times) {
      const double u = window > 0.0 ? t / window : 0.0;
      for (std::size_t j = 0; j < q; ++j) z[j] = L.a[j] + L.b[j] * u + rng.normal(0.0, cfg.report_noise);
      ReportEvent r;
      r.t = t;
      r.embedding.resize(p);
      for (std::size_t d = 0; d < p; ++d) {
        double v = rng.normal(0.0, cfg.ambient_noise);
        for (std::size_t j = 0; j < q; ++j) v += Q[d * q + j] * z[j];
        r.embedding[d] = v;
      }
      rec.reports.push_back(std::move(r));
    }
    out.cohort.patients.push_back(std::move(rec));
    out.true_eta.push_back(L.eta);
  }
  return out;
}

/// C-index of the true log-hazard: the ceiling a fitted model can approach.
inline double oracle_cindex(std::span<const double> true_eta, const SurvivalData& data) {
  return concordance_index(data, true_eta);
}

/// `patient_id,true_eta` ground-truth file.
inline void write_ground_truth(const SyntheticCohort& s, const std::string& path) {
  std::string out = "patient_id,true_eta\n";
  for (std::size_t i = 0; i < s.cohort.size(); ++i) {
    out += s.cohort.patients[i].outcome.patient_id + "," + text::format_double(s.true_eta[i]) + "\n";
  }
  text::write_file(path, out);
}

}  // namespace sigsurv
