#pragma once

// Truncated path signatures of piecewise-linear, time-augmented paths.
//
// A signature truncated at level L over d channels is stored flat, level by
// level (level 0 first), with words of one level in lexicographic order: the
// word (i_1, ..., i_k) sits at level_offset(d, k) + sum_j i_j * d^(k-j).
// A linear segment with increment D has signature exp(D) = sum_k D^{(x)k} / k!,
// and segments are combined with Chen's identity S(X*Y) = S(X) (x) S(Y).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sigsurv/error.hpp"
#include "sigsurv/ingest.hpp"
#include "sigsurv/text_io.hpp"

namespace sigsurv {

/// sum_{k=0}^{L} d^k = (d^{L+1} - 1) / (d - 1), with overflow detection.
inline std::uint64_t count_coefficients(std::uint64_t d, std::uint64_t L) {
  if (d < 2) throw Error("count_coefficients: d must be at least 2");
  if (L < 1) throw Error("count_coefficients: L must be at least 1");
  constexpr auto max = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t total = 1;
  std::uint64_t power = 1;
  for (std::uint64_t k = 1; k <= L; ++k) {
    if (power > max / d) throw Error("count_coefficients: result overflows 64 bits");
    power *= d;
    if (total > max - power) throw Error("count_coefficients: result overflows 64 bits");
    total += power;
  }
  return total;
}

namespace detail {

inline std::size_t ipow(std::size_t d, std::size_t k) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < k; ++i) r *= d;
  return r;
}

}  // namespace detail

class SignatureTensor {
 public:
  SignatureTensor() = default;

  /// The trivial signature (1, 0, 0, ...).
  SignatureTensor(std::size_t channels, std::size_t level)
      : d_(channels), level_(level), coeffs_(total_size(channels, level), 0.0) {
    if (channels == 0) throw Error("SignatureTensor: need at least one channel");
    coeffs_[0] = 1.0;
  }

  static std::size_t level_offset(std::size_t d, std::size_t k) {
    std::size_t off = 0;
    for (std::size_t j = 0; j < k; ++j) off += detail::ipow(d, j);
    return off;
  }
  static std::size_t total_size(std::size_t d, std::size_t L) { return level_offset(d, L + 1); }

  std::size_t channels() const noexcept { return d_; }
  std::size_t level() const noexcept { return level_; }
  std::span<const double> coeffs() const noexcept { return coeffs_; }
  std::span<double> coeffs() noexcept { return coeffs_; }

  std::span<const double> level_block(std::size_t k) const {
    return std::span<const double>(coeffs_).subspan(level_offset(d_, k), detail::ipow(d_, k));
  }
  std::span<double> level_block(std::size_t k) {
    return std::span<double>(coeffs_).subspan(level_offset(d_, k), detail::ipow(d_, k));
  }

  /// Coefficient of a word given as channel indices.
  double word(std::span<const std::size_t> w) const {
    if (w.size() > level_) throw Error("SignatureTensor::word: word longer than truncation level");
    std::size_t idx = 0;
    for (auto c : w) {
      if (c >= d_) throw Error("SignatureTensor::word: channel out of range");
      idx = idx * d_ + c;
    }
    return coeffs_[level_offset(d_, w.size()) + idx];
  }
  double word(std::initializer_list<std::size_t> w) const {
    return word(std::span<const std::size_t>(w.begin(), w.size()));
  }

  friend bool operator==(const SignatureTensor&, const SignatureTensor&) = default;

 private:
  std::size_t d_ = 0;
  std::size_t level_ = 0;
  std::vector<double> coeffs_;
};

/// exp(delta) truncated at level L: level k equals delta^{(x)k} / k!.
inline SignatureTensor segment_signature(std::span<const double> delta, std::size_t L) {
  SignatureTensor s(delta.size(), L);
  const std::size_t d = delta.size();
  for (std::size_t k = 1; k <= L; ++k) {
    const auto prev = std::as_const(s).level_block(k - 1);
    auto cur = s.level_block(k);
    const double inv_k = 1.0 / static_cast<double>(k);
    for (std::size_t a = 0; a < prev.size(); ++a) {
      const double base = prev[a] * inv_k;
      for (std::size_t c = 0; c < d; ++c) cur[a * d + c] = base * delta[c];
    }
  }
  return s;
}

namespace detail {

/// out += a (x) b for level blocks of lengths d^i and d^j.
inline void accumulate_tensor_product(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  const std::size_t nb = b.size();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ai = a[i];
    if (ai == 0.0) continue;
    double* row = out.data() + i * nb;
    for (std::size_t j = 0; j < nb; ++j) row[j] += ai * b[j];
  }
}

}  // namespace detail

/// Product in the truncated tensor algebra: block k = sum_{a+b=k} S1_a (x) S2_b.
inline SignatureTensor chen_product(const SignatureTensor& s1, const SignatureTensor& s2) {
  if (s1.channels() != s2.channels() || s1.level() != s2.level()) {
    throw DimensionError("chen_product: operands differ in channels or truncation level");
  }
  const std::size_t L = s1.level();
  SignatureTensor out(s1.channels(), L);
  out.coeffs()[0] = s1.coeffs()[0] * s2.coeffs()[0];
  for (std::size_t k = 1; k <= L; ++k) {
    auto block = out.level_block(k);
    for (std::size_t a = 0; a <= k; ++a) {
      detail::accumulate_tensor_product(s1.level_block(a), s2.level_block(k - a), block);
    }
  }
  return out;
}

/// s <- s (x) exp(delta), in place. Levels are updated from the top down so
/// that lower blocks still hold their old values when read.
inline void extend_with_segment(SignatureTensor& s, const SignatureTensor& segment) {
  for (std::size_t k = s.level(); k >= 1; --k) {
    auto block = s.level_block(k);
    for (std::size_t a = 0; a < k; ++a) {
      detail::accumulate_tensor_product(std::as_const(s).level_block(a), segment.level_block(k - a), block);
    }
  }
}

enum class TimeScale { unit_interval, days };

inline std::string_view to_string(TimeScale t) { return t == TimeScale::unit_interval ? "unit_interval" : "days"; }

/// Piecewise-linear path through `n_points` points of `dim` channels; channel
/// 0 is the monotone time coordinate.
struct AugmentedPath {
  std::size_t n_points = 0;
  std::size_t dim = 0;
  std::vector<double> times;
  std::vector<double> points;  ///< n_points x dim, row-major

  std::span<const double> point(std::size_t i) const {
    return std::span<const double>(points).subspan(i * dim, dim);
  }
};

/// Builds a path from a raw point sequence without time augmentation.
inline AugmentedPath make_path(std::size_t dim, std::vector<double> points) {
  if (dim == 0 || points.size() % dim != 0) throw DimensionError("make_path: point buffer size mismatch");
  AugmentedPath path;
  path.dim = dim;
  path.n_points = points.size() / dim;
  path.points = std::move(points);
  path.times.resize(path.n_points);
  for (std::size_t i = 0; i < path.n_points; ++i) path.times[i] = static_cast<double>(i);
  return path;
}

struct AugmentOptions {
  TimeScale time_scale = TimeScale::unit_interval;
  /// Offset (days) of the duplicated point used for single-report series.
  double single_report_offset = 1.0;
};

/// Prepends the time channel. Under unit_interval, times map affinely onto
/// [0, 1]. A single observation becomes a pure-time segment from t to
/// t + single_report_offset with the embedding held constant.
inline AugmentedPath augment_path(std::span<const double> times, std::span<const std::vector<double>> values,
                                  const AugmentOptions& opts = {}) {
  if (times.size() != values.size()) throw DimensionError("augment_path: times and values differ in length");
  if (times.empty()) throw DegenerateInputError("augment_path: series has no observations");
  const std::size_t pbar = values.front().size();
  std::vector<double> t(times.begin(), times.end());
  std::vector<const std::vector<double>*> v;
  for (const auto& x : values) {
    if (x.size() != pbar) throw DimensionError("augment_path: inconsistent value dimensions");
    v.push_back(&x);
  }
  if (t.size() == 1) {
    if (!(opts.single_report_offset > 0.0)) throw Error("augment_path: single_report_offset must be positive");
    t.push_back(t.front() + opts.single_report_offset);
    v.push_back(v.front());
  }
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (!(t[i] > t[i - 1])) throw DegenerateInputError("augment_path: times must be strictly increasing");
  }
  AugmentedPath path;
  path.n_points = t.size();
  path.dim = pbar + 1;
  path.times.resize(t.size());
  const double t0 = t.front();
  const double span = t.back() - t.front();
  for (std::size_t i = 0; i < t.size(); ++i) {
    path.times[i] = opts.time_scale == TimeScale::unit_interval ? (t[i] - t0) / span : t[i];
  }
  path.points.reserve(path.n_points * path.dim);
  for (std::size_t i = 0; i < t.size(); ++i) {
    path.points.push_back(path.times[i]);
    path.points.insert(path.points.end(), v[i]->begin(), v[i]->end());
  }
  return path;
}

inline AugmentedPath augment_path(std::span<const ReportEvent> reports, const AugmentOptions& opts = {}) {
  std::vector<double> t;
  std::vector<std::vector<double>> v;
  for (const auto& r : reports) {
    t.push_back(r.t);
    v.push_back(r.embedding);
  }
  return augment_path(t, v, opts);
}

/// Left fold of the segment exponentials with Chen's identity; O(N d^L).
inline SignatureTensor path_signature(const AugmentedPath& path, std::size_t L) {
  if (path.n_points < 1 || path.dim == 0) throw DegenerateInputError("path_signature: empty path");
  SignatureTensor sig(path.dim, L);
  std::vector<double> delta(path.dim);
  for (std::size_t i = 1; i < path.n_points; ++i) {
    const auto a = path.point(i - 1);
    const auto b = path.point(i);
    for (std::size_t c = 0; c < path.dim; ++c) delta[c] = b[c] - a[c];
    extend_with_segment(sig, segment_signature(delta, L));
  }
  return sig;
}

inline std::string word_name(std::span<const std::size_t> w) {
  std::string s = "S_";
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) s += ".";
    s += std::to_string(w[i]);
  }
  return s;
}

/// Words of levels 1..L in storage order, optionally without those touching channel 0.
inline std::vector<std::vector<std::size_t>> feature_words(std::size_t d, std::size_t L, bool drop_time_words) {
  std::vector<std::vector<std::size_t>> words;
  for (std::size_t k = 1; k <= L; ++k) {
    const std::size_t n = detail::ipow(d, k);
    for (std::size_t idx = 0; idx < n; ++idx) {
      std::vector<std::size_t> w(k);
      std::size_t rem = idx;
      bool touches_time = false;
      for (std::size_t j = k; j-- > 0;) {
        w[j] = rem % d;
        rem /= d;
        touches_time = touches_time || w[j] == 0;
      }
      if (drop_time_words && touches_time) continue;
      words.push_back(std::move(w));
    }
  }
  return words;
}

/// One row per patient; columns are signature words of levels 1..L.
struct FeatureMatrix {
  std::vector<std::string> patient_ids;
  std::vector<std::string> column_names;
  std::vector<double> values;  ///< rows x cols, row-major

  std::size_t rows() const noexcept { return patient_ids.size(); }
  std::size_t cols() const noexcept { return column_names.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * cols(), cols());
  }
  double operator()(std::size_t i, std::size_t j) const { return values[i * cols() + j]; }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

struct SignatureOptions {
  std::size_t level = 3;
  AugmentOptions augment;
  bool drop_time_words = false;
};

/// Signature features of a projected cohort. Per-patient failures are
/// collected and reported together.
inline FeatureMatrix signature_features(const Cohort& cohort, const SignatureOptions& opts) {
  if (cohort.mode != InputMode::vector) throw Error("signature_features: cohort is not in vector mode");
  if (opts.level < 1) throw Error("signature_features: level must be at least 1");
  const std::size_t d = cohort.embedding_dim + 1;
  const auto words = feature_words(d, opts.level, opts.drop_time_words);
  std::vector<std::size_t> columns;
  FeatureMatrix fm;
  for (const auto& w : words) {
    fm.column_names.push_back(word_name(w));
    std::size_t idx = 0;
    for (auto c : w) idx = idx * d + c;
    columns.push_back(SignatureTensor::level_offset(d, w.size()) + idx);
  }
  fm.values.reserve(cohort.size() * columns.size());
  std::string failures;
  for (const auto& p : cohort.patients) {
    try {
      const auto sig = path_signature(augment_path(p.reports, opts.augment), opts.level);
      const auto c = sig.coeffs();
      for (auto col : columns) {
        if (!std::isfinite(c[col])) throw Error("non-finite signature coefficient");
        fm.values.push_back(c[col]);
      }
      fm.patient_ids.push_back(p.outcome.patient_id);
    } catch (const Error& e) {
      failures += "\n  " + p.outcome.patient_id + ": " + e.what();
      fm.values.resize(fm.patient_ids.size() * columns.size());
    }
  }
  if (!failures.empty()) throw Error("signature_features: failed for patients:" + failures);
  return fm;
}

/// Delimited text: header `patient_id,<column names>`, then one row per patient.
inline void save_feature_matrix(const FeatureMatrix& fm, const std::string& path) {
  std::string s = "patient_id";
  for (const auto& c : fm.column_names) s += "," + c;
  s += "\n";
  for (std::size_t i = 0; i < fm.rows(); ++i) {
    s += fm.patient_ids[i];
    for (double x : fm.row(i)) s += "," + text::format_double(x);
    s += "\n";
  }
  text::write_file(path, s);
}

inline FeatureMatrix load_feature_matrix(const std::string& path) {
  const std::string content = text::read_file(path);
  text::LineReader reader(content);
  std::string_view line;
  if (!reader.next(line)) throw ParseError(path, 1, "empty feature file");
  const auto head = text::split(line, ',');
  if (head.empty() || head[0] != "patient_id") throw ParseError(path, 1, "header must start with patient_id");
  FeatureMatrix fm;
  for (std::size_t k = 1; k < head.size(); ++k) fm.column_names.emplace_back(text::trim(head[k]));
  while (reader.next(line)) {
    if (text::trim(line).empty()) continue;
    const auto f = text::split(line, ',');
    if (f.size() != head.size()) throw ParseError(path, reader.line_number(), "row width differs from header");
    fm.patient_ids.emplace_back(text::trim(f[0]));
    for (std::size_t k = 1; k < f.size(); ++k) {
      double x = 0.0;
      if (!text::parse_double(f[k], x)) throw ParseError(path, reader.line_number(), "value is not a finite number");
      fm.values.push_back(x);
    }
  }
  return fm;
}

}  // namespace sigsurv
