#pragma once

// Smooth-inverse-frequency aggregation of word vectors into one vector per report.
//
//   v_s = (1/|s|) * sum_{w in s} a / (f(w) + a) * v_w

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sigsurv/error.hpp"
#include "sigsurv/ingest.hpp"
#include "sigsurv/text_io.hpp"

namespace sigsurv {

enum class OovPolicy { skip, fail };

struct SifConfig {
  double a = 1e-3;
  bool remove_first_pc = false;
  /// Count each distinct token once instead of once per occurrence.
  bool unique_tokens = false;
  OovPolicy oov = OovPolicy::skip;
};

/// Word-vector lookup. File: first line `p`, then `token,v_1,...,v_p`.
class WordTable {
 public:
  WordTable() = default;
  explicit WordTable(std::size_t dim) : dim_(dim) {}

  void add(std::string token, std::span<const double> v) {
    if (v.size() != dim_) throw DimensionError("WordTable: vector for '" + token + "' has wrong dimension");
    if (!index_.emplace(std::move(token), rows_).second) throw Error("WordTable: duplicate token");
    data_.insert(data_.end(), v.begin(), v.end());
    ++rows_;
  }

  std::optional<std::span<const double>> find(const std::string& token) const {
    const auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return std::span<const double>(data_.data() + it->second * dim_, dim_);
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return rows_; }

  static WordTable load(const std::string& path) {
    const std::string content = text::read_file(path);
    text::LineReader reader(content);
    std::string_view line;
    std::size_t p = 0;
    if (!reader.next(line) || !text::parse_int(line, p) || p == 0) {
      throw ParseError(path, 1, "expected header line holding the vector dimension p");
    }
    WordTable table(p);
    std::vector<double> v(p);
    while (reader.next(line)) {
      if (text::trim(line).empty()) continue;
      const auto f = text::split(line, ',');
      const auto ln = reader.line_number();
      if (f.size() != p + 1) {
        throw ParseError(path, ln, "dimension mismatch: expected " + std::to_string(p) + " values");
      }
      for (std::size_t k = 0; k < p; ++k) {
        if (!text::parse_double(f[k + 1], v[k])) throw ParseError(path, ln, "value is not a number");
      }
      std::string token(text::trim(f[0]));
      if (token.empty()) throw ParseError(path, ln, "empty token");
      if (table.find(token)) throw ParseError(path, ln, "duplicate token '" + token + "'");
      table.add(std::move(token), v);
    }
    return table;
  }

 private:
  std::size_t dim_ = 0;
  std::size_t rows_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> data_;
};

/// Corpus frequencies f(w) in (0, 1]. File: lines `token,frequency`.
class FrequencyTable {
 public:
  void add(std::string token, double f) {
    if (!(f > 0.0 && f <= 1.0)) throw Error("FrequencyTable: frequency of '" + token + "' outside (0,1]");
    freq_[std::move(token)] = f;
  }

  std::optional<double> find(const std::string& token) const {
    const auto it = freq_.find(token);
    if (it == freq_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const noexcept { return freq_.size(); }

  static FrequencyTable load(const std::string& path) {
    const std::string content = text::read_file(path);
    text::LineReader reader(content);
    std::string_view line;
    FrequencyTable table;
    while (reader.next(line)) {
      if (text::trim(line).empty()) continue;
      const auto f = text::split(line, ',');
      const auto ln = reader.line_number();
      double v = 0.0;
      if (f.size() != 2 || !text::parse_double(f[1], v)) throw ParseError(path, ln, "expected token,frequency");
      if (!(v > 0.0 && v <= 1.0)) throw ParseError(path, ln, "frequency must lie in (0,1]");
      table.add(std::string(text::trim(f[0])), v);
    }
    return table;
  }

 private:
  std::unordered_map<std::string, double> freq_;
};

struct SifStats {
  std::size_t oov_occurrences = 0;
  std::vector<std::string> oov_tokens;  ///< first few distinct OOV tokens, for diagnostics
};

class EmptyReportError : public Error {
 public:
  using Error::Error;
};

inline double sif_weight(double frequency, double a) { return a / (frequency + a); }

/// Sentence embedding of one report. A token is out of vocabulary when it is
/// missing from either table.
inline std::vector<double> sif_embed(std::span<const TokenCount> tokens, const WordTable& table,
                                     const FrequencyTable& freqs, const SifConfig& cfg,
                                     SifStats* stats = nullptr) {
  if (!(cfg.a > 0.0)) throw Error("sif_embed: smoothing parameter a must be positive");
  std::vector<double> v(table.dim(), 0.0);
  double mass = 0.0;
  for (const auto& tc : tokens) {
    const auto vec = table.find(tc.token);
    const auto f = freqs.find(tc.token);
    if (!vec || !f) {
      if (cfg.oov == OovPolicy::fail) throw Error("sif_embed: token '" + tc.token + "' is out of vocabulary");
      if (stats) {
        stats->oov_occurrences += tc.count;
        if (stats->oov_tokens.size() < 20) stats->oov_tokens.push_back(tc.token);
      }
      continue;
    }
    const double n = cfg.unique_tokens ? 1.0 : static_cast<double>(tc.count);
    const double w = n * sif_weight(*f, cfg.a);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += w * (*vec)[k];
    mass += n;
  }
  if (mass == 0.0) throw EmptyReportError("sif_embed: report is empty after vocabulary filtering");
  for (auto& x : v) x /= mass;
  return v;
}

/// Removes the projection on the first (uncentered) principal direction of
/// all report vectors, as in the original SIF recipe.
inline void remove_first_principal_component(std::vector<std::vector<double>*>& vectors) {
  if (vectors.empty()) return;
  const auto p = static_cast<Eigen::Index>(vectors.front()->size());
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
  for (const auto* v : vectors) {
    const Eigen::Map<const Eigen::VectorXd> x(v->data(), p);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(x);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram.selfadjointView<Eigen::Lower>());
  const Eigen::VectorXd u = eig.eigenvectors().col(p - 1);
  for (auto* v : vectors) {
    Eigen::Map<Eigen::VectorXd> x(v->data(), p);
    x -= u * u.dot(x);
  }
}

/// Converts a token-mode cohort into a vector-mode one. Timestamps and
/// ordering are kept; failures name the patient and report time.
inline Cohort embed_cohort(const Cohort& cohort, const WordTable& table, const FrequencyTable& freqs,
                           const SifConfig& cfg, SifStats* stats = nullptr) {
  if (cohort.mode != InputMode::token) throw Error("embed_cohort: cohort is not in token mode");
  if (cohort.embedding_dim != table.dim()) {
    throw DimensionError("embed_cohort: cohort declares p=" + std::to_string(cohort.embedding_dim) +
                         " but the word table has p=" + std::to_string(table.dim()));
  }
  Cohort out;
  out.mode = InputMode::vector;
  out.embedding_dim = table.dim();
  out.patients.reserve(cohort.size());
  for (const auto& p : cohort.patients) {
    PatientRecord rec{p.outcome, {}};
    rec.reports.reserve(p.reports.size());
    for (const auto& r : p.reports) {
      ReportEvent e;
      e.t = r.t;
      try {
        e.embedding = sif_embed(r.tokens, table, freqs, cfg, stats);
      } catch (const Error& err) {
        throw Error("patient '" + p.outcome.patient_id + "', report at t=" + text::format_double(r.t) + ": " +
                    err.what());
      }
      rec.reports.push_back(std::move(e));
    }
    out.patients.push_back(std::move(rec));
  }
  if (cfg.remove_first_pc) {
    std::vector<std::vector<double>*> all;
    for (auto& p : out.patients) {
      for (auto& r : p.reports) all.push_back(&r.embedding);
    }
    remove_first_principal_component(all);
  }
  return out;
}

}  // namespace sigsurv
