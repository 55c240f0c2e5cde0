#pragma once

// Cohort loading, validation, deduplication, tail masking and splitting.
//
// Embeddings file grammar (UTF-8, comma separated):
//
//   #sigsurv-embeddings v1 mode=<vector|token> p=<int>
//   <patient_id>,<t_days>,<e_1>,...,<e_p>          (vector mode)
//   <patient_id>,<t_days>,<tok>:<count>;<tok>:<count>...   (token mode)
//
// Outcomes file grammar:
//
//   patient_id,duration_days,event
//   <patient_id>,<duration>,<0|1>
//
// Blank lines are ignored. docs/formats.md carries the full description.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sigsurv/error.hpp"
#include "sigsurv/random.hpp"
#include "sigsurv/text_io.hpp"

namespace sigsurv {

enum class InputMode { vector, token };

inline std::string_view to_string(InputMode m) { return m == InputMode::vector ? "vector" : "token"; }

struct TokenCount {
  std::string token;
  std::uint32_t count = 0;
  friend bool operator==(const TokenCount&, const TokenCount&) = default;
};

struct ReportEvent {
  double t = 0.0;  ///< days since the patient's first report
  std::vector<double> embedding;
  std::vector<TokenCount> tokens;
  friend bool operator==(const ReportEvent&, const ReportEvent&) = default;
};

struct SurvivalOutcome {
  std::string patient_id;
  double duration = 0.0;  ///< days in study, > 0
  bool event = false;
  friend bool operator==(const SurvivalOutcome&, const SurvivalOutcome&) = default;
};

struct PatientRecord {
  SurvivalOutcome outcome;
  std::vector<ReportEvent> reports;  ///< strictly increasing in t
  friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

struct Cohort {
  InputMode mode = InputMode::vector;
  std::size_t embedding_dim = 0;
  std::vector<PatientRecord> patients;

  std::size_t size() const noexcept { return patients.size(); }
  std::size_t n_events() const {
    return static_cast<std::size_t>(std::count_if(
        patients.begin(), patients.end(), [](const PatientRecord& p) { return p.outcome.event; }));
  }
  std::size_t n_reports() const {
    std::size_t n = 0;
    for (const auto& p : patients) n += p.reports.size();
    return n;
  }
  friend bool operator==(const Cohort&, const Cohort&) = default;
};

/// Diagnostics gathered while loading.
struct IngestStats {
  std::size_t lines_read = 0;
  std::size_t duplicates_dropped = 0;
  std::size_t same_time_merged = 0;
  std::vector<std::string> patients_without_reports;
};

namespace detail {

inline std::vector<TokenCount> parse_token_payload(std::string_view payload, const std::string& file,
                                                   std::size_t line) {
  std::vector<TokenCount> out;
  payload = text::trim(payload);
  if (payload.empty()) return out;
  for (auto item : text::split(payload, ';')) {
    item = text::trim(item);
    if (item.empty()) throw ParseError(file, line, "empty token entry");
    const auto colon = item.rfind(':');
    if (colon == std::string_view::npos || colon == 0) {
      throw ParseError(file, line, "token entry '" + std::string(item) + "' is not token:count");
    }
    std::uint32_t count = 0;
    if (!text::parse_int(item.substr(colon + 1), count) || count == 0) {
      throw ParseError(file, line, "token count must be a positive integer in '" + std::string(item) + "'");
    }
    out.push_back({std::string(item.substr(0, colon)), count});
  }
  return out;
}

/// Merges reports sharing a timestamp: embeddings are averaged, token bags summed.
inline ReportEvent merge_reports(std::span<const ReportEvent> group) {
  ReportEvent merged;
  merged.t = group.front().t;
  if (!group.front().embedding.empty()) {
    merged.embedding.assign(group.front().embedding.size(), 0.0);
    for (const auto& r : group) {
      for (std::size_t k = 0; k < r.embedding.size(); ++k) merged.embedding[k] += r.embedding[k];
    }
    for (auto& v : merged.embedding) v /= static_cast<double>(group.size());
  }
  for (const auto& r : group) {
    for (const auto& tc : r.tokens) {
      auto it = std::find_if(merged.tokens.begin(), merged.tokens.end(),
                             [&](const TokenCount& x) { return x.token == tc.token; });
      if (it == merged.tokens.end()) {
        merged.tokens.push_back(tc);
      } else {
        it->count += tc.count;
      }
    }
  }
  return merged;
}

inline std::string format_header(InputMode mode, std::size_t p) {
  return "#sigsurv-embeddings v1 mode=" + std::string(to_string(mode)) + " p=" + std::to_string(p);
}

}  // namespace detail

/// Parses an outcomes file. Patient order follows the file.
inline std::vector<SurvivalOutcome> load_outcomes(const std::string& path) {
  const std::string content = text::read_file(path);
  text::LineReader reader(content);
  std::string_view line;
  if (!reader.next(line) || text::trim(line) != "patient_id,duration_days,event") {
    throw ParseError(path, 1, "expected header 'patient_id,duration_days,event'");
  }
  std::vector<SurvivalOutcome> out;
  std::unordered_set<std::string> seen;
  while (reader.next(line)) {
    if (text::trim(line).empty()) continue;
    const auto fields = text::split(line, ',');
    const auto ln = reader.line_number();
    if (fields.size() != 3) throw ParseError(path, ln, "expected 3 fields, found " + std::to_string(fields.size()));
    SurvivalOutcome o;
    o.patient_id = std::string(text::trim(fields[0]));
    if (o.patient_id.empty()) throw ParseError(path, ln, "empty patient_id");
    if (!text::parse_double(fields[1], o.duration)) throw ParseError(path, ln, "duration is not a number");
    if (!(o.duration > 0.0)) throw ParseError(path, ln, "duration must be positive");
    const auto ev = text::trim(fields[2]);
    if (ev == "1") {
      o.event = true;
    } else if (ev == "0") {
      o.event = false;
    } else {
      throw ParseError(path, ln, "event must be 0 or 1");
    }
    if (!seen.insert(o.patient_id).second) {
      throw ParseError(path, ln, "duplicate patient '" + o.patient_id + "' in outcomes file");
    }
    out.push_back(std::move(o));
  }
  return out;
}

/// Loads and validates a cohort. Byte-identical report rows of a patient are
/// dropped; distinct rows sharing a timestamp are merged. Outcome rows without
/// any report are excluded and listed in `stats`.
inline Cohort load_cohort(const std::string& embeddings_path, const std::string& outcomes_path,
                          InputMode mode, IngestStats* stats = nullptr) {
  IngestStats local;
  IngestStats& st = stats ? *stats : local;
  const auto outcomes = load_outcomes(outcomes_path);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < outcomes.size(); ++i) index.emplace(outcomes[i].patient_id, i);

  const std::string content = text::read_file(embeddings_path);
  text::LineReader reader(content);
  std::string_view line;
  if (!reader.next(line)) throw ParseError(embeddings_path, 1, "empty file, expected header");

  // Header.
  const auto head = text::split(text::trim(line), ' ');
  std::optional<InputMode> file_mode;
  std::optional<std::size_t> p;
  if (head.size() != 4 || head[0] != "#sigsurv-embeddings" || head[1] != "v1") {
    throw ParseError(embeddings_path, 1, "expected header '#sigsurv-embeddings v1 mode=<vector|token> p=<int>'");
  }
  for (std::size_t k = 2; k < head.size(); ++k) {
    const auto kv = head[k];
    if (kv.starts_with("mode=")) {
      const auto v = kv.substr(5);
      if (v == "vector") file_mode = InputMode::vector;
      else if (v == "token") file_mode = InputMode::token;
      else throw ParseError(embeddings_path, 1, "unknown mode '" + std::string(v) + "'");
    } else if (kv.starts_with("p=")) {
      std::size_t val = 0;
      if (!text::parse_int(kv.substr(2), val) || val == 0) throw ParseError(embeddings_path, 1, "p must be a positive integer");
      p = val;
    } else {
      throw ParseError(embeddings_path, 1, "unknown header field '" + std::string(kv) + "'");
    }
  }
  if (!file_mode || !p) throw ParseError(embeddings_path, 1, "header must declare mode and p");
  if (*file_mode != mode) {
    throw ParseError(embeddings_path, 1, "file declares mode=" + std::string(to_string(*file_mode)) +
                                             " but mode=" + std::string(to_string(mode)) + " was requested");
  }

  std::vector<std::vector<ReportEvent>> reports(outcomes.size());
  std::vector<std::unordered_set<std::string>> seen_rows(outcomes.size());
  while (reader.next(line)) {
    if (text::trim(line).empty()) continue;
    ++st.lines_read;
    const auto ln = reader.line_number();
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string_view::npos) throw ParseError(embeddings_path, ln, "expected patient_id,t_days,payload");
    const std::string pid(text::trim(line.substr(0, c1)));
    const auto it = index.find(pid);
    if (it == index.end()) throw ParseError(embeddings_path, ln, "unknown patient_id '" + pid + "'");
    ReportEvent ev;
    if (!text::parse_double(line.substr(c1 + 1, c2 - c1 - 1), ev.t)) {
      throw ParseError(embeddings_path, ln, "t_days is not a number");
    }
    if (ev.t < 0.0) throw ParseError(embeddings_path, ln, "t_days must be non-negative");
    const double duration = outcomes[it->second].duration;
    if (ev.t > duration) {
      throw ParseError(embeddings_path, ln, "report at t=" + text::format_double(ev.t) +
                                                " lies after the end of study (" + text::format_double(duration) + ")");
    }
    const auto payload = line.substr(c2 + 1);
    if (mode == InputMode::vector) {
      const auto fields = text::split(payload, ',');
      if (fields.size() != *p) {
        throw ParseError(embeddings_path, ln, "dimension mismatch: expected " + std::to_string(*p) +
                                                  " embedding values, found " + std::to_string(fields.size()));
      }
      ev.embedding.resize(*p);
      for (std::size_t k = 0; k < *p; ++k) {
        if (!text::parse_double(fields[k], ev.embedding[k])) {
          throw ParseError(embeddings_path, ln, "embedding value " + std::to_string(k + 1) + " is not a number");
        }
      }
    } else {
      ev.tokens = detail::parse_token_payload(payload, embeddings_path, ln);
    }
    // Dedup key: patient, timestamp and payload bytes, i.e. the row itself.
    if (!seen_rows[it->second].insert(std::string(text::trim(line))).second) {
      ++st.duplicates_dropped;
      continue;
    }
    reports[it->second].push_back(std::move(ev));
  }

  Cohort cohort;
  cohort.mode = mode;
  cohort.embedding_dim = *p;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    auto& rs = reports[i];
    if (rs.empty()) {
      st.patients_without_reports.push_back(outcomes[i].patient_id);
      continue;
    }
    std::stable_sort(rs.begin(), rs.end(), [](const ReportEvent& a, const ReportEvent& b) { return a.t < b.t; });
    PatientRecord rec{outcomes[i], {}};
    for (std::size_t b = 0; b < rs.size();) {
      std::size_t e = b + 1;
      while (e < rs.size() && rs[e].t == rs[b].t) ++e;
      if (e - b == 1) {
        rec.reports.push_back(std::move(rs[b]));
      } else {
        st.same_time_merged += e - b - 1;
        rec.reports.push_back(detail::merge_reports(std::span(rs).subspan(b, e - b)));
      }
      b = e;
    }
    cohort.patients.push_back(std::move(rec));
  }
  return cohort;
}

/// Writes a cohort in the canonical file formats read by load_cohort.
inline void write_cohort(const Cohort& cohort, const std::string& embeddings_path,
                         const std::string& outcomes_path) {
  std::string emb = detail::format_header(cohort.mode, cohort.embedding_dim) + "\n";
  std::string out = "patient_id,duration_days,event\n";
  for (const auto& p : cohort.patients) {
    out += p.outcome.patient_id + "," + text::format_double(p.outcome.duration) + "," +
           (p.outcome.event ? "1" : "0") + "\n";
    for (const auto& r : p.reports) {
      emb += p.outcome.patient_id + "," + text::format_double(r.t);
      if (cohort.mode == InputMode::vector) {
        if (r.embedding.size() != cohort.embedding_dim) {
          throw DimensionError("write_cohort: report of '" + p.outcome.patient_id + "' has dimension " +
                               std::to_string(r.embedding.size()));
        }
        for (double v : r.embedding) emb += "," + text::format_double(v);
      } else {
        emb += ",";
        for (std::size_t k = 0; k < r.tokens.size(); ++k) {
          if (k) emb += ";";
          emb += r.tokens[k].token + ":" + std::to_string(r.tokens[k].count);
        }
      }
      emb += "\n";
    }
  }
  text::write_file(embeddings_path, emb);
  text::write_file(outcomes_path, out);
}

struct MaskResult {
  Cohort cohort;
  std::size_t excluded = 0;
  std::vector<std::string> excluded_ids;
};

/// Drops every report with t > duration - horizon_days; patients left without
/// reports are removed and tallied.
inline MaskResult mask_tail(const Cohort& cohort, double horizon_days = 100.0) {
  if (!(horizon_days >= 0.0)) throw Error("mask_tail: horizon_days must be non-negative");
  MaskResult res;
  res.cohort.mode = cohort.mode;
  res.cohort.embedding_dim = cohort.embedding_dim;
  for (const auto& p : cohort.patients) {
    const double cutoff = p.outcome.duration - horizon_days;
    PatientRecord kept{p.outcome, {}};
    for (const auto& r : p.reports) {
      if (r.t <= cutoff) kept.reports.push_back(r);
    }
    if (kept.reports.empty()) {
      ++res.excluded;
      res.excluded_ids.push_back(p.outcome.patient_id);
    } else {
      res.cohort.patients.push_back(std::move(kept));
    }
  }
  return res;
}

/// Stratified k-fold assignment on the event indicator: events and censored
/// patients are shuffled separately and dealt round-robin, so fold sizes and
/// per-fold event counts each differ by at most one.
inline std::vector<int> stratified_folds(const std::vector<bool>& events, int k, std::uint64_t seed) {
  if (k < 1) throw Error("stratified_folds: k must be positive");
  std::vector<std::size_t> ev, cens;
  for (std::size_t i = 0; i < events.size(); ++i) (events[i] ? ev : cens).push_back(i);
  Rng rng(seed);
  rng.shuffle(ev);
  rng.shuffle(cens);
  std::vector<int> fold(events.size(), -1);
  std::size_t slot = 0;
  for (auto i : ev) fold[i] = static_cast<int>(slot++ % static_cast<std::size_t>(k));
  for (auto i : cens) fold[i] = static_cast<int>(slot++ % static_cast<std::size_t>(k));
  return fold;
}

/// Per-patient assignment: -1 for training, otherwise the test fold index.
inline std::vector<int> split_assignment(const std::vector<bool>& events, double test_fraction,
                                         int n_test_folds, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw Error("split: test_fraction must lie in (0,1)");
  if (n_test_folds < 1) throw Error("split: n_test_folds must be positive");
  const std::size_t n = events.size();
  if (n < 2 * static_cast<std::size_t>(n_test_folds)) {
    throw DegenerateInputError("split: cohort of " + std::to_string(n) + " patients is too small for " +
                               std::to_string(n_test_folds) + " test folds");
  }
  std::vector<std::size_t> ev, cens;
  for (std::size_t i = 0; i < n; ++i) (events[i] ? ev : cens).push_back(i);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  auto test_ev = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ev.size())));
  test_ev = std::min(test_ev, n_test);
  const std::size_t test_cens = std::min(n_test - test_ev, cens.size());
  if (test_ev < static_cast<std::size_t>(n_test_folds) || test_ev >= ev.size()) {
    throw DegenerateInputError("split: too few events to stratify (" + std::to_string(ev.size()) +
                               " events, " + std::to_string(n_test_folds) + " test folds)");
  }
  Rng rng(seed);
  rng.shuffle(ev);
  rng.shuffle(cens);
  std::vector<int> role(n, -1);
  std::size_t slot = 0;
  const auto k = static_cast<std::size_t>(n_test_folds);
  for (std::size_t j = 0; j < test_ev; ++j) role[ev[j]] = static_cast<int>(slot++ % k);
  for (std::size_t j = 0; j < test_cens; ++j) role[cens[j]] = static_cast<int>(slot++ % k);
  return role;
}

inline std::vector<bool> event_indicators(const Cohort& c) {
  std::vector<bool> ev;
  ev.reserve(c.size());
  for (const auto& p : c.patients) ev.push_back(p.outcome.event);
  return ev;
}

inline Cohort subset(const Cohort& c, std::span<const std::size_t> indices) {
  Cohort out;
  out.mode = c.mode;
  out.embedding_dim = c.embedding_dim;
  out.patients.reserve(indices.size());
  for (auto i : indices) out.patients.push_back(c.patients.at(i));
  return out;
}

struct CohortSplit {
  Cohort train;
  std::vector<Cohort> test_folds;
};

inline CohortSplit apply_assignment(const Cohort& cohort, std::span<const int> role, int n_test_folds) {
  CohortSplit out;
  std::vector<std::size_t> train;
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(n_test_folds));
  for (std::size_t i = 0; i < role.size(); ++i) {
    if (role[i] < 0) train.push_back(i);
    else folds.at(static_cast<std::size_t>(role[i])).push_back(i);
  }
  out.train = subset(cohort, train);
  for (const auto& f : folds) out.test_folds.push_back(subset(cohort, f));
  return out;
}

/// Deterministic stratified train/test split with the test part divided into
/// `n_test_folds` disjoint folds. Patient order inside each part follows the cohort.
inline CohortSplit split_cohort(const Cohort& cohort, double test_fraction, int n_test_folds, std::uint64_t seed) {
  const auto role = split_assignment(event_indicators(cohort), test_fraction, n_test_folds, seed);
  return apply_assignment(cohort, role, n_test_folds);
}

/// split.csv: `patient_id,role,fold` with role in {train,test}, fold -1 for train.
inline void write_split(const Cohort& cohort, std::span<const int> role, const std::string& path) {
  std::string s = "patient_id,role,fold\n";
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    s += cohort.patients[i].outcome.patient_id + (role[i] < 0 ? ",train," : ",test,") + std::to_string(role[i]) + "\n";
  }
  text::write_file(path, s);
}

/// Reads split.csv back into a per-patient role vector aligned with `cohort`.
inline std::vector<int> read_split(const Cohort& cohort, const std::string& path) {
  const std::string content = text::read_file(path);
  text::LineReader reader(content);
  std::string_view line;
  if (!reader.next(line) || text::trim(line) != "patient_id,role,fold") {
    throw ParseError(path, 1, "expected header 'patient_id,role,fold'");
  }
  std::unordered_map<std::string, int> roles;
  while (reader.next(line)) {
    if (text::trim(line).empty()) continue;
    const auto f = text::split(line, ',');
    int fold = 0;
    if (f.size() != 3 || !text::parse_int(f[2], fold)) throw ParseError(path, reader.line_number(), "malformed split row");
    const auto role = text::trim(f[1]);
    if ((role == "train") != (fold < 0) || (role != "train" && role != "test")) {
      throw ParseError(path, reader.line_number(), "role and fold disagree");
    }
    roles[std::string(text::trim(f[0]))] = fold;
  }
  std::vector<int> out;
  out.reserve(cohort.size());
  for (const auto& p : cohort.patients) {
    const auto it = roles.find(p.outcome.patient_id);
    if (it == roles.end()) throw Error(path + ": patient '" + p.outcome.patient_id + "' has no split assignment");
    out.push_back(it->second);
  }
  return out;
}

}  // namespace sigsurv
