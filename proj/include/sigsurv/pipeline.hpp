#pragma once

// End-to-end orchestration: ingest -> embed -> compress -> signify -> fit ->
// evaluate, each stage reading and writing declared files under out_dir and
// recording content hashes in manifest.json.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "sigsurv/compression.hpp"
#include "sigsurv/config.hpp"
#include "sigsurv/cox.hpp"
#include "sigsurv/embedding.hpp"
#include "sigsurv/error.hpp"
#include "sigsurv/ingest.hpp"
#include "sigsurv/metrics.hpp"
#include "sigsurv/random.hpp"
#include "sigsurv/signature.hpp"
#include "sigsurv/synthetic.hpp"
#include "sigsurv/text_io.hpp"

namespace sigsurv {

inline constexpr const char* kLibraryVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Helpers

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware).
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  unsigned t = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  t = static_cast<unsigned>(std::min<std::size_t>(t, n));
  if (t <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(t);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < t; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline FeatureMatrix select_rows(const FeatureMatrix& fm, std::span<const std::size_t> rows) {
  FeatureMatrix out;
  out.column_names = fm.column_names;
  out.values.reserve(rows.size() * fm.cols());
  for (auto r : rows) {
    out.patient_ids.push_back(fm.patient_ids.at(r));
    const auto row = fm.row(r);
    out.values.insert(out.values.end(), row.begin(), row.end());
  }
  return out;
}

inline SurvivalData select_rows(const SurvivalData& d, std::span<const std::size_t> rows) {
  SurvivalData out;
  for (auto r : rows) {
    out.time.push_back(d.time.at(r));
    out.event.push_back(d.event.at(r));
  }
  return out;
}

/// Outcomes aligned with the rows of `fm` via patient ids.
inline SurvivalData aligned_outcomes(const FeatureMatrix& fm, const Cohort& cohort) {
  std::unordered_map<std::string, const SurvivalOutcome*> by_id;
  for (const auto& p : cohort.patients) by_id.emplace(p.outcome.patient_id, &p.outcome);
  SurvivalData d;
  for (const auto& id : fm.patient_ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw Error("feature row '" + id + "' has no outcome");
    d.time.push_back(it->second->duration);
    d.event.push_back(it->second->event ? 1 : 0);
  }
  return d;
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    if (std::isfinite(x)) s += x, ++n;
  }
  return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

/// Sample standard deviation (n - 1) over the finite entries.
inline double sd_of(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    if (std::isfinite(x)) s += (x - m) * (x - m), ++n;
  }
  return n > 1 ? std::sqrt(s / static_cast<double>(n - 1)) : std::numeric_limits<double>::quiet_NaN();
}

inline std::string sorted_id_hash(std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  std::string s;
  for (const auto& id : ids) s += id + "\n";
  return text::sha256_hex(s);
}

// ---------------------------------------------------------------------------
// Model selection

struct CvRow {
  double lambda = 0.0;
  double mean_cindex = std::numeric_limits<double>::quiet_NaN();
  double sd_cindex = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> fold_cindex;  ///< NaN where the fold failed
  double mean_nonzero = 0.0;
  std::string error;                ///< first failure message, if any
};

struct GridSearchResult {
  double best_lambda = 0.0;
  std::size_t best_index = 0;
  std::vector<CvRow> table;
};

/// Training and validation design matrices for one CV split, given row
/// indices into the training set.
using FoldFeatures = std::function<std::pair<FeatureMatrix, FeatureMatrix>(std::span<const std::size_t> train,
                                                                           std::span<const std::size_t> val)>;

/// Mean held-out C-index per lambda over stratified CV folds; the best lambda
/// maximizes it, ties going to the larger lambda. Each fit starts at beta = 0.
inline GridSearchResult grid_search_lambda(const FeatureMatrix& features, const SurvivalData& data,
                                           std::span<const double> grid, int cv_folds, std::uint64_t seed,
                                           const CoxFitConfig& base = {}, unsigned threads = 1,
                                           const FoldFeatures& fold_features = {}) {
  if (grid.empty()) throw Error("grid_search_lambda: empty lambda grid");
  if (cv_folds < 2) throw Error("grid_search_lambda: need at least two folds");
  if (features.rows() != data.size()) throw DimensionError("grid_search_lambda: features and outcomes differ in length");
  std::vector<bool> events(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) events[i] = data.event[i] != 0;
  if (data.n_events() < static_cast<std::size_t>(cv_folds)) {
    throw DegenerateInputError("grid_search_lambda: fewer events than folds");
  }
  const auto fold = stratified_folds(events, cv_folds, seed);
  struct FoldData {
    Eigen::MatrixXd X;
    SurvivalData train;
    FeatureMatrix val;
    SurvivalData val_data;
    std::vector<std::string> names;
  };
  std::vector<FoldData> folds(static_cast<std::size_t>(cv_folds));
  for (int f = 0; f < cv_folds; ++f) {
    std::vector<std::size_t> tr, va;
    for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == f ? va : tr).push_back(i);
    auto& fd = folds[static_cast<std::size_t>(f)];
    FeatureMatrix ftr;
    if (fold_features) {
      std::tie(ftr, fd.val) = fold_features(tr, va);
    } else {
      ftr = select_rows(features, tr);
      fd.val = select_rows(features, va);
    }
    fd.X = to_matrix(ftr);
    fd.names = ftr.column_names;
    fd.train = select_rows(data, tr);
    fd.val_data = select_rows(data, va);
  }
  const std::size_t nl = grid.size(), nf = folds.size();
  std::vector<double> cidx(nl * nf, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> nnz(nl * nf, 0.0);
  std::vector<std::string> err(nl * nf);
  parallel_for(nl * nf, threads, [&](std::size_t task) {
    const std::size_t l = task / nf, f = task % nf;
    CoxFitConfig cfg = base;
    cfg.lambda = grid[l];
    try {
      const auto model = fit_cox_lasso(folds[f].X, folds[f].train, cfg, folds[f].names);
      cidx[task] = concordance_index(folds[f].val_data, risk_scores(model, folds[f].val));
      nnz[task] = static_cast<double>(model.n_nonzero());
    } catch (const Error& e) {
      err[task] = e.what();
    }
  });
  GridSearchResult res;
  bool any = false;
  double best = -1.0;
  for (std::size_t l = 0; l < nl; ++l) {
    CvRow row;
    row.lambda = grid[l];
    row.fold_cindex.assign(cidx.begin() + static_cast<std::ptrdiff_t>(l * nf),
                           cidx.begin() + static_cast<std::ptrdiff_t>((l + 1) * nf));
    row.mean_cindex = mean_of(row.fold_cindex);
    row.sd_cindex = sd_of(row.fold_cindex);
    row.mean_nonzero = mean_of(std::span<const double>(nnz).subspan(l * nf, nf));
    for (std::size_t f = 0; f < nf; ++f) {
      if (!err[l * nf + f].empty()) {
        row.error = "fold " + std::to_string(f) + ": " + err[l * nf + f];
        break;
      }
    }
    if (std::isfinite(row.mean_cindex) &&
        (!any || row.mean_cindex > best || (row.mean_cindex == best && row.lambda > res.best_lambda))) {
      any = true;
      best = row.mean_cindex;
      res.best_lambda = row.lambda;
      res.best_index = l;
    }
    res.table.push_back(std::move(row));
  }
  if (!any) {
    std::string msg = "grid_search_lambda: every fit failed";
    for (const auto& r : res.table) {
      if (!r.error.empty()) msg += "\n  lambda=" + text::format_double(r.lambda) + ": " + r.error;
    }
    throw Error(msg);
  }
  return res;
}

inline void save_cv_table(const GridSearchResult& g, const std::string& path) {
  std::string s = "lambda,mean_cindex,sd_cindex,mean_nonzero";
  const std::size_t nf = g.table.empty() ? 0 : g.table.front().fold_cindex.size();
  for (std::size_t f = 0; f < nf; ++f) s += ",fold" + std::to_string(f);
  s += ",selected,error\n";
  for (std::size_t l = 0; l < g.table.size(); ++l) {
    const auto& r = g.table[l];
    s += text::format_double(r.lambda) + "," + text::format_double(r.mean_cindex) + "," +
         text::format_double(r.sd_cindex) + "," + text::format_double(r.mean_nonzero);
    for (double c : r.fold_cindex) s += "," + text::format_double(c);
    std::string e = r.error;
    std::replace(e.begin(), e.end(), ',', ';');
    std::replace(e.begin(), e.end(), '\n', ' ');
    s += std::string(l == g.best_index ? ",1," : ",0,") + e + "\n";
  }
  text::write_file(path, s);
}

// ---------------------------------------------------------------------------
// Feature variants

enum class FeatureKind { signature, last_report, mean_embedding };

inline std::string_view to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::signature: return "signature";
    case FeatureKind::last_report: return "last";
    case FeatureKind::mean_embedding: return "mean";
  }
  return "?";
}

/// Compressed embedding of each patient's last retained report.
inline FeatureMatrix last_report_features(const Cohort& projected) {
  FeatureMatrix fm;
  for (std::size_t k = 0; k < projected.embedding_dim; ++k) fm.column_names.push_back("last_" + std::to_string(k + 1));
  for (const auto& p : projected.patients) {
    if (p.reports.empty()) throw DegenerateInputError("last_report_features: patient without reports");
    fm.patient_ids.push_back(p.outcome.patient_id);
    const auto& e = p.reports.back().embedding;
    fm.values.insert(fm.values.end(), e.begin(), e.end());
  }
  return fm;
}

/// Per-patient mean of the compressed report embeddings.
inline FeatureMatrix mean_embedding_features(const Cohort& projected) {
  FeatureMatrix fm;
  const std::size_t p = projected.embedding_dim;
  for (std::size_t k = 0; k < p; ++k) fm.column_names.push_back("mean_" + std::to_string(k + 1));
  for (const auto& pat : projected.patients) {
    if (pat.reports.empty()) throw DegenerateInputError("mean_embedding_features: patient without reports");
    fm.patient_ids.push_back(pat.outcome.patient_id);
    std::vector<double> m(p, 0.0);
    for (const auto& r : pat.reports) {
      for (std::size_t k = 0; k < p; ++k) m[k] += r.embedding[k];
    }
    for (auto& x : m) x /= static_cast<double>(pat.reports.size());
    fm.values.insert(fm.values.end(), m.begin(), m.end());
  }
  return fm;
}

inline FeatureMatrix build_features(FeatureKind kind, const Cohort& projected, const SignatureOptions& sig) {
  switch (kind) {
    case FeatureKind::signature: return signature_features(projected, sig);
    case FeatureKind::last_report: return last_report_features(projected);
    case FeatureKind::mean_embedding: return mean_embedding_features(projected);
  }
  throw Error("unknown feature kind");
}

/// Keeps each patient's first min(k, N_i) reports.
inline Cohort truncate_reports(const Cohort& cohort, std::size_t k) {
  if (k == 0) throw Error("truncate_reports: k must be positive");
  Cohort out = cohort;
  for (auto& p : out.patients) {
    if (p.reports.size() > k) p.reports.resize(k);
  }
  return out;
}

struct ReportCountPoint {
  std::size_t k = 0;
  double c_index = std::numeric_limits<double>::quiet_NaN();
  std::size_t truncated_patients = 0;  ///< patients with more than k reports
};

/// C-index of the fitted model when every patient is cut to the first k reports.
inline std::vector<ReportCountPoint> cindex_vs_report_count(const Cohort& projected_test, const CoxModel& model,
                                                            const SignatureOptions& sig,
                                                            std::vector<std::size_t> ks) {
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  const SurvivalData data = survival_data(projected_test);
  std::vector<ReportCountPoint> out;
  for (auto k : ks) {
    ReportCountPoint pt;
    pt.k = k;
    for (const auto& p : projected_test.patients) pt.truncated_patients += p.reports.size() > k ? 1 : 0;
    const auto fm = signature_features(truncate_reports(projected_test, k), sig);
    if (fm.column_names != model.feature_names) throw DimensionError("cindex_vs_report_count: feature layout mismatch");
    try {
      pt.c_index = concordance_index(data, risk_scores(model, fm));
    } catch (const DegenerateInputError&) {
    }
    out.push_back(pt);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Artifacts and manifest

struct ArtifactPaths {
  std::filesystem::path dir;

  std::string at(const std::string& name) const { return (dir / name).string(); }
  std::string cohort_embeddings() const { return at("cohort.emb.csv"); }
  std::string cohort_outcomes() const { return at("cohort.outcomes.csv"); }
  std::string split() const { return at("split.csv"); }
  std::string embedded() const { return at("embedded.emb.csv"); }
  std::string compression() const { return at("compression.map"); }
  std::string projected() const { return at("projected.emb.csv"); }
  std::string manifest() const { return at("manifest.json"); }
  /// Per-variant files live in the run directory (signature) or a subdirectory (baselines).
  std::filesystem::path variant_dir(FeatureKind k) const {
    return k == FeatureKind::signature ? dir : dir / ("baseline_" + std::string(to_string(k)));
  }
  std::string variant(FeatureKind k, const std::string& name) const { return (variant_dir(k) / name).string(); }
};

struct VariantSummary {
  FeatureKind kind = FeatureKind::signature;
  GridSearchResult grid;
  CoxModel model;
  EvaluationReport pooled;
  std::vector<EvaluationReport> folds;
  std::map<std::string, std::pair<double, double>> fold_mean_sd;
  std::vector<ReportCountPoint> report_curve;
};

/// Scalar metrics aggregated over test folds.
inline std::map<std::string, double> scalar_metrics(const EvaluationReport& r) {
  std::map<std::string, double> m;
  m["c_index"] = r.c_index;
  m["mean_auc"] = r.mean_auc;
  for (const auto& [h, v] : r.ibs_by_horizon) m["ibs_" + text::format_double(h)] = v;
  m["pearson"] = r.correlation.pearson;
  m["spearman"] = r.correlation.spearman;
  return m;
}

inline nlohmann::json to_json(const EvaluationReport& r) {
  using nlohmann::json;
  json j;
  j["n_patients"] = r.n_patients;
  j["n_events"] = r.n_events;
  j["c_index"] = r.c_index;
  j["c_index_ci"] = {{"lo", r.c_index_ci.lo}, {"hi", r.c_index_ci.hi}, {"se", r.c_index_ci.se}};
  j["tau2_effective"] = r.tau2_effective;
  j["mean_auc"] = r.mean_auc;
  json ibs = json::object();
  for (const auto& [h, v] : r.ibs_by_horizon) ibs[text::format_double(h)] = v;
  j["ibs"] = ibs;
  j["correlation"] = {{"n", r.correlation.n},
                      {"pearson", r.correlation.pearson},
                      {"pearson_p", r.correlation.pearson_p},
                      {"spearman", r.correlation.spearman},
                      {"spearman_p", r.correlation.spearman_p}};
  json q = json::array();
  for (const auto& g : r.quartiles.groups) {
    q.push_back({{"quartile", g.quartile}, {"n", g.n}, {"median_log_t", g.median}, {"q25_log_t", g.q25},
                 {"q75_log_t", g.q75}, {"mean_log_t", g.mean}});
  }
  j["quartiles"] = {{"groups", q},
                    {"kruskal_h", r.quartiles.kruskal_h},
                    {"kruskal_p", r.quartiles.kruskal_p},
                    {"anova_f", r.quartiles.anova_f},
                    {"anova_p", r.quartiles.anova_p}};
  j["warnings"] = r.warnings;
  return j;
}

class Manifest {
 public:
  explicit Manifest(std::string path) : path_(std::move(path)) {
    if (std::filesystem::exists(path_)) {
      try {
        doc_ = nlohmann::json::parse(text::read_file(path_));
      } catch (const nlohmann::json::exception& e) {
        throw Error(path_ + ": unreadable manifest: " + e.what());
      }
    }
  }

  nlohmann::json& doc() { return doc_; }

  void set_header(const RunConfig& cfg) {
    doc_["format"] = "sigsurv-manifest v1";
    doc_["library_version"] = kLibraryVersion;
    doc_["config_hash"] = config_hash(cfg);
    doc_["seed"] = cfg.seed;
  }

  nlohmann::json& stage(const std::string& name) { return doc_["stages"][name]; }

  /// Records a finished stage; downstream stages whose recorded inputs no
  /// longer match are marked stale.
  void complete(const std::string& name, const std::map<std::string, std::string>& inputs,
                const std::map<std::string, std::pair<std::string, std::string>>& outputs, nlohmann::json info) {
    auto& s = stage(name);
    s = nlohmann::json::object();
    s["status"] = "ok";
    for (const auto& [label, path] : inputs) s["inputs"][label] = file_entry(path);
    for (const auto& [label, fv] : outputs) {
      auto e = file_entry(fv.first);
      e["version"] = fv.second;
      s["outputs"][label] = e;
    }
    s["info"] = std::move(info);
    refresh_staleness();
  }

  /// Marks `name` failed and every stage that consumes one of its outputs stale.
  void fail(const std::string& name, const std::string& error) {
    auto& s = stage(name);
    const auto outputs = s.contains("outputs") ? s["outputs"] : nlohmann::json::object();
    s["status"] = "failed";
    s["error"] = error;
    for (auto& [other, st] : doc_["stages"].items()) {
      if (other == name) continue;
      for (auto& [label, in] : st["inputs"].items()) {
        for (auto& [ol, out] : outputs.items()) {
          if (in["file"] == out["file"]) st["status"] = "stale";
        }
      }
    }
    for (auto& [ol, out] : s["outputs"].items()) out["stale"] = true;
  }

  void save() const { text::write_file(path_, doc_.dump(2) + "\n"); }

 private:
  static nlohmann::json file_entry(const std::string& path) {
    nlohmann::json e;
    e["file"] = std::filesystem::path(path).filename().string();
    e["path"] = path;
    e["sha256"] = std::filesystem::exists(path) ? text::sha256_file(path) : "";
    return e;
  }

  void refresh_staleness() {
    if (!doc_.contains("stages")) return;
    for (auto& [name, st] : doc_["stages"].items()) {
      if (st["status"] != "ok" || !st.contains("inputs")) continue;
      for (auto& [label, in] : st["inputs"].items()) {
        const std::string p = in["path"];
        if (!std::filesystem::exists(p) || text::sha256_file(p) != in["sha256"]) st["status"] = "stale";
      }
    }
  }

  std::string path_;
  nlohmann::json doc_ = nlohmann::json::object();
};

// ---------------------------------------------------------------------------
// Pipeline

using LogFn = std::function<void(const std::string&)>;

class Pipeline {
 public:
  explicit Pipeline(RunConfig cfg, LogFn log = {}) : cfg_(std::move(cfg)), paths_{cfg_.out_dir}, log_(std::move(log)) {
    cfg_.validate();
    std::filesystem::create_directories(paths_.dir);
  }

  const RunConfig& config() const noexcept { return cfg_; }
  const ArtifactPaths& paths() const noexcept { return paths_; }

  /// Validates, merges and masks the inputs, then writes the cohort and the
  /// stratified train/test assignment.
  void ingest() {
    stage("ingest", [&](Manifest& m) {
      if (cfg_.embeddings.empty() || cfg_.outcomes.empty()) throw Error("embeddings and outcomes paths are required");
      IngestStats stats;
      const Cohort raw = load_cohort(cfg_.embeddings, cfg_.outcomes, cfg_.mode, &stats);
      const auto masked = mask_tail(raw, cfg_.mask_horizon);
      write_cohort(masked.cohort, paths_.cohort_embeddings(), paths_.cohort_outcomes());
      const auto role = split_assignment(event_indicators(masked.cohort), cfg_.test_fraction, cfg_.test_folds,
                                         stream_seed(cfg_.seed, "split"));
      write_split(masked.cohort, role, paths_.split());
      const auto n_test = std::count_if(role.begin(), role.end(), [](int r) { return r >= 0; });
      nlohmann::json info{{"patients", masked.cohort.size()},
                          {"events", masked.cohort.n_events()},
                          {"reports", masked.cohort.n_reports()},
                          {"duplicates_dropped", stats.duplicates_dropped},
                          {"same_time_merged", stats.same_time_merged},
                          {"patients_without_reports", stats.patients_without_reports.size()},
                          {"excluded_by_mask", masked.excluded},
                          {"test_patients", n_test}};
      log("ingest: " + std::to_string(masked.cohort.size()) + " patients (" + std::to_string(masked.excluded) +
          " excluded by the " + text::format_double(cfg_.mask_horizon) + "-day mask), " + std::to_string(n_test) +
          " in test folds");
      m.complete("ingest", {{"embeddings", cfg_.embeddings}, {"outcomes", cfg_.outcomes}},
                 {{"cohort_embeddings", {paths_.cohort_embeddings(), "sigsurv-embeddings v1"}},
                  {"cohort_outcomes", {paths_.cohort_outcomes(), "outcomes v1"}},
                  {"split", {paths_.split(), "split v1"}}},
                 info);
    });
  }

  /// Token mode: SIF-embeds every report. Vector mode: nothing to do.
  void embed() {
    if (cfg_.mode == InputMode::vector) return;
    stage("embed", [&](Manifest& m) {
      const Cohort tok = load_cohort(paths_.cohort_embeddings(), paths_.cohort_outcomes(), InputMode::token);
      const auto table = WordTable::load(cfg_.word_vectors);
      const auto freqs = FrequencyTable::load(cfg_.word_frequencies);
      SifStats st;
      const Cohort vec = embed_cohort(tok, table, freqs, cfg_.sif, &st);
      write_cohort(vec, paths_.embedded(), paths_.at("embedded.outcomes.csv"));
      std::filesystem::remove(paths_.at("embedded.outcomes.csv"));
      log("embed: " + std::to_string(vec.n_reports()) + " reports, " + std::to_string(st.oov_occurrences) +
          " out-of-vocabulary token occurrences skipped");
      m.complete("embed",
                 {{"cohort_embeddings", paths_.cohort_embeddings()},
                  {"cohort_outcomes", paths_.cohort_outcomes()},
                  {"word_vectors", cfg_.word_vectors},
                  {"word_frequencies", cfg_.word_frequencies}},
                 {{"embedded", {paths_.embedded(), "sigsurv-embeddings v1"}}},
                 {{"oov_occurrences", st.oov_occurrences}, {"reports", vec.n_reports()}});
    });
  }

  /// Fits PCA on the training patients' reports and projects every patient.
  void compress() {
    stage("compress", [&](Manifest& m) {
      const Cohort all = embedded_cohort();
      const auto role = read_split(all, paths_.split());
      const auto parts = apply_assignment(all, role, cfg_.test_folds);
      const auto map = fit_pca(parts.train, cfg_.p_bar, cfg_.pca_scale);
      save_compression_map(map, paths_.compression());
      write_cohort(project_cohort(map, all), paths_.projected(), paths_.at("projected.outcomes.csv"));
      std::filesystem::remove(paths_.at("projected.outcomes.csv"));
      const double total = std::accumulate(map.explained_variance.begin(), map.explained_variance.end(), 0.0);
      log("compress: p=" + std::to_string(map.input_dim) + " -> p_bar=" + std::to_string(map.output_dim) +
          " on " + std::to_string(parts.train.n_reports()) + " training reports");
      m.doc()["lineage"]["pca_patients"] = {{"count", parts.train.size()}, {"sha256", ids_hash(parts.train)}};
      m.complete("compress", {{"embedded", embedded_path()}, {"split", paths_.split()}},
                 {{"compression_map", {paths_.compression(), "sigsurv-compression v1"}},
                  {"projected", {paths_.projected(), "sigsurv-embeddings v1"}}},
                 {{"explained_variance_total", total}, {"training_reports", parts.train.n_reports()}});
    });
  }

  /// Signature features (or a baseline's static features) for every patient.
  void signify(FeatureKind kind = FeatureKind::signature) {
    stage(stage_name("signify", kind), [&](Manifest& m) {
      const Cohort proj = projected_cohort();
      std::filesystem::create_directories(paths_.variant_dir(kind));
      const auto fm = build_features(kind, proj, cfg_.signature);
      save_feature_matrix(fm, features_path(kind));
      log(stage_name("signify", kind) + ": " + std::to_string(fm.rows()) + " x " + std::to_string(fm.cols()) +
          " feature matrix");
      m.complete(stage_name("signify", kind), {{"projected", paths_.projected()}},
                 {{"features", {features_path(kind), "features v1"}}},
                 {{"rows", fm.rows()}, {"cols", fm.cols()}});
    });
  }

  /// Lambda grid search by CV on the training patients, then the final fit.
  void fit(FeatureKind kind = FeatureKind::signature) {
    stage(stage_name("fit", kind), [&](Manifest& m) {
      const auto fm_all = load_feature_matrix(features_path(kind));
      const Cohort outcomes_cohort = outcome_cohort();
      const auto role = read_split(outcomes_cohort, paths_.split());
      const auto train_rows = rows_with_role(fm_all, outcomes_cohort, role, true);
      const auto ftr = select_rows(fm_all, train_rows);
      const auto dtr = aligned_outcomes(ftr, outcomes_cohort);
      const auto grid = cfg_.lambda_grid.values();
      FoldFeatures per_fold;
      Cohort train_embedded;
      if (cfg_.pca_per_fold) {
        const Cohort all = embedded_cohort();
        train_embedded = apply_assignment(all, read_split(all, paths_.split()), cfg_.test_folds).train;
        per_fold = [&, kind](std::span<const std::size_t> tr, std::span<const std::size_t> va) {
          const Cohort ctr = subset(train_embedded, tr), cva = subset(train_embedded, va);
          const auto map = fit_pca(ctr, cfg_.p_bar, cfg_.pca_scale);
          return std::make_pair(build_features(kind, project_cohort(map, ctr), cfg_.signature),
                                build_features(kind, project_cohort(map, cva), cfg_.signature));
        };
        if (train_embedded.size() != ftr.rows()) throw Error("per-fold PCA: training cohort and features disagree");
      }
      const auto gs = grid_search_lambda(ftr, dtr, grid, cfg_.cv_folds, stream_seed(cfg_.seed, "cv"), cfg_.cox,
                                         cfg_.threads, per_fold);
      save_cv_table(gs, variant_path(kind, "cv_table.csv"));
      CoxFitConfig fc = cfg_.cox;
      fc.lambda = gs.best_lambda;
      const auto model = fit_cox_lasso(ftr, dtr, fc);
      if (cfg_.cox.require_convergence && !model.info.converged) throw Error("final fit did not converge");
      save_cox_model(model, variant_path(kind, "model.txt"));
      log(stage_name("fit", kind) + ": best lambda " + text::format_double(gs.best_lambda) + " (CV C-index " +
          text::format_double(gs.table[gs.best_index].mean_cindex) + "), " + std::to_string(model.n_nonzero()) +
          " nonzero coefficients");
      const std::string ids = sorted_id_hash(ftr.patient_ids);
      m.doc()["lineage"][stage_name("cv_patients", kind)] = {{"count", ftr.rows()}, {"sha256", ids}};
      m.doc()["lineage"][stage_name("fit_patients", kind)] = {{"count", ftr.rows()}, {"sha256", ids}};
      m.complete(stage_name("fit", kind),
                 {{"features", features_path(kind)}, {"outcomes", paths_.cohort_outcomes()}, {"split", paths_.split()}},
                 {{"cv_table", {variant_path(kind, "cv_table.csv"), "cv_table v1"}},
                  {"model", {variant_path(kind, "model.txt"), "sigsurv-cox v1"}}},
                 {{"best_lambda", gs.best_lambda},
                  {"cv_cindex", gs.table[gs.best_index].mean_cindex},
                  {"nonzero", model.n_nonzero()},
                  {"converged", model.info.converged},
                  {"kkt_residual", model.info.kkt_residual},
                  {"grid_points", grid.size()}});
    });
  }

  /// Test-fold and pooled evaluation plus curve files; checks that no test
  /// patient reached PCA, CV or the final fit.
  VariantSummary evaluate(FeatureKind kind = FeatureKind::signature) {
    VariantSummary out;
    out.kind = kind;
    stage(stage_name("evaluate", kind), [&](Manifest& m) {
      const Cohort outcomes_cohort = outcome_cohort();
      const auto role = read_split(outcomes_cohort, paths_.split());
      lineage_check(m, outcomes_cohort, role, kind);
      const auto fm_all = load_feature_matrix(features_path(kind));
      out.model = load_cox_model(variant_path(kind, "model.txt"));
      if (out.model.feature_names != fm_all.column_names) throw DimensionError("model and feature columns differ");
      const auto train_rows = rows_with_role(fm_all, outcomes_cohort, role, true);
      const auto dtr = aligned_outcomes(select_rows(fm_all, train_rows), outcomes_cohort);
      const StepFunction G = censoring_km(dtr);

      std::unordered_map<std::string, int> role_of;
      for (std::size_t i = 0; i < outcomes_cohort.size(); ++i) role_of[outcomes_cohort.patients[i].outcome.patient_id] = role[i];
      std::vector<std::vector<std::size_t>> fold_rows(static_cast<std::size_t>(cfg_.test_folds));
      std::vector<std::size_t> test_rows;
      for (std::size_t r = 0; r < fm_all.rows(); ++r) {
        const int f = role_of.at(fm_all.patient_ids[r]);
        if (f >= 0) {
          fold_rows[static_cast<std::size_t>(f)].push_back(r);
          test_rows.push_back(r);
        }
      }
      auto eval_rows = [&](std::span<const std::size_t> rows) {
        const auto fm = select_rows(fm_all, rows);
        const auto d = aligned_outcomes(fm, outcomes_cohort);
        const auto eta = risk_scores(out.model, fm);
        const SurvivalFn S = [&](std::size_t i, double t) { return survival_from_risk(out.model, eta[i], t); };
        return evaluate_scores(d, eta, S, G);
      };
      out.pooled = eval_rows(test_rows);
      for (const auto& rows : fold_rows) out.folds.push_back(eval_rows(rows));
      std::map<std::string, std::vector<double>> per_metric;
      for (const auto& f : out.folds) {
        for (const auto& [k, v] : scalar_metrics(f)) per_metric[k].push_back(v);
      }
      for (const auto& [k, v] : per_metric) out.fold_mean_sd[k] = {mean_of(v), sd_of(v)};

      std::filesystem::create_directories(paths_.variant_dir(kind));
      std::map<std::string, std::pair<std::string, std::string>> outputs;
      if (kind == FeatureKind::signature) {
        const Cohort proj = projected_cohort();
        const auto test = apply_assignment(proj, read_split(proj, paths_.split()), cfg_.test_folds);
        Cohort test_all;
        test_all.mode = proj.mode;
        test_all.embedding_dim = proj.embedding_dim;
        for (const auto& f : test.test_folds) {
          test_all.patients.insert(test_all.patients.end(), f.patients.begin(), f.patients.end());
        }
        std::vector<std::size_t> ks = cfg_.report_counts;
        if (ks.empty()) {
          std::size_t max_n = 0;
          for (const auto& p : test_all.patients) max_n = std::max(max_n, p.reports.size());
          for (std::size_t k = 1; k <= max_n; ++k) ks.push_back(k);
        }
        out.report_curve = cindex_vs_report_count(test_all, out.model, cfg_.signature, ks);
        std::string s = "k,c_index,truncated_patients\n";
        for (const auto& p : out.report_curve) {
          s += std::to_string(p.k) + "," + text::format_double(p.c_index) + "," + std::to_string(p.truncated_patients) + "\n";
        }
        text::write_file(variant_path(kind, "cindex_vs_k.csv"), s);
        outputs["cindex_vs_k"] = {variant_path(kind, "cindex_vs_k.csv"), "curve v1"};
      }
      write_reports(kind, out, outputs);
      log(stage_name("evaluate", kind) + ": test C-index " + text::format_double(out.pooled.c_index) + " [" +
          text::format_double(out.pooled.c_index_ci.lo) + ", " + text::format_double(out.pooled.c_index_ci.hi) +
          "], fold mean " + text::format_double(out.fold_mean_sd["c_index"].first) + " +/- " +
          text::format_double(out.fold_mean_sd["c_index"].second));
      std::map<std::string, std::string> inputs{{"features", features_path(kind)},
                                                {"model", variant_path(kind, "model.txt")},
                                                {"outcomes", paths_.cohort_outcomes()},
                                                {"split", paths_.split()}};
      if (kind == FeatureKind::signature) inputs["projected"] = paths_.projected();
      m.complete(stage_name("evaluate", kind), inputs, outputs,
                 {{"test_cindex", out.pooled.c_index}, {"lineage_check", "passed"}});
    });
    return out;
  }

  /// Every stage in order for the signature model.
  VariantSummary run() {
    ingest();
    embed();
    compress();
    signify();
    fit();
    return evaluate();
  }

  /// Identical stack on a static per-patient feature; reuses the upstream
  /// artifacts, producing them first if absent.
  VariantSummary run_baseline(FeatureKind kind) {
    if (kind == FeatureKind::signature) throw Error("run_baseline: kind must be last or mean");
    if (!std::filesystem::exists(paths_.projected())) {
      ingest();
      embed();
      compress();
    }
    signify(kind);
    fit(kind);
    return evaluate(kind);
  }

 private:
  static std::string stage_name(const std::string& base, FeatureKind kind) {
    return kind == FeatureKind::signature ? base : base + "_" + std::string(to_string(kind));
  }

  std::string features_path(FeatureKind k) const { return paths_.variant(k, "features.csv"); }
  std::string variant_path(FeatureKind k, const std::string& name) const { return paths_.variant(k, name); }
  std::string embedded_path() const {
    return cfg_.mode == InputMode::token ? paths_.embedded() : paths_.cohort_embeddings();
  }
  Cohort embedded_cohort() const { return load_cohort(embedded_path(), paths_.cohort_outcomes(), InputMode::vector); }
  Cohort projected_cohort() const { return load_cohort(paths_.projected(), paths_.cohort_outcomes(), InputMode::vector); }
  /// Outcomes only; the report payload is not needed.
  Cohort outcome_cohort() const {
    Cohort c;
    for (const auto& o : load_outcomes(paths_.cohort_outcomes())) c.patients.push_back({o, {}});
    return c;
  }
  static std::string ids_hash(const Cohort& c) {
    std::vector<std::string> ids;
    for (const auto& p : c.patients) ids.push_back(p.outcome.patient_id);
    return sorted_id_hash(std::move(ids));
  }

  static std::vector<std::size_t> rows_with_role(const FeatureMatrix& fm, const Cohort& cohort,
                                                 std::span<const int> role, bool train) {
    std::unordered_map<std::string, int> r;
    for (std::size_t i = 0; i < cohort.size(); ++i) r[cohort.patients[i].outcome.patient_id] = role[i];
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < fm.rows(); ++i) {
      const auto it = r.find(fm.patient_ids[i]);
      if (it == r.end()) throw Error("feature row '" + fm.patient_ids[i] + "' is not in the split");
      if ((it->second < 0) == train) rows.push_back(i);
    }
    return rows;
  }

  void lineage_check(Manifest& m, const Cohort& cohort, std::span<const int> role, FeatureKind kind) {
    std::vector<std::string> train_ids;
    std::set<std::string> test_ids;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      if (role[i] < 0) train_ids.push_back(cohort.patients[i].outcome.patient_id);
      else test_ids.insert(cohort.patients[i].outcome.patient_id);
    }
    for (const auto& id : train_ids) {
      if (test_ids.count(id)) throw Error("lineage check: patient '" + id + "' is both train and test");
    }
    const std::string expect = sorted_id_hash(train_ids);
    auto& lin = m.doc()["lineage"];
    for (const auto& key : std::vector<std::string>{"pca_patients", stage_name("cv_patients", kind),
                                  stage_name("fit_patients", kind)}) {
      if (!lin.contains(key)) throw Error("lineage check: manifest has no record of '" + key + "'");
      if (lin[key]["sha256"] != expect) {
        throw Error("lineage check: '" + key + "' does not match the training split (test data may have leaked)");
      }
    }
    lin["test_patients"] = {{"count", test_ids.size()}};
    lin["check"] = "passed";
  }

  EvaluationReport evaluate_scores(const SurvivalData& d, std::span<const double> eta, const SurvivalFn& S,
                                   const StepFunction& G) const {
    return sigsurv::evaluate(d, eta, S, G, cfg_.evaluation);
  }

  void write_reports(FeatureKind kind, const VariantSummary& v,
                     std::map<std::string, std::pair<std::string, std::string>>& outputs) const {
    using nlohmann::json;
    json j;
    j["format"] = "sigsurv-report v1";
    j["features"] = std::string(to_string(kind));
    j["lambda"] = v.model.lambda;
    j["nonzero_coefficients"] = v.model.n_nonzero();
    j["pooled_test"] = to_json(v.pooled);
    json folds = json::array();
    for (const auto& f : v.folds) folds.push_back(to_json(f));
    j["test_folds"] = folds;
    json agg = json::object();
    for (const auto& [k, ms] : v.fold_mean_sd) agg[k] = {{"mean", ms.first}, {"sd", ms.second}};
    j["fold_mean_sd"] = agg;
    json curve = json::array();
    for (const auto& p : v.report_curve) curve.push_back({{"k", p.k}, {"c_index", p.c_index}});
    j["cindex_vs_report_count"] = curve;
    text::write_file(variant_path(kind, "report.json"), j.dump(2) + "\n");
    outputs["report_json"] = {variant_path(kind, "report.json"), "sigsurv-report v1"};

    // Human-readable table.
    auto fmt = [](double x) {
      if (!std::isfinite(x)) return std::string("n/a");
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", x);
      return std::string(buf);
    };
    auto pad = [](std::string s, std::size_t w) { return s.size() < w ? s + std::string(w - s.size(), ' ') : s; };
    std::string t = "features: " + std::string(to_string(kind)) + "   lambda: " + text::format_double(v.model.lambda) +
                    "   nonzero: " + std::to_string(v.model.n_nonzero()) + "\n";
    t += "test patients: " + std::to_string(v.pooled.n_patients) + " (" + std::to_string(v.pooled.n_events) +
         " events) in " + std::to_string(v.folds.size()) + " folds\n\n";
    t += pad("metric", 16) + pad("pooled", 12) + pad("fold mean", 12) + "fold sd\n";
    const auto pooled = scalar_metrics(v.pooled);
    for (const auto& [k, ms] : v.fold_mean_sd) {
      t += pad(k, 16) + pad(fmt(pooled.at(k)), 12) + pad(fmt(ms.first), 12) + fmt(ms.second) + "\n";
    }
    t += "\nC-index 95% CI (jackknife): [" + fmt(v.pooled.c_index_ci.lo) + ", " + fmt(v.pooled.c_index_ci.hi) + "]\n";
    t += "Pearson p = " + fmt(v.pooled.correlation.pearson_p) + ", Spearman p = " + fmt(v.pooled.correlation.spearman_p) +
         "\n";
    t += "Kruskal-Wallis H = " + fmt(v.pooled.quartiles.kruskal_h) + " (p = " + fmt(v.pooled.quartiles.kruskal_p) +
         "), ANOVA F = " + fmt(v.pooled.quartiles.anova_f) + " (p = " + fmt(v.pooled.quartiles.anova_p) + ")\n";
    for (const auto& w : v.pooled.warnings) t += "warning: " + w + "\n";
    text::write_file(variant_path(kind, "report.txt"), t);
    outputs["report_txt"] = {variant_path(kind, "report.txt"), "text"};

    std::string auc = "t,td_auc\n";
    for (const auto& [tt, a] : v.pooled.td_auc) auc += text::format_double(tt) + "," + text::format_double(a) + "\n";
    text::write_file(variant_path(kind, "td_auc.csv"), auc);
    outputs["td_auc"] = {variant_path(kind, "td_auc.csv"), "curve v1"};
    std::string bs = "t,brier\n";
    for (const auto& [tt, b] : v.pooled.brier) bs += text::format_double(tt) + "," + text::format_double(b) + "\n";
    text::write_file(variant_path(kind, "brier.csv"), bs);
    outputs["brier"] = {variant_path(kind, "brier.csv"), "curve v1"};
    std::string q = "quartile,n,median_log_t,q25_log_t,q75_log_t,mean_log_t\n";
    for (const auto& g : v.pooled.quartiles.groups) {
      q += std::to_string(g.quartile) + "," + std::to_string(g.n) + "," + text::format_double(g.median) + "," +
           text::format_double(g.q25) + "," + text::format_double(g.q75) + "," + text::format_double(g.mean) + "\n";
    }
    text::write_file(variant_path(kind, "quartiles.csv"), q);
    outputs["quartiles"] = {variant_path(kind, "quartiles.csv"), "curve v1"};
    std::string folds_csv = "fold,n,events";
    const auto names = scalar_metrics(v.pooled);
    for (const auto& [k, x] : names) folds_csv += "," + k;
    folds_csv += "\n";
    for (std::size_t f = 0; f < v.folds.size(); ++f) {
      folds_csv += std::to_string(f) + "," + std::to_string(v.folds[f].n_patients) + "," +
                   std::to_string(v.folds[f].n_events);
      for (const auto& [k, x] : scalar_metrics(v.folds[f])) folds_csv += "," + text::format_double(x);
      folds_csv += "\n";
    }
    text::write_file(variant_path(kind, "folds.csv"), folds_csv);
    outputs["folds"] = {variant_path(kind, "folds.csv"), "folds v1"};
  }

  template <typename Body>
  void stage(const std::string& name, Body&& body) {
    Manifest m(paths_.manifest());
    m.set_header(cfg_);
    try {
      body(m);
    } catch (const std::exception& e) {
      m.fail(name, e.what());
      m.save();
      throw StageError(name, e.what());
    }
    m.save();
  }

  void log(const std::string& s) const {
    if (log_) log_(s);
  }

  RunConfig cfg_;
  ArtifactPaths paths_;
  LogFn log_;
};

/// Writes a synthetic cohort in the ingest formats: embeddings.csv,
/// outcomes.csv and truth.csv under `dir`.
inline SyntheticCohort simulate_to(const SynthConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto s = generate_cohort(cfg);
  write_cohort(s.cohort, (dir / "embeddings.csv").string(), (dir / "outcomes.csv").string());
  write_ground_truth(s, (dir / "truth.csv").string());
  return s;
}

}  // namespace sigsurv
