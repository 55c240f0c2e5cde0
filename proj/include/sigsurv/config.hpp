#pragma once

// Run configuration: a plain `key = value` document. `#` starts a comment,
// blank lines are ignored, unknown or repeated keys are errors. Relative paths
// are resolved against the directory holding the config file.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sigsurv/cox.hpp"
#include "sigsurv/embedding.hpp"
#include "sigsurv/error.hpp"
#include "sigsurv/metrics.hpp"
#include "sigsurv/signature.hpp"
#include "sigsurv/synthetic.hpp"
#include "sigsurv/text_io.hpp"

namespace sigsurv {

enum class GridKind { log, linear };

struct LambdaGrid {
  GridKind kind = GridKind::log;
  double start = 1e-3;
  double stop = 10.0;
  double step = 1e-3;       ///< linear grids
  std::size_t points = 50;  ///< log grids

  std::vector<double> values() const {
    if (!(start > 0.0) || !(stop >= start)) throw Error("lambda grid: need 0 < start <= stop");
    std::vector<double> g;
    if (kind == GridKind::log) {
      if (points == 0) throw Error("lambda grid: points must be positive");
      if (points == 1 || start == stop) return {start};
      const double a = std::log(start), b = std::log(stop);
      for (std::size_t k = 0; k < points; ++k) {
        g.push_back(std::exp(a + (b - a) * static_cast<double>(k) / static_cast<double>(points - 1)));
      }
      g.front() = start;
      g.back() = stop;
    } else {
      if (!(step > 0.0)) throw Error("lambda grid: step must be positive");
      const auto n = static_cast<std::size_t>(std::floor((stop - start) / step * (1.0 + 1e-12))) + 1;
      for (std::size_t k = 0; k < n; ++k) g.push_back(start + step * static_cast<double>(k));
    }
    return g;
  }
};

struct RunConfig {
  // inputs
  std::string embeddings;
  std::string outcomes;
  InputMode mode = InputMode::vector;
  std::string word_vectors;
  std::string word_frequencies;
  SifConfig sif;
  std::string out_dir = "sigsurv_out";
  std::uint64_t seed = 1;
  // preprocessing and splitting
  double mask_horizon = 100.0;
  double test_fraction = 0.2;
  int test_folds = 10;
  // compression and signatures
  std::size_t p_bar = 25;
  bool pca_scale = false;
  bool pca_per_fold = false;
  SignatureOptions signature{3, {}, false};
  // model selection
  LambdaGrid lambda_grid;
  int cv_folds = 5;
  CoxFitConfig cox;
  unsigned threads = 0;  ///< 0 = hardware concurrency
  // evaluation
  EvaluationOptions evaluation;
  std::vector<std::size_t> report_counts;  ///< empty = 1..max reports
  // simulate
  SynthConfig synth;

  void validate() const {
    if (p_bar == 0) throw Error("config: p_bar must be positive");
    if (signature.level < 1) throw Error("config: level must be at least 1");
    if (cv_folds < 2) throw Error("config: cv_folds must be at least 2");
    if (test_folds < 2) throw Error("config: test_folds must be at least 2");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw Error("config: test_fraction must lie in (0,1)");
    if (!(mask_horizon >= 0.0)) throw Error("config: mask_horizon must be non-negative");
    if (!(lambda_grid.start > 0.0)) throw Error("config: lambda_start must be positive");
    if (lambda_grid.kind == GridKind::linear && !(lambda_grid.step > 0.0)) throw Error("config: lambda_step must be positive");
    if (!(evaluation.tau2 > evaluation.tau1) || evaluation.tau1 < 0.0) throw Error("config: need 0 <= tau1 < tau2");
    if (!(cox.tol > 0.0)) throw Error("config: tol must be positive");
    if (mode == InputMode::token && (word_vectors.empty() || word_frequencies.empty())) {
      throw Error("config: token mode needs word_vectors and word_frequencies");
    }
    synth.validate();
  }
};

namespace detail {

inline bool parse_bool(std::string_view v, bool& out) {
  if (v == "true" || v == "1" || v == "yes") return out = true, true;
  if (v == "false" || v == "0" || v == "no") return out = false, true;
  return false;
}

template <typename T>
std::vector<T> parse_list(std::string_view v, const std::function<bool(std::string_view, T&)>& convert) {
  std::vector<T> out;
  if (text::trim(v).empty()) return out;
  for (auto part : text::split(v, ',')) {
    T x{};
    if (!convert(text::trim(part), x)) throw Error("bad list element '" + std::string(part) + "'");
    out.push_back(x);
  }
  return out;
}

/// Key registry: each entry parses into and prints from a RunConfig field.
struct ConfigKey {
  std::function<bool(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
ConfigKey number_key(T RunConfig::*field) {
  return {[field](RunConfig& c, std::string_view v) {
            if constexpr (std::is_floating_point_v<T>) return text::parse_double(v, c.*field);
            else return text::parse_int(v, c.*field);
          },
          [field](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return text::format_double(c.*field);
            else return std::to_string(c.*field);
          }};
}

template <typename T>
ConfigKey nested_number(std::function<T&(RunConfig&)> ref) {
  return {[ref](RunConfig& c, std::string_view v) {
            if constexpr (std::is_floating_point_v<T>) return text::parse_double(v, ref(c));
            else return text::parse_int(v, ref(c));
          },
          [ref](const RunConfig& c) {
            auto& cc = const_cast<RunConfig&>(c);
            if constexpr (std::is_floating_point_v<T>) return text::format_double(ref(cc));
            else return std::to_string(ref(cc));
          }};
}

inline ConfigKey bool_key(std::function<bool&(RunConfig&)> ref) {
  return {[ref](RunConfig& c, std::string_view v) { return parse_bool(v, ref(c)); },
          [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

inline ConfigKey string_key(std::string RunConfig::*field) {
  return {[field](RunConfig& c, std::string_view v) {
            c.*field = std::string(v);
            return true;
          },
          [field](const RunConfig& c) { return c.*field; }};
}

template <typename E>
ConfigKey enum_key(std::function<E&(RunConfig&)> ref, std::vector<std::pair<std::string, E>> names) {
  return {[ref, names](RunConfig& c, std::string_view v) {
            for (const auto& [n, e] : names) {
              if (v == n) return ref(c) = e, true;
            }
            return false;
          },
          [ref, names](const RunConfig& c) {
            for (const auto& [n, e] : names) {
              if (ref(const_cast<RunConfig&>(c)) == e) return n;
            }
            return std::string("?");
          }};
}

inline const std::map<std::string, ConfigKey>& config_keys() {
  using R = RunConfig;
  static const std::map<std::string, ConfigKey> keys = [] {
    std::map<std::string, ConfigKey> k;
    k["embeddings"] = string_key(&R::embeddings);
    k["outcomes"] = string_key(&R::outcomes);
    k["word_vectors"] = string_key(&R::word_vectors);
    k["word_frequencies"] = string_key(&R::word_frequencies);
    k["out_dir"] = string_key(&R::out_dir);
    k["mode"] = enum_key<InputMode>([](R& c) -> InputMode& { return c.mode; },
                                    {{"vector", InputMode::vector}, {"token", InputMode::token}});
    k["seed"] = number_key(&R::seed);
    k["sif_a"] = nested_number<double>([](R& c) -> double& { return c.sif.a; });
    k["sif_remove_first_pc"] = bool_key([](R& c) -> bool& { return c.sif.remove_first_pc; });
    k["sif_unique_tokens"] = bool_key([](R& c) -> bool& { return c.sif.unique_tokens; });
    k["oov"] = enum_key<OovPolicy>([](R& c) -> OovPolicy& { return c.sif.oov; },
                                   {{"skip", OovPolicy::skip}, {"fail", OovPolicy::fail}});
    k["mask_horizon"] = number_key(&R::mask_horizon);
    k["test_fraction"] = number_key(&R::test_fraction);
    k["test_folds"] = number_key(&R::test_folds);
    k["p_bar"] = number_key(&R::p_bar);
    k["pca_scale"] = bool_key([](R& c) -> bool& { return c.pca_scale; });
    k["pca_per_fold"] = bool_key([](R& c) -> bool& { return c.pca_per_fold; });
    k["level"] = nested_number<std::size_t>([](R& c) -> std::size_t& { return c.signature.level; });
    k["time_scale"] = enum_key<TimeScale>([](R& c) -> TimeScale& { return c.signature.augment.time_scale; },
                                          {{"unit_interval", TimeScale::unit_interval}, {"days", TimeScale::days}});
    k["single_report_offset"] =
        nested_number<double>([](R& c) -> double& { return c.signature.augment.single_report_offset; });
    k["drop_time_words"] = bool_key([](R& c) -> bool& { return c.signature.drop_time_words; });
    k["lambda_grid"] = enum_key<GridKind>([](R& c) -> GridKind& { return c.lambda_grid.kind; },
                                          {{"log", GridKind::log}, {"linear", GridKind::linear}});
    k["lambda_start"] = nested_number<double>([](R& c) -> double& { return c.lambda_grid.start; });
    k["lambda_stop"] = nested_number<double>([](R& c) -> double& { return c.lambda_grid.stop; });
    k["lambda_step"] = nested_number<double>([](R& c) -> double& { return c.lambda_grid.step; });
    k["lambda_points"] = nested_number<std::size_t>([](R& c) -> std::size_t& { return c.lambda_grid.points; });
    k["cv_folds"] = number_key(&R::cv_folds);
    k["threads"] = number_key(&R::threads);
    k["solver"] = enum_key<CoxSolver>([](R& c) -> CoxSolver& { return c.cox.solver; },
                                      {{"newton", CoxSolver::proximal_newton}, {"fista", CoxSolver::fista}});
    k["max_iters"] = nested_number<int>([](R& c) -> int& { return c.cox.max_iters; });
    k["tol"] = nested_number<double>([](R& c) -> double& { return c.cox.tol; });
    k["kkt_tol"] = nested_number<double>([](R& c) -> double& { return c.cox.kkt_tol; });
    k["standardize"] = bool_key([](R& c) -> bool& { return c.cox.standardize; });
    k["tau1"] = nested_number<double>([](R& c) -> double& { return c.evaluation.tau1; });
    k["tau2"] = nested_number<double>([](R& c) -> double& { return c.evaluation.tau2; });
    k["ibs_horizons"] = {[](R& c, std::string_view v) {
                           c.evaluation.ibs_horizons = parse_list<double>(v, [](std::string_view s, double& x) {
                             return text::parse_double(s, x);
                           });
                           return true;
                         },
                         [](const R& c) {
                           std::string s;
                           for (double h : c.evaluation.ibs_horizons) s += (s.empty() ? "" : ",") + text::format_double(h);
                           return s;
                         }};
    k["auc_weighting"] = enum_key<AucWeighting>([](R& c) -> AucWeighting& { return c.evaluation.auc_weighting; },
                                                {{"unweighted", AucWeighting::unweighted}, {"ipcw", AucWeighting::ipcw}});
    k["mean_auc_reference"] = enum_key<MeanAucReference>(
        [](R& c) -> MeanAucReference& { return c.evaluation.mean_auc_reference; },
        {{"event_km", MeanAucReference::event_km}, {"censoring_km", MeanAucReference::censoring_km}});
    k["eval_grid"] = {[](R& c, std::string_view v) {
                        if (v == "event_times") return c.evaluation.uniform_grid = false, true;
                        if (v == "uniform") return c.evaluation.uniform_grid = true, true;
                        return false;
                      },
                      [](const R& c) { return std::string(c.evaluation.uniform_grid ? "uniform" : "event_times"); }};
    k["eval_grid_points"] = nested_number<std::size_t>([](R& c) -> std::size_t& { return c.evaluation.grid_points; });
    k["alpha"] = nested_number<double>([](R& c) -> double& { return c.evaluation.alpha; });
    k["report_counts"] = {[](R& c, std::string_view v) {
                            c.report_counts = parse_list<std::size_t>(v, [](std::string_view s, std::size_t& x) {
                              return text::parse_int(s, x) && x > 0;
                            });
                            return true;
                          },
                          [](const R& c) {
                            std::string s;
                            for (auto x : c.report_counts) s += (s.empty() ? "" : ",") + std::to_string(x);
                            return s;
                          }};
    k["sim.n_patients"] = nested_number<std::size_t>([](R& c) -> std::size_t& { return c.synth.n_patients; });
    k["sim.p"] = nested_number<std::size_t>([](R& c) -> std::size_t& { return c.synth.p; });
    k["sim.latent_dim"] = nested_number<std::size_t>([](R& c) -> std::size_t& { return c.synth.latent_dim; });
    k["sim.reports_min"] = nested_number<std::size_t>([](R& c) -> std::size_t& { return c.synth.reports_min; });
    k["sim.reports_max"] = nested_number<std::size_t>([](R& c) -> std::size_t& { return c.synth.reports_max; });
    k["sim.trend_strength"] = nested_number<double>([](R& c) -> double& { return c.synth.trend_strength; });
    k["sim.signal_strength"] = nested_number<double>([](R& c) -> double& { return c.synth.signal_strength; });
    k["sim.intercept_sd"] = nested_number<double>([](R& c) -> double& { return c.synth.intercept_sd; });
    k["sim.report_noise"] = nested_number<double>([](R& c) -> double& { return c.synth.report_noise; });
    k["sim.ambient_noise"] = nested_number<double>([](R& c) -> double& { return c.synth.ambient_noise; });
    k["sim.baseline_hazard_rate"] =
        nested_number<double>([](R& c) -> double& { return c.synth.baseline_hazard_rate; });
    k["sim.censoring_rate"] = nested_number<double>([](R& c) -> double& { return c.synth.censoring_rate; });
    k["sim.report_gap_days"] = nested_number<double>([](R& c) -> double& { return c.synth.report_gap_days; });
    return k;
  }();
  return keys;
}

inline bool is_path_key(const std::string& key) {
  return key == "embeddings" || key == "outcomes" || key == "word_vectors" || key == "word_frequencies" ||
         key == "out_dir";
}

}  // namespace detail

/// Applies `key = value` from text. `base_dir` anchors relative paths.
inline void apply_config_text(RunConfig& cfg, std::string_view content, const std::string& source,
                              const std::filesystem::path& base_dir = {}) {
  const auto& keys = detail::config_keys();
  text::LineReader reader(content);
  std::string_view raw;
  std::map<std::string, std::size_t> seen;
  while (reader.next(raw)) {
    const auto hash = raw.find('#');
    const auto line = text::trim(hash == std::string_view::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto ln = reader.line_number();
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, ln, "expected 'key = value'");
    const std::string key(text::trim(line.substr(0, eq)));
    const auto value = text::trim(line.substr(eq + 1));
    const auto it = keys.find(key);
    if (it == keys.end()) throw ParseError(source, ln, "unknown key '" + key + "'");
    if (const auto [pos, fresh] = seen.emplace(key, ln); !fresh) {
      throw ParseError(source, ln, "key '" + key + "' repeated (first set on line " + std::to_string(pos->second) + ")");
    }
    std::string resolved(value);
    if (detail::is_path_key(key) && !resolved.empty() && !base_dir.empty() &&
        std::filesystem::path(resolved).is_relative()) {
      resolved = (base_dir / resolved).lexically_normal().string();
    }
    bool ok = false;
    try {
      ok = it->second.set(cfg, resolved);
    } catch (const Error& e) {
      throw ParseError(source, ln, "key '" + key + "': " + e.what());
    }
    if (!ok) throw ParseError(source, ln, "invalid value '" + std::string(value) + "' for key '" + key + "'");
  }
}

inline RunConfig load_config(const std::string& path) {
  RunConfig cfg;
  apply_config_text(cfg, text::read_file(path), path, std::filesystem::path(path).parent_path());
  cfg.validate();
  return cfg;
}

/// Every key with its effective value, sorted by key; the basis of the config hash.
inline std::string canonical_config(const RunConfig& cfg) {
  std::string s;
  for (const auto& [key, k] : detail::config_keys()) s += key + " = " + k.get(cfg) + "\n";
  return s;
}

/// Hash of the settings that influence results (output location and thread
/// count excluded).
inline std::string config_hash(const RunConfig& cfg) {
  RunConfig c = cfg;
  c.out_dir.clear();
  c.threads = 0;
  return text::sha256_hex(canonical_config(c));
}

}  // namespace sigsurv
