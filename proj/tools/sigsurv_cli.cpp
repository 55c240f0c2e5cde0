// sigsurv: command-line front end to the pipeline stages.
//
// Settings are layered: built-in defaults, then --config, then each --set
// key=value, then the dedicated flags (--seed, --out-dir, ...).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sigsurv/sigsurv.hpp"

namespace {

using namespace sigsurv;

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::optional<unsigned> threads;
  bool quiet = false;
};

RunConfig build_config(const Common& c) {
  RunConfig cfg;
  if (!c.config.empty()) {
    apply_config_text(cfg, text::read_file(c.config), c.config, std::filesystem::path(c.config).parent_path());
  }
  for (const auto& s : c.sets) {
    if (s.find('=') == std::string::npos) throw Error("--set expects key=value, got '" + s + "'");
    apply_config_text(cfg, s, "--set");
  }
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.synth.seed = *c.seed;
  }
  if (!c.out_dir.empty()) cfg.out_dir = c.out_dir;
  if (c.threads) cfg.threads = *c.threads;
  return cfg;
}

FeatureKind parse_kind(const std::string& s) {
  if (s == "signature") return FeatureKind::signature;
  if (s == "last") return FeatureKind::last_report;
  if (s == "mean") return FeatureKind::mean_embedding;
  throw Error("unknown feature kind '" + s + "' (expected signature, last or mean)");
}

void print_summary(const VariantSummary& v) {
  std::printf("%s: test C-index %.4f (fold mean %.4f, sd %.4f), mean td-AUC %.4f, lambda %s, %zu nonzero\n",
              std::string(to_string(v.kind)).c_str(), v.pooled.c_index, v.fold_mean_sd.at("c_index").first,
              v.fold_mean_sd.at("c_index").second, v.pooled.mean_auc, text::format_double(v.model.lambda).c_str(),
              v.model.n_nonzero());
}

/// Risk scores (and optionally survival probabilities) for a feature file.
void predict(const std::string& model_path, const std::string& features_path, const std::vector<double>& times,
             const std::string& output) {
  const auto model = load_cox_model(model_path);
  const auto fm = load_feature_matrix(features_path);
  if (fm.column_names != model.feature_names) throw DimensionError("feature columns do not match the model");
  std::string s = "patient_id,eta";
  for (double t : times) s += ",S_" + text::format_double(t);
  s += "\n";
  const auto eta = risk_scores(model, fm);
  for (std::size_t i = 0; i < fm.rows(); ++i) {
    s += fm.patient_ids[i] + "," + text::format_double(eta[i]);
    for (double t : times) s += "," + text::format_double(survival_from_risk(model, eta[i], t));
    s += "\n";
  }
  if (output.empty() || output == "-") {
    std::fwrite(s.data(), 1, s.size(), stdout);
  } else {
    text::write_file(output, s);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Survival prediction from timestamped report embeddings via path signatures and Cox-LASSO"};
  app.set_version_flag("--version", std::string(kLibraryVersion));
  app.require_subcommand(1);
  app.fallthrough();

  Common c;
  app.add_option("--config", c.config, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", c.sets, "override one configuration key (key=value); repeatable");
  app.add_option("--seed", c.seed, "master seed");
  app.add_option("--out-dir", c.out_dir, "artifact directory");
  app.add_option("--threads", c.threads, "worker threads for grid search (0 = all cores)");
  app.add_flag("-q,--quiet", c.quiet, "suppress progress messages");

  auto* sim = app.add_subcommand("simulate", "write a synthetic cohort (embeddings.csv, outcomes.csv, truth.csv)");
  std::optional<std::size_t> sim_n;
  std::optional<double> sim_trend;
  sim->add_option("--patients", sim_n, "number of patients");
  sim->add_option("--trend-strength", sim_trend, "weight of the trajectory slope in the true risk");

  auto* ing = app.add_subcommand("ingest", "validate, merge and mask inputs; assign test folds");
  std::string emb, out;
  ing->add_option("--embeddings", emb, "report file");
  ing->add_option("--outcomes", out, "outcome file");

  auto* embc = app.add_subcommand("embed", "SIF-embed token reports (no-op for vector input)");
  auto* comp = app.add_subcommand("compress", "fit PCA on training reports and project all reports");

  auto* sig = app.add_subcommand("signify", "compute the feature matrix");
  std::optional<std::size_t> level;
  std::string time_scale, kind_s = "signature";
  sig->add_option("--level", level, "signature truncation level");
  sig->add_option("--time-scale", time_scale, "time channel scaling")->check(CLI::IsMember({"unit_interval", "days"}));
  sig->add_option("--kind", kind_s, "signature, last or mean")->check(CLI::IsMember({"signature", "last", "mean"}));

  auto* fitc = app.add_subcommand("fit", "select lambda by cross-validation and fit the final model");
  fitc->add_option("--kind", kind_s, "signature, last or mean")->check(CLI::IsMember({"signature", "last", "mean"}));

  auto* pred = app.add_subcommand("predict", "risk scores and survival probabilities from a model");
  std::string model_path, features_path, pred_out;
  std::vector<double> times;
  pred->add_option("--model", model_path, "model file")->required()->check(CLI::ExistingFile);
  pred->add_option("--features", features_path, "feature matrix file")->required()->check(CLI::ExistingFile);
  pred->add_option("--times", times, "horizons (days) for survival probabilities");
  pred->add_option("-o,--output", pred_out, "output file (default stdout)");

  auto* eval = app.add_subcommand("evaluate", "test-fold metrics, curves and reports");
  eval->add_option("--kind", kind_s, "signature, last or mean")->check(CLI::IsMember({"signature", "last", "mean"}));

  auto* run = app.add_subcommand("run", "every stage end to end");
  auto* base = app.add_subcommand("baseline", "the same stack on static last-report or mean-embedding features");
  std::string base_kind;
  base->add_option("--kind", base_kind, "last or mean")->required()->check(CLI::IsMember({"last", "mean"}));

  CLI11_PARSE(app, argc, argv);

  std::string stage = "config";
  try {
    RunConfig cfg = build_config(c);
    if (sim_n) cfg.synth.n_patients = *sim_n;
    if (sim_trend) cfg.synth.trend_strength = *sim_trend;
    if (!emb.empty()) cfg.embeddings = std::filesystem::absolute(emb).string();
    if (!out.empty()) cfg.outcomes = std::filesystem::absolute(out).string();
    if (level) cfg.signature.level = *level;
    if (!time_scale.empty()) {
      cfg.signature.augment.time_scale = time_scale == "days" ? TimeScale::days : TimeScale::unit_interval;
    }
    cfg.validate();
    LogFn log;
    if (!c.quiet) log = [](const std::string& s) { std::cerr << s << "\n"; };

    if (sim->parsed()) {
      stage = "simulate";
      const auto s = simulate_to(cfg.synth, cfg.out_dir);
      // Ready-made config for the next step.
      text::write_file((std::filesystem::path(cfg.out_dir) / "sigsurv.conf").string(),
                       "embeddings = embeddings.csv\noutcomes = outcomes.csv\nseed = " + std::to_string(cfg.seed) + "\n");
      if (log) {
        log("simulate: " + std::to_string(s.cohort.size()) + " patients, " + std::to_string(s.cohort.n_events()) +
            " events, " + std::to_string(s.cohort.n_reports()) + " reports -> " + cfg.out_dir);
      }
      return 0;
    }
    if (pred->parsed()) {
      stage = "predict";
      predict(model_path, features_path, times, pred_out);
      return 0;
    }
    stage = "pipeline";
    Pipeline p(cfg, log);
    const FeatureKind kind = parse_kind(kind_s);
    if (ing->parsed()) p.ingest();
    else if (embc->parsed()) p.embed();
    else if (comp->parsed()) p.compress();
    else if (sig->parsed()) p.signify(kind);
    else if (fitc->parsed()) p.fit(kind);
    else if (eval->parsed()) print_summary(p.evaluate(kind));
    else if (run->parsed()) print_summary(p.run());
    else if (base->parsed()) print_summary(p.run_baseline(parse_kind(base_kind)));
    return 0;
  } catch (const StageError& e) {
    std::cerr << "sigsurv: error " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "sigsurv: error [" << stage << "] " << e.what() << "\n";
    return stage == "config" ? 2 : 1;
  }
}
