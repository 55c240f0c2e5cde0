#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "test_util.hpp"

using namespace sigsurv;

TEST(Config, ParsesKeysListsAndRelativePaths) {
  RunConfig cfg;
  apply_config_text(cfg,
                    "# comment\n"
                    "embeddings = data/e.csv   # trailing\n"
                    "p_bar = 7\n"
                    "level = 2\n"
                    "solver = fista\n"
                    "ibs_horizons = 10, 20,30\n"
                    "report_counts = 1,3\n"
                    "sim.trend_strength = 0.5\n",
                    "t.conf", "/base");
  EXPECT_EQ(cfg.embeddings, "/base/data/e.csv");
  EXPECT_EQ(cfg.p_bar, 7u);
  EXPECT_EQ(cfg.signature.level, 2u);
  EXPECT_EQ(cfg.cox.solver, CoxSolver::fista);
  EXPECT_EQ(cfg.evaluation.ibs_horizons, (std::vector<double>{10, 20, 30}));
  EXPECT_EQ(cfg.report_counts, (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(cfg.synth.trend_strength, 0.5);
}

TEST(Config, ErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) {
    RunConfig cfg;
    try {
      apply_config_text(cfg, text, "t.conf");
    } catch (const ParseError& e) {
      return static_cast<long>(e.line());
    }
    return -1L;
  };
  EXPECT_EQ(line_of("p_bar = 3\nbogus = 1\n"), 2);
  EXPECT_EQ(line_of("p_bar = 3\n\np_bar = 4\n"), 3);
  EXPECT_EQ(line_of("level = two\n"), 1);
  EXPECT_EQ(line_of("solver = gradient\n"), 1);
  EXPECT_EQ(line_of("# ok\nno equals sign\n"), 2);
  EXPECT_EQ(line_of("p_bar = 3\n"), -1);
}

TEST(Config, ValidationRejectsNonsense) {
  RunConfig cfg;
  cfg.p_bar = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.evaluation.tau2 = -1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.mode = InputMode::token;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Config, HashIgnoresOutputLocationAndThreads) {
  RunConfig a, b;
  b.out_dir = "elsewhere";
  b.threads = 7;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.p_bar = 3;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_NE(canonical_config(a).find("p_bar = 25"), std::string::npos);
}

TEST(LambdaGridValues, LogAndLinear) {
  LambdaGrid g;
  g.start = 0.01;
  g.stop = 1;
  g.points = 3;
  const auto v = g.values();
  ASSERT_EQ(v.size(), 3u);
  EXPECT_NEAR(v[1], 0.1, 1e-12);
  g.kind = GridKind::linear;
  g.start = 0.001;
  g.stop = 0.005;
  g.step = 0.001;
  EXPECT_EQ(g.values().size(), 5u);
}

namespace {

Cohort small_cohort(std::size_t n, double trend, std::uint64_t seed) {
  SynthConfig sc;
  sc.n_patients = n;
  sc.p = 6;
  sc.trend_strength = trend;
  sc.seed = seed;
  return generate_cohort(sc).cohort;
}

}  // namespace

TEST(GridSearch, SupportShrinksWithLambda) {
  const auto c = small_cohort(400, 4, 3);
  // Keep every latent direction (the generator uses four).
  const auto m = fit_pca(c, 4);
  SignatureOptions so;
  so.level = 2;
  const auto fm = signature_features(project_cohort(m, c), so);
  const auto d = survival_data(c);
  const std::vector<double> grid{0.1, 1.0, 10.0, 1e6};
  const auto gs = grid_search_lambda(fm, d, grid, 3, 11);
  ASSERT_EQ(gs.table.size(), 4u);
  EXPECT_EQ(gs.table.back().mean_nonzero, 0.0);
  EXPECT_GE(gs.table[0].mean_nonzero, gs.table[2].mean_nonzero);
  EXPECT_GT(gs.table[gs.best_index].mean_cindex, 0.6);
  EXPECT_EQ(gs.best_lambda, grid[gs.best_index]);
  const std::vector<double> single{1.0};
  EXPECT_EQ(grid_search_lambda(fm, d, single, 3, 11).best_lambda, 1.0);
  EXPECT_EQ(grid_search_lambda(fm, d, grid, 3, 11).table[1].fold_cindex,
            gs.table[1].fold_cindex);
}

TEST(Baselines, FeatureWidthIsCompressedDimension) {
  const auto c = small_cohort(30, 4, 4);
  const auto proj = project_cohort(fit_pca(c, 4), c);
  EXPECT_EQ(last_report_features(proj).cols(), 4u);
  EXPECT_EQ(mean_embedding_features(proj).cols(), 4u);
  const auto& r = proj.patients[0].reports;
  EXPECT_EQ(last_report_features(proj).row(0)[2], r.back().embedding[2]);
  double mean = 0;
  for (const auto& x : r) mean += x.embedding[1];
  EXPECT_NEAR(mean_embedding_features(proj).row(0)[1], mean / static_cast<double>(r.size()), 1e-14);
}

TEST(TruncateReports, KeepsFirstK) {
  const auto c = small_cohort(20, 4, 5);
  const auto t = truncate_reports(c, 2);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(t.patients[i].reports.size(), std::min<std::size_t>(2, c.patients[i].reports.size()));
    EXPECT_EQ(t.patients[i].reports[0], c.patients[i].reports[0]);
  }
}

namespace {

RunConfig small_run(const testutil::TempDir& dir) {
  SynthConfig sc;
  sc.n_patients = 300;
  sc.p = 8;
  sc.seed = 9;
  simulate_to(sc, dir.path() / "data");
  RunConfig cfg;
  cfg.embeddings = (dir.path() / "data" / "embeddings.csv").string();
  cfg.outcomes = (dir.path() / "data" / "outcomes.csv").string();
  cfg.out_dir = (dir.path() / "run").string();
  cfg.p_bar = 3;
  cfg.signature.level = 2;
  cfg.lambda_grid.start = 0.1;
  cfg.lambda_grid.stop = 10;
  cfg.lambda_grid.points = 4;
  cfg.cv_folds = 3;
  cfg.test_folds = 2;
  cfg.threads = 1;
  return cfg;
}

nlohmann::json manifest(const Pipeline& p) { return nlohmann::json::parse(text::read_file(p.paths().manifest())); }

}  // namespace

TEST(PipelineRun, StagesArtifactsAndManifest) {
  testutil::TempDir dir("pipeline");
  Pipeline p(small_run(dir));
  const auto v = p.run();
  for (const char* f : {"cohort.emb.csv", "split.csv", "compression.map", "projected.emb.csv", "features.csv",
                        "model.txt", "cv_table.csv", "report.json", "report.txt", "cindex_vs_k.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(p.paths().at(f))) << f;
  }
  const auto m = manifest(p);
  EXPECT_EQ(m["config_hash"], config_hash(p.config()));
  for (const char* s : {"ingest", "compress", "signify", "fit", "evaluate"}) EXPECT_EQ(m["stages"][s]["status"], "ok") << s;
  EXPECT_EQ(m["lineage"]["check"], "passed");
  EXPECT_EQ(v.folds.size(), 2u);
  EXPECT_GT(v.pooled.c_index, 0.5);
  EXPECT_FALSE(v.report_curve.empty());

  const auto b = p.run_baseline(FeatureKind::last_report);
  EXPECT_EQ(b.model.feature_names.size(), 3u);
  EXPECT_TRUE(std::filesystem::exists(p.paths().variant(FeatureKind::last_report, "report.json")));
}

TEST(PipelineRun, StageRerunIsBitIdentical) {
  testutil::TempDir dir("pipeline");
  Pipeline p(small_run(dir));
  p.run();
  const auto features = text::read_file(p.paths().at("features.csv"));
  const auto model = text::read_file(p.paths().at("model.txt"));
  p.signify();
  p.fit();
  EXPECT_EQ(text::read_file(p.paths().at("features.csv")), features);
  EXPECT_EQ(text::read_file(p.paths().at("model.txt")), model);
}

TEST(PipelineRun, LeakedTestPatientFailsLineageCheck) {
  testutil::TempDir dir("pipeline");
  Pipeline p(small_run(dir));
  p.run();
  // Pretend the compression map was fitted on a different patient set.
  auto m = manifest(p);
  m["lineage"]["pca_patients"]["sha256"] = "0000";
  text::write_file(p.paths().manifest(), m.dump(2));
  try {
    p.evaluate();
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "evaluate");
    EXPECT_NE(std::string(e.what()).find("lineage"), std::string::npos);
  }
  EXPECT_EQ(manifest(p)["stages"]["evaluate"]["status"], "failed");
}

TEST(PipelineRun, MissingUpstreamNamesStage) {
  testutil::TempDir dir("pipeline");
  Pipeline p(small_run(dir));
  try {
    p.fit();
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "fit");
  }
}
