#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace sigsurv;

namespace {

double censored_fraction(const Cohort& c) {
  return 1.0 - static_cast<double>(c.n_events()) / static_cast<double>(c.size());
}

}  // namespace

TEST(Synthetic, SeedDeterminesCohort) {
  SynthConfig cfg;
  cfg.n_patients = 200;
  const auto a = generate_cohort(cfg);
  const auto b = generate_cohort(cfg);
  EXPECT_EQ(a.cohort, b.cohort);
  EXPECT_EQ(a.true_eta, b.true_eta);
  cfg.seed = 2;
  EXPECT_NE(generate_cohort(cfg).true_eta, a.true_eta);
}

TEST(Synthetic, ReportShapeAndWindow) {
  SynthConfig cfg;
  cfg.n_patients = 300;
  cfg.p = 12;
  const auto s = generate_cohort(cfg);
  EXPECT_EQ(s.cohort.embedding_dim, 12u);
  for (const auto& p : s.cohort.patients) {
    // Short follow-up leaves room for the baseline report only.
    if (p.outcome.duration > cfg.report_gap_days) {
      EXPECT_GE(p.reports.size(), cfg.reports_min);
    } else {
      EXPECT_EQ(p.reports.size(), 1u);
    }
    EXPECT_LE(p.reports.size(), cfg.reports_max);
    EXPECT_EQ(p.reports.front().t, 0.0);
    for (std::size_t k = 1; k < p.reports.size(); ++k) EXPECT_GT(p.reports[k].t, p.reports[k - 1].t);
    EXPECT_LT(p.reports.back().t, p.outcome.duration);
    for (const auto& r : p.reports) EXPECT_EQ(r.embedding.size(), 12u);
  }
}

TEST(Synthetic, CensoringFractionNearTarget) {
  for (double target : {0.0, 0.3, 0.6}) {
    SynthConfig cfg;
    cfg.n_patients = 2000;
    cfg.p = 8;
    cfg.censoring_rate = target;
    const auto s = generate_cohort(cfg);
    EXPECT_NEAR(censored_fraction(s.cohort), target, 0.05) << target;
  }
}

TEST(Synthetic, TrueRiskIsInformativeAndPermutationIsNot) {
  SynthConfig cfg;
  cfg.n_patients = 2000;
  cfg.p = 8;
  cfg.censoring_rate = 0.0;
  const auto s = generate_cohort(cfg);
  const auto d = survival_data(s.cohort);
  const double c = oracle_cindex(s.true_eta, d);
  EXPECT_GT(c, 0.7);
  EXPECT_LT(c, 0.95);
  auto shuffled = s.true_eta;
  Rng rng(5);
  rng.shuffle(shuffled);
  EXPECT_NEAR(oracle_cindex(shuffled, d), 0.5, 0.03);
}

TEST(Synthetic, GroundTruthFile) {
  testutil::TempDir dir("synthetic");
  SynthConfig cfg;
  cfg.n_patients = 20;
  cfg.p = 4;
  const auto s = simulate_to(cfg, dir.path());
  const auto c = load_cohort(dir.file("embeddings.csv"), dir.file("outcomes.csv"), InputMode::vector);
  EXPECT_EQ(c.size(), 20u);
  const auto truth = text::read_file(dir.file("truth.csv"));
  EXPECT_EQ(truth.rfind("patient_id,true_eta\n", 0), 0u);
  EXPECT_EQ(std::count(truth.begin(), truth.end(), '\n'), 21);
}

TEST(Synthetic, InvalidConfigs) {
  SynthConfig cfg;
  cfg.latent_dim = 60;
  EXPECT_THROW(generate_cohort(cfg), Error);
  cfg = {};
  cfg.censoring_rate = 1.0;
  EXPECT_THROW(generate_cohort(cfg), Error);
  cfg = {};
  cfg.reports_min = 5;
  cfg.reports_max = 4;
  EXPECT_THROW(generate_cohort(cfg), Error);
}
