#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "test_util.hpp"

using namespace sigsurv;

namespace {

WordTable unit_table() {
  WordTable t(3);
  t.add("x", std::vector<double>{1, 0, 0});
  t.add("y", std::vector<double>{0, 1, 0});
  t.add("z", std::vector<double>{0, 0, 1});
  return t;
}

FrequencyTable freqs(double fx, double fy, double fz) {
  FrequencyTable f;
  f.add("x", fx);
  f.add("y", fy);
  f.add("z", fz);
  return f;
}

std::vector<TokenCount> bag(std::initializer_list<TokenCount> t) { return t; }

}  // namespace

TEST(Sif, SharedFrequencyFactorsOut) {
  const auto v = sif_embed(bag({{"x", 1}, {"y", 1}, {"z", 2}}), unit_table(), freqs(0.2, 0.2, 0.2), {});
  const double w = 1e-3 / (0.2 + 1e-3);
  EXPECT_NEAR(v[0], w * 0.25, 1e-15);
  EXPECT_NEAR(v[1], w * 0.25, 1e-15);
  EXPECT_NEAR(v[2], w * 0.5, 1e-15);
}

TEST(Sif, FrequencyEqualToSmoothingHalvesVector) {
  SifConfig cfg;
  cfg.a = 0.05;
  const auto v = sif_embed(bag({{"y", 1}}), unit_table(), freqs(0.5, 0.05, 0.5), cfg);
  EXPECT_DOUBLE_EQ(v[1], 0.5);
  EXPECT_EQ(v[0], 0.0);
}

TEST(Sif, HandEvaluatedWeights) {
  const auto v = sif_embed(bag({{"x", 1}, {"y", 1}, {"z", 1}}), unit_table(), freqs(0.1, 0.01, 0.001), {});
  EXPECT_NEAR(v[0], 0.0099009900990099 / 3, 1e-12);
  EXPECT_NEAR(v[1], 0.0909090909090909 / 3, 1e-12);
  EXPECT_NEAR(v[2], 0.5 / 3, 1e-12);
}

TEST(Sif, OccurrenceAndUniqueCounting) {
  const auto f = freqs(0.1, 0.1, 0.1);
  const auto occ = sif_embed(bag({{"x", 3}, {"y", 1}}), unit_table(), f, {});
  SifConfig u;
  u.unique_tokens = true;
  const auto uni = sif_embed(bag({{"x", 3}, {"y", 1}}), unit_table(), f, u);
  EXPECT_NEAR(occ[0] / occ[1], 3.0, 1e-12);
  EXPECT_NEAR(uni[0] / uni[1], 1.0, 1e-12);
}

TEST(Sif, HomogeneityAndPermutationInvariance) {
  WordTable scaled(3);
  scaled.add("x", std::vector<double>{2.5, 0, 0});
  scaled.add("y", std::vector<double>{0, 2.5, 0});
  scaled.add("z", std::vector<double>{0, 0, 2.5});
  const auto f = freqs(0.3, 0.02, 0.7);
  const auto a = sif_embed(bag({{"x", 2}, {"z", 1}, {"y", 4}}), unit_table(), f, {});
  const auto b = sif_embed(bag({{"y", 4}, {"x", 2}, {"z", 1}}), unit_table(), f, {});
  const auto c = sif_embed(bag({{"x", 2}, {"z", 1}, {"y", 4}}), scaled, f, {});
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(a[k], b[k], 1e-15);
    EXPECT_NEAR(c[k], 2.5 * a[k], 1e-15);
  }
}

TEST(Sif, WeightsInOpenUnitInterval) {
  for (double f : {1e-9, 1e-3, 0.5, 1.0}) {
    const double w = sif_weight(f, 1e-3);
    EXPECT_GT(w, 0.0);
    EXPECT_LT(w, 1.0);
  }
}

TEST(Sif, OutOfVocabularyPolicies) {
  SifStats st;
  const auto v = sif_embed(bag({{"x", 1}, {"unknown", 2}}), unit_table(), freqs(0.1, 0.1, 0.1), {}, &st);
  EXPECT_EQ(st.oov_occurrences, 2u);
  EXPECT_GT(v[0], 0.0);
  SifConfig strict;
  strict.oov = OovPolicy::fail;
  EXPECT_THROW(sif_embed(bag({{"x", 1}, {"unknown", 1}}), unit_table(), freqs(0.1, 0.1, 0.1), strict), Error);
  EXPECT_THROW(sif_embed(bag({{"unknown", 1}}), unit_table(), freqs(0.1, 0.1, 0.1), {}), EmptyReportError);
}

namespace {

Cohort token_cohort() {
  Cohort c;
  c.mode = InputMode::token;
  c.embedding_dim = 3;
  c.patients.push_back({{"A", 300, true}, {{0, {}, {{"x", 1}, {"y", 2}}}, {5, {}, {{"z", 1}}}, {9, {}, {{"y", 2}, {"x", 1}}}}});
  c.patients.push_back({{"B", 200, false}, {{0, {}, {{"x", 1}}}}});
  return c;
}

}  // namespace

TEST(EmbedCohort, ShapeTimesAndDeterminism) {
  const auto out = embed_cohort(token_cohort(), unit_table(), freqs(0.1, 0.01, 0.001), {});
  EXPECT_EQ(out.mode, InputMode::vector);
  ASSERT_EQ(out.patients[0].reports.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(out.patients[0].reports[k].t, token_cohort().patients[0].reports[k].t);
    EXPECT_EQ(out.patients[0].reports[k].embedding.size(), 3u);
  }
  EXPECT_EQ(out.patients[0].reports[0].embedding, out.patients[0].reports[2].embedding);
}

TEST(EmbedCohort, EmptyReportNamesPatientAndTime) {
  auto c = token_cohort();
  c.patients[1].reports.push_back({7, {}, {{"nope", 1}}});
  try {
    embed_cohort(c, unit_table(), freqs(0.1, 0.1, 0.1), {});
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'B'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("t=7"), std::string::npos) << msg;
  }
}

TEST(EmbedCohort, ReportDependsOnlyOnOwnTokens) {
  auto c = token_cohort();
  const auto full = embed_cohort(c, unit_table(), freqs(0.1, 0.01, 0.001), {});
  c.patients.pop_back();
  const auto part = embed_cohort(c, unit_table(), freqs(0.1, 0.01, 0.001), {});
  EXPECT_EQ(full.patients[0], part.patients[0]);
}

TEST(EmbedCohort, FirstComponentRemoval) {
  SifConfig cfg;
  cfg.remove_first_pc = true;
  const auto out = embed_cohort(token_cohort(), unit_table(), freqs(0.1, 0.01, 0.001), cfg);
  // The removed direction is orthogonal to every result, so the vectors span at most 2 dims.
  Eigen::MatrixXd m(4, 3);
  int r = 0;
  for (const auto& p : out.patients)
    for (const auto& rep : p.reports) m.row(r++) = Eigen::Map<const Eigen::RowVector3d>(rep.embedding.data());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  EXPECT_LT(svd.singularValues()(2), 1e-12);
}

TEST(EmbeddingGolden, TablesLoadAndEmbed) {
  const auto table = WordTable::load(testutil::golden("words.csv"));
  const auto f = FrequencyTable::load(testutil::golden("frequencies.csv"));
  EXPECT_EQ(table.size(), 3u);
  const auto c = load_cohort(testutil::golden("token.emb.csv"), testutil::golden("outcomes.csv"), InputMode::token);
  SifStats st;
  const auto v = embed_cohort(c, table, f, {}, &st);
  EXPECT_EQ(st.oov_occurrences, 1u);
  // P1 at t=0: fever x2 (f=0.1), cough x1 (f=0.01).
  const auto& e = v.patients[0].reports[0].embedding;
  EXPECT_NEAR(e[0], 2.0 * 1e-3 / 0.101 / 3.0, 1e-15);
  EXPECT_NEAR(e[1], 1e-3 / 0.011 / 3.0, 1e-15);
}
