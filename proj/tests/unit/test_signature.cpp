#include <gtest/gtest.h>

#include <cmath>

#include "oracles/oracles.hpp"
#include "test_util.hpp"

using namespace sigsurv;

namespace {

AugmentedPath random_path(Rng& rng, std::size_t d, std::size_t n) {
  std::vector<double> pts(n * d);
  for (auto& x : pts) x = rng.normal();
  return make_path(d, pts);
}

oracle::Path as_oracle(const AugmentedPath& p) { return {p.n_points, p.dim, p.points}; }

double max_rel_error(std::span<const double> a, std::span<const double> b) {
  double e = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) e = std::max(e, std::abs(a[k] - b[k]) / std::max(1.0, std::abs(b[k])));
  return e;
}

}  // namespace

TEST(CountCoefficients, ClosedFormValues) {
  EXPECT_EQ(count_coefficients(2, 2), 7u);
  EXPECT_EQ(count_coefficients(768, 3), 453575425u);
  EXPECT_EQ(count_coefficients(26, 3), 1u + 26u + 676u + 17576u);
  EXPECT_EQ(count_coefficients(26, 4), 475255u);
  for (std::uint64_t d = 2; d <= 10; ++d) {
    for (std::uint64_t L = 1; L <= 5; ++L) {
      std::uint64_t brute = 0, pw = 1;
      for (std::uint64_t k = 0; k <= L; ++k, pw *= d) brute += pw;
      EXPECT_EQ(count_coefficients(d, L), brute);
    }
  }
  EXPECT_THROW(count_coefficients(1, 2), Error);
  EXPECT_THROW(count_coefficients(1u << 20, 4), Error);
}

TEST(AugmentPath, UnitIntervalAndDays) {
  const std::vector<double> t{0, 10, 40};
  const std::vector<std::vector<double>> v{{1, 2}, {3, 4}, {5, 6}};
  const auto p = augment_path(t, v);
  EXPECT_EQ(p.dim, 3u);
  EXPECT_EQ(p.times, (std::vector<double>{0, 0.25, 1.0}));
  EXPECT_EQ(p.point(1)[0], 0.25);
  EXPECT_EQ(p.point(1)[2], 4.0);
  AugmentOptions days;
  days.time_scale = TimeScale::days;
  EXPECT_EQ(augment_path(t, v, days).times, t);
}

TEST(AugmentPath, SingleReportBecomesTimeSegment) {
  const auto p = augment_path(std::vector<double>{5}, std::vector<std::vector<double>>{{2, 3}});
  ASSERT_EQ(p.n_points, 2u);
  const auto s = path_signature(p, 2);
  EXPECT_DOUBLE_EQ(s.word({0}), 1.0);
  EXPECT_EQ(s.word({1}), 0.0);
  EXPECT_EQ(s.word({2}), 0.0);
  EXPECT_THROW(augment_path(std::vector<double>{1, 1}, std::vector<std::vector<double>>{{0}, {1}}),
               DegenerateInputError);
}

TEST(SegmentSignature, ClosedForms) {
  const auto zero = segment_signature(std::vector<double>{0, 0, 0}, 3);
  EXPECT_EQ(zero, SignatureTensor(3, 3));
  const auto one = segment_signature(std::vector<double>{1}, 3);
  EXPECT_EQ(std::vector<double>(one.coeffs().begin(), one.coeffs().end()), (std::vector<double>{1, 1, 0.5, 1.0 / 6}));
  const auto s = segment_signature(std::vector<double>{2, 3}, 2);
  const auto l2 = s.level_block(2);
  EXPECT_EQ(std::vector<double>(l2.begin(), l2.end()), (std::vector<double>{2, 3, 3, 4.5}));
}

TEST(ChenProduct, IdentityAndAssociativity) {
  Rng rng(1);
  auto rnd = [&] {
    SignatureTensor s(3, 3);
    for (auto& c : s.coeffs()) c = rng.normal();
    s.coeffs()[0] = 1.0;
    return s;
  };
  const auto a = rnd(), b = rnd(), c = rnd();
  EXPECT_EQ(chen_product(a, SignatureTensor(3, 3)), a);
  const auto l = chen_product(chen_product(a, b), c), r = chen_product(a, chen_product(b, c));
  EXPECT_LT(max_rel_error(l.coeffs(), r.coeffs()), 1e-13);
  EXPECT_THROW(chen_product(a, SignatureTensor(2, 3)), DimensionError);
}

TEST(ChenProduct, TwoSegmentsMatchQuadrature) {
  const auto p = make_path(2, {0, 0, 1, 2, -0.5, 3});
  const auto s = chen_product(segment_signature(std::vector<double>{1, 2}, 3),
                              segment_signature(std::vector<double>{-1.5, 1}, 3));
  const auto ref = oracle::signature_by_quadrature(as_oracle(p), 3);
  EXPECT_LT(max_rel_error(s.coeffs(), ref), 1e-8);
}

TEST(PathSignature, CollinearSamplesAndTelescoping) {
  const auto line = make_path(2, {0, 0, 0.5, 1, 1, 2, 2.5, 5, 3, 6});
  const auto seg = segment_signature(std::vector<double>{3, 6}, 3);
  EXPECT_LT(max_rel_error(path_signature(line, 3).coeffs(), seg.coeffs()), 1e-13);
  Rng rng(2);
  const auto p = random_path(rng, 3, 5);
  const auto s = path_signature(p, 2);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(s.word({c}), p.point(4)[c] - p.point(0)[c], 1e-14);
}

TEST(PathSignature, RandomPathsMatchQuadrature) {
  Rng rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    const auto p = random_path(rng, 2, 5);
    EXPECT_LT(max_rel_error(path_signature(p, 3).coeffs(), oracle::signature_by_quadrature(as_oracle(p), 3)), 1e-8);
  }
}

TEST(PathSignature, ChenSplitShuffleTranslation) {
  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const auto p = random_path(rng, 3, 6);
    const auto full = path_signature(p, 3);
    for (std::size_t m = 1; m + 1 < p.n_points; ++m) {
      const auto pre = make_path(3, std::vector<double>(p.points.begin(), p.points.begin() + (m + 1) * 3));
      const auto suf = make_path(3, std::vector<double>(p.points.begin() + m * 3, p.points.end()));
      EXPECT_LT(max_rel_error(chen_product(path_signature(pre, 3), path_signature(suf, 3)).coeffs(), full.coeffs()),
                1e-12);
    }
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_NEAR(full.word({i}) * full.word({j}), full.word({i, j}) + full.word({j, i}), 1e-12);
      }
    }
    auto shifted = p;
    for (std::size_t k = 0; k < shifted.points.size(); ++k) shifted.points[k] += static_cast<double>(k % 3) * 7.0;
    EXPECT_LT(max_rel_error(path_signature(shifted, 3).coeffs(), full.coeffs()), 1e-12);
  }
}

TEST(PathSignature, TrivialPath) {
  const auto p = make_path(2, {1, 1, 1, 1});
  EXPECT_EQ(path_signature(p, 3), SignatureTensor(2, 3));
}

namespace {

Cohort projected(std::vector<std::vector<double>> times, std::size_t pbar, std::uint64_t seed) {
  Rng rng(seed);
  Cohort c;
  c.embedding_dim = pbar;
  int id = 0;
  for (auto& ts : times) {
    PatientRecord p{{"P" + std::to_string(id++), 1000, true}, {}};
    for (double t : ts) {
      std::vector<double> v(pbar);
      for (auto& x : v) x = rng.normal();
      p.reports.push_back({t, v, {}});
    }
    c.patients.push_back(p);
  }
  return c;
}

}  // namespace

TEST(SignatureFeatures, ShapeNamesAndInvariances) {
  auto c = projected({{0, 5, 9}, {0, 1}}, 25, 5);
  SignatureOptions o;
  o.level = 2;
  const auto fm = signature_features(c, o);
  EXPECT_EQ(fm.cols(), 702u);
  EXPECT_EQ(fm.column_names[0], "S_0");
  EXPECT_EQ(fm.column_names[26], "S_0.0");
  EXPECT_EQ(fm.column_names.back(), "S_25.25");

  // Identical patients give identical rows; time translation changes nothing.
  auto twin = c;
  twin.patients[1] = twin.patients[0];
  twin.patients[1].outcome.patient_id = "twin";
  for (auto& r : twin.patients[1].reports) r.t += 50;
  const auto ft = signature_features(twin, o);
  EXPECT_TRUE(std::equal(ft.row(0).begin(), ft.row(0).end(), ft.row(1).begin()));
  EXPECT_EQ(signature_features(c, o), fm);
}

TEST(SignatureFeatures, DropTimeWords) {
  const auto c = projected({{0, 5, 9}}, 2, 6);
  SignatureOptions o;
  o.level = 2;
  o.drop_time_words = true;
  const auto fm = signature_features(c, o);
  EXPECT_EQ(fm.column_names, (std::vector<std::string>{"S_1", "S_2", "S_1.1", "S_1.2", "S_2.1", "S_2.2"}));
}

TEST(SignatureFeatures, FailuresCollectedWithIds) {
  auto c = projected({{0, 5}, {0, 3}, {0, 8}}, 2, 7);
  c.patients[0].reports[1].embedding[0] = std::numeric_limits<double>::infinity();
  c.patients[2].reports[1].embedding[1] = std::numeric_limits<double>::quiet_NaN();
  try {
    signature_features(c, {});
    FAIL();
  } catch (const Error& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("P0"), std::string::npos);
    EXPECT_NE(m.find("P2"), std::string::npos);
    EXPECT_EQ(m.find("P1"), std::string::npos);
  }
}

TEST(SignatureGolden, HandComputedFeatureFile) {
  testutil::TempDir d("signature");
  const auto c =
      load_cohort(testutil::golden("single_path.emb.csv"), testutil::golden("single_path.outcomes.csv"), InputMode::vector);
  SignatureOptions o;
  o.level = 2;
  save_feature_matrix(signature_features(c, o), d.file("f.csv"));
  EXPECT_EQ(text::read_file(d.file("f.csv")), text::read_file(testutil::golden("single_path.features.csv")));
  EXPECT_EQ(load_feature_matrix(d.file("f.csv")), signature_features(c, o));
}
