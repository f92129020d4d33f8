#include <gtest/gtest.h>

#include <cmath>

#include "mmrank/error.hpp"
#include "mmrank/metrics.hpp"
#include "mmrank/random.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mmrank;

namespace {

std::vector<std::pair<double, double>> from_diffs(const std::vector<double>& d) {
  std::vector<std::pair<double, double>> out;
  for (double x : d) out.emplace_back(0.0, x);
  return out;
}

std::vector<double> random_binary(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = uniform01(rng) < 0.4 ? 1.0 : 0.0;
  return v;
}

}  // namespace

TEST(Dcg, HandValues) {
  const std::vector<double> r = {1, 0, 1};
  EXPECT_DOUBLE_EQ(dcg(r, 3), 1.5);
  EXPECT_EQ(dcg(std::vector<double>{0, 0, 0}, 3), 0.0);
  EXPECT_EQ(dcg(std::vector<double>{1}, 1), 1.0);
  EXPECT_DOUBLE_EQ(dcg(r, 1), 1.0);
  EXPECT_THROW(dcg(r, 0), InvalidArgument);
  EXPECT_THROW(dcg(r, 4), InvalidArgument);
}

TEST(Ndcg, HandValues) {
  EXPECT_NEAR(ndcg(std::vector<double>{1, 0, 1}, 3), 0.9197207891481876, 1e-12);
  EXPECT_NEAR(ndcg(std::vector<double>{0, 1}, 2), 0.6309297535714575, 1e-12);
  EXPECT_EQ(ndcg(std::vector<double>{1, 1, 0, 0}, 4), 1.0);
  EXPECT_THROW(ndcg(std::vector<double>{0, 0}, 2), InvalidArgument);
}

TEST(Ndcg, BinaryGainMatchesGeneralFormula) {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const auto rel = random_binary(rng, 1 + uniform_index(rng, 15));
    const std::size_t p = 1 + uniform_index(rng, rel.size());
    EXPECT_NEAR(dcg(rel, p), oracle::dcg(rel, p), 1e-12);
  }
}

TEST(Ndcg, BoundsAndIdealOrderProperty) {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    auto rel = random_binary(rng, 1 + uniform_index(rng, 20));
    if (std::find(rel.begin(), rel.end(), 1.0) == rel.end()) rel[uniform_index(rng, rel.size())] = 1.0;
    const double v = ndcg(rel, rel.size());
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_NEAR(v, oracle::ndcg(rel, rel.size()), 1e-12);
    const bool non_increasing = std::is_sorted(rel.rbegin(), rel.rend());
    EXPECT_EQ(v == 1.0, non_increasing);
    auto ideal = rel;
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    EXPECT_EQ(ndcg(ideal, ideal.size()), 1.0);
  }
}

TEST(Ndcg, AdjacentPromotionIncreases) {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    auto rel = random_binary(rng, 2 + uniform_index(rng, 18));
    std::vector<std::size_t> spots;
    for (std::size_t k = 0; k + 1 < rel.size(); ++k) {
      if (rel[k] == 0.0 && rel[k + 1] == 1.0) spots.push_back(k);
    }
    if (spots.empty()) continue;
    const std::size_t k = spots[uniform_index(rng, spots.size())];
    const double before = ndcg(rel, rel.size());
    std::swap(rel[k], rel[k + 1]);
    EXPECT_GT(ndcg(rel, rel.size()), before);
  }
}

class SessionNdcgTest : public ::testing::Test {
 protected:
  void SetUp() override {
    catalog.listings["A"] = Listing{"A", "S", "alpha", {}, std::nullopt};
    catalog.listings["B"] = Listing{"B", "S", "beta", {}, std::nullopt};
    catalog.listings["C"] = Listing{"C", "S", "gamma", {}, std::nullopt};
    vocab = build_vocabulary(catalog);
    table.emplace(catalog, vocab, nullptr, Modality::kText);
    zero.modality = Modality::kText;
    zero.weights.text_dim = vocab.total_dim();
  }
  Session session(std::vector<std::pair<std::string, InteractionKind>> items) {
    Session s;
    s.query = "q";
    for (auto& [id, k] : items) s.presented.push_back({id, {k, k == InteractionKind::kIgnored ? 0.0 : 60.0}});
    return s;
  }
  Catalog catalog;
  Vocabulary vocab;
  std::optional<EmbeddingTable> table;
  QueryModel zero;
};

TEST_F(SessionNdcgTest, TieBrokenZeroModel) {
  const auto r = session_ndcg(zero, session({{"A", InteractionKind::kIgnored}, {"B", InteractionKind::kPurchased}}), *table);
  ASSERT_TRUE(r.ndcg.has_value());
  EXPECT_NEAR(*r.ndcg, 0.6309297535714575, 1e-12);
}

TEST_F(SessionNdcgTest, ModelPuttingRelevantFirst) {
  QueryModel m = zero;
  m.weights.sparse = {{*vocab.term_column("gamma"), 1.0}};
  const auto r = session_ndcg(m, session({{"A", InteractionKind::kIgnored}, {"B", InteractionKind::kIgnored},
                                          {"C", InteractionKind::kCarted}}), *table);
  EXPECT_EQ(r.ndcg, 1.0);
  const auto single = session_ndcg(zero, session({{"B", InteractionKind::kPurchased}}), *table);
  EXPECT_EQ(single.ndcg, 1.0);
}

TEST_F(SessionNdcgTest, SkipReasons) {
  const auto none = session_ndcg(zero, session({{"A", InteractionKind::kIgnored}}), *table);
  EXPECT_FALSE(none.ndcg.has_value());
  EXPECT_EQ(none.skip, SessionEval::Skip::kNoRelevant);
  const auto missing = session_ndcg(zero, session({{"X", InteractionKind::kPurchased}}), *table);
  EXPECT_EQ(missing.skip, SessionEval::Skip::kNotEmbeddable);
}

TEST(Aggregate, MacroAverages) {
  const auto a = aggregate({{"q1", {1.0, 0.5}}, {"q2", {0.25}}});
  EXPECT_DOUBLE_EQ(a.per_query.at("q1").mean, 0.75);
  EXPECT_EQ(a.per_query.at("q1").sessions, 2u);
  EXPECT_DOUBLE_EQ(a.modality_mean, 0.5);
  EXPECT_DOUBLE_EQ(aggregate({{"q", {0.3}}}).modality_mean, 0.3);
  EXPECT_THROW(aggregate({}), InvalidArgument);
  EXPECT_THROW(aggregate({{"q", {}}}), InvalidArgument);
}

TEST(RelativeLift, Examples) {
  EXPECT_EQ(relative_lift(0.5, 0.5), 0.0);
  EXPECT_NEAR(relative_lift(0.508, 0.5), 1.6, 1e-9);
  EXPECT_NEAR(relative_lift(0.489, 0.5), -2.2, 1e-9);
  EXPECT_THROW(relative_lift(0.5, 0.0), InvalidArgument);
}

TEST(Wilcoxon, AllPositiveTen) {
  std::vector<double> d;
  for (int i = 1; i <= 10; ++i) d.push_back(0.01 * i);
  const auto r = wilcoxon_signed_rank(from_diffs(d));
  EXPECT_TRUE(r.exact);
  EXPECT_EQ(r.n, 10u);
  EXPECT_EQ(r.w_minus, 0.0);
  EXPECT_EQ(r.w_plus, 55.0);
  EXPECT_DOUBLE_EQ(r.p_value, 2.0 / 1024.0);
}

TEST(Wilcoxon, AllPositiveSix) {
  test_support::WarningCapture quiet;
  const auto r = wilcoxon_signed_rank(from_diffs({1, 2, 3, 4, 5, 6}));
  EXPECT_DOUBLE_EQ(r.p_value, 2.0 / 64.0);
}

TEST(Wilcoxon, BalancedSignsGiveOne) {
  const auto r = wilcoxon_signed_rank(from_diffs({1, -1, 2, -2, 3, -3, 4, -4}));
  EXPECT_EQ(r.w_plus, r.w_minus);
  EXPECT_EQ(r.p_value, 1.0);
}

TEST(Wilcoxon, ZeroDifferencesAreDropped) {
  const std::vector<std::pair<double, double>> pairs = {{1, 1}, {0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5}, {0, 6}, {2, 2}};
  const auto r = wilcoxon_signed_rank(pairs);
  EXPECT_EQ(r.n, 6u);
  EXPECT_DOUBLE_EQ(r.p_value, 2.0 / 64.0);
  EXPECT_THROW(wilcoxon_signed_rank(std::vector<std::pair<double, double>>{{1, 1}}), InvalidArgument);
}

TEST(Wilcoxon, WarnsOnTinySamples) {
  test_support::WarningCapture warnings;
  wilcoxon_signed_rank(from_diffs({1, 2, -3}));
  EXPECT_EQ(warnings.messages.size(), 1u);
}

TEST(Wilcoxon, ExactMatchesEnumerationWithTies) {
  Rng rng(8);
  test_support::WarningCapture quiet;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 14);
    std::vector<double> d(n);
    // Coarse values force ties and zeros.
    for (auto& x : d) x = static_cast<double>(static_cast<int>(uniform_index(rng, 9)) - 3);
    if (std::all_of(d.begin(), d.end(), [](double x) { return x == 0.0; })) d[0] = 1.0;
    const auto got = wilcoxon_signed_rank(from_diffs(d));
    const auto want = oracle::brute_force_signed_rank(d);
    EXPECT_DOUBLE_EQ(got.w_plus, want.w_plus);
    EXPECT_DOUBLE_EQ(got.w_minus, want.w_minus);
    EXPECT_NEAR(got.p_value, want.p_value, 1e-12);
  }
}

TEST(Wilcoxon, ExactMatchesReferenceWithoutTies) {
  // Reference value from an independent statistics package (exact mode).
  const auto r = wilcoxon_signed_rank(from_diffs({0.5, -1.2, 2.3, 0.7, 1.9, -0.4, 3.1, 1.1, -2.6, 0.9}));
  EXPECT_EQ(r.statistic, 16.0);
  EXPECT_NEAR(r.p_value, 0.275390625, 1e-12);
}

TEST(Wilcoxon, NormalApproximationMatchesReference) {
  // 30 differences, two zeros, many ties; tie-corrected normal approximation
  // without continuity correction, reference from an independent package.
  const std::vector<double> d = {2.3, -2.3, 0.7, -0.3, -0.2, 0.1, -1.7, 0.1, -0.6, 3.6,
                                 0.5, -0.1, 0.0, -0.4, -0.8, -0.1, 0.8, 0.1, 1.3, 0.1,
                                 0.3, 1.8, 0.8, -0.2, 0.1, 0.8, 2.2, 0.0, 0.1, 1.3};
  const auto r = wilcoxon_signed_rank(from_diffs(d));
  EXPECT_FALSE(r.exact);
  EXPECT_EQ(r.n, 28u);
  EXPECT_DOUBLE_EQ(r.statistic, 135.5);
  EXPECT_NEAR(r.p_value, 0.12307936138250483, 1e-9);
}

TEST(Wilcoxon, SymmetricUnderSwap) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<double, double>> pairs(6 + uniform_index(rng, 40));
    for (auto& [a, b] : pairs) {
      a = uniform01(rng);
      b = uniform01(rng);
    }
    auto swapped = pairs;
    for (auto& [a, b] : swapped) std::swap(a, b);
    const auto x = wilcoxon_signed_rank(pairs);
    const auto y = wilcoxon_signed_rank(swapped);
    EXPECT_EQ(x.w_plus, y.w_minus);
    EXPECT_DOUBLE_EQ(x.p_value, y.p_value);
    EXPECT_GT(x.p_value, 0.0);
    EXPECT_LE(x.p_value, 1.0);
  }
}
