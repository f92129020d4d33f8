#include <gtest/gtest.h>

#include <cmath>

#include "mmrank/error.hpp"
#include "mmrank/pairgen.hpp"
#include "mmrank/random.hpp"

using namespace mmrank;

namespace {

Session page(std::vector<std::pair<std::string, InteractionKind>> items, double dwell = 60.0) {
  Session s;
  s.query = "q";
  s.timestamp = 42;
  for (auto& [id, kind] : items) {
    s.presented.push_back({id, {kind, kind == InteractionKind::kIgnored ? 0.0 : dwell}});
  }
  return s;
}

MultimodalVector mm(std::vector<std::pair<std::uint32_t, double>> sparse, std::vector<double> dense,
                    std::size_t text_dim = 16) {
  MultimodalVector v;
  v.modality = dense.empty() ? Modality::kText : Modality::kMultimodal;
  v.text = SparseVector::from_entries(text_dim, std::move(sparse));
  v.image.values = std::move(dense);
  return v;
}

MultimodalVector random_vector(Rng& rng, std::size_t text_dim, std::size_t image_dim) {
  std::vector<std::pair<std::uint32_t, double>> entries;
  for (std::uint32_t i = 0; i < text_dim; ++i) {
    if (uniform01(rng) < 0.3) entries.emplace_back(i, 1.0);
  }
  std::vector<double> dense;
  for (std::size_t k = 0; k < image_dim; ++k) dense.push_back(standard_normal(rng));
  return mm(entries, dense, text_dim);
}

constexpr auto I = InteractionKind::kIgnored;
constexpr auto P = InteractionKind::kPurchased;

}  // namespace

TEST(MinePairs, RelevantBetweenTwoIgnored) {
  const auto pairs = mine_preference_pairs({page({{"L1", I}, {"L2", P}, {"L3", I}})});
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0], (PreferencePair{"q", "L2", "L1", 42}));
  EXPECT_EQ(pairs[1], (PreferencePair{"q", "L2", "L3", 42}));
}

TEST(MinePairs, NoRelevantOrNoNegative) {
  EXPECT_TRUE(mine_preference_pairs({page({{"L1", I}, {"L2", I}, {"L3", I}})}).empty());
  EXPECT_TRUE(mine_preference_pairs({page({{"L1", P}, {"L2", P}})}).empty());
  EXPECT_TRUE(mine_preference_pairs({page({})}).empty());
}

TEST(MinePairs, ShortClickIsEligibleNegative) {
  Session s = page({{"L1", P}, {"L2", InteractionKind::kClicked}});
  s.presented[1].interaction.dwell_seconds = 10.0;
  EXPECT_EQ(mine_preference_pairs({s}).size(), 1u);
  s.presented[1].interaction.dwell_seconds = 31.0;
  EXPECT_TRUE(mine_preference_pairs({s}).empty());
  // A higher threshold demotes the long click.
  EXPECT_EQ(mine_preference_pairs({s}, 40.0).size(), 1u);
}

TEST(MinePairs, OnlyAdjacentPositions) {
  const auto pairs = mine_preference_pairs({page({{"A", P}, {"B", I}, {"C", I}, {"D", I}, {"E", P}})});
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].ignored, "B");
  EXPECT_EQ(pairs[1].ignored, "D");
}

TEST(MinePairs, GroupByQueryKeepsOrder) {
  std::vector<PreferencePair> pairs = {{"b", "1", "2", 0}, {"a", "3", "4", 0}, {"b", "5", "6", 0}};
  const auto g = group_by_query(pairs);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g.at("b")[1].preferred, "5");
}

TEST(Diff, HandMerge) {
  const auto d = sparse_dense_diff(mm({{7, 1.0}}, {}), mm({{7, 1.0}, {9, 1.0}}, {}));
  EXPECT_EQ(d.text.entries, (std::vector<std::pair<std::uint32_t, double>>{{9, -1.0}}));
  EXPECT_TRUE(d.text.valid());
}

TEST(Diff, SelfDifferenceIsZeroAndDenseSubtracts) {
  const auto a = mm({{1, 1.0}, {4, 1.0}}, {1.0, 0.0});
  const auto zero = sparse_dense_diff(a, a);
  EXPECT_TRUE(zero.text.entries.empty());
  EXPECT_EQ(zero.image.values, (std::vector<double>{0.0, 0.0}));
  const auto d = sparse_dense_diff(mm({}, {1.0, 0.0}), mm({}, {0.0, 1.0}));
  EXPECT_EQ(d.image.values, (std::vector<double>{1.0, -1.0}));
}

TEST(Diff, LayoutMismatch) {
  EXPECT_THROW(sparse_dense_diff(mm({}, {1.0}), mm({}, {1.0, 2.0})), LayoutMismatchError);
  EXPECT_THROW(sparse_dense_diff(mm({}, {}, 4), mm({}, {}, 5)), LayoutMismatchError);
}

TEST(MakeInstance, ForcedCoinFlips) {
  const auto plus = mm({{1, 1.0}}, {0.6, 0.8});
  const auto minus = mm({{2, 1.0}}, {0.8, 0.6});
  const auto hi = make_instance(plus, minus, 0.9, "q");
  EXPECT_EQ(hi.y, +1);
  EXPECT_EQ(hi.x, sparse_dense_diff(plus, minus));
  const auto lo = make_instance(plus, minus, 0.1, "q");
  EXPECT_EQ(lo.y, -1);
  EXPECT_EQ(lo.x, sparse_dense_diff(minus, plus));
  EXPECT_EQ(make_instance(plus, minus, 0.5, "q").y, -1);  // strict comparison
}

TEST(MakeInstance, IdenticalListingsStillEmitted) {
  const auto a = mm({{3, 1.0}}, {1.0, 0.0});
  const auto inst = make_instance(a, a, 0.7, "q");
  EXPECT_EQ(inst.y, 1);
  EXPECT_TRUE(inst.x.text.entries.empty());
}

TEST(MakeInstance, AntisymmetryProperty) {
  Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_vector(rng, 32, 8);
    const auto b = random_vector(rng, 32, 8);
    const auto hi = make_instance(a, b, 0.75, "q");
    const auto lo = make_instance(a, b, 0.25, "q");
    // y * x is the preferred-minus-ignored difference in both branches.
    ASSERT_EQ(hi.x.text.entries.size(), lo.x.text.entries.size());
    for (std::size_t k = 0; k < hi.x.text.entries.size(); ++k) {
      EXPECT_EQ(hi.x.text.entries[k].first, lo.x.text.entries[k].first);
      EXPECT_EQ(hi.y * hi.x.text.entries[k].second, lo.y * lo.x.text.entries[k].second);
    }
    for (std::size_t k = 0; k < 8; ++k) {
      EXPECT_EQ(hi.y * hi.x.image.values[k], lo.y * lo.x.image.values[k]);
      EXPECT_EQ(hi.x.image.values[k], a.image.values[k] - b.image.values[k]);
    }
  }
}

class MakeInstancesTest : public ::testing::Test {
 protected:
  void SetUp() override {
    for (int i = 0; i < 20; ++i) {
      const std::string id = "L" + std::to_string(i);
      catalog.listings[id] = Listing{id, "S" + std::to_string(i % 3), "word" + std::to_string(i), {}, "img" + std::to_string(i)};
      store.vectors["img" + std::to_string(i)] = DenseVector{{1.0 + i, 2.0, -1.0 * i}};
    }
    store.dim = 3;
    catalog.listings["L99"] = Listing{"L99", "S0", "noimage", {}, std::nullopt};
    vocab = build_vocabulary(catalog);
  }
  Catalog catalog;
  EmbeddingStore store;
  Vocabulary vocab;
};

TEST_F(MakeInstancesTest, DeterministicAndDropsMissing) {
  const EmbeddingTable table(catalog, vocab, &store, Modality::kMultimodal);
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < 19; ++i) pairs.push_back({"q", "L" + std::to_string(i), "L" + std::to_string(i + 1), 0});
  pairs.push_back({"q", "L99", "L0", 0});
  const auto a = make_instances(pairs, table, 5);
  const auto b = make_instances(pairs, table, 5);
  EXPECT_EQ(a.instances, b.instances);
  EXPECT_EQ(a.instances.size(), 19u);
  EXPECT_EQ(a.dropped, 1u);
  // Dense block of a difference of unit vectors has norm at most 2.
  for (const auto& inst : a.instances) EXPECT_LE(inst.x.image.norm(), 2.0 + 1e-12);

  // Pair k takes the k-th draw of the seeded stream, dropped or not.
  auto shifted = pairs;
  shifted.insert(shifted.begin(), pairs.back());
  shifted.pop_back();
  const auto c = make_instances(shifted, table, 5);
  Rng rng(5);
  (void)uniform01(rng);
  ASSERT_EQ(c.instances.size(), 19u);
  for (const auto& inst : c.instances) EXPECT_EQ(inst.y, uniform01(rng) > 0.5 ? 1 : -1);
}

TEST_F(MakeInstancesTest, LabelsAreBalanced) {
  const EmbeddingTable table(catalog, vocab, nullptr, Modality::kText);
  std::vector<PreferencePair> pairs(4000, PreferencePair{"q", "L1", "L2", 0});
  const auto batch = make_instances(pairs, table, 1234);
  int positives = 0;
  for (const auto& inst : batch.instances) positives += inst.y > 0;
  const double n = 4000, sigma = std::sqrt(n * 0.25);
  EXPECT_LT(std::fabs(positives - n / 2), 4 * sigma);
}

TEST(InstanceJson, Layout) {
  PairwiseInstance inst{mm({{2, -1.0}}, {0.5}), -1, "red desk"};
  EXPECT_EQ(instance_to_json_line(inst), R"({"query":"red desk","y":-1,"sparse":[[2,-1.0]],"dense":[0.5]})");
}
