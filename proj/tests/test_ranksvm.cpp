#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmrank/error.hpp"
#include "mmrank/random.hpp"
#include "mmrank/ranksvm.hpp"

using namespace mmrank;

namespace {

MultimodalVector make_x(Modality m, std::size_t text_dim, std::vector<std::pair<std::uint32_t, double>> sparse,
                        std::vector<double> dense) {
  MultimodalVector x;
  x.modality = m;
  x.text = SparseVector::from_entries(text_dim, std::move(sparse));
  x.image.values = std::move(dense);
  return x;
}

// Sparse text-like instances with a few dense columns, labels from a hidden
// linear rule plus flips.
std::vector<PairwiseInstance> random_instances(Rng& rng, std::size_t n, std::size_t text_dim,
                                               std::size_t image_dim) {
  std::vector<double> truth(text_dim + image_dim);
  for (auto& t : truth) t = standard_normal(rng);
  std::vector<PairwiseInstance> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<std::uint32_t, double>> sparse;
    for (std::uint32_t j = 0; j < text_dim; ++j) {
      if (uniform01(rng) < 0.15) sparse.emplace_back(j, uniform01(rng) < 0.5 ? 1.0 : -1.0);
    }
    std::vector<double> dense(image_dim);
    for (auto& d : dense) d = standard_normal(rng) * 0.5;
    double s = 0.0;
    for (const auto& [j, v] : sparse) s += truth[j] * v;
    for (std::size_t k = 0; k < image_dim; ++k) s += truth[text_dim + k] * dense[k];
    int y = s >= 0 ? 1 : -1;
    if (uniform01(rng) < 0.1) y = -y;
    const Modality m = image_dim == 0 ? Modality::kText : Modality::kMultimodal;
    out.push_back({make_x(m, text_dim, std::move(sparse), std::move(dense)), y, "q"});
  }
  return out;
}

// Straightforward SGD: every step applies the hinge subgradient, then the
// full elastic-net proximal step to every coordinate. Same visiting order
// as the trainer (seeded Fisher-Yates per epoch).
std::vector<double> eager_reference(const std::vector<PairwiseInstance>& data, const TrainConfig& c) {
  const std::size_t text_dim = data[0].x.text.dim;
  const std::size_t image_dim = data[0].x.image.size();
  std::vector<double> w(text_dim + image_dim, 0.0);
  const double m = static_cast<double>(data.size());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(c.seed);
  std::size_t t = 0;
  for (int e = 0; e < c.epochs; ++e) {
    if (c.shuffle) shuffle(std::span(order), rng);
    for (const auto i : order) {
      const auto& inst = data[i];
      const double eta = c.learning_rate / (1.0 + c.lr_decay * static_cast<double>(t));
      double s = 0.0;
      for (const auto& [j, v] : inst.x.text.entries) s += w[j] * v;
      for (std::size_t k = 0; k < image_dim; ++k) s += w[text_dim + k] * inst.x.image.values[k];
      if (inst.y * s < 1.0) {
        for (const auto& [j, v] : inst.x.text.entries) w[j] += eta * inst.y * v;
        for (std::size_t k = 0; k < image_dim; ++k) w[text_dim + k] += eta * inst.y * inst.x.image.values[k];
      }
      const double a = 1.0 - 2.0 * eta * c.lambda2 / m;
      const double b = eta * c.lambda1 / m;
      for (auto& v : w) {
        const double scaled = v * a;
        const double mag = std::fabs(scaled) - b;
        v = mag > 0 ? std::copysign(mag, scaled) : 0.0;
      }
      ++t;
    }
  }
  return w;
}

std::vector<double> flatten(const Weights& w) {
  std::vector<double> out(w.text_dim + w.dense.size(), 0.0);
  for (const auto& [j, v] : w.sparse) out[j] = v;
  std::copy(w.dense.begin(), w.dense.end(), out.begin() + static_cast<long>(w.text_dim));
  return out;
}

QueryModel model_with(Modality m, Weights w) {
  QueryModel model;
  model.modality = m;
  model.weights = std::move(w);
  return model;
}

}  // namespace

TEST(Objective, HandValues) {
  Rng rng(1);
  const auto data = random_instances(rng, 37, 10, 0);
  Weights zero{10, {}, {}};
  EXPECT_DOUBLE_EQ(objective(zero, data, 0.0, 0.0), 37.0);

  const PairwiseInstance one{make_x(Modality::kText, 4, {{0, 3.0}}, {}), 1, "q"};
  EXPECT_DOUBLE_EQ(objective(Weights{4, {{0, 1.0}}, {}}, std::span(&one, 1), 0.0, 0.0), 0.0);

  // (1, -2): |w|_1 = 3, |w|_2^2 = 5, hinge zero.
  const PairwiseInstance sat{make_x(Modality::kText, 2, {{0, 5.0}}, {}), 1, "q"};
  EXPECT_DOUBLE_EQ(objective(Weights{2, {{0, 1.0}, {1, -2.0}}, {}}, std::span(&sat, 1), 1.0, 0.5), 5.5);
}

TEST(Dot, Examples) {
  const auto d = make_x(Modality::kText, 8, {{2, 1.0}}, {});
  EXPECT_EQ(dot(Weights{8, {}, {}}, d), 0.0);
  EXPECT_EQ(dot(Weights{8, {{2, 0.5}}, {}}, d), 0.5);
  EXPECT_EQ(dot(Weights{8, {{3, 0.5}}, {}}, d), 0.0);
  const auto mm = make_x(Modality::kMultimodal, 8, {{2, 1.0}}, {1.0, -1.0});
  EXPECT_DOUBLE_EQ(dot(Weights{8, {{2, 0.5}}, {2.0, 1.0}}, mm), 1.5);
  EXPECT_THROW(dot(Weights{8, {}, {1.0}}, mm), LayoutMismatchError);
  EXPECT_THROW(dot(Weights{9, {}, {}}, d), LayoutMismatchError);
}

TEST(TrainSgd, SingleStepCopiesLabelledInstance) {
  for (const int y : {1, -1}) {
    const PairwiseInstance inst{make_x(Modality::kMultimodal, 6, {{1, 1.0}, {4, -1.0}}, {0.6, -0.8}), y, "q"};
    TrainConfig c;
    c.learning_rate = 1.0;
    c.epochs = 1;
    const auto model = train_sgd(std::span(&inst, 1), c, "q");
    EXPECT_EQ(model.weights.sparse, (std::vector<std::pair<std::uint32_t, double>>{{1, 1.0 * y}, {4, -1.0 * y}}));
    EXPECT_EQ(model.weights.dense, (std::vector<double>{0.6 * y, -0.8 * y}));
    EXPECT_EQ(model.train_stats.instance_count, 1u);
    EXPECT_EQ(model.train_stats.epochs_run, 1);
  }
}

TEST(TrainSgd, LazyRegularizationMatchesEagerReference) {
  Rng rng(31);
  const auto data = random_instances(rng, 300, 60, 5);
  const TrainConfig configs[] = {
      {0.1, 1e-4, 0.0, 1e-4, 5, 3, true},   {0.1, 1e-4, 1e-5, 1e-6, 5, 4, true},
      {0.5, 1e-2, 2.0, 5.0, 3, 5, true},    {0.01, 0.0, 30.0, 0.0, 2, 6, false},
      {0.2, 1e-3, 0.5, 20.0, 4, 7, true},
  };
  for (const auto& c : configs) {
    const auto lazy = flatten(train_sgd(data, c).weights);
    const auto eager = eager_reference(data, c);
    ASSERT_EQ(lazy.size(), eager.size());
    for (std::size_t j = 0; j < lazy.size(); ++j) {
      EXPECT_NEAR(lazy[j], eager[j], 1e-9 * std::max(1.0, std::fabs(eager[j]))) << "coordinate " << j;
      if (eager[j] == 0.0) {
        EXPECT_EQ(lazy[j], 0.0) << "coordinate " << j;
      }
    }
  }
}

TEST(TrainSgd, LazyRegularizationSurvivesRebase) {
  // Strong L2 drives the prefix product below the rebase threshold many times.
  Rng rng(8);
  const auto data = random_instances(rng, 50, 40, 2);
  const TrainConfig c{0.4, 0.0, 0.01, 60.0, 40, 9, true};
  const auto lazy = flatten(train_sgd(data, c).weights);
  const auto eager = eager_reference(data, c);
  for (std::size_t j = 0; j < lazy.size(); ++j) {
    EXPECT_NEAR(lazy[j], eager[j], 1e-9 * std::max(1.0, std::fabs(eager[j])));
  }
}

TEST(TrainSgd, HugeL1ZeroesEverything) {
  Rng rng(4);
  const auto data = random_instances(rng, 200, 30, 4);
  TrainConfig c;
  c.lambda1 = 1e3;
  const auto model = train_sgd(data, c);
  EXPECT_TRUE(model.weights.sparse.empty());
  for (double v : model.weights.dense) EXPECT_EQ(v, 0.0);
}

TEST(TrainSgd, SeparableDataReachesZeroError) {
  Rng rng(12);
  std::vector<PairwiseInstance> data;
  while (data.size() < 200) {
    const double a = uniform01(rng) * 2 - 1, b = uniform01(rng) * 2 - 1;
    const double s = a + 0.5 * b;
    if (std::fabs(s) < 0.1) continue;
    data.push_back({make_x(Modality::kImage, 0, {}, {a, b}), s > 0 ? 1 : -1, "q"});
  }
  const auto model = train_sgd(data, TrainConfig{});
  EXPECT_EQ(pairwise_error(model, data), 0.0);
}

TEST(TrainSgd, ObjectiveDecreasesFromZero) {
  Rng rng(5);
  const auto data = random_instances(rng, 400, 50, 3);
  for (const double eta : {0.1, 0.01, 0.001}) {
    TrainConfig c;
    c.learning_rate = eta;
    c.lambda2 = 1e-4;
    const auto model = train_sgd(data, c);
    EXPECT_LT(model.train_stats.final_objective, objective(Weights{50, {}, {0, 0, 0}}, data, 0, 1e-4));
  }
}

TEST(TrainSgd, DeterministicGivenSeed) {
  Rng rng(6);
  const auto data = random_instances(rng, 100, 20, 2);
  TrainConfig c;
  c.seed = 77;
  c.lambda1 = 1e-3;
  EXPECT_EQ(train_sgd(data, c), train_sgd(data, c));
  c.seed = 78;
  EXPECT_NE(train_sgd(data, c).weights, train_sgd(data, TrainConfig{}).weights);
}

TEST(TrainSgd, RejectsBadInputs) {
  EXPECT_THROW(train_sgd({}, TrainConfig{}), InvalidArgument);
  Rng rng(2);
  auto data = random_instances(rng, 4, 10, 2);
  TrainConfig c;
  c.learning_rate = -1;
  EXPECT_THROW(train_sgd(data, c), InvalidArgument);
  c = TrainConfig{};
  c.lambda2 = 40.0;  // 2 * 0.1 * 40 / 4 = 2 >= 1
  EXPECT_THROW(train_sgd(data, c), InvalidArgument);
  data[1].x.image.values.push_back(0.0);
  EXPECT_THROW(train_sgd(data, TrainConfig{}), LayoutMismatchError);
}

TEST(TrainSgd, OverflowIsReported) {
  const PairwiseInstance inst{make_x(Modality::kImage, 0, {}, {1e10}), 1, "q"};
  TrainConfig c;
  c.learning_rate = 1e300;
  c.lr_decay = 0.0;
  EXPECT_THROW(train_sgd(std::span(&inst, 1), c), DivergenceError);
}

TEST(Gradient, MatchesCentralDifferences) {
  Rng rng(21);
  int checked = 0;
  while (checked < 100) {
    const auto data = random_instances(rng, 20, 12, 3);
    Weights w{12, {}, std::vector<double>(3)};
    for (std::uint32_t j = 0; j < 12; ++j) w.sparse.emplace_back(j, standard_normal(rng) * 0.5);
    for (auto& d : w.dense) d = standard_normal(rng) * 0.5;
    const double l2 = uniform01(rng);
    bool near_kink = false;
    for (const auto& inst : data) near_kink |= std::fabs(inst.y * dot(w, inst.x) - 1.0) < 1e-3;
    if (near_kink) continue;
    ++checked;

    const auto [gs, gd] = objective_gradient(w, data, 0.0, l2);
    const double h = 1e-6;
    auto fd = [&](auto&& bump) {
      Weights plus = w, minus = w;
      bump(plus, h);
      bump(minus, -h);
      return (objective(plus, data, 0.0, l2) - objective(minus, data, 0.0, l2)) / (2 * h);
    };
    for (std::size_t j = 0; j < 12; ++j) {
      const double num = fd([j](Weights& v, double d) { v.sparse[j].second += d; });
      EXPECT_NEAR(gs[j], num, 1e-5 * std::max(1.0, std::fabs(num)));
    }
    for (std::size_t k = 0; k < 3; ++k) {
      const double num = fd([k](Weights& v, double d) { v.dense[k] += d; });
      EXPECT_NEAR(gd[k], num, 1e-5 * std::max(1.0, std::fabs(num)));
    }
  }
}

TEST(Score, LinearInDocuments) {
  Rng rng(10);
  const auto data = random_instances(rng, 200, 40, 4);
  const auto model = train_sgd(data, TrainConfig{});
  for (std::size_t i = 0; i + 1 < data.size(); i += 2) {
    const auto& a = data[i].x;
    const auto& b = data[i + 1].x;
    MultimodalVector diff;
    diff.modality = a.modality;
    diff.text.dim = a.text.dim;
    std::vector<double> dense(a.text.dim, 0.0);
    for (const auto& [j, v] : a.text.entries) dense[j] += v;
    for (const auto& [j, v] : b.text.entries) dense[j] -= v;
    for (std::uint32_t j = 0; j < dense.size(); ++j) {
      if (dense[j] != 0.0) diff.text.entries.emplace_back(j, dense[j]);
    }
    for (std::size_t k = 0; k < a.image.size(); ++k) diff.image.values.push_back(a.image.values[k] - b.image.values[k]);
    const double lhs = score(model, diff);
    const double rhs = score(model, a) - score(model, b);
    EXPECT_NEAR(lhs, rhs, 1e-9 * std::max(1.0, std::fabs(rhs)));
  }
  auto text_doc = make_x(Modality::kText, 40, {}, {});
  EXPECT_THROW(score(model, text_doc), LayoutMismatchError);
}

TEST(Rank, OrdersByScoreThenId) {
  const auto model = model_with(Modality::kText, Weights{3, {{0, 0.9}, {1, 0.1}, {2, 0.5}}, {}});
  const auto a = make_x(Modality::kText, 3, {{0, 1.0}}, {});
  const auto b = make_x(Modality::kText, 3, {{1, 1.0}}, {});
  const auto c = make_x(Modality::kText, 3, {{2, 1.0}}, {});
  std::vector<std::pair<std::string, const MultimodalVector*>> docs = {{"A", &a}, {"B", &b}, {"C", &c}};
  const auto ranked = rank(model, docs);
  ASSERT_EQ(ranked.size(), 3u);
  EXPECT_EQ(ranked[0].id, "A");
  EXPECT_EQ(ranked[1].id, "C");
  EXPECT_EQ(ranked[2].id, "B");

  const auto flat = model_with(Modality::kText, Weights{3, {}, {}});
  std::vector<std::pair<std::string, const MultimodalVector*>> tied = {{"z", &a}, {"m", &b}, {"a", &c}};
  const auto by_id = rank(flat, tied);
  EXPECT_EQ(by_id[0].id, "a");
  EXPECT_EQ(by_id[2].id, "z");
  EXPECT_TRUE(rank(flat, {}).empty());
}

TEST(PairwiseError, Examples) {
  Rng rng(3);
  std::vector<PairwiseInstance> data;
  for (int i = 0; i < 50; ++i) {
    const double a = standard_normal(rng);
    if (a == 0.0) continue;
    data.push_back({make_x(Modality::kImage, 0, {}, {a}), a > 0 ? 1 : -1, "q"});
  }
  EXPECT_EQ(pairwise_error(model_with(Modality::kImage, Weights{0, {}, {1.0}}), data), 0.0);
  EXPECT_EQ(pairwise_error(model_with(Modality::kImage, Weights{0, {}, {0.0}}), data), 1.0);
  EXPECT_EQ(pairwise_error(model_with(Modality::kImage, Weights{0, {}, {-1.0}}), data), 1.0);
  EXPECT_THROW(pairwise_error(model_with(Modality::kImage, Weights{0, {}, {1.0}}), {}), InvalidArgument);
}

TEST(QueryModel, JsonRoundTripIsExact) {
  Rng rng(14);
  const auto data = random_instances(rng, 120, 25, 3);
  TrainConfig c;
  c.lambda1 = 1e-3;
  c.lambda2 = 1e-2;
  c.seed = 0xfeedface12345678ULL;
  const auto model = train_sgd(data, c, "red desk");
  const auto back = QueryModel::from_json(model.to_json());
  EXPECT_EQ(back, model);
  EXPECT_EQ(back.to_json(), model.to_json());
}
