#include "mmrank/ranksvm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "mmrank/error.hpp"
#include "mmrank/random.hpp"

namespace mmrank {
namespace {

void check_layout(const Weights& w, const MultimodalVector& x) {
  if (w.text_dim != x.text.dim || w.dense.size() != x.image.size()) {
    throw LayoutMismatchError("weights (" + std::to_string(w.text_dim) + "+" +
                              std::to_string(w.dense.size()) + ") vs vector (" +
                              std::to_string(x.text.dim) + "+" + std::to_string(x.image.size()) + ")");
  }
}

// Deferred elastic-net regularization for sparse coordinates.
//
// Step s applies w <- a_s * w (L2 decay) then w <- sign(w) max(|w| - b_s, 0)
// (L1 prox). Since the sign never flips and zero is absorbing, k consecutive
// steps compose to
//   |w_t| = max(0, P[t]/P[a] |w_a| - P[t] (B[t] - B[a]))
// with P[t] = prod_{s<t} a_s and B[t] = sum_{s<t} b_s / P[s+1]. A coordinate
// only has to remember the step it was last brought up to date.
class LazyRegularizer {
 public:
  LazyRegularizer(std::size_t dim, double l1, double l2)
      : l1_(l1), l2_(l2), last_(dim, 0), prod_{1.0}, cum_{0.0} {}

  bool active() const { return l1_ > 0.0 || l2_ > 0.0; }
  std::size_t now() const { return base_ + prod_.size() - 1; }

  double decay_factor(double eta) const { return 1.0 - 2.0 * eta * l2_; }
  double l1_step(double eta) const { return eta * l1_; }

  // Records step `now()` with step size eta; afterwards now() advances by one.
  void push_step(double eta) {
    const double a = decay_factor(eta);
    const double p = prod_.back() * a;
    prod_.push_back(p);
    cum_.push_back(cum_.back() + (p > 0.0 ? l1_step(eta) / p : 0.0));
  }

  double catch_up(std::size_t j, double w) {
    const std::size_t t = now();
    const std::size_t a = last_[j];
    last_[j] = t;
    if (!active() || a == t || w == 0.0) return w;
    const double pt = prod_[t - base_];
    const double pa = prod_[a - base_];
    const double mag = pt / pa * std::fabs(w) - pt * (cum_[t - base_] - cum_[a - base_]);
    if (mag <= 0.0) return 0.0;
    return std::copysign(mag, w);
  }

  bool needs_rebase() const { return prod_.back() < 1e-120; }

  // Caller must have brought every coordinate to now().
  void rebase() {
    base_ = now();
    prod_.assign(1, 1.0);
    cum_.assign(1, 0.0);
  }

 private:
  double l1_;
  double l2_;
  std::vector<std::size_t> last_;
  std::size_t base_ = 0;
  std::vector<double> prod_;
  std::vector<double> cum_;
};

double apply_dense_reg(double w, double a, double b) {
  w *= a;
  const double mag = std::fabs(w) - b;
  return mag > 0.0 ? std::copysign(mag, w) : 0.0;
}

}  // namespace

void TrainConfig::validate() const {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(learning_rate) || learning_rate <= 0.0) throw InvalidArgument("learning_rate must be > 0");
  if (!finite(lr_decay) || lr_decay < 0.0) throw InvalidArgument("lr_decay must be >= 0");
  if (!finite(lambda1) || lambda1 < 0.0) throw InvalidArgument("lambda1 must be >= 0");
  if (!finite(lambda2) || lambda2 < 0.0) throw InvalidArgument("lambda2 must be >= 0");
  if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
}

double dot(const Weights& w, const MultimodalVector& x) {
  check_layout(w, x);
  double s = 0.0;
  auto it = w.sparse.begin();
  for (const auto& [idx, val] : x.text.entries) {
    it = std::lower_bound(it, w.sparse.end(), idx,
                          [](const auto& e, std::uint32_t i) { return e.first < i; });
    if (it == w.sparse.end()) break;
    if (it->first == idx) s += it->second * val;
  }
  for (std::size_t k = 0; k < w.dense.size(); ++k) s += w.dense[k] * x.image.values[k];
  return s;
}

double objective(const Weights& w, std::span<const PairwiseInstance> instances, double lambda1,
                 double lambda2) {
  double loss = 0.0;
  for (const auto& inst : instances) loss += std::max(1.0 - inst.y * dot(w, inst.x), 0.0);
  double l1 = 0.0, l2 = 0.0;
  for (const auto& e : w.sparse) {
    l1 += std::fabs(e.second);
    l2 += e.second * e.second;
  }
  for (double v : w.dense) {
    l1 += std::fabs(v);
    l2 += v * v;
  }
  return loss + lambda1 * l1 + lambda2 * l2;
}

std::pair<std::vector<double>, std::vector<double>> objective_gradient(
    const Weights& w, std::span<const PairwiseInstance> instances, double lambda1, double lambda2) {
  std::vector<double> gs(w.text_dim, 0.0);
  std::vector<double> gd(w.dense.size(), 0.0);
  for (const auto& inst : instances) {
    if (inst.y * dot(w, inst.x) >= 1.0) continue;
    for (const auto& [idx, val] : inst.x.text.entries) gs[idx] -= inst.y * val;
    for (std::size_t k = 0; k < gd.size(); ++k) gd[k] -= inst.y * inst.x.image.values[k];
  }
  auto sign = [](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); };
  for (const auto& [idx, val] : w.sparse) gs[idx] += lambda1 * sign(val) + 2.0 * lambda2 * val;
  for (std::size_t k = 0; k < gd.size(); ++k) {
    gd[k] += lambda1 * sign(w.dense[k]) + 2.0 * lambda2 * w.dense[k];
  }
  return {std::move(gs), std::move(gd)};
}

QueryModel train_sgd(std::span<const PairwiseInstance> instances, const TrainConfig& config,
                     const std::string& query) {
  config.validate();
  if (instances.empty()) throw InvalidArgument("train_sgd needs at least one instance");
  const auto& first = instances.front().x;
  const std::size_t text_dim = first.text.dim;
  const std::size_t image_dim = first.image.size();
  for (const auto& inst : instances) {
    if (inst.x.modality != first.modality || inst.x.text.dim != text_dim ||
        inst.x.image.size() != image_dim) {
      throw LayoutMismatchError("instances do not share one layout");
    }
  }

  const auto m = static_cast<double>(instances.size());
  // Per-instance share of the regularizer, so the stochastic objectives sum
  // to objective().
  const double l1 = config.lambda1 / m;
  const double l2 = config.lambda2 / m;
  if (2.0 * config.learning_rate * l2 >= 1.0) {
    throw InvalidArgument("learning_rate * lambda2 / m too large: L2 decay would flip signs");
  }

  std::vector<double> ws(text_dim, 0.0);
  std::vector<double> wd(image_dim, 0.0);
  LazyRegularizer reg(text_dim, l1, l2);

  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(config.seed);

  std::size_t t = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) shuffle(std::span(order), rng);
    for (const std::size_t i : order) {
      const auto& inst = instances[i];
      const double eta = config.learning_rate / (1.0 + config.lr_decay * static_cast<double>(t));

      double margin = 0.0;
      for (const auto& [idx, val] : inst.x.text.entries) {
        ws[idx] = reg.catch_up(idx, ws[idx]);
        margin += ws[idx] * val;
      }
      for (std::size_t k = 0; k < image_dim; ++k) margin += wd[k] * inst.x.image.values[k];
      margin *= inst.y;
      if (!std::isfinite(margin)) throw DivergenceError(t);

      if (margin < 1.0) {
        const double step = eta * inst.y;
        for (const auto& [idx, val] : inst.x.text.entries) {
          ws[idx] += step * val;
          if (!std::isfinite(ws[idx])) throw DivergenceError(t);
        }
        for (std::size_t k = 0; k < image_dim; ++k) {
          wd[k] += step * inst.x.image.values[k];
          if (!std::isfinite(wd[k])) throw DivergenceError(t);
        }
      }

      if (reg.active()) {
        const double a = reg.decay_factor(eta);
        const double b = reg.l1_step(eta);
        for (auto& v : wd) v = apply_dense_reg(v, a, b);
        reg.push_step(eta);
        if (reg.needs_rebase()) {
          for (std::size_t j = 0; j < text_dim; ++j) ws[j] = reg.catch_up(j, ws[j]);
          reg.rebase();
        }
      } else {
        reg.push_step(eta);
      }
      ++t;
    }
  }
  for (std::size_t j = 0; j < text_dim; ++j) ws[j] = reg.catch_up(j, ws[j]);

  QueryModel model;
  model.query = query;
  model.modality = first.modality;
  model.weights.text_dim = text_dim;
  for (std::size_t j = 0; j < text_dim; ++j) {
    if (ws[j] != 0.0) model.weights.sparse.emplace_back(static_cast<std::uint32_t>(j), ws[j]);
  }
  model.weights.dense = std::move(wd);
  model.train_config = config;
  model.train_stats.epochs_run = config.epochs;
  model.train_stats.instance_count = instances.size();
  model.train_stats.final_objective = objective(model.weights, instances, config.lambda1, config.lambda2);
  return model;
}

double score(const QueryModel& model, const MultimodalVector& doc) {
  if (doc.modality != model.modality) {
    throw LayoutMismatchError("model modality " + std::string(to_string(model.modality)) +
                              " cannot score a " + std::string(to_string(doc.modality)) + " vector");
  }
  return dot(model.weights, doc);
}

std::vector<ScoredDoc> rank_scored(std::vector<ScoredDoc> scored) {
  std::sort(scored.begin(), scored.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  return scored;
}

std::vector<ScoredDoc> rank(const QueryModel& model,
                            std::span<const std::pair<std::string, const MultimodalVector*>> docs) {
  std::vector<ScoredDoc> scored;
  scored.reserve(docs.size());
  for (const auto& [id, vec] : docs) scored.push_back({id, score(model, *vec)});
  return rank_scored(std::move(scored));
}

double pairwise_error(const QueryModel& model, std::span<const PairwiseInstance> instances) {
  if (instances.empty()) throw InvalidArgument("pairwise_error of an empty instance list");
  std::size_t errors = 0;
  for (const auto& inst : instances) {
    if (inst.y * dot(model.weights, inst.x) <= 0.0) ++errors;
  }
  return static_cast<double>(errors) / static_cast<double>(instances.size());
}

std::string QueryModel::to_json() const {
  nlohmann::ordered_json j;
  j["query"] = query;
  j["modality"] = std::string(to_string(modality));
  j["config"] = {{"learning_rate", train_config.learning_rate},
                 {"lr_decay", train_config.lr_decay},
                 {"lambda1", train_config.lambda1},
                 {"lambda2", train_config.lambda2},
                 {"epochs", train_config.epochs},
                 {"seed", train_config.seed},
                 {"shuffle", train_config.shuffle}};
  j["train_stats"] = {{"epochs_run", train_stats.epochs_run},
                      {"final_objective", train_stats.final_objective},
                      {"instance_count", train_stats.instance_count}};
  j["text_dim"] = weights.text_dim;
  auto sparse = nlohmann::ordered_json::array();
  for (const auto& [idx, val] : weights.sparse) sparse.push_back({idx, val});
  j["sparse"] = std::move(sparse);
  j["dense"] = weights.dense;
  return j.dump();
}

QueryModel QueryModel::from_json(std::string_view text) {
  QueryModel model;
  try {
    const auto j = nlohmann::json::parse(text);
    model.query = j.at("query").get<std::string>();
    model.modality = parse_modality(j.at("modality").get<std::string>());
    const auto& c = j.at("config");
    model.train_config.learning_rate = c.at("learning_rate").get<double>();
    model.train_config.lr_decay = c.at("lr_decay").get<double>();
    model.train_config.lambda1 = c.at("lambda1").get<double>();
    model.train_config.lambda2 = c.at("lambda2").get<double>();
    model.train_config.epochs = c.at("epochs").get<int>();
    model.train_config.seed = c.at("seed").get<std::uint64_t>();
    model.train_config.shuffle = c.at("shuffle").get<bool>();
    const auto& s = j.at("train_stats");
    model.train_stats.epochs_run = s.at("epochs_run").get<int>();
    model.train_stats.final_objective = s.at("final_objective").get<double>();
    model.train_stats.instance_count = s.at("instance_count").get<std::size_t>();
    model.weights.text_dim = j.at("text_dim").get<std::size_t>();
    for (const auto& e : j.at("sparse")) {
      model.weights.sparse.emplace_back(e.at(0).get<std::uint32_t>(), e.at(1).get<double>());
    }
    model.weights.dense = j.at("dense").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("<model>", 0, e.what());
  }
  for (std::size_t i = 0; i < model.weights.sparse.size(); ++i) {
    const auto idx = model.weights.sparse[i].first;
    if (idx >= model.weights.text_dim || (i > 0 && model.weights.sparse[i - 1].first >= idx)) {
      throw ParseError("<model>", 0, "sparse weights must be sorted and within text_dim");
    }
  }
  return model;
}

}  // namespace mmrank
