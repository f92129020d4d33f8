#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmrank/embedding.hpp"
#include "mmrank/pairgen.hpp"

namespace mmrank {

struct TrainConfig {
  double learning_rate = 0.1;  // eta_0
  double lr_decay = 1e-4;      // eta_t = eta_0 / (1 + lr_decay * t)
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  int epochs = 5;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct TrainStats {
  int epochs_run = 0;
  double final_objective = 0.0;
  std::size_t instance_count = 0;

  bool operator==(const TrainStats&) const = default;
};

/// Linear weights in a modality's layout: sparse over |T| text columns,
/// dense over |I| image columns.
struct Weights {
  std::size_t text_dim = 0;
  std::vector<std::pair<std::uint32_t, double>> sparse;  // sorted, non-zero
  std::vector<double> dense;

  bool operator==(const Weights&) const = default;
};

struct QueryModel {
  std::string query;
  Modality modality = Modality::kText;
  Weights weights;
  TrainConfig train_config;
  TrainStats train_stats;

  std::string to_json() const;
  static QueryModel from_json(std::string_view text);
  bool operator==(const QueryModel&) const = default;
};

/// <w, x>. Throws LayoutMismatchError when the blocks do not line up.
double dot(const Weights& w, const MultimodalVector& x);

double objective(const Weights& w, std::span<const PairwiseInstance> instances, double lambda1,
                 double lambda2);

/// Gradient of the objective where it is differentiable (lambda1 = 0 and no
/// margin exactly at 1); a subgradient otherwise. Returned in the same layout
/// as `w`, with the sparse block densified over text_dim.
std::pair<std::vector<double>, std::vector<double>> objective_gradient(
    const Weights& w, std::span<const PairwiseInstance> instances, double lambda1, double lambda2);

QueryModel train_sgd(std::span<const PairwiseInstance> instances, const TrainConfig& config,
                     const std::string& query = {});

double score(const QueryModel& model, const MultimodalVector& doc);

struct ScoredDoc {
  std::string id;
  double score = 0.0;
  bool operator==(const ScoredDoc&) const = default;
};

/// Descending score; ties by ascending id.
std::vector<ScoredDoc> rank(const QueryModel& model,
                            std::span<const std::pair<std::string, const MultimodalVector*>> docs);
std::vector<ScoredDoc> rank_scored(std::vector<ScoredDoc> scored);

/// Fraction of instances with y<w,x> <= 0.
double pairwise_error(const QueryModel& model, std::span<const PairwiseInstance> instances);

}  // namespace mmrank
