#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmrank/corpus.hpp"
#include "mmrank/embedding.hpp"
#include "mmrank/ranksvm.hpp"

namespace mmrank {

/// Sum of (2^rel_i - 1) / log2(i + 1) over the first p positions.
double dcg(std::span<const double> relevances, std::size_t cutoff);

/// dcg / ideal dcg. Throws InvalidArgument when the ideal DCG is zero.
double ndcg(std::span<const double> relevances, std::size_t cutoff);

/// Outcome of evaluating one session; `ndcg` is empty when skipped.
struct SessionEval {
  std::optional<double> ndcg;
  enum class Skip { kNone, kNoRelevant, kNotEmbeddable } skip = Skip::kNone;
};

/// Re-ranks the session's listings with the model and returns NDCG at the
/// session length.
SessionEval session_ndcg(const QueryModel& model, const Session& session,
                         const EmbeddingTable& table,
                         double dwell_threshold = kDefaultDwellThreshold);

struct QueryMean {
  double mean = 0.0;
  std::size_t sessions = 0;
  bool operator==(const QueryMean&) const = default;
};

struct Aggregate {
  std::map<std::string, QueryMean> per_query;
  double modality_mean = 0.0;  // unweighted mean of query means
};

Aggregate aggregate(const std::map<std::string, std::vector<double>>& per_session);

/// 100 * (candidate - baseline) / baseline.
double relative_lift(double candidate_mean, double baseline_mean);

struct WilcoxonResult {
  double statistic = 0.0;  // min(W+, W-)
  double w_plus = 0.0;
  double w_minus = 0.0;
  double p_value = 1.0;  // two-sided
  std::size_t n = 0;     // non-zero differences used
  bool exact = false;
};

inline constexpr std::size_t kWilcoxonExactMaxN = 25;

/// Two-sided signed-rank test on b - a. Zero differences are dropped, ties
/// get midranks. Exact null distribution up to kWilcoxonExactMaxN pairs,
/// tie-corrected normal approximation above.
WilcoxonResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> paired);

}  // namespace mmrank
