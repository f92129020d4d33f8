#include "mmrank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmrank/error.hpp"
#include "mmrank/log.hpp"

namespace mmrank {

double dcg(std::span<const double> relevances, std::size_t cutoff) {
  if (cutoff < 1 || cutoff > relevances.size()) {
    throw InvalidArgument("dcg cutoff " + std::to_string(cutoff) + " outside [1, " +
                          std::to_string(relevances.size()) + "]");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < cutoff; ++i) {
    sum += (std::exp2(relevances[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
  }
  return sum;
}

double ndcg(std::span<const double> relevances, std::size_t cutoff) {
  std::vector<double> ideal(relevances.begin(), relevances.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double idcg = dcg(ideal, cutoff);
  if (idcg <= 0.0) throw InvalidArgument("ndcg undefined: ideal DCG is zero (no relevant item)");
  return dcg(relevances, cutoff) / idcg;
}

SessionEval session_ndcg(const QueryModel& model, const Session& session,
                         const EmbeddingTable& table, double dwell_threshold) {
  SessionEval result;
  std::map<std::string, double> rel;
  bool any_relevant = false;
  for (const auto& r : session.presented) {
    const double v = relevance_of(r.interaction, dwell_threshold);
    rel[r.listing_id] = v;
    any_relevant = any_relevant || v > 0.0;
  }
  if (!any_relevant) {
    result.skip = SessionEval::Skip::kNoRelevant;
    return result;
  }
  std::vector<std::pair<std::string, const MultimodalVector*>> docs;
  docs.reserve(session.presented.size());
  for (const auto& r : session.presented) {
    const auto* v = table.find(r.listing_id);
    if (v == nullptr) {
      result.skip = SessionEval::Skip::kNotEmbeddable;
      return result;
    }
    docs.emplace_back(r.listing_id, v);
  }
  const auto ranking = rank(model, docs);
  std::vector<double> ordered;
  ordered.reserve(ranking.size());
  for (const auto& d : ranking) ordered.push_back(rel.at(d.id));
  result.ndcg = ndcg(ordered, ordered.size());
  return result;
}

Aggregate aggregate(const std::map<std::string, std::vector<double>>& per_session) {
  if (per_session.empty()) throw InvalidArgument("aggregate of an empty query set");
  Aggregate out;
  double total = 0.0;
  for (const auto& [query, values] : per_session) {
    if (values.empty()) throw InvalidArgument("query '" + query + "' has no evaluated sessions");
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) /
                        static_cast<double>(values.size());
    out.per_query[query] = {mean, values.size()};
    total += mean;
  }
  out.modality_mean = total / static_cast<double>(per_session.size());
  return out;
}

double relative_lift(double candidate_mean, double baseline_mean) {
  if (!(baseline_mean > 0.0)) throw InvalidArgument("relative lift needs a positive baseline");
  return 100.0 * (candidate_mean - baseline_mean) / baseline_mean;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> paired) {
  std::vector<double> diffs;
  for (const auto& [a, b] : paired) {
    const double d = b - a;
    if (d != 0.0) diffs.push_back(d);
  }
  const std::size_t n = diffs.size();
  if (n == 0) throw InvalidArgument("wilcoxon: all paired differences are zero");
  if (n < 6) warn("wilcoxon: only " + std::to_string(n) + " non-zero differences; p is coarse");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return std::fabs(diffs[i]) < std::fabs(diffs[j]);
  });
  // Doubled midranks are integers.
  std::vector<long long> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::fabs(diffs[order[j + 1]]) == std::fabs(diffs[order[i]])) ++j;
    const auto t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    const auto r2 = static_cast<long long>(i + 1 + j + 1);  // 2 * average of ranks i+1..j+1
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r2;
    i = j + 1;
  }

  long long w_plus2 = 0, w_minus2 = 0;
  for (std::size_t i = 0; i < n; ++i) (diffs[i] > 0 ? w_plus2 : w_minus2) += rank2[i];

  WilcoxonResult result;
  result.n = n;
  result.w_plus = static_cast<double>(w_plus2) / 2.0;
  result.w_minus = static_cast<double>(w_minus2) / 2.0;
  result.statistic = std::min(result.w_plus, result.w_minus);
  const long long stat2 = std::min(w_plus2, w_minus2);

  if (n <= kWilcoxonExactMaxN) {
    result.exact = true;
    const auto total2 = static_cast<std::size_t>(w_plus2 + w_minus2);
    std::vector<double> count(total2 + 1, 0.0);
    count[0] = 1.0;
    std::size_t reach = 0;
    for (const long long r : rank2) {
      const auto step = static_cast<std::size_t>(r);
      for (std::size_t s = reach + 1; s-- > 0;) {
        if (count[s] != 0.0) count[s + step] += count[s];
      }
      reach += step;
    }
    double tail = 0.0;
    for (std::size_t s = 0; s <= static_cast<std::size_t>(stat2); ++s) tail += count[s];
    result.p_value = std::min(1.0, 2.0 * tail / std::exp2(static_cast<double>(n)));
  } else {
    const auto nd = static_cast<double>(n);
    const double mean = nd * (nd + 1.0) / 4.0;
    const double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0;
    const double z = (result.statistic - mean) / std::sqrt(var);
    result.p_value = std::min(1.0, std::erfc(-z / std::sqrt(2.0)));
  }
  return result;
}

}  // namespace mmrank
