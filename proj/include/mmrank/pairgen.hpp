#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mmrank/corpus.hpp"
#include "mmrank/embedding.hpp"

namespace mmrank {

/// (q, d+, d-) mined from one session: the user interacted with `preferred`
/// and ignored the adjacent `ignored`.
struct PreferencePair {
  std::string query;
  std::string preferred;
  std::string ignored;
  std::int64_t session_ts = 0;

  bool operator==(const PreferencePair&) const = default;
};

/// Signed difference vector with its +1/-1 label.
struct PairwiseInstance {
  MultimodalVector x;
  int y = 1;
  std::string query;

  bool operator==(const PairwiseInstance&) const = default;
};

std::vector<PreferencePair> mine_preference_pairs(const std::vector<Session>& sessions,
                                                  double dwell_threshold = kDefaultDwellThreshold);

/// Pairs keyed by query, in mining order within each query.
std::map<std::string, std::vector<PreferencePair>> group_by_query(
    const std::vector<PreferencePair>& pairs);

/// a - b. Sparse block is merged with exact zeros elided.
MultimodalVector sparse_dense_diff(const MultimodalVector& a, const MultimodalVector& b);

/// One coin flip r: r > 0.5 gives (d+ - d-, +1), otherwise (d- - d+, -1).
PairwiseInstance make_instance(const MultimodalVector& preferred, const MultimodalVector& ignored,
                               double r, const std::string& query);

struct InstanceBatch {
  std::vector<PairwiseInstance> instances;
  std::size_t dropped = 0;  // pairs with an endpoint missing from the table
};

/// Draws r per pair from a generator seeded with `rng_seed`. Pairs whose
/// listings are not in `table` are dropped and counted.
InstanceBatch make_instances(const std::vector<PreferencePair>& pairs, const EmbeddingTable& table,
                             std::uint64_t rng_seed);

/// JSON line: {"query","y","sparse":[[idx,val]...],"dense":[...]}
std::string instance_to_json_line(const PairwiseInstance& instance);

}  // namespace mmrank
