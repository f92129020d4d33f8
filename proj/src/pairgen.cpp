#include "mmrank/pairgen.hpp"

#include <json.hpp>

#include "mmrank/error.hpp"
#include "mmrank/random.hpp"

namespace mmrank {

std::vector<PreferencePair> mine_preference_pairs(const std::vector<Session>& sessions,
                                                  double dwell_threshold) {
  std::vector<PreferencePair> pairs;
  for (const auto& session : sessions) {
    const auto& page = session.presented;
    std::vector<double> rel(page.size());
    for (std::size_t i = 0; i < page.size(); ++i) {
      rel[i] = relevance_of(page[i].interaction, dwell_threshold);
    }
    for (std::size_t i = 0; i < page.size(); ++i) {
      if (rel[i] != 1.0) continue;
      auto emit = [&](std::size_t j) {
        if (rel[j] == 0.0) {
          pairs.push_back({session.query, page[i].listing_id, page[j].listing_id, session.timestamp});
        }
      };
      if (i > 0) emit(i - 1);
      if (i + 1 < page.size()) emit(i + 1);
    }
  }
  return pairs;
}

std::map<std::string, std::vector<PreferencePair>> group_by_query(
    const std::vector<PreferencePair>& pairs) {
  std::map<std::string, std::vector<PreferencePair>> grouped;
  for (const auto& p : pairs) grouped[p.query].push_back(p);
  return grouped;
}

MultimodalVector sparse_dense_diff(const MultimodalVector& a, const MultimodalVector& b) {
  if (a.modality != b.modality || a.text.dim != b.text.dim || a.image.size() != b.image.size()) {
    throw LayoutMismatchError("cannot subtract vectors with different modality or dimensions");
  }
  MultimodalVector out;
  out.modality = a.modality;
  out.text.dim = a.text.dim;
  const auto& ea = a.text.entries;
  const auto& eb = b.text.entries;
  auto& merged = out.text.entries;
  merged.reserve(ea.size() + eb.size());
  std::size_t i = 0, j = 0;
  while (i < ea.size() || j < eb.size()) {
    if (j == eb.size() || (i < ea.size() && ea[i].first < eb[j].first)) {
      merged.push_back(ea[i++]);
    } else if (i == ea.size() || eb[j].first < ea[i].first) {
      merged.emplace_back(eb[j].first, -eb[j].second);
      ++j;
    } else {
      const double d = ea[i].second - eb[j].second;
      if (d != 0.0) merged.emplace_back(ea[i].first, d);
      ++i;
      ++j;
    }
  }
  out.image.values.resize(a.image.size());
  for (std::size_t k = 0; k < a.image.size(); ++k) {
    out.image.values[k] = a.image.values[k] - b.image.values[k];
  }
  return out;
}

PairwiseInstance make_instance(const MultimodalVector& preferred, const MultimodalVector& ignored,
                               double r, const std::string& query) {
  if (r > 0.5) return {sparse_dense_diff(preferred, ignored), +1, query};
  return {sparse_dense_diff(ignored, preferred), -1, query};
}

InstanceBatch make_instances(const std::vector<PreferencePair>& pairs, const EmbeddingTable& table,
                             std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  InstanceBatch batch;
  batch.instances.reserve(pairs.size());
  for (const auto& pair : pairs) {
    // Draw before the lookup so one pair's coin does not depend on drops elsewhere.
    const double r = uniform01(rng);
    const auto* plus = table.find(pair.preferred);
    const auto* minus = table.find(pair.ignored);
    if (plus == nullptr || minus == nullptr) {
      ++batch.dropped;
      continue;
    }
    batch.instances.push_back(make_instance(*plus, *minus, r, pair.query));
  }
  return batch;
}

std::string instance_to_json_line(const PairwiseInstance& instance) {
  nlohmann::ordered_json j;
  j["query"] = instance.query;
  j["y"] = instance.y;
  auto sparse = nlohmann::ordered_json::array();
  for (const auto& [idx, val] : instance.x.text.entries) sparse.push_back({idx, val});
  j["sparse"] = std::move(sparse);
  j["dense"] = instance.x.image.values;
  return j.dump();
}

}  // namespace mmrank
