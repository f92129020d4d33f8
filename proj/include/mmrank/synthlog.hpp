#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mmrank/corpus.hpp"
#include "mmrank/embedding.hpp"
#include "mmrank/random.hpp"

namespace mmrank {

/// Parameters of a synthetic marketplace. The page size equals
/// position_bias.size().
struct WorldSpec {
  int n_queries = 20;
  int n_listings_per_query = 200;
  int n_sessions_per_query = 500;
  double text_ambiguity = 0.6;  // fraction of irrelevant listings that copy the query terms
  double image_signal = 2.0;    // distance between class means of raw image vectors
  std::vector<double> position_bias = {1.0, 0.95, 0.9, 0.85, 0.8, 0.75, 0.7, 0.65, 0.6, 0.55};
  std::uint64_t seed = 7;

  // Shape knobs not tied to the modality comparison.
  double relevant_fraction = 0.3;
  int image_dim = 40;
  int shops_per_query = 20;
  double production_noise = 1.0;  // noise of the ranker that orders result pages
  // Fraction of each query's listings that launch at the start of the holdout
  // period (the second half of the sessions) and so never appear in training.
  double new_listing_fraction = 0.8;

  void validate() const;
  std::string to_json() const;
  static WorldSpec from_json(std::string_view text);
};

struct GroundTruth {
  std::map<std::pair<std::string, std::string>, int> true_relevance;  // (query, listing) -> 0/1

  int relevance(const std::string& query, const std::string& listing_id) const;
  std::string to_json() const;
};

struct World {
  Catalog catalog;
  EmbeddingStore store;
  GroundTruth truth;
  std::vector<std::string> queries;
  std::map<std::string, std::vector<std::string>> listings_by_query;
  std::set<std::string> new_listings;  // launched at the holdout period
};

World generate_world(const WorldSpec& spec);

/// Randomization applied to one result page.
struct PageTrace {
  int phase = 0;                 // 0: pairs (1,2),(3,4)...; 1: pairs (2,3),(4,5)...
  std::vector<bool> swapped;     // one flag per adjacent pair in the phase
};

/// Random phase, then each adjacent pair swapped with probability 1/2.
std::vector<std::string> fairpairs_shuffle(std::vector<std::string> results, Rng& rng,
                                           PageTrace* trace = nullptr);

/// Positions [first, second] (0-based) of the randomized pairs for a page.
std::vector<std::pair<std::size_t, std::size_t>> fairpairs_blocks(std::size_t page_size, int phase);

/// Sessions ordered by query then timestamp. `traces`, when given, receives
/// one entry per session.
std::vector<Session> generate_sessions(const World& world, const WorldSpec& spec,
                                       std::vector<PageTrace>* traces = nullptr);

struct SessionSplit {
  std::vector<Session> train;
  std::vector<Session> validation;
  std::vector<Session> test;
};

/// Per query, the earliest half of the sessions go to training and the rest
/// is split evenly into validation and test.
SessionSplit split_by_time(const std::vector<Session>& sessions);

}  // namespace mmrank
