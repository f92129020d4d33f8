#include "mmrank/synthlog.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "mmrank/error.hpp"

namespace mmrank {
namespace {

enum class ListingClass { kRelevant, kAmbiguous, kIrrelevant };

std::string query_tag(int q) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d", q);
  return buf;
}

std::string padded(int v, int width) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%0*d", width, v);
  return buf;
}

std::vector<double> random_unit(Rng& rng, int dim) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm = 0.0;
  while (norm == 0.0) {
    norm = 0.0;
    for (auto& x : v) {
      x = standard_normal(rng);
      norm += x * x;
    }
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace

void WorldSpec::validate() const {
  if (n_queries < 1 || n_listings_per_query < 2 || n_sessions_per_query < 1) {
    throw InvalidArgument("world needs >= 1 query, >= 2 listings and >= 1 session per query");
  }
  if (!(text_ambiguity >= 0.0 && text_ambiguity <= 1.0)) throw InvalidArgument("text_ambiguity outside [0,1]");
  if (!(image_signal >= 0.0) || !std::isfinite(image_signal)) throw InvalidArgument("image_signal must be >= 0");
  if (position_bias.empty()) throw InvalidArgument("position_bias must be non-empty");
  for (std::size_t i = 0; i < position_bias.size(); ++i) {
    if (!(position_bias[i] >= 0.0 && position_bias[i] <= 1.0)) {
      throw InvalidArgument("position_bias values must lie in [0,1]");
    }
    if (i > 0 && position_bias[i] > position_bias[i - 1]) {
      throw InvalidArgument("position_bias must be non-increasing");
    }
  }
  if (!(relevant_fraction > 0.0 && relevant_fraction < 1.0)) throw InvalidArgument("relevant_fraction outside (0,1)");
  if (image_dim < 1 || shops_per_query < 1) throw InvalidArgument("image_dim and shops_per_query must be >= 1");
  if (!(production_noise >= 0.0)) throw InvalidArgument("production_noise must be >= 0");
  if (!(new_listing_fraction >= 0.0 && new_listing_fraction < 1.0)) {
    throw InvalidArgument("new_listing_fraction outside [0,1)");
  }
}

std::string WorldSpec::to_json() const {
  nlohmann::ordered_json j;
  j["n_queries"] = n_queries;
  j["n_listings_per_query"] = n_listings_per_query;
  j["n_sessions_per_query"] = n_sessions_per_query;
  j["text_ambiguity"] = text_ambiguity;
  j["image_signal"] = image_signal;
  j["position_bias"] = position_bias;
  j["seed"] = seed;
  j["relevant_fraction"] = relevant_fraction;
  j["image_dim"] = image_dim;
  j["shops_per_query"] = shops_per_query;
  j["production_noise"] = production_noise;
  j["new_listing_fraction"] = new_listing_fraction;
  return j.dump(2);
}

WorldSpec WorldSpec::from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  WorldSpec s;
  s.n_queries = j.value("n_queries", s.n_queries);
  s.n_listings_per_query = j.value("n_listings_per_query", s.n_listings_per_query);
  s.n_sessions_per_query = j.value("n_sessions_per_query", s.n_sessions_per_query);
  s.text_ambiguity = j.value("text_ambiguity", s.text_ambiguity);
  s.image_signal = j.value("image_signal", s.image_signal);
  s.position_bias = j.value("position_bias", s.position_bias);
  s.seed = j.value("seed", s.seed);
  s.relevant_fraction = j.value("relevant_fraction", s.relevant_fraction);
  s.image_dim = j.value("image_dim", s.image_dim);
  s.shops_per_query = j.value("shops_per_query", s.shops_per_query);
  s.production_noise = j.value("production_noise", s.production_noise);
  s.new_listing_fraction = j.value("new_listing_fraction", s.new_listing_fraction);
  s.validate();
  return s;
}

int GroundTruth::relevance(const std::string& query, const std::string& listing_id) const {
  return true_relevance.at({query, listing_id});
}

std::string GroundTruth::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [key, rel] : true_relevance) j[key.first][key.second] = rel;
  return j.dump(1);
}

World generate_world(const WorldSpec& spec) {
  spec.validate();
  World world;
  world.store.dim = static_cast<std::size_t>(spec.image_dim);
  world.catalog.source_meta.push_back("synthetic world, seed " + std::to_string(spec.seed));

  const int n = spec.n_listings_per_query;
  const int n_rel = std::clamp(static_cast<int>(std::lround(spec.relevant_fraction * n)), 1, n - 1);
  const int n_irr = n - n_rel;
  const int n_amb = static_cast<int>(std::lround(spec.text_ambiguity * n_irr));
  const int n_new = std::min(static_cast<int>(std::lround(spec.new_listing_fraction * n)), n - 2);

  for (int q = 0; q < spec.n_queries; ++q) {
    const std::string tag = query_tag(q);
    Rng rng(derive_seed(spec.seed, "world:" + tag));
    const std::string sig = "t" + tag + "s";
    const std::string dis = "t" + tag + "d";
    const std::string query = sig + "0 " + sig + "1";
    world.queries.push_back(query);

    std::vector<ListingClass> classes;
    classes.insert(classes.end(), n_rel, ListingClass::kRelevant);
    classes.insert(classes.end(), n_amb, ListingClass::kAmbiguous);
    classes.insert(classes.end(), n_irr - n_amb, ListingClass::kIrrelevant);
    shuffle(std::span(classes), rng);
    std::vector<char> is_new(static_cast<std::size_t>(n), 0);
    std::fill_n(is_new.begin(), n_new, 1);
    shuffle(std::span(is_new), rng);

    // Class-conditional image distributions: unit-variance spheres whose
    // means sit image_signal apart along a random direction.
    std::vector<double> center(static_cast<std::size_t>(spec.image_dim));
    for (auto& c : center) c = standard_normal(rng);
    const auto direction = random_unit(rng, spec.image_dim);

    auto& ids = world.listings_by_query[query];
    for (int i = 0; i < n; ++i) {
      Listing listing;
      listing.listing_id = "q" + tag + "-l" + padded(i, 4);
      listing.shop_id = "q" + tag + "-s" + padded(static_cast<int>(uniform_index(rng, spec.shops_per_query)), 3);
      const bool relevant = classes[i] == ListingClass::kRelevant;
      if (classes[i] == ListingClass::kIrrelevant) {
        listing.title = sig + "0 " + dis + "1 " + dis + "2";
      } else {
        listing.title = sig + "0 " + sig + "1 " + sig + "2";
      }
      listing.tags = {"t" + tag + "cat"};
      listing.image_ref = "img-" + listing.listing_id;

      DenseVector raw;
      raw.values.resize(static_cast<std::size_t>(spec.image_dim));
      const double offset = (relevant ? 0.5 : -0.5) * spec.image_signal;
      for (std::size_t k = 0; k < raw.values.size(); ++k) {
        raw.values[k] = center[k] + offset * direction[k] + standard_normal(rng);
      }
      world.store.vectors.emplace(*listing.image_ref, std::move(raw));
      world.truth.true_relevance[{query, listing.listing_id}] = relevant ? 1 : 0;
      ids.push_back(listing.listing_id);
      if (is_new[i]) world.new_listings.insert(listing.listing_id);
      world.catalog.listings.emplace(listing.listing_id, std::move(listing));
    }
  }
  return world;
}

std::vector<std::pair<std::size_t, std::size_t>> fairpairs_blocks(std::size_t page_size, int phase) {
  std::vector<std::pair<std::size_t, std::size_t>> blocks;
  for (std::size_t k = static_cast<std::size_t>(phase); k + 1 < page_size; k += 2) {
    blocks.emplace_back(k, k + 1);
  }
  return blocks;
}

std::vector<std::string> fairpairs_shuffle(std::vector<std::string> results, Rng& rng,
                                           PageTrace* trace) {
  PageTrace local;
  if (results.size() >= 2) {
    local.phase = static_cast<int>(uniform_index(rng, 2));
    for (const auto& [upper, lower] : fairpairs_blocks(results.size(), local.phase)) {
      const bool swap = uniform01(rng) < 0.5;
      if (swap) std::swap(results[upper], results[lower]);
      local.swapped.push_back(swap);
    }
  }
  if (trace != nullptr) *trace = std::move(local);
  return results;
}

std::vector<Session> generate_sessions(const World& world, const WorldSpec& spec,
                                       std::vector<PageTrace>* traces) {
  spec.validate();
  std::vector<Session> sessions;
  if (traces != nullptr) traces->clear();
  constexpr std::int64_t kBaseTimestamp = 1'600'000'000;

  for (std::size_t qi = 0; qi < world.queries.size(); ++qi) {
    const auto& query = world.queries[qi];
    const auto& pool = world.listings_by_query.at(query);
    Rng rng(derive_seed(spec.seed, "sessions:" + query));
    // Same boundary as split_by_time: the first half of the sessions is the
    // training period, before new listings launch.
    const int holdout_start = spec.n_sessions_per_query / 2;
    std::vector<std::string> established;
    for (const auto& id : pool) {
      if (!world.new_listings.contains(id)) established.push_back(id);
    }

    std::vector<std::string> candidates = established;
    for (int s = 0; s < spec.n_sessions_per_query; ++s) {
      if (s == holdout_start) candidates = pool;
      const std::size_t page_size = std::min(spec.position_bias.size(), candidates.size());
      // Partial Fisher-Yates picks the page's listings.
      for (std::size_t i = 0; i < page_size; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_index(rng, candidates.size() - i));
        std::swap(candidates[i], candidates[j]);
      }
      // The incumbent ranker only sees whether the title matches the query.
      std::vector<std::pair<double, std::string>> scored;
      for (std::size_t i = 0; i < page_size; ++i) {
        const auto& listing = world.catalog.listings.at(candidates[i]);
        const double text_match = listing.title.find(query) != std::string::npos ? 1.0 : 0.0;
        scored.emplace_back(text_match + spec.production_noise * standard_normal(rng), candidates[i]);
      }
      std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      std::vector<std::string> page;
      for (auto& [score, id] : scored) page.push_back(id);

      PageTrace trace;
      page = fairpairs_shuffle(std::move(page), rng, &trace);

      // Examination is decided per randomized block, using the bias of the
      // block's upper position: both members of a pair are seen together.
      std::vector<bool> examined(page.size(), false);
      std::vector<bool> covered(page.size(), false);
      for (const auto& [upper, lower] : fairpairs_blocks(page.size(), trace.phase)) {
        const bool seen = uniform01(rng) < spec.position_bias[upper];
        examined[upper] = examined[lower] = seen;
        covered[upper] = covered[lower] = true;
      }
      for (std::size_t i = 0; i < page.size(); ++i) {
        if (!covered[i]) examined[i] = uniform01(rng) < spec.position_bias[i];
      }

      Session session;
      session.query = query;
      session.timestamp = kBaseTimestamp + static_cast<std::int64_t>(s) * 60 + static_cast<std::int64_t>(qi);
      session.fairpairs_flag = true;
      for (std::size_t i = 0; i < page.size(); ++i) {
        PresentedResult r;
        r.listing_id = page[i];
        if (examined[i] && world.truth.relevance(query, page[i]) == 1) {
          switch (uniform_index(rng, 3)) {
            case 0: r.interaction = {InteractionKind::kPurchased, 0.0}; break;
            case 1: r.interaction = {InteractionKind::kCarted, 0.0}; break;
            default: r.interaction = {InteractionKind::kClicked, 45.0}; break;
          }
        }
        session.presented.push_back(std::move(r));
      }
      sessions.push_back(std::move(session));
      if (traces != nullptr) traces->push_back(std::move(trace));
    }
  }
  return sessions;
}

SessionSplit split_by_time(const std::vector<Session>& sessions) {
  std::map<std::string, std::vector<const Session*>> by_query;
  for (const auto& s : sessions) by_query[s.query].push_back(&s);
  SessionSplit split;
  for (auto& [query, list] : by_query) {
    std::stable_sort(list.begin(), list.end(),
                     [](const Session* a, const Session* b) { return a->timestamp < b->timestamp; });
    const std::size_t n_train = list.size() / 2;
    const std::size_t n_valid = (list.size() - n_train) / 2;
    for (std::size_t i = 0; i < list.size(); ++i) {
      auto& dest = i < n_train ? split.train : (i < n_train + n_valid ? split.validation : split.test);
      dest.push_back(*list[i]);
    }
  }
  return split;
}

}  // namespace mmrank
