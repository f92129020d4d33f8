#include "mmrank/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mmrank/error.hpp"
#include "mmrank/log.hpp"
#include "mmrank/random.hpp"

namespace mmrank {
namespace {

using nlohmann::ordered_json;

// Runs fn(i) for i in [0, n) on a bounded pool. Results must be written to
// slots keyed by i so the outcome does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string format_lift(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.1f%%", v);
  return buf;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

ordered_json config_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"lr_decay", c.lr_decay}, {"lambda1", c.lambda1},
          {"lambda2", c.lambda2},             {"epochs", c.epochs},     {"seed", c.seed}};
}

std::vector<std::size_t> index_by_query(const std::string& query,
                                        const std::map<std::string, std::vector<std::size_t>>& index) {
  const auto it = index.find(query);
  return it == index.end() ? std::vector<std::size_t>{} : it->second;
}

}  // namespace

std::vector<TrainConfig> HyperGrid::expand(int epochs, std::uint64_t seed) const {
  std::vector<TrainConfig> out;
  for (double lr : learning_rates)
    for (double decay : lr_decays)
      for (double l1 : lambda1s)
        for (double l2 : lambda2s) {
          TrainConfig c;
          c.learning_rate = lr;
          c.lr_decay = decay;
          c.lambda1 = l1;
          c.lambda2 = l2;
          c.epochs = epochs;
          c.seed = seed;
          c.shuffle = true;
          out.push_back(c);
        }
  return out;
}

std::size_t HyperGrid::size() const {
  return learning_rates.size() * lr_decays.size() * lambda1s.size() * lambda2s.size();
}

void ExperimentConfig::validate() const {
  if (grid.size() == 0) throw InvalidArgument("hyperparameter grid is empty");
  if (min_pairs_per_query < 1) throw InvalidArgument("min_pairs_per_query must be >= 1");
  if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (!(dwell_threshold > 0.0)) throw InvalidArgument("dwell_threshold must be > 0");
  if (modalities.empty()) throw InvalidArgument("no modalities requested");
  std::set<Modality> seen(modalities.begin(), modalities.end());
  if (seen.size() != modalities.size()) throw InvalidArgument("duplicate modality");
  for (const auto& c : grid.expand(epochs, seed)) c.validate();
}

std::string ExperimentConfig::to_json() const {
  ordered_json j;
  j["catalog"] = catalog_path.string();
  j["embeddings"] = embeddings_path.string();
  j["train"] = train_path.string();
  j["validation"] = validation_path.string();
  j["test"] = test_path.string();
  auto mods = ordered_json::array();
  for (auto m : modalities) mods.push_back(std::string(to_string(m)));
  j["modalities"] = mods;
  j["grid"] = {{"learning_rate", grid.learning_rates},
               {"lr_decay", grid.lr_decays},
               {"lambda1", grid.lambda1s},
               {"lambda2", grid.lambda2s}};
  j["epochs"] = epochs;
  j["min_pairs_per_query"] = min_pairs_per_query;
  j["dwell_threshold"] = dwell_threshold;
  j["min_term_count"] = min_term_count;
  j["seed"] = seed;
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(std::string_view text,
                                             const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.catalog_path = resolve(base_dir, j.value("catalog", std::string()));
    c.embeddings_path = resolve(base_dir, j.value("embeddings", std::string()));
    c.train_path = resolve(base_dir, j.value("train", std::string()));
    c.validation_path = resolve(base_dir, j.value("validation", std::string()));
    c.test_path = resolve(base_dir, j.value("test", std::string()));
    if (j.contains("modalities")) {
      c.modalities.clear();
      for (const auto& m : j.at("modalities")) c.modalities.push_back(parse_modality(m.get<std::string>()));
    }
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      c.grid.learning_rates = g.value("learning_rate", c.grid.learning_rates);
      c.grid.lr_decays = g.value("lr_decay", c.grid.lr_decays);
      c.grid.lambda1s = g.value("lambda1", c.grid.lambda1s);
      c.grid.lambda2s = g.value("lambda2", c.grid.lambda2s);
    }
    c.epochs = j.value("epochs", c.epochs);
    c.min_pairs_per_query = j.value("min_pairs_per_query", c.min_pairs_per_query);
    c.dwell_threshold = j.value("dwell_threshold", c.dwell_threshold);
    c.min_term_count = j.value("min_term_count", c.min_term_count);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("<config>", 0, e.what());
  }
  c.validate();
  return c;
}

ExperimentData load_experiment_data(const ExperimentConfig& config) {
  ExperimentData data;
  data.catalog = load_catalog(config.catalog_path);
  if (!config.embeddings_path.empty()) data.store = load_embedding_store(config.embeddings_path);
  data.train = load_sessions(config.train_path);
  if (!config.validation_path.empty()) data.validation = load_sessions(config.validation_path);
  if (!config.test_path.empty()) data.test = load_sessions(config.test_path);
  return data;
}

PreparedExperiment::PreparedExperiment(const ExperimentConfig& config, const ExperimentData& data)
    : config_(config), data_(&data) {
  config_.validate();
  for (const auto m : config_.modalities) {
    if (uses_image(m) && !data.store) {
      throw InvalidArgument("modality " + std::string(to_string(m)) +
                            " requested but no embedding store was provided");
    }
  }
  vocab_ = build_vocabulary(data.catalog, config_.min_term_count);
  for (const auto m : config_.modalities) {
    tables_.emplace(m, std::make_unique<EmbeddingTable>(data.catalog, vocab_,
                                                        data.store ? &*data.store : nullptr, m));
  }
  pairs_ = group_by_query(mine_preference_pairs(data.train, config_.dwell_threshold));
  for (std::size_t i = 0; i < data.validation.size(); ++i) validation_index_[data.validation[i].query].push_back(i);
  for (std::size_t i = 0; i < data.test.size(); ++i) test_index_[data.test[i].query].push_back(i);
}

const EmbeddingTable& PreparedExperiment::table(Modality modality) const {
  const auto it = tables_.find(modality);
  if (it == tables_.end()) {
    throw InvalidArgument("modality " + std::string(to_string(modality)) + " was not prepared");
  }
  return *it->second;
}

bool PreparedExperiment::has_modality(Modality modality) const { return tables_.contains(modality); }

std::vector<Session> PreparedExperiment::validation_sessions(const std::string& query) const {
  std::vector<Session> out;
  for (auto i : index_by_query(query, validation_index_)) out.push_back(data_->validation[i]);
  return out;
}

std::vector<Session> PreparedExperiment::test_sessions(const std::string& query) const {
  std::vector<Session> out;
  for (auto i : index_by_query(query, test_index_)) out.push_back(data_->test[i]);
  return out;
}

HoldoutScore evaluate_sessions(const QueryModel& model, const std::vector<Session>& sessions,
                               const EmbeddingTable& table, double dwell_threshold) {
  HoldoutScore score;
  double sum = 0.0;
  for (const auto& s : sessions) {
    const auto eval = session_ndcg(model, s, table, dwell_threshold);
    switch (eval.skip) {
      case SessionEval::Skip::kNoRelevant: ++score.skipped_no_relevant; break;
      case SessionEval::Skip::kNotEmbeddable: ++score.skipped_not_embeddable; break;
      case SessionEval::Skip::kNone:
        sum += *eval.ndcg;
        ++score.sessions;
        break;
    }
  }
  if (score.sessions > 0) score.mean_ndcg = sum / static_cast<double>(score.sessions);
  return score;
}

InstanceBatch query_instances(const PreparedExperiment& prepared, const std::string& query,
                              Modality modality) {
  const auto& pairs = prepared.pairs_by_query();
  const auto it = pairs.find(query);
  if (it == pairs.end()) return {};
  return make_instances(it->second, prepared.table(modality), derive_seed(prepared.config().seed, query));
}

QueryModel train_query(const PreparedExperiment& prepared, const std::string& query,
                       Modality modality, const TrainConfig& config) {
  const auto batch = query_instances(prepared, query, modality);
  if (batch.instances.empty()) {
    throw InvalidArgument("query '" + query + "' has no usable training pairs for " +
                          std::string(to_string(modality)));
  }
  return train_sgd(batch.instances, config, query);
}

std::optional<TuneResult> tune_query(const PreparedExperiment& prepared, const std::string& query,
                                     Modality modality) {
  const auto batch = query_instances(prepared, query, modality);
  if (batch.instances.empty()) return std::nullopt;
  const auto& table = prepared.table(modality);
  const auto sessions = prepared.validation_sessions(query);
  const auto& cfg = prepared.config();

  TuneResult result;
  result.query = query;
  result.modality = modality;
  result.dropped_pairs = batch.dropped;
  std::optional<double> best;
  for (const auto& point : cfg.grid.expand(cfg.epochs, derive_seed(cfg.seed, "sgd:" + query))) {
    auto model = train_sgd(batch.instances, point, query);
    auto validation = evaluate_sessions(model, sessions, table, cfg.dwell_threshold);
    if (validation.mean_ndcg && (!best || *validation.mean_ndcg > *best)) {
      best = validation.mean_ndcg;
      result.best_index = result.grid.size();
      result.best_model = std::move(model);
    }
    result.grid.push_back({point, validation});
  }
  if (!best) return std::nullopt;
  return result;
}

Modality select_modality(const std::map<Modality, double>& validation_ndcg) {
  static constexpr Modality kPreference[] = {Modality::kText, Modality::kMultimodal, Modality::kImage};
  std::optional<Modality> chosen;
  for (const auto m : kPreference) {
    const auto it = validation_ndcg.find(m);
    if (it == validation_ndcg.end()) continue;
    if (!chosen || it->second > validation_ndcg.at(*chosen)) chosen = m;
  }
  if (!chosen) throw InvalidArgument("no modality to select from");
  return *chosen;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentData& data) {
  const PreparedExperiment prepared(config, data);
  const auto& cfg = prepared.config();
  ExperimentResult result;
  EvalReport& report = result.report;
  for (auto m : cfg.modalities) report.modalities.emplace_back(to_string(m));

  std::set<std::string> all_queries;
  for (const auto* list : {&data.train, &data.validation, &data.test})
    for (const auto& s : *list) all_queries.insert(s.query);

  std::vector<std::string> eligible;
  for (const auto& q : all_queries) {
    const auto it = prepared.pairs_by_query().find(q);
    const std::size_t n_pairs = it == prepared.pairs_by_query().end() ? 0 : it->second.size();
    if (n_pairs < cfg.min_pairs_per_query) {
      report.skipped_queries[q] = "fewer than " + std::to_string(cfg.min_pairs_per_query) +
                                  " preference pairs (" + std::to_string(n_pairs) + ")";
    } else {
      eligible.push_back(q);
    }
  }
  if (eligible.empty()) throw InvalidArgument("no query meets min_pairs_per_query");

  struct Job {
    std::string query;
    Modality modality;
    std::optional<TuneResult> tuned;
    HoldoutScore test;
  };
  std::vector<Job> jobs;
  for (const auto& q : eligible)
    for (const auto m : cfg.modalities) jobs.push_back({q, m, std::nullopt, {}});

  parallel_for(jobs.size(), cfg.threads, [&](std::size_t i) {
    auto& job = jobs[i];
    job.tuned = tune_query(prepared, job.query, job.modality);
    if (job.tuned) {
      job.test = evaluate_sessions(job.tuned->best_model, prepared.test_sessions(job.query),
                                   prepared.table(job.modality), cfg.dwell_threshold);
    }
  });

  const std::size_t n_mod = cfg.modalities.size();
  std::map<std::string, std::vector<std::pair<double, double>>> paired;  // modality -> (text, m)
  std::map<std::string, double> test_sum, valid_sum;
  std::size_t mm_preferred = 0, mm_selected = 0, mm_compared = 0;
  const bool have_text = prepared.has_modality(Modality::kText);
  const bool have_mm = prepared.has_modality(Modality::kMultimodal);

  for (std::size_t qi = 0; qi < eligible.size(); ++qi) {
    const auto& query = eligible[qi];
    std::string reason;
    for (std::size_t k = 0; k < n_mod; ++k) {
      const auto& job = jobs[qi * n_mod + k];
      const std::string mod(to_string(job.modality));
      if (!job.tuned) {
        reason = mod + ": no usable training instances or validation sessions";
        break;
      }
      const auto& v = job.tuned->best_validation();
      report.skip_counts[mod + "/validation_no_relevant"] += v.skipped_no_relevant;
      report.skip_counts[mod + "/validation_not_embeddable"] += v.skipped_not_embeddable;
      report.skip_counts[mod + "/test_no_relevant"] += job.test.skipped_no_relevant;
      report.skip_counts[mod + "/test_not_embeddable"] += job.test.skipped_not_embeddable;
      report.skip_counts[mod + "/dropped_pairs"] += job.tuned->dropped_pairs;
      if (!job.test.mean_ndcg) {
        reason = mod + ": no evaluable test sessions";
        break;
      }
    }
    if (!reason.empty()) {
      report.skipped_queries[query] = reason;
      continue;
    }

    QueryDecision decision;
    decision.query = query;
    for (std::size_t k = 0; k < n_mod; ++k) {
      auto& job = jobs[qi * n_mod + k];
      decision.validation_ndcg[job.modality] = *job.tuned->best_validation().mean_ndcg;
      decision.chosen_hyperparameters[job.modality] = job.tuned->grid[job.tuned->best_index].config;
      decision.test_ndcg[job.modality] = *job.test.mean_ndcg;
      decision.test_sessions[job.modality] = job.test.sessions;
      result.models.emplace(std::make_pair(query, job.modality), std::move(job.tuned->best_model));
    }
    decision.chosen_modality = select_modality(decision.validation_ndcg);

    for (const auto m : cfg.modalities) {
      const std::string mod(to_string(m));
      test_sum[mod] += decision.test_ndcg.at(m);
      valid_sum[mod] += decision.validation_ndcg.at(m);
      if (have_text && m != Modality::kText) {
        paired[mod].emplace_back(decision.test_ndcg.at(Modality::kText), decision.test_ndcg.at(m));
      }
    }
    test_sum["selected"] += decision.chosen_test_ndcg();
    valid_sum["selected"] += decision.validation_ndcg.at(decision.chosen_modality);
    if (have_text) {
      paired["selected"].emplace_back(decision.test_ndcg.at(Modality::kText), decision.chosen_test_ndcg());
    }
    if (have_text && have_mm) {
      ++mm_compared;
      if (decision.validation_ndcg.at(Modality::kMultimodal) > decision.validation_ndcg.at(Modality::kText)) {
        ++mm_preferred;
      }
    }
    if (decision.chosen_modality == Modality::kMultimodal) ++mm_selected;
    result.decisions.push_back(std::move(decision));
  }

  report.evaluated_queries = result.decisions.size();
  if (report.evaluated_queries == 0) throw InvalidArgument("no query could be evaluated");
  report.modalities.emplace_back("selected");
  const auto nq = static_cast<double>(report.evaluated_queries);
  for (const auto& [mod, sum] : test_sum) report.test_means[mod] = sum / nq;
  for (const auto& [mod, sum] : valid_sum) report.validation_means[mod] = sum / nq;
  if (have_text) {
    const double base = report.test_means.at("text");
    for (const auto& [mod, mean] : report.test_means) {
      report.lifts[mod] = base > 0.0 ? relative_lift(mean, base) : 0.0;
    }
    for (const auto& [mod, pairs] : paired) {
      const bool all_zero = std::all_of(pairs.begin(), pairs.end(),
                                        [](const auto& p) { return p.first == p.second; });
      if (all_zero) {
        report.significance[mod] = WilcoxonResult{};
        report.notes.push_back(mod + ": identical to text on every query; p set to 1");
      } else {
        report.significance[mod] = wilcoxon_signed_rank(pairs);
      }
    }
    report.notes.push_back("lifts are relative to the text modality mean test NDCG");
    report.notes.push_back("significance: Wilcoxon signed-rank, two-sided, zero differences dropped, "
                           "exact for n <= 25, over per-query mean test NDCG");
  }
  if (mm_compared > 0) {
    report.multimodal_preferred_fraction = static_cast<double>(mm_preferred) / static_cast<double>(mm_compared);
  }
  report.multimodal_selected_fraction = static_cast<double>(mm_selected) / nq;
  report.notes.push_back("NDCG cutoff is the full session length; means are macro-averaged");
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  const auto data = load_experiment_data(config);
  return run_experiment(config, data);
}

std::string ExperimentResult::report_json() const {
  ordered_json j;
  j["modalities"] = report.modalities;
  j["evaluated_queries"] = report.evaluated_queries;
  j["test_means"] = report.test_means;
  j["validation_means"] = report.validation_means;
  j["lifts_percent"] = report.lifts;
  auto sig = ordered_json::object();
  for (const auto& [mod, w] : report.significance) {
    sig[mod] = {{"test", "wilcoxon_signed_rank_two_sided"},
                {"statistic", w.statistic},
                {"w_plus", w.w_plus},
                {"w_minus", w.w_minus},
                {"n", w.n},
                {"exact", w.exact},
                {"p_value", w.p_value}};
  }
  j["significance"] = sig;
  j["multimodal_preferred_fraction"] = report.multimodal_preferred_fraction;
  j["multimodal_selected_fraction"] = report.multimodal_selected_fraction;
  j["skipped_queries"] = report.skipped_queries;
  j["skip_counts"] = report.skip_counts;
  j["notes"] = report.notes;
  auto decisions_json = ordered_json::array();
  for (const auto& d : decisions) {
    ordered_json dj;
    dj["query"] = d.query;
    dj["chosen_modality"] = std::string(to_string(d.chosen_modality));
    auto valid = ordered_json::object(), test = ordered_json::object(), n = ordered_json::object(),
         hyper = ordered_json::object();
    for (const auto& [m, v] : d.validation_ndcg) valid[std::string(to_string(m))] = v;
    for (const auto& [m, v] : d.test_ndcg) test[std::string(to_string(m))] = v;
    for (const auto& [m, v] : d.test_sessions) n[std::string(to_string(m))] = v;
    for (const auto& [m, c] : d.chosen_hyperparameters) hyper[std::string(to_string(m))] = config_json(c);
    dj["validation_ndcg"] = valid;
    dj["test_ndcg"] = test;
    dj["test_sessions"] = n;
    dj["hyperparameters"] = hyper;
    decisions_json.push_back(std::move(dj));
  }
  j["decisions"] = std::move(decisions_json);
  return j.dump(2);
}

std::string ExperimentResult::report_table() const {
  std::ostringstream out;
  auto label = [](const std::string& m) { return m == "multimodal" ? std::string("MM") : m; };
  auto cell = [](std::string s) {
    if (s.size() < 12) s.append(12 - s.size(), ' ');
    return s;
  };
  out << cell("Modality") << "  ";
  for (const auto& m : report.modalities) out << cell(label(m));
  out << "\n" << cell("Avg NDCG") << "  ";
  for (const auto& m : report.modalities) out << cell(format_fixed(report.test_means.at(m), 4));
  if (!report.lifts.empty()) {
    out << "\n" << cell("Lift vs text") << "  ";
    for (const auto& m : report.modalities) {
      std::string s = format_lift(report.lifts.at(m));
      const auto it = report.significance.find(m);
      if (it != report.significance.end() && it->second.n > 0 && it->second.p_value < 1e-4) s += "*";
      out << cell(s);
    }
    out << "\n" << cell("Wilcoxon p") << "  ";
    for (const auto& m : report.modalities) {
      const auto it = report.significance.find(m);
      char buf[32] = "-";
      if (it != report.significance.end()) std::snprintf(buf, sizeof buf, "%.3g", it->second.p_value);
      out << cell(buf);
    }
  }
  out << "\n\n* significant at 0.0001 (Wilcoxon signed-rank, two-sided, vs text)\n";
  out << "queries evaluated: " << report.evaluated_queries
      << ", skipped: " << report.skipped_queries.size() << "\n";
  out << "queries with higher validation NDCG for MM than text: "
      << format_fixed(100.0 * report.multimodal_preferred_fraction, 1) << "%\n";
  return out.str();
}

ContinuumReport continuum_report(const QueryModel& model, const std::vector<Session>& sessions,
                                 const EmbeddingTable& table, const Catalog& catalog,
                                 const std::vector<double>& percentiles, std::size_t band_size) {
  std::set<std::string> ids;
  for (const auto& s : sessions)
    for (const auto& r : s.presented) ids.insert(r.listing_id);
  std::vector<std::pair<std::string, const MultimodalVector*>> docs;
  std::size_t missing = 0;
  for (const auto& id : ids) {
    if (const auto* v = table.find(id)) {
      docs.emplace_back(id, v);
    } else {
      ++missing;
    }
  }
  if (missing > 0) warn("continuum: " + std::to_string(missing) + " listings could not be embedded");
  if (docs.empty()) throw InvalidArgument("continuum report needs at least one rankable listing");
  if (band_size == 0) throw InvalidArgument("band_size must be >= 1");

  const auto ranking = rank(model, docs);
  ContinuumReport report;
  report.query = model.query;
  report.listing_count = ranking.size();
  const auto n = static_cast<double>(ranking.size());
  std::set<std::size_t> heads;
  for (const double p : percentiles) {
    if (!(p >= 0.0 && p <= 100.0)) throw InvalidArgument("percentile outside [0, 100]");
    const auto above = static_cast<std::size_t>(std::floor(p * n / 100.0));
    const std::size_t head = std::clamp<std::size_t>(ranking.size() - above, 1, ranking.size());
    if (!heads.insert(head).second) {
      warn("continuum: percentile " + format_fixed(p, 1) + " collapses onto an earlier band");
      continue;
    }
    ContinuumBand band;
    band.percentile = p;
    band.head_rank = head;
    for (std::size_t r = head; r <= ranking.size() && r < head + band_size; ++r) {
      const auto& doc = ranking[r - 1];
      const auto* listing = catalog.find(doc.id);
      band.entries.push_back({r, doc.id, doc.score,
                              listing && listing->image_ref ? *listing->image_ref : std::string()});
    }
    report.bands.push_back(std::move(band));
  }
  return report;
}

std::string ContinuumReport::to_json() const {
  ordered_json j;
  j["query"] = query;
  j["listing_count"] = listing_count;
  auto bands_json = ordered_json::array();
  for (const auto& b : bands) {
    ordered_json bj;
    bj["percentile"] = b.percentile;
    bj["head_rank"] = b.head_rank;
    auto entries = ordered_json::array();
    for (const auto& e : b.entries) {
      entries.push_back({{"rank", e.rank}, {"listing", e.listing_id}, {"score", e.score},
                         {"image_ref", e.image_ref}});
    }
    bj["entries"] = std::move(entries);
    bands_json.push_back(std::move(bj));
  }
  j["bands"] = std::move(bands_json);
  return j.dump(2);
}

std::vector<DisentangleEntry> disentangle_report(const QueryModel& model_a,
                                                 const EmbeddingTable& table_a,
                                                 const QueryModel& model_b,
                                                 const EmbeddingTable& table_b,
                                                 const std::vector<std::string>& listing_ids,
                                                 const Catalog& catalog,
                                                 std::size_t min_shared_terms) {
  std::vector<std::string> ids;
  std::vector<std::pair<std::string, const MultimodalVector*>> docs_a, docs_b;
  for (const auto& id : std::set<std::string>(listing_ids.begin(), listing_ids.end())) {
    const auto* a = table_a.find(id);
    const auto* b = table_b.find(id);
    if (a == nullptr || b == nullptr || catalog.find(id) == nullptr) continue;
    ids.push_back(id);
    docs_a.emplace_back(id, a);
    docs_b.emplace_back(id, b);
  }
  std::map<std::string, std::size_t> pos_a, pos_b;
  const auto ranked_a = rank(model_a, docs_a);
  const auto ranked_b = rank(model_b, docs_b);
  for (std::size_t i = 0; i < ranked_a.size(); ++i) pos_a[ranked_a[i].id] = i;
  for (std::size_t i = 0; i < ranked_b.size(); ++i) pos_b[ranked_b[i].id] = i;

  std::vector<std::vector<std::string>> terms;
  for (const auto& id : ids) terms.push_back(title_terms(*catalog.find(id)));

  std::vector<DisentangleEntry> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      std::vector<std::string> shared;
      std::set_intersection(terms[i].begin(), terms[i].end(), terms[j].begin(), terms[j].end(),
                            std::back_inserter(shared));
      if (shared.size() < min_shared_terms) continue;
      const auto ai = pos_a.at(ids[i]), aj = pos_a.at(ids[j]);
      const auto bi = pos_b.at(ids[i]), bj = pos_b.at(ids[j]);
      out.push_back({ids[i], ids[j], shared.size(), ai > aj ? ai - aj : aj - ai,
                     bi > bj ? bi - bj : bj - bi, bi < bj ? ids[i] : ids[j]});
    }
  }
  std::sort(out.begin(), out.end(), [](const DisentangleEntry& x, const DisentangleEntry& y) {
    const auto gx = static_cast<long long>(x.rank_delta_b) - static_cast<long long>(x.rank_delta_a);
    const auto gy = static_cast<long long>(y.rank_delta_b) - static_cast<long long>(y.rank_delta_a);
    if (gx != gy) return gx > gy;
    if (x.rank_delta_a != y.rank_delta_a) return x.rank_delta_a < y.rank_delta_a;
    return std::tie(x.first, x.second) < std::tie(y.first, y.second);
  });
  return out;
}

std::string disentangle_to_json(const std::vector<DisentangleEntry>& entries) {
  auto j = ordered_json::array();
  for (const auto& e : entries) {
    j.push_back({{"first", e.first},
                 {"second", e.second},
                 {"shared_terms", e.shared_terms},
                 {"rank_delta_a", e.rank_delta_a},
                 {"rank_delta_b", e.rank_delta_b},
                 {"preferred_by_b", e.preferred_by_b}});
  }
  return j.dump(2);
}

std::string make_manifest(const std::string& command, const std::string& config_json,
                          std::uint64_t seed, const std::vector<std::filesystem::path>& inputs) {
  auto hex = [](std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
  };
  ordered_json j;
  j["command"] = command;
  j["config_hash_fnv1a64"] = hex(fnv1a64(config_json));
  j["seed"] = seed;
  auto files = ordered_json::array();
  for (const auto& p : inputs) {
    if (p.empty()) continue;
    ordered_json f;
    f["path"] = p.string();
    std::error_code ec;
    if (std::filesystem::is_regular_file(p, ec)) {
      const auto bytes = read_file(p);
      f["bytes"] = bytes.size();
      f["fnv1a64"] = hex(fnv1a64(bytes));
    } else {
      f["fnv1a64"] = "missing";
    }
    files.push_back(std::move(f));
  }
  j["inputs"] = std::move(files);
  j["config"] = ordered_json::parse(config_json);
  return j.dump(2);
}

}  // namespace mmrank
