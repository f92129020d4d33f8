#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mmrank/corpus.hpp"
#include "mmrank/embedding.hpp"
#include "mmrank/metrics.hpp"
#include "mmrank/pairgen.hpp"
#include "mmrank/ranksvm.hpp"

namespace mmrank {

struct HyperGrid {
  std::vector<double> learning_rates = {0.1, 0.01};
  std::vector<double> lr_decays = {1e-4};
  std::vector<double> lambda1s = {0.0, 1e-6, 1e-5};
  std::vector<double> lambda2s = {1e-6, 1e-4};

  /// Cartesian product in (eta0, decay, l1, l2) order.
  std::vector<TrainConfig> expand(int epochs, std::uint64_t seed) const;
  std::size_t size() const;
};

struct ExperimentConfig {
  std::filesystem::path catalog_path;
  std::filesystem::path embeddings_path;  // empty: no image inputs
  std::filesystem::path train_path;
  std::filesystem::path validation_path;
  std::filesystem::path test_path;

  std::vector<Modality> modalities = {Modality::kText, Modality::kImage, Modality::kMultimodal};
  HyperGrid grid;
  int epochs = 5;
  std::size_t min_pairs_per_query = 50;
  double dwell_threshold = kDefaultDwellThreshold;
  std::size_t min_term_count = 1;
  std::uint64_t seed = 0;
  unsigned threads = 0;  // 0: hardware concurrency

  void validate() const;
  std::string to_json() const;  // canonical form, also hashed into the manifest
  /// Relative paths resolve against `base_dir`.
  static ExperimentConfig from_json(std::string_view text,
                                    const std::filesystem::path& base_dir = {});
};

struct ExperimentData {
  Catalog catalog;
  std::optional<EmbeddingStore> store;
  std::vector<Session> train;
  std::vector<Session> validation;
  std::vector<Session> test;
};

ExperimentData load_experiment_data(const ExperimentConfig& config);

/// Vocabulary, per-modality embedding tables, mined pairs and holdout
/// sessions grouped by query. Immutable once built.
class PreparedExperiment {
 public:
  PreparedExperiment(const ExperimentConfig& config, const ExperimentData& data);

  const ExperimentConfig& config() const { return config_; }
  const ExperimentData& data() const { return *data_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  const EmbeddingTable& table(Modality modality) const;
  bool has_modality(Modality modality) const;

  const std::map<std::string, std::vector<PreferencePair>>& pairs_by_query() const { return pairs_; }
  std::vector<Session> validation_sessions(const std::string& query) const;
  std::vector<Session> test_sessions(const std::string& query) const;

 private:
  ExperimentConfig config_;
  const ExperimentData* data_;
  Vocabulary vocab_;
  std::map<Modality, std::unique_ptr<EmbeddingTable>> tables_;
  std::map<std::string, std::vector<PreferencePair>> pairs_;
  std::map<std::string, std::vector<std::size_t>> validation_index_;
  std::map<std::string, std::vector<std::size_t>> test_index_;
};

struct HoldoutScore {
  std::optional<double> mean_ndcg;  // empty when no session could be evaluated
  std::size_t sessions = 0;
  std::size_t skipped_no_relevant = 0;
  std::size_t skipped_not_embeddable = 0;
};

HoldoutScore evaluate_sessions(const QueryModel& model, const std::vector<Session>& sessions,
                               const EmbeddingTable& table, double dwell_threshold);

/// Instances for one query in one modality.
InstanceBatch query_instances(const PreparedExperiment& prepared, const std::string& query,
                              Modality modality);

QueryModel train_query(const PreparedExperiment& prepared, const std::string& query,
                       Modality modality, const TrainConfig& config);

struct GridPointResult {
  TrainConfig config;
  HoldoutScore validation;
};

struct TuneResult {
  std::string query;
  Modality modality = Modality::kText;
  std::vector<GridPointResult> grid;
  std::size_t best_index = 0;
  QueryModel best_model;
  std::size_t dropped_pairs = 0;

  const HoldoutScore& best_validation() const { return grid.at(best_index).validation; }
};

/// Trains every grid point and keeps the one with the highest validation
/// NDCG (earliest grid point on ties). Empty when no instances survive or no
/// validation session can be evaluated.
std::optional<TuneResult> tune_query(const PreparedExperiment& prepared, const std::string& query,
                                     Modality modality);

struct QueryDecision {
  std::string query;
  Modality chosen_modality = Modality::kText;
  std::map<Modality, double> validation_ndcg;
  std::map<Modality, TrainConfig> chosen_hyperparameters;
  std::map<Modality, double> test_ndcg;
  std::map<Modality, std::size_t> test_sessions;

  double chosen_test_ndcg() const { return test_ndcg.at(chosen_modality); }
};

/// Highest validation NDCG; ties resolve in the order text, multimodal, image.
Modality select_modality(const std::map<Modality, double>& validation_ndcg);

struct EvalReport {
  std::vector<std::string> modalities;  // run order; "selected" is appended
  std::map<std::string, double> test_means;
  std::map<std::string, double> validation_means;
  std::map<std::string, double> lifts;  // percent vs text
  std::map<std::string, WilcoxonResult> significance;
  std::map<std::string, std::string> skipped_queries;  // query -> reason
  std::map<std::string, std::size_t> skip_counts;      // "<modality>/<reason>" -> count
  std::size_t evaluated_queries = 0;
  double multimodal_preferred_fraction = 0.0;  // validation NDCG mm > text
  double multimodal_selected_fraction = 0.0;
  std::vector<std::string> notes;
};

struct ExperimentResult {
  EvalReport report;
  std::vector<QueryDecision> decisions;
  std::map<std::pair<std::string, Modality>, QueryModel> models;

  /// Deterministic JSON of the report and decisions.
  std::string report_json() const;
  /// Human-readable summary laid out as modality columns with a lift row.
  std::string report_table() const;
};

ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentData& data);
ExperimentResult run_experiment(const ExperimentConfig& config);

struct ContinuumEntry {
  std::size_t rank = 0;  // 1-based
  std::string listing_id;
  double score = 0.0;
  std::string image_ref;
};

struct ContinuumBand {
  double percentile = 0.0;
  std::size_t head_rank = 0;  // 1-based
  std::vector<ContinuumEntry> entries;
};

struct ContinuumReport {
  std::string query;
  std::size_t listing_count = 0;
  std::vector<ContinuumBand> bands;

  std::string to_json() const;
};

inline const std::vector<double> kDefaultPercentiles = {90, 80, 70, 60, 50};

/// Ranks the union of the sessions' listings. Band p starts at rank
/// N - floor(p * N / 100) and holds up to `band_size` listings.
ContinuumReport continuum_report(const QueryModel& model, const std::vector<Session>& sessions,
                                 const EmbeddingTable& table, const Catalog& catalog,
                                 const std::vector<double>& percentiles = kDefaultPercentiles,
                                 std::size_t band_size = 10);

struct DisentangleEntry {
  std::string first;
  std::string second;
  std::size_t shared_terms = 0;
  std::size_t rank_delta_a = 0;
  std::size_t rank_delta_b = 0;
  std::string preferred_by_b;  // the member model b ranks higher
};

/// Doc pairs sharing at least `min_shared_terms` title terms, with their
/// rank distance under each model. Sorted by delta_b - delta_a descending.
std::vector<DisentangleEntry> disentangle_report(const QueryModel& model_a,
                                                 const EmbeddingTable& table_a,
                                                 const QueryModel& model_b,
                                                 const EmbeddingTable& table_b,
                                                 const std::vector<std::string>& listing_ids,
                                                 const Catalog& catalog,
                                                 std::size_t min_shared_terms = 3);

std::string disentangle_to_json(const std::vector<DisentangleEntry>& entries);

/// Run manifest: config hash, seed and FNV-1a digests of the input files.
std::string make_manifest(const std::string& command, const std::string& config_json,
                          std::uint64_t seed, const std::vector<std::filesystem::path>& inputs);

}  // namespace mmrank
