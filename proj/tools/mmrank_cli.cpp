// mmrank: command line front end for the per-query ranking pipeline.
//
// Every subcommand that takes experiment inputs reads them from a JSON
// config (--config) with flag overrides applied on top. Each run writes a
// manifest.json next to its output.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mmrank/corpus.hpp"
#include "mmrank/embedding.hpp"
#include "mmrank/error.hpp"
#include "mmrank/pairgen.hpp"
#include "mmrank/pipeline.hpp"
#include "mmrank/random.hpp"
#include "mmrank/ranksvm.hpp"
#include "mmrank/synthlog.hpp"

namespace fs = std::filesystem;
using namespace mmrank;
using ordered_json = nlohmann::ordered_json;

namespace {

struct ConfigFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<std::size_t> min_pairs;
  std::optional<double> dwell;
  std::optional<unsigned> threads;
  std::vector<std::string> modalities;

  void add_to(CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "experiment config (JSON)")->required();
    cmd->add_option("--seed", seed, "override seed");
    cmd->add_option("--epochs", epochs, "override epochs");
    cmd->add_option("--min-pairs", min_pairs, "override min_pairs_per_query");
    cmd->add_option("--dwell", dwell, "override dwell threshold (seconds)");
    cmd->add_option("--threads", threads, "worker threads (0: all cores)");
    cmd->add_option("--modalities", modalities, "override modalities (text, image, multimodal)");
  }

  ExperimentConfig load() const {
    const fs::path path(config_path);
    auto config = ExperimentConfig::from_json(read_file(path), path.parent_path());
    if (seed) config.seed = *seed;
    if (epochs) config.epochs = *epochs;
    if (min_pairs) config.min_pairs_per_query = *min_pairs;
    if (dwell) config.dwell_threshold = *dwell;
    if (threads) config.threads = *threads;
    if (!modalities.empty()) {
      config.modalities.clear();
      for (const auto& m : modalities) config.modalities.push_back(parse_modality(m));
    }
    config.validate();
    return config;
  }
};

std::vector<fs::path> config_inputs(const ExperimentConfig& c) {
  return {c.catalog_path, c.embeddings_path, c.train_path, c.validation_path, c.test_path};
}

void write_manifest(const fs::path& dir, const std::string& command, const std::string& config_json,
                    std::uint64_t seed, const std::vector<fs::path>& inputs) {
  write_file(dir / "manifest.json", make_manifest(command, config_json, seed, inputs) + "\n");
}

fs::path out_dir_of(const fs::path& out) {
  return out.has_parent_path() ? out.parent_path() : fs::path(".");
}

std::vector<std::string> eligible_queries(const PreparedExperiment& prepared) {
  std::vector<std::string> out;
  for (const auto& [query, pairs] : prepared.pairs_by_query()) {
    if (pairs.size() >= prepared.config().min_pairs_per_query) out.push_back(query);
  }
  return out;
}

std::vector<QueryModel> load_models(const fs::path& path) {
  std::vector<QueryModel> models;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    models.push_back(QueryModel::from_json(line));
  }
  return models;
}

const QueryModel& find_model(const std::vector<QueryModel>& models, const std::string& query,
                             const fs::path& source) {
  for (const auto& m : models) {
    if (m.query == query) return m;
  }
  throw InvalidArgument("no model for query '" + query + "' in " + source.string());
}

std::string models_jsonl(const std::vector<QueryModel>& models) {
  std::string out;
  for (const auto& m : models) out += m.to_json() + "\n";
  return out;
}

ordered_json train_config_json(const TrainConfig& c) {
  ordered_json j;
  j["learning_rate"] = c.learning_rate;
  j["lr_decay"] = c.lr_decay;
  j["lambda1"] = c.lambda1;
  j["lambda2"] = c.lambda2;
  j["epochs"] = c.epochs;
  return j;
}

// gen-world ---------------------------------------------------------------

struct GenWorldArgs {
  std::string world_path;
  std::string out_dir = "world";
  bool binary = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> queries, listings, sessions;
  std::optional<double> ambiguity, signal;
};

int run_gen_world(const GenWorldArgs& a) {
  WorldSpec spec;
  if (!a.world_path.empty()) spec = WorldSpec::from_json(read_file(a.world_path));
  if (a.seed) spec.seed = *a.seed;
  if (a.queries) spec.n_queries = *a.queries;
  if (a.listings) spec.n_listings_per_query = *a.listings;
  if (a.sessions) spec.n_sessions_per_query = *a.sessions;
  if (a.ambiguity) spec.text_ambiguity = *a.ambiguity;
  if (a.signal) spec.image_signal = *a.signal;
  spec.validate();

  const fs::path dir(a.out_dir);
  const World world = generate_world(spec);
  const auto split = split_by_time(generate_sessions(world, spec));

  const std::string emb_name = a.binary ? "embeddings.mmeb" : "embeddings.txt";
  write_catalog(world.catalog, dir / "catalog.tsv");
  write_embedding_store(world.store, dir / emb_name, a.binary);
  write_sessions(split.train, dir / "train.jsonl");
  write_sessions(split.validation, dir / "valid.jsonl");
  write_sessions(split.test, dir / "test.jsonl");
  write_file(dir / "truth.json", world.truth.to_json() + "\n");
  write_file(dir / "world.json", spec.to_json() + "\n");

  // Ready-to-run experiment config pointing at the generated files.
  ExperimentConfig config;
  config.catalog_path = "catalog.tsv";
  config.embeddings_path = emb_name;
  config.train_path = "train.jsonl";
  config.validation_path = "valid.jsonl";
  config.test_path = "test.jsonl";
  config.seed = spec.seed;
  write_file(dir / "experiment.json", config.to_json() + "\n");

  write_manifest(dir, "gen-world", spec.to_json(), spec.seed, {a.world_path});
  std::printf("wrote %zu listings, %zu/%zu/%zu sessions to %s\n", world.catalog.size(),
              split.train.size(), split.validation.size(), split.test.size(), dir.string().c_str());
  return 0;
}

// build-vocab / gen-pairs ------------------------------------------------

int run_build_vocab(const ConfigFlags& flags, std::optional<std::size_t> min_count,
                    const std::string& out) {
  auto config = flags.load();
  if (min_count) config.min_term_count = *min_count;
  const Catalog catalog = load_catalog(config.catalog_path);
  const Vocabulary vocab = build_vocabulary(catalog, config.min_term_count);
  write_file(out, vocab.to_json() + "\n");
  write_manifest(out_dir_of(out), "build-vocab", config.to_json(), config.seed, {config.catalog_path});
  std::printf("|T| = %zu (%zu terms, %zu listings, %zu shops)\n", vocab.total_dim(),
              vocab.term_count(), vocab.listing_count(), vocab.shop_count());
  return 0;
}

int run_gen_pairs(const ConfigFlags& flags, const std::string& modality_name, const std::string& out) {
  const auto config = flags.load();
  const auto data = load_experiment_data(config);
  const PreparedExperiment prepared(config, data);
  const Modality modality = parse_modality(modality_name);
  std::string lines;
  std::size_t total = 0, dropped = 0;
  for (const auto& [query, pairs] : prepared.pairs_by_query()) {
    const auto batch = query_instances(prepared, query, modality);
    dropped += batch.dropped;
    for (const auto& inst : batch.instances) {
      lines += instance_to_json_line(inst) + "\n";
      ++total;
    }
  }
  write_file(out, lines);
  write_manifest(out_dir_of(out), "gen-pairs", config.to_json(), config.seed, config_inputs(config));
  std::printf("%zu instances over %zu queries (%zu pairs dropped)\n", total,
              prepared.pairs_by_query().size(), dropped);
  return 0;
}

// train / tune -------------------------------------------------------------

struct TrainArgs {
  std::string modality = "multimodal";
  std::string query;
  std::string out = "models.jsonl";
  double learning_rate = 0.1;
  double lr_decay = 1e-4;
  double lambda1 = 0.0;
  double lambda2 = 1e-6;
};

int run_train(const ConfigFlags& flags, const TrainArgs& a) {
  const auto config = flags.load();
  const auto data = load_experiment_data(config);
  const PreparedExperiment prepared(config, data);
  const Modality modality = parse_modality(a.modality);

  std::vector<std::string> queries;
  if (!a.query.empty()) {
    queries.push_back(normalize_query(a.query));
  } else {
    queries = eligible_queries(prepared);
  }
  std::vector<QueryModel> models;
  for (const auto& q : queries) {
    TrainConfig tc;
    tc.learning_rate = a.learning_rate;
    tc.lr_decay = a.lr_decay;
    tc.lambda1 = a.lambda1;
    tc.lambda2 = a.lambda2;
    tc.epochs = config.epochs;
    tc.seed = derive_seed(config.seed, "sgd:" + q);
    models.push_back(train_query(prepared, q, modality, tc));
  }
  write_file(a.out, models_jsonl(models));
  write_manifest(out_dir_of(a.out), "train", config.to_json(), config.seed, config_inputs(config));
  std::printf("trained %zu %s models\n", models.size(), std::string(to_string(modality)).c_str());
  return 0;
}

int run_tune(const ConfigFlags& flags, const std::string& modality_name, const std::string& out,
             const std::string& summary_out) {
  const auto config = flags.load();
  const auto data = load_experiment_data(config);
  const PreparedExperiment prepared(config, data);
  const Modality modality = parse_modality(modality_name);

  std::vector<QueryModel> models;
  ordered_json summary = ordered_json::array();
  for (const auto& q : eligible_queries(prepared)) {
    const auto tuned = tune_query(prepared, q, modality);
    if (!tuned) continue;
    models.push_back(tuned->best_model);
    ordered_json row;
    row["query"] = q;
    row["best_index"] = tuned->best_index;
    auto grid = ordered_json::array();
    for (const auto& point : tuned->grid) {
      auto g = train_config_json(point.config);
      g["validation_ndcg"] = point.validation.mean_ndcg ? ordered_json(*point.validation.mean_ndcg)
                                                        : ordered_json(nullptr);
      grid.push_back(std::move(g));
    }
    row["grid"] = std::move(grid);
    summary.push_back(std::move(row));
  }
  write_file(out, models_jsonl(models));
  if (!summary_out.empty()) write_file(summary_out, summary.dump(2) + "\n");
  write_manifest(out_dir_of(out), "tune", config.to_json(), config.seed, config_inputs(config));
  std::printf("tuned %zu %s models over %zu grid points\n", models.size(),
              std::string(to_string(modality)).c_str(), config.grid.size());
  return 0;
}

// evaluate -----------------------------------------------------------------

int run_evaluate(const ConfigFlags& flags, const std::string& models_path, const std::string& split,
                 const std::string& out) {
  const auto config = flags.load();
  const auto data = load_experiment_data(config);
  const PreparedExperiment prepared(config, data);
  const auto models = load_models(models_path);
  if (split != "test" && split != "validation") throw InvalidArgument("split must be test or validation");

  std::map<std::string, std::vector<double>> per_query;
  ordered_json rows = ordered_json::array();
  for (const auto& m : models) {
    const auto sessions = split == "test" ? prepared.test_sessions(m.query)
                                          : prepared.validation_sessions(m.query);
    const auto s = evaluate_sessions(m, sessions, prepared.table(m.modality), config.dwell_threshold);
    ordered_json row;
    row["query"] = m.query;
    row["modality"] = to_string(m.modality);
    row["ndcg"] = s.mean_ndcg ? ordered_json(*s.mean_ndcg) : ordered_json(nullptr);
    row["sessions"] = s.sessions;
    row["skipped_no_relevant"] = s.skipped_no_relevant;
    row["skipped_not_embeddable"] = s.skipped_not_embeddable;
    rows.push_back(std::move(row));
    if (s.mean_ndcg) per_query[m.query].push_back(*s.mean_ndcg);
  }
  double sum = 0.0;
  for (const auto& [q, v] : per_query) sum += v.front();
  ordered_json j;
  j["split"] = split;
  j["queries"] = per_query.size();
  j["mean_ndcg"] = per_query.empty() ? ordered_json(nullptr)
                                     : ordered_json(sum / static_cast<double>(per_query.size()));
  j["per_query"] = std::move(rows);
  write_file(out, j.dump(2) + "\n");
  write_manifest(out_dir_of(out), "evaluate", config.to_json(), config.seed,
                 {config.catalog_path, config.embeddings_path, config.validation_path,
                  config.test_path, models_path});
  if (!per_query.empty()) std::printf("mean %s NDCG %.6f over %zu queries\n", split.c_str(),
                                      sum / static_cast<double>(per_query.size()), per_query.size());
  return 0;
}

// select / report ----------------------------------------------------------

int run_select(const ConfigFlags& flags, const std::string& out) {
  const auto config = flags.load();
  const auto result = run_experiment(config);
  ordered_json decisions = ordered_json::parse(result.report_json()).at("decisions");
  write_file(out, decisions.dump(2) + "\n");
  write_manifest(out_dir_of(out), "select", config.to_json(), config.seed, config_inputs(config));
  std::map<std::string, int> counts;
  for (const auto& d : result.decisions) ++counts[std::string(to_string(d.chosen_modality))];
  for (const auto& [m, n] : counts) std::printf("%-10s %d queries\n", m.c_str(), n);
  return 0;
}

int run_report(const ConfigFlags& flags, const std::string& out, const std::string& models_dir) {
  const auto config = flags.load();
  const auto result = run_experiment(config);
  write_file(out, result.report_json() + "\n");
  if (!models_dir.empty()) {
    std::map<Modality, std::vector<QueryModel>> by_modality;
    for (const auto& [key, m] : result.models) by_modality[key.second].push_back(m);
    for (const auto& [modality, models] : by_modality) {
      write_file(fs::path(models_dir) / ("models_" + std::string(to_string(modality)) + ".jsonl"),
                 models_jsonl(models));
    }
  }
  write_manifest(out_dir_of(out), "report", config.to_json(), config.seed, config_inputs(config));
  std::cout << result.report_table();
  return 0;
}

// continuum / disentangle --------------------------------------------------

int run_continuum(const ConfigFlags& flags, const std::string& models_path, const std::string& query,
                  std::vector<double> percentiles, std::size_t band_size, const std::string& out) {
  const auto config = flags.load();
  const auto data = load_experiment_data(config);
  const PreparedExperiment prepared(config, data);
  const auto models = load_models(models_path);
  const auto& model = find_model(models, normalize_query(query), models_path);
  if (percentiles.empty()) percentiles = kDefaultPercentiles;
  const auto report = continuum_report(model, prepared.test_sessions(model.query),
                                       prepared.table(model.modality), data.catalog, percentiles,
                                       band_size);
  write_file(out, report.to_json() + "\n");
  write_manifest(out_dir_of(out), "continuum", config.to_json(), config.seed,
                 {config.catalog_path, config.embeddings_path, config.test_path, models_path});
  std::printf("%zu listings, %zu bands\n", report.listing_count, report.bands.size());
  return 0;
}

int run_disentangle(const ConfigFlags& flags, const std::string& models_a, const std::string& models_b,
                    const std::string& query, std::size_t k, std::size_t limit, const std::string& out) {
  const auto config = flags.load();
  const auto data = load_experiment_data(config);
  const PreparedExperiment prepared(config, data);
  const auto all_a = load_models(models_a);
  const auto all_b = load_models(models_b);
  const std::string q = normalize_query(query);
  const auto& a = find_model(all_a, q, models_a);
  const auto& b = find_model(all_b, q, models_b);

  std::vector<std::string> ids;
  for (const auto& s : prepared.test_sessions(q)) {
    for (const auto& r : s.presented) ids.push_back(r.listing_id);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  auto entries = disentangle_report(a, prepared.table(a.modality), b, prepared.table(b.modality), ids,
                                    data.catalog, k);
  if (limit > 0 && entries.size() > limit) entries.resize(limit);
  write_file(out, disentangle_to_json(entries) + "\n");
  write_manifest(out_dir_of(out), "disentangle", config.to_json(), config.seed,
                 {config.catalog_path, config.embeddings_path, config.test_path, models_a, models_b});
  std::printf("%zu pairs\n", entries.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmrank: per-query multimodal pairwise ranking"};
  app.require_subcommand(1);

  GenWorldArgs gw;
  auto* gen_world = app.add_subcommand("gen-world", "generate a synthetic catalog and search log");
  gen_world->add_option("--world", gw.world_path, "world spec (JSON)");
  gen_world->add_option("-o,--out", gw.out_dir, "output directory");
  gen_world->add_flag("--binary", gw.binary, "write embeddings in the MMEB binary format");
  gen_world->add_option("--seed", gw.seed);
  gen_world->add_option("--queries", gw.queries);
  gen_world->add_option("--listings", gw.listings, "listings per query");
  gen_world->add_option("--sessions", gw.sessions, "sessions per query");
  gen_world->add_option("--ambiguity", gw.ambiguity, "text ambiguity in [0,1]");
  gen_world->add_option("--signal", gw.signal, "image signal strength");

  ConfigFlags vocab_flags;
  std::optional<std::size_t> min_count;
  std::string vocab_out = "vocab.json";
  auto* build_vocab = app.add_subcommand("build-vocab", "build the text vocabulary");
  vocab_flags.add_to(build_vocab);
  build_vocab->add_option("--min-term-count", min_count);
  build_vocab->add_option("-o,--out", vocab_out);

  ConfigFlags pairs_flags;
  std::string pairs_modality = "multimodal", pairs_out = "pairs.jsonl";
  auto* gen_pairs = app.add_subcommand("gen-pairs", "mine preference pairs and emit instances");
  pairs_flags.add_to(gen_pairs);
  gen_pairs->add_option("-m,--modality", pairs_modality);
  gen_pairs->add_option("-o,--out", pairs_out);

  ConfigFlags train_flags;
  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train per-query models with fixed hyperparameters");
  train_flags.add_to(train);
  train->add_option("-m,--modality", ta.modality);
  train->add_option("-q,--query", ta.query, "single query (default: all eligible)");
  train->add_option("--lr", ta.learning_rate);
  train->add_option("--lr-decay", ta.lr_decay);
  train->add_option("--l1", ta.lambda1);
  train->add_option("--l2", ta.lambda2);
  train->add_option("-o,--out", ta.out);

  ConfigFlags tune_flags;
  std::string tune_modality = "multimodal", tune_out = "models.jsonl", tune_summary;
  auto* tune = app.add_subcommand("tune", "grid-search hyperparameters on validation NDCG");
  tune_flags.add_to(tune);
  tune->add_option("-m,--modality", tune_modality);
  tune->add_option("-o,--out", tune_out);
  tune->add_option("--summary", tune_summary, "write per-grid-point validation NDCG");

  ConfigFlags eval_flags;
  std::string eval_models, eval_split = "test", eval_out = "eval.json";
  auto* evaluate = app.add_subcommand("evaluate", "score saved models on held-out sessions");
  eval_flags.add_to(evaluate);
  evaluate->add_option("--models", eval_models)->required();
  evaluate->add_option("--split", eval_split)->check(CLI::IsMember({"test", "validation"}));
  evaluate->add_option("-o,--out", eval_out);

  ConfigFlags select_flags;
  std::string select_out = "decisions.json";
  auto* select = app.add_subcommand("select", "pick the best modality per query");
  select_flags.add_to(select);
  select->add_option("-o,--out", select_out);

  ConfigFlags report_flags;
  std::string report_out = "report.json", report_models;
  auto* report = app.add_subcommand("report", "run the full experiment and print the summary table");
  report_flags.add_to(report);
  report->add_option("-o,--out", report_out);
  report->add_option("--models-dir", report_models, "also save tuned models as models_<modality>.jsonl");

  ConfigFlags cont_flags;
  std::string cont_models, cont_query, cont_out = "continuum.json";
  std::vector<double> cont_pct;
  std::size_t band_size = 10;
  auto* continuum = app.add_subcommand("continuum", "listings at percentile bands of a query's ranking");
  cont_flags.add_to(continuum);
  continuum->add_option("--models", cont_models)->required();
  continuum->add_option("-q,--query", cont_query)->required();
  continuum->add_option("--percentiles", cont_pct);
  continuum->add_option("--band-size", band_size);
  continuum->add_option("-o,--out", cont_out);

  ConfigFlags dis_flags;
  std::string dis_a, dis_b, dis_query, dis_out = "disentangle.json";
  std::size_t dis_k = 3, dis_limit = 0;
  auto* disentangle = app.add_subcommand("disentangle", "pairs one model conflates and another separates");
  dis_flags.add_to(disentangle);
  disentangle->add_option("--models-a", dis_a)->required();
  disentangle->add_option("--models-b", dis_b)->required();
  disentangle->add_option("-q,--query", dis_query)->required();
  disentangle->add_option("-k,--shared-terms", dis_k);
  disentangle->add_option("--limit", dis_limit, "keep the first N pairs (0: all)");
  disentangle->add_option("-o,--out", dis_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_world) return run_gen_world(gw);
    if (*build_vocab) return run_build_vocab(vocab_flags, min_count, vocab_out);
    if (*gen_pairs) return run_gen_pairs(pairs_flags, pairs_modality, pairs_out);
    if (*train) return run_train(train_flags, ta);
    if (*tune) return run_tune(tune_flags, tune_modality, tune_out, tune_summary);
    if (*evaluate) return run_evaluate(eval_flags, eval_models, eval_split, eval_out);
    if (*select) return run_select(select_flags, select_out);
    if (*report) return run_report(report_flags, report_out, report_models);
    if (*continuum) return run_continuum(cont_flags, cont_models, cont_query, cont_pct, band_size, cont_out);
    if (*disentangle) return run_disentangle(dis_flags, dis_a, dis_b, dis_query, dis_k, dis_limit, dis_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "mmrank: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mmrank: unexpected error: %s\n", e.what());
    return 2;
  }
  return 0;
}
