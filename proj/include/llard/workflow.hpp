// Copyright 2026 The LLaRD Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// End-to-end command implementations shared by the CLI and the acceptance
// suite: ingest, knowledge generation, training, evaluation, robustness
// sweeps, cold-start reports, and denoised-graph export.

#pragma once

#include <iostream>

#include "llard/http_transport.hpp"
#include "llard/manifest.hpp"
#include "llard/mock.hpp"
#include "llard/relation.hpp"
#include "llard/trainer.hpp"

namespace llard {

// ---------------------------------------------------------------------------
// Provider selection: `--mock` (rule table derived from the dataset catalog)
// or an OpenAI-compatible HTTP provider described by a config file.
// ---------------------------------------------------------------------------

struct ProviderChoice {
  bool mock = false;
  std::string provider_config_path;  // used when !mock
  std::string cache_path;
  int max_parallel = 4;
  std::size_t mock_embedding_dim = 64;
};

inline Gateway make_gateway(const ProviderChoice& choice, const Dataset& ds) {
  GatewayOptions options;
  options.cache_path = choice.cache_path;
  options.max_parallel = choice.max_parallel;
  if (choice.mock) {
    options.retry = {1, 0};
    return Gateway(std::make_shared<MockTransport>(
                       MockRules::from_catalog(ds),
                       choice.mock_embedding_dim),
                   options);
  }
  if (choice.provider_config_path.empty())
    throw UsageError("knowledge generation needs --mock or --provider <file>");
  auto config = read_provider_config(choice.provider_config_path);
  options.max_parallel = config.max_parallel;
  options.retry = config.retry;
  return Gateway(std::make_shared<HttpTransport>(std::move(config)), options);
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

struct IngestOptions {
  std::string interactions_path;
  std::string catalog_path;  // optional
  int k = 10;
  std::optional<int> min_rating;
  SplitRatios ratios;
  std::uint64_t seed = 42;
  std::string out_path;
};

inline Dataset run_ingest(const IngestOptions& options,
                          std::ostream& out = std::cout) {
  auto records = read_interactions(options.interactions_path);
  RawCatalog catalog;
  if (!options.catalog_path.empty())
    catalog = read_catalog(options.catalog_path);
  records = kcore_filter(std::move(records), options.k, options.min_rating);
  if (records.empty())
    throw DataError("ingest: no interactions survive k-core filtering (k=" +
                    std::to_string(options.k) + ")");
  const Dataset ds = split_dataset(records, options.ratios, options.seed,
                                   options.catalog_path.empty() ? nullptr
                                                                : &catalog);
  if (!options.out_path.empty()) {
    save_dataset(ds, options.out_path);
    const auto dir =
        std::filesystem::path(options.out_path).parent_path().string();
    auto manifest = RunManifest::load(dir.empty() ? "." : dir);
    manifest.set_seed(options.seed);
    manifest.record(
        std::filesystem::path(options.out_path).filename().string(),
        options.out_path);
    manifest.save(dir.empty() ? "." : dir);
  }
  const std::size_t interactions =
      ds.train.size() + ds.val.size() + ds.test.size();
  const double density =
      static_cast<double>(interactions) /
      (static_cast<double>(ds.num_users()) * ds.num_items());
  char buf[64];
  out << "Statistics\tvalue\n";
  out << "# Users\t" << ds.num_users() << '\n';
  out << "# Items\t" << ds.num_items() << '\n';
  out << "# Interactions\t" << interactions << '\n';
  std::snprintf(buf, sizeof(buf), "%.1e", density);
  out << "# Density\t" << buf << '\n';
  return ds;
}

// ---------------------------------------------------------------------------
// knowledge
// ---------------------------------------------------------------------------

enum class KnowledgeKind { Prefs, Relations };

struct KnowledgeOptions {
  KnowledgeKind kind = KnowledgeKind::Prefs;
  std::string dataset_path;
  std::string kp_path;  // input for relations, output for prefs
  std::string out_path;
  ProviderChoice provider;
  PreferenceOptions preference;
  RelationOptions relation;
  std::string prompt_dir;  // optional template override directory
};

inline void run_knowledge(const KnowledgeOptions& options,
                          std::ostream& out = std::cout) {
  RunManifest::verify_against_sibling_manifest(options.dataset_path);
  const Dataset ds = load_dataset(options.dataset_path);
  Gateway gateway = make_gateway(options.provider, ds);
  const PromptLibrary prompts = options.prompt_dir.empty()
                                    ? PromptLibrary()
                                    : PromptLibrary(options.prompt_dir);
  if (options.kind == KnowledgeKind::Prefs) {
    const auto kp =
        generate_preference_knowledge(ds, gateway, prompts, options.preference);
    save_preference_knowledge(kp, options.out_path);
  } else {
    if (options.kp_path.empty())
      throw UsageError("knowledge --kind relations requires --kp");
    RunManifest::verify_against_sibling_manifest(options.kp_path);
    const auto kp = load_preference_knowledge(options.kp_path);
    const auto kr = build_relation_knowledge(ds, kp, gateway, prompts,
                                             options.relation);
    save_relation_knowledge(kr, options.out_path);
    out << "edges: noise " << kr.noise_edges.size() << ", collab "
        << kr.collab_edges.size() << ", interests "
        << kr.interest_edges.size() << '\n';
    if (kr.unknown_id_warnings > 0)
      out << "warnings: " << kr.unknown_id_warnings
          << " unknown ids ignored\n";
  }
  const auto dir =
      std::filesystem::path(options.out_path).parent_path().string();
  auto manifest = RunManifest::load(dir.empty() ? "." : dir);
  manifest.record(std::filesystem::path(options.out_path).filename().string(),
                  options.out_path);
  manifest.save(dir.empty() ? "." : dir);
  out << "cache: " << gateway.cache_hits() << " hits, "
      << gateway.cache_misses() << " misses\n";
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainPaths {
  std::string dataset_path;
  std::string kp_path;  // empty requires no_pk
  std::string kr_path;  // empty requires no_rk
  std::string out_dir;
};

struct TrainOutput {
  FitResult result;
  std::string checkpoint_path;
  std::string metrics_path;
};

inline TrainOutput run_train(const TrainPaths& paths, const TrainConfig& config,
                             std::ostream& out = std::cout) {
  config.validate();
  RunManifest::verify_against_sibling_manifest(paths.dataset_path);
  const Dataset ds = load_dataset(paths.dataset_path);

  PreferenceKnowledge kp;
  const bool use_pk = !config.no_pk && !config.no_mi_max;
  if (use_pk) {
    if (paths.kp_path.empty())
      throw UsageError("train: K_p artifact required (or pass --no-pk)");
    RunManifest::verify_against_sibling_manifest(paths.kp_path);
    kp = load_preference_knowledge(paths.kp_path);
  }
  RelationKnowledge kr;
  const bool use_rk = !config.no_rk && !config.no_mi_max;
  if (use_rk) {
    if (paths.kr_path.empty())
      throw UsageError("train: K_r artifact required (or pass --no-rk)");
    RunManifest::verify_against_sibling_manifest(paths.kr_path);
    kr = load_relation_knowledge(paths.kr_path);
  }

  const InteractionGraph graph = build_graph(ds);
  InteractionGraph rel_graph;
  if (use_rk) rel_graph = build_enriched_graph(ds, kr);

  std::filesystem::create_directories(paths.out_dir);
  TrainOutput result;
  result.metrics_path =
      (std::filesystem::path(paths.out_dir) / "metrics.tsv").string();
  result.checkpoint_path =
      (std::filesystem::path(paths.out_dir) / "model.ckpt").string();
  MetricsLog log(result.metrics_path);
  TrainContext ctx{&ds, &graph, use_rk ? &rel_graph : nullptr,
                   use_pk ? &kp : nullptr};
  result.result = fit(ctx, config, log);

  CheckpointMeta meta;
  meta.epoch = result.result.best_epoch;
  meta.best_val_metric = result.result.best_val_recall20;
  meta.config_hash = config.hash();
  save_checkpoint(result.checkpoint_path, result.result.best_state,
                  result.result.best_adam_m, result.result.best_adam_v, meta);

  auto manifest = RunManifest::load(paths.out_dir);
  manifest.set_config_hash(config.hash());
  manifest.set_seed(config.seed);
  manifest.record("model.ckpt", result.checkpoint_path);
  manifest.record("metrics.tsv", result.metrics_path);
  manifest.save(paths.out_dir);

  out << "best epoch " << result.result.best_epoch << ", val recall@20 "
      << result.result.best_val_recall20 << ", epochs run "
      << result.result.epochs_run << '\n';
  return result;
}

// ---------------------------------------------------------------------------
// eval / coldstart / export
// ---------------------------------------------------------------------------

struct EvalPaths {
  std::string checkpoint_path;
  std::string dataset_path;
  std::string out_path;
};

inline MetricReport run_eval(const EvalPaths& paths, EvalSplit split,
                             const TrainConfig& config,
                             std::ostream& out = std::cout) {
  RunManifest::verify_against_sibling_manifest(paths.checkpoint_path);
  RunManifest::verify_against_sibling_manifest(paths.dataset_path);
  const Dataset ds = load_dataset(paths.dataset_path);
  const ModelState state = load_checkpoint(paths.checkpoint_path);
  const InteractionGraph graph = build_graph(ds);
  auto report = evaluate(state, graph, ds, split, config.step_config());
  report.config_hash = config.hash();
  report.seed = config.seed;
  if (!paths.out_path.empty()) {
    write_metric_report(report, paths.out_path);
    const auto dir =
        std::filesystem::path(paths.out_path).parent_path().string();
    auto manifest = RunManifest::load(dir.empty() ? "." : dir);
    manifest.record(
        std::filesystem::path(paths.out_path).filename().string(),
        paths.out_path);
    manifest.save(dir.empty() ? "." : dir);
  }
  for (const int n : report.cutoffs)
    out << "recall@" << n << ' ' << report.recall.at(n) << "\tndcg@" << n
        << ' ' << report.ndcg.at(n) << '\n';
  return report;
}

inline ColdStartReport run_coldstart(const EvalPaths& paths,
                                     const TrainConfig& config,
                                     std::ostream& out = std::cout) {
  RunManifest::verify_against_sibling_manifest(paths.checkpoint_path);
  RunManifest::verify_against_sibling_manifest(paths.dataset_path);
  const Dataset ds = load_dataset(paths.dataset_path);
  const ModelState state = load_checkpoint(paths.checkpoint_path);
  const InteractionGraph graph = build_graph(ds);
  const Mat h = eval_representations(state, graph, config.step_config());
  const auto report = coldstart_report(h, ds);
  if (!paths.out_path.empty()) write_coldstart_report(report, paths.out_path);
  for (std::size_t g = 0; g < report.groups.size(); ++g)
    out << "group " << g << ": recall@20 " << report.groups[g].recall.at(20)
        << " (" << report.groups[g].users.size() << " users)\n";
  return report;
}

inline void run_export(const EvalPaths& paths, const TrainConfig& config) {
  RunManifest::verify_against_sibling_manifest(paths.checkpoint_path);
  RunManifest::verify_against_sibling_manifest(paths.dataset_path);
  const Dataset ds = load_dataset(paths.dataset_path);
  const ModelState state = load_checkpoint(paths.checkpoint_path);
  const InteractionGraph graph = build_graph(ds);
  export_denoised_graph(state, graph, config.step_config(), paths.out_path);
}

// ---------------------------------------------------------------------------
// robustness sweep
// ---------------------------------------------------------------------------

struct RobustnessOptions {
  std::string dataset_path;
  std::string out_path;
  std::string work_dir;
  std::vector<double> ratios = {0.05, 0.10, 0.15, 0.20};
  ProviderChoice provider;
  PreferenceOptions preference;
  RelationOptions relation;
};

struct RobustnessRow {
  double ratio;
  double recall20;
  double ndcg20;
  double drop_rate;
};

/// Train and evaluate one dataset end to end (knowledge regenerated when the
/// config consumes it), returning the test report.
inline MetricReport train_and_test(const Dataset& ds, const TrainConfig& config,
                                   const ProviderChoice& provider,
                                   const PreferenceOptions& preference,
                                   const RelationOptions& relation) {
  const bool use_pk = !config.no_pk && !config.no_mi_max;
  const bool use_rk = !config.no_rk && !config.no_mi_max;
  PreferenceKnowledge kp;
  RelationKnowledge kr;
  if (use_pk || use_rk) {
    Gateway gateway = make_gateway(provider, ds);
    const PromptLibrary prompts;
    PreferenceOptions popts = preference;
    popts.model_dim = config.d;
    popts.seed = config.seed;
    kp = generate_preference_knowledge(ds, gateway, prompts, popts);
    if (use_rk)
      kr = build_relation_knowledge(ds, kp, gateway, prompts, relation);
  }
  const InteractionGraph graph = build_graph(ds);
  InteractionGraph rel_graph;
  if (use_rk) rel_graph = build_enriched_graph(ds, kr);
  MetricsLog log;  // in-memory only
  TrainContext ctx{&ds, &graph, use_rk ? &rel_graph : nullptr,
                   use_pk ? &kp : nullptr};
  const auto result = fit(ctx, config, log);
  return evaluate(result.best_state, graph, ds, EvalSplit::Test,
                  config.step_config());
}

inline std::vector<RobustnessRow> run_robustness(
    const RobustnessOptions& options, const TrainConfig& config,
    std::ostream& out = std::cout) {
  RunManifest::verify_against_sibling_manifest(options.dataset_path);
  const Dataset ds = load_dataset(options.dataset_path);

  std::vector<RobustnessRow> rows;
  const auto clean = train_and_test(ds, config, options.provider,
                                    options.preference, options.relation);
  rows.push_back({0.0, clean.recall.at(20), clean.ndcg.at(20), 0.0});
  for (const double ratio : options.ratios) {
    const Dataset noisy = inject_noise(ds, ratio, config.seed);
    const auto report = train_and_test(noisy, config, options.provider,
                                       options.preference, options.relation);
    const double drop =
        clean.recall.at(20) > 0.0
            ? (clean.recall.at(20) - report.recall.at(20)) /
                  clean.recall.at(20)
            : 0.0;
    rows.push_back({ratio, report.recall.at(20), report.ndcg.at(20), drop});
  }

  if (!options.out_path.empty()) {
    std::ofstream file(options.out_path, std::ios::binary);
    if (!file) throw DataError("cannot write " + options.out_path);
    file << "ratio\trecall@20\tndcg@20\tdrop_rate\n";
    char buf[128];
    for (const auto& row : rows) {
      std::snprintf(buf, sizeof(buf), "%.2f\t%.10g\t%.10g\t%.10g\n", row.ratio,
                    row.recall20, row.ndcg20, row.drop_rate);
      file << buf;
    }
  }
  for (const auto& row : rows)
    out << "ratio " << row.ratio << ": recall@20 " << row.recall20
        << ", drop " << row.drop_rate << '\n';
  return rows;
}

}  // namespace llard
