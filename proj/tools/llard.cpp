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

// Operator CLI: ingest | knowledge | train | eval | robustness | coldstart |
// export-graph. Exit codes: 0 success, 2 usage error, 3 data error,
// 4 provider error, 5 numeric failure.

#include <CLI11.hpp>
#include <iostream>

#include "llard/workflow.hpp"

namespace {

using namespace llard;

// Layered config: defaults < config file < command-line overrides.
struct TrainFlags {
  std::string config_file;
  std::optional<double> alpha, beta, tau, tau_anneal_to, tau_prime, lr;
  std::optional<std::size_t> batch_size, d;
  std::optional<int> max_epochs, patience, layers;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backbone;
  bool no_pk = false, no_rk = false, no_mi_min = false, no_mi_max = false;
  bool freeze_mask = false, head_hidden = false,
       infonce_include_positive = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file,
                    "config file with `key = value` lines");
    cmd->add_option("--alpha", alpha, "knowledge-alignment weight");
    cmd->add_option("--beta", beta, "compression weight");
    cmd->add_option("--tau", tau, "Gumbel temperature");
    cmd->add_option("--tau-anneal-to", tau_anneal_to,
                    "linear anneal target for tau (e.g. 1e-4)");
    cmd->add_option("--tau-prime", tau_prime, "contrastive temperature");
    cmd->add_option("--lr", lr, "Adam learning rate");
    cmd->add_option("--batch-size", batch_size, "triples per step");
    cmd->add_option("--max-epochs", max_epochs, "epoch budget");
    cmd->add_option("--patience", patience, "early-stopping patience");
    cmd->add_option("--seed", seed, "master seed for all randomness");
    cmd->add_option("--backbone", backbone, "gmf | lightgcn");
    cmd->add_option("--d", d, "embedding dimension");
    cmd->add_option("--layers", layers, "GNN layers");
    cmd->add_flag("--no-pk", no_pk, "ablate preference knowledge");
    cmd->add_flag("--no-rk", no_rk, "ablate relation knowledge");
    cmd->add_flag("--no-mi-min", no_mi_min, "ablate the compression term");
    cmd->add_flag("--no-mi-max", no_mi_max, "ablate both knowledge terms");
    cmd->add_flag("--freeze-mask", freeze_mask, "pin every edge weight at 1");
    cmd->add_flag("--head-hidden", head_hidden,
                  "use the hidden-layer projection head");
    cmd->add_flag("--infonce-include-positive", infonce_include_positive,
                  "include the positive in the InfoNCE denominator");
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!config_file.empty()) cfg = TrainConfig::from_file(config_file);
    if (alpha) cfg.alpha = *alpha;
    if (beta) cfg.beta = *beta;
    if (tau) cfg.tau = *tau;
    if (tau_anneal_to) cfg.tau_anneal_to = *tau_anneal_to;
    if (tau_prime) cfg.tau_prime = *tau_prime;
    if (lr) cfg.lr = *lr;
    if (batch_size) cfg.batch_size = *batch_size;
    if (max_epochs) cfg.max_epochs = *max_epochs;
    if (patience) cfg.patience = *patience;
    if (seed) cfg.seed = *seed;
    if (backbone) cfg.backbone = backbone_from_string(*backbone);
    if (d) cfg.d = *d;
    if (layers) cfg.layers = *layers;
    cfg.no_pk |= no_pk;
    cfg.no_rk |= no_rk;
    cfg.no_mi_min |= no_mi_min;
    cfg.no_mi_max |= no_mi_max;
    cfg.freeze_mask |= freeze_mask;
    cfg.head_hidden |= head_hidden;
    cfg.infonce_include_positive |= infonce_include_positive;
    cfg.validate();
    return cfg;
  }
};

void attach_provider(CLI::App* cmd, ProviderChoice& provider) {
  cmd->add_flag("--mock", provider.mock,
                "offline rule-based provider (rules from the catalog)");
  cmd->add_option("--provider", provider.provider_config_path,
                  "provider config file (endpoint, model, api_key_env, ...)");
  cmd->add_option("--cache", provider.cache_path,
                  "append-only response cache file");
  cmd->add_option("--max-parallel", provider.max_parallel,
                  "in-flight request bound (mock path)");
  cmd->add_option("--mock-embedding-dim", provider.mock_embedding_dim,
                  "embedding dimension served by the mock");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LLM-assisted denoising engine for implicit-feedback "
               "recommendation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(llard::kToolVersion));

  auto* ingest = app.add_subcommand(
      "ingest", "filter, split, and index raw interactions");
  IngestOptions ingest_options;
  ingest
      ->add_option("--interactions", ingest_options.interactions_path,
                   "TSV: user \\t item \\t rating \\t timestamp")
      ->required();
  ingest->add_option("--catalog", ingest_options.catalog_path,
                     "TSV: kind \\t id \\t field \\t text");
  ingest->add_option("--k", ingest_options.k, "k-core threshold (default 10)");
  int min_rating = -1;
  ingest->add_option("--min-rating", min_rating,
                     "drop rated interactions below this (unrated kept)");
  ingest->add_option("--seed", ingest_options.seed, "split seed");
  ingest->add_option("--out", ingest_options.out_path, "dataset artifact path")
      ->required();

  auto* knowledge =
      app.add_subcommand("knowledge", "generate K_p or K_r via the provider");
  KnowledgeOptions knowledge_options;
  std::string kind = "prefs";
  knowledge->add_option("--kind", kind, "prefs | relations")->required();
  knowledge
      ->add_option("--dataset", knowledge_options.dataset_path,
                   "dataset artifact")
      ->required();
  knowledge->add_option("--kp", knowledge_options.kp_path,
                        "K_p artifact (required for --kind relations)");
  knowledge->add_option("--out", knowledge_options.out_path, "output artifact")
      ->required();
  knowledge->add_option("--model-dim", knowledge_options.preference.model_dim,
                        "model dimension d for projected rows");
  knowledge->add_option("--max-keywords",
                        knowledge_options.preference.max_keywords,
                        "keyword cap per subject");
  knowledge->add_option("--text-budget",
                        knowledge_options.preference.text_budget,
                        "config-text character budget");
  knowledge->add_option("--seed", knowledge_options.preference.seed,
                        "projection-head init seed");
  knowledge->add_option("--workers", knowledge_options.preference.workers,
                        "generation worker threads");
  knowledge->add_option("--max-first-hop",
                        knowledge_options.relation.max_first_hop,
                        "rated-neighborhood cap");
  knowledge->add_option("--max-second-hop",
                        knowledge_options.relation.max_second_hop,
                        "collaborative candidate cap");
  knowledge->add_option("--max-third-hop",
                        knowledge_options.relation.max_third_hop,
                        "interest candidate cap");
  knowledge->add_option("--prompt-dir", knowledge_options.prompt_dir,
                        "prompt template override directory");
  attach_provider(knowledge, knowledge_options.provider);

  auto* train = app.add_subcommand("train", "fit the denoising model");
  TrainPaths train_paths;
  TrainFlags train_flags;
  train->add_option("--dataset", train_paths.dataset_path, "dataset artifact")
      ->required();
  train->add_option("--kp", train_paths.kp_path, "K_p artifact");
  train->add_option("--kr", train_paths.kr_path, "K_r artifact");
  train->add_option("--out-dir", train_paths.out_dir, "run output directory")
      ->required();
  train_flags.attach(train);

  auto* eval_cmd =
      app.add_subcommand("eval", "full-rank evaluation of a checkpoint");
  EvalPaths eval_paths;
  TrainFlags eval_flags;
  std::string split = "test";
  eval_cmd
      ->add_option("--checkpoint", eval_paths.checkpoint_path, "checkpoint")
      ->required();
  eval_cmd
      ->add_option("--dataset", eval_paths.dataset_path, "dataset artifact")
      ->required();
  eval_cmd->add_option("--split", split, "val | test");
  eval_cmd->add_option("--out", eval_paths.out_path, "report file");
  eval_flags.attach(eval_cmd);

  auto* robustness = app.add_subcommand(
      "robustness", "noise-injection sweep with drop rates");
  RobustnessOptions robustness_options;
  TrainFlags robustness_flags;
  robustness
      ->add_option("--dataset", robustness_options.dataset_path,
                   "dataset artifact")
      ->required();
  robustness->add_option("--out", robustness_options.out_path, "table file");
  robustness->add_option("--ratios", robustness_options.ratios,
                         "injection ratios (default 0.05 0.1 0.15 0.2)");
  attach_provider(robustness, robustness_options.provider);
  robustness_flags.attach(robustness);

  auto* coldstart =
      app.add_subcommand("coldstart", "five frequency-quantile user groups");
  EvalPaths coldstart_paths;
  TrainFlags coldstart_flags;
  coldstart
      ->add_option("--checkpoint", coldstart_paths.checkpoint_path,
                   "checkpoint")
      ->required();
  coldstart
      ->add_option("--dataset", coldstart_paths.dataset_path,
                   "dataset artifact")
      ->required();
  coldstart->add_option("--out", coldstart_paths.out_path, "report file");
  coldstart_flags.attach(coldstart);

  auto* export_cmd = app.add_subcommand(
      "export-graph", "denoised graph: soft q per edge plus the hard set");
  EvalPaths export_paths;
  TrainFlags export_flags;
  export_cmd
      ->add_option("--checkpoint", export_paths.checkpoint_path, "checkpoint")
      ->required();
  export_cmd
      ->add_option("--dataset", export_paths.dataset_path, "dataset artifact")
      ->required();
  export_cmd->add_option("--out", export_paths.out_path, "edge file")
      ->required();
  export_flags.attach(export_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e);
    return 2;
  }

  try {
    if (*ingest) {
      if (min_rating >= 0) ingest_options.min_rating = min_rating;
      run_ingest(ingest_options);
    } else if (*knowledge) {
      if (kind == "prefs") knowledge_options.kind = KnowledgeKind::Prefs;
      else if (kind == "relations")
        knowledge_options.kind = KnowledgeKind::Relations;
      else throw UsageError("--kind must be prefs or relations");
      run_knowledge(knowledge_options);
    } else if (*train) {
      run_train(train_paths, train_flags.resolve());
    } else if (*eval_cmd) {
      EvalSplit s;
      if (split == "test") s = EvalSplit::Test;
      else if (split == "val") s = EvalSplit::Val;
      else throw UsageError("--split must be val or test");
      run_eval(eval_paths, s, eval_flags.resolve());
    } else if (*robustness) {
      run_robustness(robustness_options, robustness_flags.resolve());
    } else if (*coldstart) {
      run_coldstart(coldstart_paths, coldstart_flags.resolve());
    } else if (*export_cmd) {
      run_export(export_paths, export_flags.resolve());
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 5;
  } catch (const ProviderError& e) {
    std::cerr << "provider error: " << e.what() << '\n';
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
