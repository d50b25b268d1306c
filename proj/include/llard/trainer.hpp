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

// Training loop: triple sampling, mask sampling, combined forward/backward,
// Adam updates, per-step telemetry, early stopping on validation Recall@20,
// and denoised-graph export.

#pragma once

#include <filesystem>

#include "llard/eval.hpp"
#include "llard/objective.hpp"

namespace llard {

// ---------------------------------------------------------------------------
// TrainConfig: CLI-visible `key = value` config mirroring the math flags.
// ---------------------------------------------------------------------------

struct TrainConfig {
  double alpha = 0.1;
  double beta = 0.01;
  double tau = 0.2;           // Gumbel temperature (paper value 1e-4 is a
  double tau_anneal_to = 0.0;  // near-step function; anneal reaches it when
                               // set > 0)
  double tau_prime = 0.2;
  double lr = 1e-3;
  std::size_t batch_size = 1024;
  int max_epochs = 200;
  int patience = 10;
  std::uint64_t seed = 42;
  Backbone backbone = Backbone::LightGCN;
  std::size_t d = 64;
  int layers = 3;
  bool no_pk = false, no_rk = false, no_mi_min = false, no_mi_max = false;
  bool freeze_mask = false;
  bool head_hidden = false;
  bool infonce_include_positive = false;
  KernelConfig kernel;

  void validate() const {
    if (lr <= 0.0) throw UsageError("config: lr must be > 0");
    if (batch_size < 1) throw UsageError("config: batch_size must be >= 1");
    if (patience < 1) throw UsageError("config: patience must be >= 1");
    if (max_epochs < 0) throw UsageError("config: max_epochs must be >= 0");
    if (!(tau_prime > 0.0 && tau_prime <= 1.0))
      throw UsageError("config: tau_prime must be in (0, 1]");
    if (tau <= 0.0) throw UsageError("config: tau must be > 0");
  }

  StepConfig step_config(int epoch = 0) const {
    StepConfig cfg;
    cfg.alpha = alpha;
    cfg.beta = beta;
    cfg.tau = tau_at(epoch);
    cfg.tau_prime = tau_prime;
    cfg.no_pk = no_pk;
    cfg.no_rk = no_rk;
    cfg.no_mi_min = no_mi_min;
    cfg.no_mi_max = no_mi_max;
    cfg.freeze_mask = freeze_mask;
    cfg.infonce_include_positive = infonce_include_positive;
    cfg.kernel = kernel;
    return cfg;
  }

  double tau_at(int epoch) const {
    if (tau_anneal_to <= 0.0 || max_epochs <= 1) return tau;
    const double f = static_cast<double>(epoch) / (max_epochs - 1);
    return tau + (tau_anneal_to - tau) * f;
  }

  std::string canonical() const {
    char buf[512];
    std::snprintf(
        buf, sizeof(buf),
        "alpha=%.17g\nbeta=%.17g\ntau=%.17g\ntau_anneal_to=%.17g\n"
        "tau_prime=%.17g\nlr=%.17g\nbatch_size=%zu\nmax_epochs=%d\n"
        "patience=%d\nseed=%llu\nbackbone=%s\nd=%zu\nlayers=%d\nno_pk=%d\n"
        "no_rk=%d\nno_mi_min=%d\nno_mi_max=%d\nfreeze_mask=%d\n"
        "head_hidden=%d\ninfonce_include_positive=%d\nkernel_mode=%d\n"
        "sigma_k=%.17g\nsigma_m=%.17g\n",
        alpha, beta, tau, tau_anneal_to, tau_prime, lr, batch_size,
        max_epochs, patience, static_cast<unsigned long long>(seed),
        to_string(backbone), d, layers, no_pk, no_rk, no_mi_min, no_mi_max,
        freeze_mask, head_hidden, infonce_include_positive,
        static_cast<int>(kernel.mode), kernel.sigma_k, kernel.sigma_m);
    return buf;
  }

  std::string hash() const { return hash_bytes(canonical()).hex(); }

  /// Overlay `key = value` pairs onto this config. Unknown keys error.
  void apply(const std::unordered_map<std::string, std::string>& kv) {
    for (const auto& [key, value] : kv) {
      if (key == "alpha") alpha = std::stod(value);
      else if (key == "beta") beta = std::stod(value);
      else if (key == "tau") tau = std::stod(value);
      else if (key == "tau_anneal_to") tau_anneal_to = std::stod(value);
      else if (key == "tau_prime") tau_prime = std::stod(value);
      else if (key == "lr") lr = std::stod(value);
      else if (key == "batch_size") batch_size = std::stoul(value);
      else if (key == "max_epochs") max_epochs = std::stoi(value);
      else if (key == "patience") patience = std::stoi(value);
      else if (key == "seed") seed = std::stoull(value);
      else if (key == "backbone") backbone = backbone_from_string(value);
      else if (key == "d") d = std::stoul(value);
      else if (key == "layers") layers = std::stoi(value);
      else if (key == "no_pk") no_pk = value == "1" || value == "true";
      else if (key == "no_rk") no_rk = value == "1" || value == "true";
      else if (key == "no_mi_min") no_mi_min = value == "1" || value == "true";
      else if (key == "no_mi_max") no_mi_max = value == "1" || value == "true";
      else if (key == "freeze_mask")
        freeze_mask = value == "1" || value == "true";
      else if (key == "head_hidden")
        head_hidden = value == "1" || value == "true";
      else if (key == "infonce_include_positive")
        infonce_include_positive = value == "1" || value == "true";
      else if (key == "kernel_mode")
        kernel.mode = value == "fixed" ? KernelConfig::Mode::Fixed
                                       : KernelConfig::Mode::MedianHeuristic;
      else if (key == "sigma_k") kernel.sigma_k = std::stod(value);
      else if (key == "sigma_m") kernel.sigma_m = std::stod(value);
      else throw UsageError("config: unknown key `" + key + "`");
    }
  }

  static TrainConfig from_file(const std::string& path) {
    TrainConfig cfg;
    cfg.apply(read_kv_file(path));
    return cfg;
  }
};

// ---------------------------------------------------------------------------
// Adam (β1 = 0.9, β2 = 0.999, ε = 1e-8, no weight decay)
// ---------------------------------------------------------------------------

class Adam {
public:
  Adam(std::size_t n_params, double lr) : lr_(lr), m_(n_params, 0.0),
                                          v_(n_params, 0.0) {}

  void step(ModelState& state, Grads& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(t_));
    std::size_t offset = 0;
    auto sblocks = param_blocks(state);
    auto gblocks = grads.blocks(state);
    for (std::size_t b = 0; b < sblocks.size(); ++b) {
      for (std::size_t k = 0; k < sblocks[b].size; ++k, ++offset) {
        const double g = gblocks[b].data[k];
        m_[offset] = 0.9 * m_[offset] + 0.1 * g;
        v_[offset] = 0.999 * v_[offset] + 0.001 * g * g;
        const double mhat = m_[offset] / bc1;
        const double vhat = v_[offset] / bc2;
        sblocks[b].data[k] -= lr_ * mhat / (std::sqrt(vhat) + 1e-8);
      }
    }
  }

  std::vector<double>& m() { return m_; }
  std::vector<double>& v() { return v_; }
  std::uint64_t steps() const { return t_; }

private:
  double lr_;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Telemetry: per-step tab-separated loss lines.
// ---------------------------------------------------------------------------

class MetricsLog {
public:
  MetricsLog() = default;
  explicit MetricsLog(const std::string& path) {
    if (!path.empty()) {
      out_.open(path, std::ios::binary);
      if (!out_) throw DataError("cannot open metrics log: " + path);
    }
  }

  void step_line(std::uint64_t step, const LossBreakdown& losses,
                 double gnorm_emb, double gnorm_mask, double gnorm_head) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "step\t%llu\t%.10g\t%.10g\t%.10g\t%.10g\t%.10g\t%.6g\t%.6g"
                  "\t%.6g\n",
                  static_cast<unsigned long long>(step), losses.rec,
                  losses.prf, losses.rel, losses.comp, losses.total, gnorm_emb,
                  gnorm_mask, gnorm_head);
    write(buf);
    last_step_ = losses;
  }

  void epoch_line(int epoch, double val_metric, double best) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "epoch\t%d\tval_recall@20\t%.10g\tbest\t%.10g\n",
                  epoch, val_metric, best);
    write(buf);
  }

  const LossBreakdown& last_step() const { return last_step_; }

private:
  void write(const char* text) {
    if (out_.is_open()) {
      out_ << text;
      out_.flush();
    }
  }
  std::ofstream out_;
  LossBreakdown last_step_;
};

// ---------------------------------------------------------------------------
// Early stopping
// ---------------------------------------------------------------------------

class EarlyStopper {
public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  /// Returns true when the metric improved (strictly, or first observation).
  bool observe(double metric, int epoch) {
    if (!seen_ || metric > best_) {
      seen_ = true;
      best_ = metric;
      best_epoch_ = epoch;
      since_best_ = 0;
      return true;
    }
    ++since_best_;
    return false;
  }

  bool should_stop() const { return seen_ && since_best_ >= patience_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }

private:
  int patience_;
  bool seen_ = false;
  double best_ = 0.0;
  int best_epoch_ = -1;
  int since_best_ = 0;
};

// ---------------------------------------------------------------------------
// Epoch and fit
// ---------------------------------------------------------------------------

struct TrainContext {
  const Dataset* ds = nullptr;
  const InteractionGraph* graph = nullptr;      // train graph
  const InteractionGraph* rel_graph = nullptr;  // nullptr when no_rk
  const PreferenceKnowledge* kp = nullptr;      // nullptr when no_pk
};

/// One pass over the train set: ceil(|train|/batch) steps of sample →
/// forward → backward → Adam. Deterministic for a fixed seed.
inline LossBreakdown train_epoch(ModelState& state, Adam& adam,
                                 const TrainContext& ctx,
                                 const TrainConfig& config, int epoch,
                                 MetricsLog& log) {
  const StepConfig step_cfg = config.step_config(epoch);
  const std::size_t steps =
      (ctx.ds->train.size() + config.batch_size - 1) / config.batch_size;
  Rng rng(derive_seed(config.seed, 0xe90c0000ULL + epoch));
  LossBreakdown mean;
  for (std::size_t s = 0; s < steps; ++s) {
    const TripleBatch batch = sample_triples(*ctx.ds, config.batch_size, rng);
    std::vector<double> noise;
    if (!config.freeze_mask)
      noise = sample_logistic_noise(ctx.graph->num_edges(), rng);

    StepInputs in;
    in.graph = ctx.graph;
    in.rel_graph = ctx.rel_graph;
    in.kp = ctx.kp;
    in.batch = &batch;
    in.noise = &noise;
    in.train_mode = true;

    Grads grads;
    LossBreakdown losses;
    try {
      losses = evaluate_step(state, in, step_cfg, &grads);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + " step " +
                         std::to_string(s) + ": " + e.what());
    }
    adam.step(state, grads);
    log.step_line(adam.steps(), losses, grads.group_norm("embeddings", state),
                  grads.group_norm("mask", state),
                  grads.group_norm("head", state));
    mean.rec += losses.rec;
    mean.prf += losses.prf;
    mean.rel += losses.rel;
    mean.comp += losses.comp;
    mean.total += losses.total;
  }
  const double inv = steps > 0 ? 1.0 / static_cast<double>(steps) : 1.0;
  mean.rec *= inv;
  mean.prf *= inv;
  mean.rel *= inv;
  mean.comp *= inv;
  mean.total *= inv;
  return mean;
}

struct FitResult {
  ModelState best_state;
  std::vector<double> best_adam_m, best_adam_v;
  int best_epoch = -1;
  double best_val_recall20 = 0.0;
  int epochs_run = 0;
};

/// Train with early stopping on validation Recall@20; returns the best
/// checkpoint state. max_epochs = 0 returns the initialized state with its
/// evaluation.
inline FitResult fit(const TrainContext& ctx, const TrainConfig& config,
                     MetricsLog& log) {
  config.validate();
  if (ctx.ds->val.empty() && config.max_epochs > 0)
    throw DataError("fit: validation split is empty");
  ModelState state = ModelState::init(
      config.backbone, ctx.ds->num_users(), ctx.ds->num_items(), config.d,
      config.layers, ctx.kp ? ctx.kp->d_t : 1, config.seed,
      config.head_hidden);
  if (ctx.kp && ctx.kp->d != config.d)
    throw UsageError("fit: K_p model dimension (" + std::to_string(ctx.kp->d) +
                     ") differs from config d (" + std::to_string(config.d) +
                     ")");
  Adam adam(total_params(state), config.lr);

  FitResult result;
  EarlyStopper stopper(config.patience);
  auto snapshot = [&](int epoch, double metric) {
    result.best_state = state;
    result.best_adam_m = adam.m();
    result.best_adam_v = adam.v();
    result.best_epoch = epoch;
    result.best_val_recall20 = metric;
  };

  if (config.max_epochs == 0) {
    const auto report = ctx.ds->val.empty()
                            ? MetricReport{}
                            : evaluate(state, *ctx.graph, *ctx.ds,
                                       EvalSplit::Val, config.step_config());
    const double metric =
        report.recall.count(20) ? report.recall.at(20) : 0.0;
    snapshot(0, metric);
    return result;
  }

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    train_epoch(state, adam, ctx, config, epoch - 1, log);
    const auto report = evaluate(state, *ctx.graph, *ctx.ds, EvalSplit::Val,
                                 config.step_config(epoch - 1));
    const double metric = report.recall.at(20);
    result.epochs_run = epoch;
    const bool improved = stopper.observe(metric, epoch);
    log.epoch_line(epoch, metric, stopper.best());
    if (improved) snapshot(epoch, metric);
    if (stopper.should_stop()) break;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Denoised-graph export: eval-mode q per train edge plus the hard edge set
// E' = {q >= 0.5}.
// ---------------------------------------------------------------------------

inline void export_denoised_graph(const ModelState& state,
                                  const InteractionGraph& graph,
                                  const StepConfig& cfg,
                                  const std::string& path) {
  const auto q = eval_mask(state, graph, cfg);
  const auto pairs = user_item_edges(graph);
  const auto& edges = graph.edges();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write denoised graph: " + path);
  char buf[64];
  std::vector<std::pair<IndexPair, double>> soft;
  const auto offset = static_cast<std::uint32_t>(graph.num_users());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (edges[e].a < offset && edges[e].b >= offset)
      soft.push_back({{edges[e].a, edges[e].b - offset}, q[e]});
  }
  out << "SOFT " << soft.size() << '\n';
  for (const auto& [pair, qe] : soft) {
    std::snprintf(buf, sizeof(buf), "%.10g", qe);
    out << pair.first << '\t' << pair.second << '\t' << buf << '\n';
  }
  std::size_t hard_count = 0;
  for (const auto& [pair, qe] : soft) hard_count += qe >= 0.5;
  out << "HARD " << hard_count << '\n';
  for (const auto& [pair, qe] : soft) {
    if (qe >= 0.5) out << pair.first << '\t' << pair.second << '\n';
  }
}

}  // namespace llard
