#pragma once

// Loss computation, L2-normalized gradient perturbation of grapheme
// embeddings, the Adam training loop, and the two-step robust schedule
// (baseline parameters on the combined corpus, then frozen baseline with
// context parameters on the sentence corpus only).

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "model.hpp"

namespace rg2p {

enum class AdvNormScope { PerSequence, PerToken };

struct TrainConfig {
  double epsilon = 1.0;           // adversarial perturbation magnitude
  bool adversarial = false;
  AdvNormScope norm_scope = AdvNormScope::PerSequence;
  double adv_clean_weight = 0.5;  // clean-loss share when adversarial is on

  double peak_lr = 3e-3;
  int warmup_steps = 100;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;

  int batch_size = 16;
  int epochs = 20;
  int step2_epochs = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

// One training example: grapheme ids in, phoneme ids out, optional context.
struct TrainExample {
  std::vector<int> grapheme_ids;
  std::vector<int> phoneme_ids;  // without BOS/EOS framing
  std::optional<ContextWindow> window;
};

struct NumericFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Adam moments keyed by parameter name; step counts from 1.
struct TrainState {
  std::unordered_map<std::string, std::vector<tc::Real>> m;
  std::unordered_map<std::string, std::vector<tc::Real>> v;
  std::int64_t step = 0;
  int epoch = 0;
  std::array<std::uint64_t, 4> rng_state{};

  void save(const std::string& path) const;
  static TrainState load(const std::string& path);
};

double lr_at_step(const TrainConfig& cfg, std::int64_t step);

// Mean over examples of per-example mean-token cross-entropy. Targets are
// framed as BOS + ids -> ids + EOS internally.
tc::Tensor compute_loss(Model& model, const std::vector<TrainExample>& batch, bool use_context);

// delta = -epsilon * g / ||g||_2 where g is the gradient of log P wrt the
// embedded grapheme sequence; zero when the gradient is degenerate.
std::vector<tc::Real> adversarial_perturb(const std::vector<tc::Real>& grad_wrt_embedding,
                                          int seq_len, int d_model, double epsilon,
                                          AdvNormScope scope);

struct StepMetrics {
  double loss = 0.0;      // clean loss
  double adv_loss = 0.0;  // perturbed loss (0 when adversarial is off)
  double lr = 0.0;
};

// One optimizer step over a batch. update_baseline / update_context select
// which parameter subset receives updates.
StepMetrics train_step(Model& model, TrainState& state, const std::vector<TrainExample>& batch,
                       const TrainConfig& cfg, bool use_context,
                       bool update_baseline, bool update_context);

struct EpochMetrics {
  int epoch = 0;
  std::string phase;  // "step1" or "step2" or "baseline"
  double mean_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// One training phase: `epochs` passes over `examples`, resuming from
// state.epoch. The update flags select which parameter subset moves.
void train(Model& model, TrainState& state, const std::vector<TrainExample>& examples,
           const TrainConfig& cfg, bool use_context, int epochs,
           bool update_baseline = true, bool update_context = true,
           const EpochCallback& on_epoch = {}, const std::string& phase = "baseline");

// Two-step schedule: step 1 fits baseline parameters on d_w + d_s with the
// context bypassed; step 2 freezes them bitwise and fits only the context
// parameters on d_s. Throws NumericFault if a frozen tensor changes.
void robust_train(Model& model, const std::vector<TrainExample>& d_w,
                  const std::vector<TrainExample>& d_s, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace rg2p
