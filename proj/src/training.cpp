#include "training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace rg2p {

using tc::Real;
using tc::Tensor;

void TrainConfig::validate() const {
  if (epsilon < 0) throw UsageError("epsilon must be >= 0");
  if (warmup_steps < 1) throw UsageError("warmup_steps must be >= 1");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (adv_clean_weight < 0 || adv_clean_weight > 1) {
    throw UsageError("adv_clean_weight must lie in [0,1]");
  }
}

double lr_at_step(const TrainConfig& cfg, std::int64_t step) {
  const double w = static_cast<double>(cfg.warmup_steps);
  const double s = static_cast<double>(std::max<std::int64_t>(step, 1));
  return cfg.peak_lr * (s <= w ? s / w : std::sqrt(w / s));
}

namespace {

std::vector<int> framed_prefix(const std::vector<int>& phoneme_ids) {
  std::vector<int> prefix{Vocab::kBos};
  prefix.insert(prefix.end(), phoneme_ids.begin(), phoneme_ids.end());
  return prefix;
}

std::vector<int> framed_target(const std::vector<int>& phoneme_ids) {
  std::vector<int> target = phoneme_ids;
  target.push_back(Vocab::kEos);
  return target;
}

Tensor example_loss(Model& model, const TrainExample& ex, bool use_context,
                    const Tensor* embedded_override = nullptr) {
  Tensor context;
  if (use_context && model.context_enabled() && ex.window) {
    context = model.encode_context(*ex.window);
  }
  Tensor embedded = embedded_override ? *embedded_override
                                      : model.embed_graphemes(ex.grapheme_ids);
  Tensor enc = model.encoder_forward(embedded, context);
  Tensor logits = model.decoder_forward(framed_prefix(ex.phoneme_ids), enc, context);
  return tc::cross_entropy_mean(logits, framed_target(ex.phoneme_ids));
}

}  // namespace

Tensor compute_loss(Model& model, const std::vector<TrainExample>& batch, bool use_context) {
  if (batch.empty()) throw UsageError("compute_loss: empty batch");
  const Real inv = Real(1) / static_cast<Real>(batch.size());
  Tensor acc;
  for (const TrainExample& ex : batch) {
    if (ex.phoneme_ids.empty()) throw UsageError("compute_loss: example with empty target");
    Tensor contribution = tc::scale(example_loss(model, ex, use_context), inv);
    acc = acc.defined() ? tc::add(acc, contribution) : contribution;
  }
  return acc;
}

std::vector<Real> adversarial_perturb(const std::vector<Real>& grad_wrt_embedding,
                                      int seq_len, int d_model, double epsilon,
                                      AdvNormScope scope) {
  // grad is d(loss)/dx = -d(log P)/dx, so -eps * g_logP / ||g|| becomes
  // +eps * grad / ||grad||.
  std::vector<Real> delta(grad_wrt_embedding.size(), Real(0));
  if (epsilon == 0.0) return delta;
  constexpr Real kDegenerate = 1e-12;
  if (scope == AdvNormScope::PerSequence) {
    Real norm_sq = 0;
    for (Real g : grad_wrt_embedding) norm_sq += g * g;
    const Real norm = std::sqrt(norm_sq);
    if (norm < kDegenerate) return delta;
    for (std::size_t i = 0; i < delta.size(); ++i) {
      delta[i] = epsilon * grad_wrt_embedding[i] / norm;
    }
  } else {
    for (int t = 0; t < seq_len; ++t) {
      const std::size_t base = static_cast<std::size_t>(t) * d_model;
      Real norm_sq = 0;
      for (int c = 0; c < d_model; ++c) norm_sq += grad_wrt_embedding[base + c] * grad_wrt_embedding[base + c];
      const Real norm = std::sqrt(norm_sq);
      if (norm < kDegenerate) continue;
      for (int c = 0; c < d_model; ++c) {
        delta[base + c] = epsilon * grad_wrt_embedding[base + c] / norm;
      }
    }
  }
  return delta;
}

namespace {

void adam_update(Model& model, TrainState& state, const TrainConfig& cfg,
                 bool update_baseline, bool update_context, double lr) {
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (const std::string& name : model.params().names()) {
    const bool is_ctx = ParamStore::is_context_param(name);
    if (is_ctx ? !update_context : !update_baseline) continue;
    Tensor& p = model.params().get(name);
    if (!p.requires_grad() || p.grad().size() != p.numel()) continue;
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != p.numel()) m.assign(p.numel(), Real(0));
    if (v.size() != p.numel()) v.assign(p.numel(), Real(0));
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const Real g = p.grad()[i];
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      const Real mh = m[i] / bias1;
      const Real vh = v[i] / bias2;
      p.data()[i] -= lr * mh / (std::sqrt(vh) + cfg.adam_eps);
    }
  }
}

}  // namespace

StepMetrics train_step(Model& model, TrainState& state, const std::vector<TrainExample>& batch,
                       const TrainConfig& cfg, bool use_context,
                       bool update_baseline, bool update_context) {
  cfg.validate();
  if (batch.empty()) throw UsageError("train_step: empty batch");
  model.params().zero_grads();
  ++state.step;

  const Real inv = Real(1) / static_cast<Real>(batch.size());
  const double w_clean = cfg.adversarial ? cfg.adv_clean_weight : 1.0;
  const double w_adv = cfg.adversarial ? 1.0 - cfg.adv_clean_weight : 0.0;

  StepMetrics metrics;
  try {
    for (const TrainExample& ex : batch) {
      Tensor embedded = model.embed_graphemes(ex.grapheme_ids);
      Tensor loss = example_loss(model, ex, use_context, &embedded);
      metrics.loss += loss.item() * inv;
      tc::backward(tc::scale(loss, inv * w_clean));

      if (cfg.adversarial) {
        const auto delta = adversarial_perturb(embedded.grad(),
                                               static_cast<int>(ex.grapheme_ids.size()),
                                               model.config().d_model, cfg.epsilon,
                                               cfg.norm_scope);
        Tensor embedded2 = model.embed_graphemes(ex.grapheme_ids);
        Tensor perturbed = tc::add(embedded2, Tensor::from(embedded2.shape(), delta));
        Tensor adv_loss = example_loss(model, ex, use_context, &perturbed);
        metrics.adv_loss += adv_loss.item() * inv;
        tc::backward(tc::scale(adv_loss, inv * w_adv));
      }
    }
  } catch (const tc::NumericError& e) {
    std::ostringstream msg;
    msg << "non-finite value at training step " << state.step << ": " << e.what();
    throw NumericFault(msg.str());
  }
  if (!std::isfinite(metrics.loss)) {
    throw NumericFault("non-finite loss at training step " + std::to_string(state.step));
  }

  metrics.lr = lr_at_step(cfg, state.step);
  adam_update(model, state, cfg, update_baseline, update_context, metrics.lr);
  return metrics;
}

void train(Model& model, TrainState& state, const std::vector<TrainExample>& examples,
           const TrainConfig& cfg, bool use_context, int epochs,
           bool update_baseline, bool update_context,
           const EpochCallback& on_epoch, const std::string& phase) {
  if (examples.empty()) throw UsageError("train: empty corpus");
  Rng rng(derive_seed(cfg.seed, "train-shuffle"));
  if (state.rng_state != std::array<std::uint64_t, 4>{}) rng.set_state(state.rng_state);
  update_context = update_context && model.context_enabled();

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t(0));

  for (int epoch = state.epoch; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<TrainExample> batch;
      for (std::size_t i = pos; i < std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size)); ++i) {
        batch.push_back(examples[order[i]]);
      }
      StepMetrics sm = train_step(model, state, batch, cfg, use_context,
                                  update_baseline, update_context);
      loss_sum += sm.loss;
      ++batches;
    }
    state.epoch = epoch + 1;
    state.rng_state = rng.state();
    if (on_epoch) on_epoch({epoch + 1, phase, loss_sum / static_cast<double>(batches)});
  }
}

void robust_train(Model& model, const std::vector<TrainExample>& d_w,
                  const std::vector<TrainExample>& d_s, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (d_w.empty()) throw UsageError("robust_train: empty word corpus");

  // Step 1: baseline parameters on the combined corpus, context bypassed.
  std::vector<TrainExample> combined = d_w;
  combined.insert(combined.end(), d_s.begin(), d_s.end());
  model.params().set_requires_grad(/*baseline=*/true, /*context=*/false);
  TrainState step1;
  TrainConfig cfg1 = cfg;
  cfg1.seed = derive_seed(cfg.seed, "robust-step1");
  train(model, step1, combined, cfg1, /*use_context=*/false, cfg.epochs,
        /*update_baseline=*/true, /*update_context=*/false, on_epoch, "step1");

  if (d_s.empty() || !model.context_enabled() || cfg.step2_epochs <= 0) {
    model.params().set_requires_grad(true, true);
    return;  // degenerates to baseline training
  }

  // Step 2: freeze baseline bitwise, fit only context parameters on d_s.
  std::vector<std::pair<std::string, std::vector<Real>>> frozen;
  for (const std::string& name : model.params().names(/*context_subset=*/false)) {
    frozen.emplace_back(name, model.params().get(name).data());
  }
  auto verify_frozen = [&] {
    for (const auto& [name, snapshot] : frozen) {
      const auto& now = model.params().get(name).data();
      if (now.size() != snapshot.size() ||
          std::memcmp(now.data(), snapshot.data(), snapshot.size() * sizeof(Real)) != 0) {
        throw NumericFault("frozen baseline parameter modified in step 2: " + name);
      }
    }
  };

  model.params().set_requires_grad(/*baseline=*/false, /*context=*/true);
  TrainConfig cfg2 = cfg;
  cfg2.seed = derive_seed(cfg.seed, "robust-step2");
  auto wrapped = [&](const EpochMetrics& em) {
    verify_frozen();
    if (on_epoch) on_epoch(em);
  };
  TrainState step2;
  train(model, step2, d_s, cfg2, /*use_context=*/true, cfg.step2_epochs,
        /*update_baseline=*/false, /*update_context=*/true, wrapped, "step2");
  verify_frozen();
  model.params().set_requires_grad(true, true);
}

// --- TrainState serialization (for run resumption) ---

namespace {

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
void write_vec(std::ostream& out, const std::vector<Real>& v) {
  write_u64(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(Real)));
}
std::vector<Real> read_vec(std::istream& in) {
  std::vector<Real> v(read_u64(in));
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(Real)));
  return v;
}
void write_map(std::ostream& out, const std::unordered_map<std::string, std::vector<Real>>& m) {
  std::vector<std::string> keys;
  for (const auto& [k, v] : m) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  write_u64(out, keys.size());
  for (const auto& k : keys) {
    write_u64(out, k.size());
    out.write(k.data(), static_cast<std::streamsize>(k.size()));
    write_vec(out, m.at(k));
  }
}
std::unordered_map<std::string, std::vector<Real>> read_map(std::istream& in) {
  std::unordered_map<std::string, std::vector<Real>> m;
  const std::uint64_t n = read_u64(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string k(read_u64(in), '\0');
    in.read(k.data(), static_cast<std::streamsize>(k.size()));
    m[k] = read_vec(in);
  }
  return m;
}

}  // namespace

void TrainState::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write training state: " + path);
  out.write("RG2PSTAT", 8);
  write_u64(out, static_cast<std::uint64_t>(step));
  write_u64(out, static_cast<std::uint64_t>(epoch));
  for (std::uint64_t w : rng_state) write_u64(out, w);
  write_map(out, m);
  write_map(out, v);
  if (!out) throw std::runtime_error("training state write failed: " + path);
}

TrainState TrainState::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read training state: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "RG2PSTAT", 8) != 0) {
    throw UsageError("not a training state file: " + path);
  }
  TrainState s;
  s.step = static_cast<std::int64_t>(read_u64(in));
  s.epoch = static_cast<int>(read_u64(in));
  for (auto& w : s.rng_state) w = read_u64(in);
  s.m = read_map(in);
  s.v = read_map(in);
  if (!in) throw UsageError("truncated training state: " + path);
  return s;
}

}  // namespace rg2p
