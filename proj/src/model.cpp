#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rg2p {

using tc::Real;
using tc::Tensor;

void ModelConfig::validate() const {
  if (layers < 1) throw UsageError("layers must be >= 1");
  if (heads < 1 || d_model % heads != 0) {
    throw UsageError("d_model must be divisible by heads");
  }
  if (context_length < 0) throw UsageError("context_length must be >= 0");
  if (beam < 1) throw UsageError("beam must be >= 1");
  if (max_decode_len < 1) throw UsageError("max_decode_len must be >= 1");
}

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  auto [it, inserted] = tensors_.emplace(name, std::move(t));
  if (!inserted) throw UsageError("duplicate parameter: " + name);
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw UsageError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw UsageError("unknown parameter: " + name);
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (const auto& [k, v] : tensors_) out.push_back(k);
  return out;
}

std::vector<std::string> ParamStore::names(bool context_subset) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : tensors_) {
    if (is_context_param(k) == context_subset) out.push_back(k);
  }
  return out;
}

void ParamStore::set_requires_grad(bool baseline, bool context) {
  for (auto& [k, v] : tensors_) {
    v.set_requires_grad(is_context_param(k) ? context : baseline);
  }
}

void ParamStore::zero_grads() {
  for (auto& [k, v] : tensors_) {
    if (v.requires_grad()) {
      v.grad().assign(v.numel(), Real(0));
    }
  }
}

namespace {

Tensor glorot(std::vector<int> shape, Rng& rng) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  int fan_in = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) fan_in *= shape[i];
  const int fan_out = shape[shape.size() - 1];
  const Real limit = std::sqrt(Real(6) / (fan_in + fan_out));
  std::vector<Real> data(n);
  for (auto& v : data) v = (rng.uniform() * 2 - 1) * limit;
  return Tensor::from(std::move(shape), std::move(data), true);
}

Tensor normal_init(std::vector<int> shape, Real stddev, Rng& rng) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  std::vector<Real> data(n);
  for (auto& v : data) v = rng.normal() * stddev;
  return Tensor::from(std::move(shape), std::move(data), true);
}

std::string layer_name(const char* stem, int layer, const char* leaf) {
  std::ostringstream s;
  s << stem << "." << layer << "." << leaf;
  return s.str();
}

}  // namespace

Model::Model(ModelConfig cfg, Vocab graphemes, Vocab phonemes, Vocab words,
             std::uint64_t init_seed)
    : cfg_(cfg),
      graphemes_(std::move(graphemes)),
      phonemes_(std::move(phonemes)),
      words_(std::move(words)) {
  cfg_.validate();
  build_params(init_seed);
}

void Model::build_params(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "model-init"));
  const int d = cfg_.d_model;
  const int dff = cfg_.ffn_dim();
  const Real emb_std = std::pow(static_cast<Real>(d), Real(-0.5));

  params_.add("emb.grapheme", normal_init({graphemes_.size(), d}, emb_std, rng));
  params_.add("emb.phoneme", normal_init({phonemes_.size(), d}, emb_std, rng));
  params_.add("out.w", glorot({d, phonemes_.size()}, rng));

  auto add_ln = [&](const std::string& name) {
    params_.add(name + ".g", Tensor::full({1, d}, Real(1), true));
    params_.add(name + ".b", Tensor::zeros({1, d}, true));
  };
  auto add_attn = [&](const std::string& name, bool zero_out_proj) {
    params_.add(name + ".wq", glorot({d, d}, rng));
    params_.add(name + ".wk", glorot({d, d}, rng));
    params_.add(name + ".wv", glorot({d, d}, rng));
    params_.add(name + ".wo", zero_out_proj ? Tensor::zeros({d, d}, true) : glorot({d, d}, rng));
  };
  auto add_ffn = [&](const std::string& name) {
    params_.add(name + ".w1", glorot({d, dff}, rng));
    params_.add(name + ".b1", Tensor::zeros({1, dff}, true));
    params_.add(name + ".w2", glorot({dff, d}, rng));
    params_.add(name + ".b2", Tensor::zeros({1, d}, true));
  };

  for (int i = 0; i < cfg_.layers; ++i) {
    add_attn(layer_name("enc", i, "self"), false);
    add_ln(layer_name("enc", i, "ln1"));
    add_ffn(layer_name("enc", i, "ffn"));
    add_ln(layer_name("enc", i, "ln2"));

    add_attn(layer_name("dec", i, "self"), false);
    add_ln(layer_name("dec", i, "ln1"));
    add_attn(layer_name("dec", i, "cross"), false);
    add_ln(layer_name("dec", i, "ln2"));
    add_ffn(layer_name("dec", i, "ffn"));
    add_ln(layer_name("dec", i, "ln3"));
  }
  add_ln("enc.lnf");
  add_ln("dec.lnf");

  if (cfg_.context_length > 0) {
    const int dw = cfg_.d_word;
    Tensor word_emb = normal_init({words_.size(), dw},
                                  std::pow(static_cast<Real>(dw), Real(-0.5)), rng);
    // PAD row starts at zero so empty context slots contribute nothing.
    for (int c = 0; c < dw; ++c) word_emb.data()[c] = 0;
    params_.add("ctx.word_emb", std::move(word_emb));
    params_.add("ctx.conv.k", glorot({3, dw, d}, rng));
    params_.add("ctx.conv.b", Tensor::zeros({1, d}, true));
    for (int i = 0; i < cfg_.layers; ++i) {
      add_attn(layer_name("ctx.enc", i, "attn"), true);
      add_ln(layer_name("ctx.enc", i, "ln"));
      add_attn(layer_name("ctx.dec", i, "attn"), true);
      add_ln(layer_name("ctx.dec", i, "ln"));
      params_.add(layer_name("ctx.dec", i, "gate.wi"), glorot({d, d}, rng));
      params_.add(layer_name("ctx.dec", i, "gate.ws"), glorot({d, d}, rng));
      params_.add(layer_name("ctx.dec", i, "gate.b"),
                  Tensor::full({1, d}, cfg_.gate_bias_init, true));
    }
  }
}

Tensor Model::positional_encoding(int len) const {
  const int d = cfg_.d_model;
  std::vector<Real> pe(static_cast<std::size_t>(len) * d);
  for (int pos = 0; pos < len; ++pos) {
    for (int i = 0; i < d; i += 2) {
      const Real angle = pos / std::pow(Real(10000), static_cast<Real>(i) / d);
      pe[static_cast<std::size_t>(pos) * d + i] = std::sin(angle);
      if (i + 1 < d) pe[static_cast<std::size_t>(pos) * d + i + 1] = std::cos(angle);
    }
  }
  return Tensor::from({len, d}, std::move(pe));
}

ContextWindow Model::make_window(const std::vector<std::string>& words, int target_index) const {
  if (target_index < 0 || target_index >= static_cast<int>(words.size())) {
    throw UsageError("target index out of range");
  }
  ContextWindow w;
  const int l = cfg_.context_length;
  for (int i = target_index - l; i <= target_index + l; ++i) {
    if (i == target_index) continue;
    if (i < 0 || i >= static_cast<int>(words.size())) {
      w.word_ids.push_back(Vocab::kPad);
    } else {
      w.word_ids.push_back(words_.encode(words[static_cast<std::size_t>(i)]));
    }
  }
  return w;
}

Tensor Model::encode_context(const ContextWindow& window) const {
  if (cfg_.context_length == 0) {
    throw UsageError("context is disabled (l = 0)");
  }
  if (static_cast<int>(window.word_ids.size()) != 2 * cfg_.context_length) {
    throw UsageError("context window must hold exactly 2l word ids");
  }
  Tensor emb = tc::embedding(params_.get("ctx.word_emb"), window.word_ids);
  Tensor conv = tc::conv1d_same(emb, params_.get("ctx.conv.k"), params_.get("ctx.conv.b"));
  return tc::relu(conv);
}

Tensor Model::embed_graphemes(const std::vector<int>& ids) const {
  if (ids.empty()) throw UsageError("empty grapheme sequence");
  if (static_cast<int>(ids.size()) > cfg_.max_positions) {
    throw UsageError("sequence longer than supported positions");
  }
  Tensor emb = tc::scale(tc::embedding(params_.get("emb.grapheme"), ids),
                         std::sqrt(static_cast<Real>(cfg_.d_model)));
  return tc::add(emb, positional_encoding(static_cast<int>(ids.size())));
}

namespace {

// Multi-head attention built from tensor primitives, optionally recording
// the per-head attention weights.
Tensor mha(const Tensor& q, const Tensor& k, const Tensor& v, const ParamStore& params,
           const std::string& prefix, int heads, const std::vector<Real>* mask,
           std::vector<std::vector<Real>>* weights_out = nullptr) {
  const int d = q.cols();
  const int dh = d / heads;
  const Real inv_sqrt = Real(1) / std::sqrt(static_cast<Real>(dh));
  Tensor qp = tc::matmul(q, params.get(prefix + ".wq"));
  Tensor kp = tc::matmul(k, params.get(prefix + ".wk"));
  Tensor vp = tc::matmul(v, params.get(prefix + ".wv"));
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = tc::slice_cols(qp, h * dh, dh);
    Tensor kh = tc::slice_cols(kp, h * dh, dh);
    Tensor vh = tc::slice_cols(vp, h * dh, dh);
    Tensor attn = tc::softmax_rows(tc::scale(tc::matmul(qh, tc::transpose(kh)), inv_sqrt), mask);
    if (weights_out) weights_out->push_back(attn.data());
    outs.push_back(tc::matmul(attn, vh));
  }
  return tc::matmul(tc::concat_cols(outs), params.get(prefix + ".wo"));
}

Tensor ffn(const Tensor& x, const ParamStore& params, const std::string& prefix) {
  Tensor h = tc::relu(tc::add_rowvec(tc::matmul(x, params.get(prefix + ".w1")),
                                     params.get(prefix + ".b1")));
  return tc::add_rowvec(tc::matmul(h, params.get(prefix + ".w2")), params.get(prefix + ".b2"));
}

Tensor ln(const Tensor& x, const ParamStore& params, const std::string& prefix) {
  return tc::layer_norm(x, params.get(prefix + ".g"), params.get(prefix + ".b"));
}

}  // namespace

Tensor Model::encoder_forward(const Tensor& embedded, const Tensor& context,
                              ForwardTrace* trace) const {
  const bool use_context = context.defined();
  Tensor x = embedded;
  for (int i = 0; i < cfg_.layers; ++i) {
    const std::string self_name = layer_name("enc", i, "self");
    Tensor q = ln(x, params_, layer_name("enc", i, "ln1"));
    Tensor a = tc::add(x, mha(q, q, q, params_, self_name, cfg_.heads, nullptr));
    if (trace) trace->enc_self_attn.push_back(a.data());
    Tensor m = a;
    if (use_context) {
      Tensor cq = ln(a, params_, layer_name("ctx.enc", i, "ln"));
      m = tc::add(a, mha(cq, context, context, params_,
                         layer_name("ctx.enc", i, "attn"), cfg_.heads, nullptr));
      if (trace) trace->enc_context.push_back(m.data());
    }
    x = tc::add(m, ffn(ln(m, params_, layer_name("enc", i, "ln2")), params_,
                       layer_name("enc", i, "ffn")));
  }
  return ln(x, params_, "enc.lnf");
}

Tensor Model::decoder_forward(const std::vector<int>& phoneme_prefix_ids,
                              const Tensor& encoder_states, const Tensor& context,
                              ForwardTrace* trace) const {
  if (phoneme_prefix_ids.empty() || phoneme_prefix_ids[0] != Vocab::kBos) {
    throw UsageError("decoder prefix must start with BOS");
  }
  const int t_len = static_cast<int>(phoneme_prefix_ids.size());
  if (t_len > cfg_.max_positions) throw UsageError("sequence longer than supported positions");
  const bool use_context = context.defined();

  Tensor y = tc::add(tc::scale(tc::embedding(params_.get("emb.phoneme"), phoneme_prefix_ids),
                               std::sqrt(static_cast<Real>(cfg_.d_model))),
                     positional_encoding(t_len));
  const std::vector<Real> mask = tc::causal_mask(t_len);

  Tensor x = y;
  for (int i = 0; i < cfg_.layers; ++i) {
    Tensor q = ln(x, params_, layer_name("dec", i, "ln1"));
    Tensor b = tc::add(x, mha(q, q, q, params_, layer_name("dec", i, "self"), cfg_.heads, &mask));
    if (trace) trace->dec_self.push_back(b.data());

    Tensor gated = b;
    if (use_context) {
      Tensor nq = ln(b, params_, layer_name("ctx.dec", i, "ln"));
      Tensor n = mha(nq, context, context, params_, layer_name("ctx.dec", i, "attn"),
                     cfg_.heads, nullptr);
      if (trace) trace->dec_context.push_back(n.data());
      Tensor cbar = tc::broadcast_rows(tc::mean_rows(context), t_len);
      Tensor lambda = tc::sigmoid(tc::add_rowvec(
          tc::add(tc::matmul(cbar, params_.get(layer_name("ctx.dec", i, "gate.wi"))),
                  tc::matmul(n, params_.get(layer_name("ctx.dec", i, "gate.ws")))),
          params_.get(layer_name("ctx.dec", i, "gate.b"))));
      if (trace) {
        trace->lambda.push_back(lambda.data());
        trace->lambda_rows.push_back(t_len);
      }
      Tensor one_minus = tc::add_scalar(tc::scale(lambda, Real(-1)), Real(1));
      Tensor gate_out = tc::add(tc::mul(lambda, cbar), tc::mul(one_minus, n));
      gated = tc::add(b, gate_out);
    }

    std::vector<std::vector<Real>>* weights = nullptr;
    if (trace) {
      trace->enc_dec_attn.emplace_back();
      weights = &trace->enc_dec_attn.back();
      trace->enc_dec_rows = t_len;
      trace->enc_dec_cols = encoder_states.rows();
    }
    Tensor cq = ln(gated, params_, layer_name("dec", i, "ln2"));
    Tensor c = tc::add(gated, mha(cq, encoder_states, encoder_states, params_,
                                  layer_name("dec", i, "cross"), cfg_.heads, nullptr, weights));
    x = tc::add(c, ffn(ln(c, params_, layer_name("dec", i, "ln3")), params_,
                       layer_name("dec", i, "ffn")));
  }
  Tensor states = ln(x, params_, "dec.lnf");
  if (trace) trace->final_states = states.data();
  return tc::matmul(states, params_.get("out.w"));
}

Tensor Model::forward(const std::vector<int>& grapheme_ids,
                      const std::vector<int>& phoneme_prefix_ids,
                      const std::optional<ContextWindow>& window,
                      ForwardTrace* trace) const {
  Tensor context;
  if (window && context_enabled()) context = encode_context(*window);
  Tensor enc = encoder_forward(embed_graphemes(grapheme_ids), context, trace);
  return decoder_forward(phoneme_prefix_ids, enc, context, trace);
}

namespace {

struct BeamState {
  std::vector<int> ids;  // without BOS
  double logprob = 0.0;
  bool finished = false;
  bool truncated = false;

  double normalized(double exponent) const {
    const double len = std::max<std::size_t>(std::size_t(1), ids.size() + (finished ? 1 : 0));
    return logprob / std::pow(len, exponent);
  }
};

bool better(const BeamState& a, const BeamState& b, double exponent) {
  const double sa = a.normalized(exponent), sb = b.normalized(exponent);
  if (sa != sb) return sa > sb;
  return a.ids < b.ids;  // deterministic tie-break
}

std::vector<double> log_softmax_row(const Tensor& logits, int row) {
  const int cols = logits.cols();
  std::vector<double> out(static_cast<std::size_t>(cols));
  double mx = logits.at(row, 0);
  for (int c = 1; c < cols; ++c) mx = std::max(mx, logits.at(row, c));
  double denom = 0;
  for (int c = 0; c < cols; ++c) denom += std::exp(logits.at(row, c) - mx);
  const double log_denom = std::log(denom) + mx;
  for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(c)] = logits.at(row, c) - log_denom;
  return out;
}

}  // namespace

BeamHypothesis Model::beam_search(const std::vector<int>& grapheme_ids,
                                  const std::optional<ContextWindow>& window,
                                  int beam, int max_len) const {
  if (beam <= 0) beam = cfg_.beam;
  if (max_len <= 0) max_len = cfg_.max_decode_len;

  Tensor context;
  if (window && context_enabled()) context = encode_context(*window);
  Tensor enc = encoder_forward(embed_graphemes(grapheme_ids), context);

  std::vector<BeamState> live{BeamState{}};
  std::vector<BeamState> finished;

  for (int step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<BeamState> candidates;
    for (const BeamState& hyp : live) {
      std::vector<int> prefix{Vocab::kBos};
      prefix.insert(prefix.end(), hyp.ids.begin(), hyp.ids.end());
      Tensor logits = decoder_forward(prefix, enc, context);
      const auto logp = log_softmax_row(logits, static_cast<int>(prefix.size()) - 1);
      for (int tok = 0; tok < static_cast<int>(logp.size()); ++tok) {
        if (tok == Vocab::kPad || tok == Vocab::kBos || tok == Vocab::kUnk) continue;
        BeamState next = hyp;
        next.logprob += logp[static_cast<std::size_t>(tok)];
        if (tok == Vocab::kEos) {
          next.finished = true;
          finished.push_back(std::move(next));
        } else {
          next.ids.push_back(tok);
          candidates.push_back(std::move(next));
        }
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const BeamState& a, const BeamState& b) {
      if (a.logprob != b.logprob) return a.logprob > b.logprob;
      return a.ids < b.ids;
    });
    if (static_cast<int>(candidates.size()) > beam) candidates.resize(static_cast<std::size_t>(beam));
    live = std::move(candidates);
  }
  for (BeamState& hyp : live) {
    hyp.truncated = true;
    finished.push_back(std::move(hyp));
  }

  const BeamState* best = nullptr;
  for (const BeamState& hyp : finished) {
    if (!best || better(hyp, *best, cfg_.length_norm_exponent)) best = &hyp;
  }
  BeamHypothesis out;
  if (best) {
    out.ids = best->ids;
    out.score = best->normalized(cfg_.length_norm_exponent);
    out.truncated = best->truncated;
  }
  return out;
}

std::vector<std::string> Model::convert(const std::string& word,
                                        const std::optional<ContextWindow>& window) const {
  std::string normalized = normalize_word(word);
  if (normalized.empty()) throw UsageError("word has no convertible characters: " + word);
  std::vector<int> ids;
  for (char c : normalized) ids.push_back(graphemes_.encode(std::string(1, c)));
  BeamHypothesis hyp = beam_search(ids, window);
  std::vector<std::string> out;
  for (int id : hyp.ids) out.push_back(phonemes_.decode(id));
  return out;
}

ForwardTrace Model::trace_conversion(const std::vector<int>& grapheme_ids,
                                     const std::optional<ContextWindow>& window,
                                     std::vector<int>* decoded_ids) const {
  BeamHypothesis hyp = beam_search(grapheme_ids, window);
  std::vector<int> prefix{Vocab::kBos};
  prefix.insert(prefix.end(), hyp.ids.begin(), hyp.ids.end());
  ForwardTrace trace;
  forward(grapheme_ids, prefix, window, &trace);
  if (decoded_ids) *decoded_ids = hyp.ids;
  return trace;
}

// --- checkpoint serialization ---

namespace {

constexpr char kMagic[8] = {'R', 'G', '2', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_str(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
double read_f64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::string read_str(std::istream& in) {
  std::uint32_t n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}

void write_vocab(std::ostream& out, const Vocab& v) {
  const auto& symbols = v.symbols();
  write_u32(out, static_cast<std::uint32_t>(symbols.size() - 4));
  for (std::size_t i = 4; i < symbols.size(); ++i) write_str(out, symbols[i]);
}

Vocab read_vocab(std::istream& in) {
  std::uint32_t n = read_u32(in);
  std::vector<std::string> symbols(n);
  for (auto& s : symbols) s = read_str(in);
  return Vocab(std::move(symbols));
}

}  // namespace

void Model::save_checkpoint(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);

  write_u32(out, static_cast<std::uint32_t>(cfg_.layers));
  write_u32(out, static_cast<std::uint32_t>(cfg_.heads));
  write_u32(out, static_cast<std::uint32_t>(cfg_.d_model));
  write_u32(out, static_cast<std::uint32_t>(cfg_.d_ff));
  write_u32(out, static_cast<std::uint32_t>(cfg_.d_word));
  write_u32(out, static_cast<std::uint32_t>(cfg_.context_length));
  write_u32(out, static_cast<std::uint32_t>(cfg_.beam));
  write_u32(out, static_cast<std::uint32_t>(cfg_.max_decode_len));
  write_u32(out, static_cast<std::uint32_t>(cfg_.max_positions));
  write_f64(out, cfg_.length_norm_exponent);
  write_f64(out, cfg_.gate_bias_init);

  write_vocab(out, graphemes_);
  write_vocab(out, phonemes_);
  write_vocab(out, words_);

  const auto names = params_.names();
  write_u32(out, static_cast<std::uint32_t>(names.size()));
  for (const auto& name : names) {
    const Tensor& t = params_.get(name);
    write_str(out, name);
    write_u32(out, ParamStore::is_context_param(name) ? 1 : 0);
    write_u32(out, static_cast<std::uint32_t>(t.shape().size()));
    for (int dim : t.shape()) write_u32(out, static_cast<std::uint32_t>(dim));
    write_u64(out, t.numel());
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.numel() * sizeof(Real)));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

std::unique_ptr<Model> Model::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw UsageError("not a checkpoint file: " + path);
  }
  if (read_u32(in) != kVersion) throw UsageError("unsupported checkpoint version");

  auto model = std::unique_ptr<Model>(new Model());
  ModelConfig& cfg = model->cfg_;
  cfg.layers = static_cast<int>(read_u32(in));
  cfg.heads = static_cast<int>(read_u32(in));
  cfg.d_model = static_cast<int>(read_u32(in));
  cfg.d_ff = static_cast<int>(read_u32(in));
  cfg.d_word = static_cast<int>(read_u32(in));
  cfg.context_length = static_cast<int>(read_u32(in));
  cfg.beam = static_cast<int>(read_u32(in));
  cfg.max_decode_len = static_cast<int>(read_u32(in));
  cfg.max_positions = static_cast<int>(read_u32(in));
  cfg.length_norm_exponent = read_f64(in);
  cfg.gate_bias_init = read_f64(in);

  model->graphemes_ = read_vocab(in);
  model->phonemes_ = read_vocab(in);
  model->words_ = read_vocab(in);

  const std::uint32_t count = read_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = read_str(in);
    read_u32(in);  // partition flag, implied by the name
    std::uint32_t ndims = read_u32(in);
    std::vector<int> shape(ndims);
    for (auto& d : shape) d = static_cast<int>(read_u32(in));
    std::uint64_t numel = read_u64(in);
    std::vector<Real> data(numel);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(numel * sizeof(Real)));
    model->params_.add(name, Tensor::from(std::move(shape), std::move(data), true));
  }
  if (!in) throw UsageError("truncated checkpoint: " + path);
  return model;
}

}  // namespace rg2p
