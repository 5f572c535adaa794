#pragma once

// Context-gated Transformer for grapheme-to-phoneme conversion.
//
// The baseline is a pre-layer-norm encoder-decoder over grapheme/phoneme
// sequences. A convolutional encoder turns the 2l surrounding words into a
// context matrix; extra attention sublayers read it in the encoder and
// decoder, and the decoder mixes the context in through a learned sigmoid
// gate. Context parameters are kept disjoint from baseline parameters so
// the two-step training schedule can freeze one side.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lexicon.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace rg2p {

struct ModelConfig {
  int layers = 4;
  int heads = 4;
  int d_model = 128;
  int d_ff = 0;          // 0 -> 4 * d_model
  int d_word = 512;
  int context_length = 2;  // l words on each side; 0 disables context
  int beam = 4;
  int max_decode_len = 32;
  int max_positions = 512;
  double length_norm_exponent = 0.7;
  double gate_bias_init = -2.0;

  int ffn_dim() const { return d_ff > 0 ? d_ff : 4 * d_model; }
  void validate() const;
};

// Named parameter tensors. Names starting with "ctx." belong to the
// context subset (theta_s); everything else is baseline (theta_w).
class ParamStore {
 public:
  tc::Tensor& add(const std::string& name, tc::Tensor t);
  tc::Tensor& get(const std::string& name);
  const tc::Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return tensors_.count(name) > 0; }

  static bool is_context_param(const std::string& name) {
    return name.rfind("ctx.", 0) == 0;
  }

  std::vector<std::string> names() const;                 // sorted
  std::vector<std::string> names(bool context_subset) const;

  void set_requires_grad(bool baseline, bool context);
  void zero_grads();

 private:
  std::map<std::string, tc::Tensor> tensors_;
};

struct ContextWindow {
  std::vector<int> word_ids;  // exactly 2l ids, PAD at sentence edges
};

// Intermediate activations captured during a forward pass, for
// visualization export and tests.
struct ForwardTrace {
  std::vector<std::vector<tc::Real>> enc_self_attn;  // A_k per layer (flattened)
  std::vector<std::vector<tc::Real>> enc_context;    // M_k sublayer outputs
  std::vector<std::vector<tc::Real>> dec_self;       // B_k per layer
  std::vector<std::vector<tc::Real>> dec_context;    // N_k per layer
  std::vector<std::vector<tc::Real>> lambda;         // gate values per layer [T x d]
  std::vector<int> lambda_rows;
  // enc-dec attention weights, [layers][heads] matrices of T x L.
  std::vector<std::vector<std::vector<tc::Real>>> enc_dec_attn;
  int enc_dec_rows = 0, enc_dec_cols = 0;
  std::vector<tc::Real> final_states;  // T_k
};

struct BeamHypothesis {
  std::vector<int> ids;   // phoneme ids, EOS stripped
  double score = 0.0;     // length-normalized log probability
  bool truncated = false; // hit max_decode_len without EOS
};

class Model {
 public:
  Model(ModelConfig cfg, Vocab graphemes, Vocab phonemes, Vocab words,
        std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  const Vocab& grapheme_vocab() const { return graphemes_; }
  const Vocab& phoneme_vocab() const { return phonemes_; }
  const Vocab& word_vocab() const { return words_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  bool context_enabled() const { return cfg_.context_length > 0; }

  // Window of the 2l words around target_index, PAD-filled at edges.
  ContextWindow make_window(const std::vector<std::string>& words, int target_index) const;

  // Word ids -> embeddings -> width-3 conv -> ReLU; [2l x d_model].
  tc::Tensor encode_context(const ContextWindow& window) const;

  tc::Tensor embed_graphemes(const std::vector<int>& ids) const;

  // encoder: `embedded` is the (optionally perturbed) grapheme embedding
  // matrix including positional encoding, as returned by embed_graphemes.
  tc::Tensor encoder_forward(const tc::Tensor& embedded, const tc::Tensor& context,
                             ForwardTrace* trace = nullptr) const;

  // prefix must start with BOS; returns logits [T x |V_y|].
  tc::Tensor decoder_forward(const std::vector<int>& phoneme_prefix_ids,
                             const tc::Tensor& encoder_states, const tc::Tensor& context,
                             ForwardTrace* trace = nullptr) const;

  // Convenience: full forward from grapheme ids.
  tc::Tensor forward(const std::vector<int>& grapheme_ids,
                     const std::vector<int>& phoneme_prefix_ids,
                     const std::optional<ContextWindow>& window,
                     ForwardTrace* trace = nullptr) const;

  BeamHypothesis beam_search(const std::vector<int>& grapheme_ids,
                             const std::optional<ContextWindow>& window,
                             int beam = 0, int max_len = 0) const;

  std::vector<std::string> convert(const std::string& word,
                                   const std::optional<ContextWindow>& window = std::nullopt) const;

  // Decode then re-run with trace capture for visualization export.
  ForwardTrace trace_conversion(const std::vector<int>& grapheme_ids,
                                const std::optional<ContextWindow>& window,
                                std::vector<int>* decoded_ids = nullptr) const;

  void save_checkpoint(const std::string& path) const;
  static std::unique_ptr<Model> load_checkpoint(const std::string& path);

 private:
  Model() = default;
  void build_params(std::uint64_t seed);
  tc::Tensor positional_encoding(int len) const;

  ModelConfig cfg_;
  Vocab graphemes_, phonemes_, words_;
  ParamStore params_;
};

}  // namespace rg2p
