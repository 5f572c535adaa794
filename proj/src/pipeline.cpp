#include "pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace rg2p::pipeline {

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw UsageError("cannot create directory " + path + ": " + ec.message());
}

bool file_exists(const std::string& path) {
  std::error_code ec;
  return fs::exists(path, ec);
}

// ---------------------------------------------------------------- config

void RunConfig::propagate_seed() {
  noise.seed = derive_seed(seed, "noise");
  train.seed = derive_seed(seed, "train");
}

static AdvNormScope scope_from_name(const std::string& s) {
  if (s == "per-sequence") return AdvNormScope::PerSequence;
  if (s == "per-token") return AdvNormScope::PerToken;
  throw UsageError("unknown norm_scope: " + s);
}

static const char* scope_name(AdvNormScope s) {
  return s == AdvNormScope::PerSequence ? "per-sequence" : "per-token";
}

template <typename T>
static void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("invalid config JSON: ") + e.what());
  }
  RunConfig cfg;
  maybe(j, "seed", cfg.seed);
  maybe(j, "split", cfg.split);
  maybe(j, "misspellings", cfg.misspellings_path);
  if (j.contains("model")) {
    const json& m = j.at("model");
    maybe(m, "layers", cfg.model.layers);
    maybe(m, "heads", cfg.model.heads);
    maybe(m, "d_model", cfg.model.d_model);
    maybe(m, "d_ff", cfg.model.d_ff);
    maybe(m, "d_word", cfg.model.d_word);
    maybe(m, "context_length", cfg.model.context_length);
    maybe(m, "beam", cfg.model.beam);
    maybe(m, "max_decode_len", cfg.model.max_decode_len);
    maybe(m, "length_norm_exponent", cfg.model.length_norm_exponent);
    maybe(m, "gate_bias_init", cfg.model.gate_bias_init);
  }
  if (j.contains("noise")) {
    const json& n = j.at("noise");
    maybe(n, "p", cfg.noise.p);
    maybe(n, "group_weights", cfg.noise.group_weights);
    maybe(n, "vowel_op_weights", cfg.noise.vowel_op_weights);
    maybe(n, "consonant_op_weights", cfg.noise.consonant_op_weights);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    maybe(t, "epsilon", cfg.train.epsilon);
    maybe(t, "adversarial", cfg.train.adversarial);
    maybe(t, "adv_clean_weight", cfg.train.adv_clean_weight);
    maybe(t, "peak_lr", cfg.train.peak_lr);
    maybe(t, "warmup_steps", cfg.train.warmup_steps);
    maybe(t, "adam_beta1", cfg.train.adam_beta1);
    maybe(t, "adam_beta2", cfg.train.adam_beta2);
    maybe(t, "adam_eps", cfg.train.adam_eps);
    maybe(t, "batch_size", cfg.train.batch_size);
    maybe(t, "epochs", cfg.train.epochs);
    maybe(t, "step2_epochs", cfg.train.step2_epochs);
    if (t.contains("norm_scope")) cfg.train.norm_scope = scope_from_name(t.at("norm_scope"));
  }
  if (const char* env = std::getenv("RG2P_MISSPELLINGS")) cfg.misspellings_path = env;
  cfg.propagate_seed();
  cfg.model.validate();
  cfg.noise.validate();
  cfg.train.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return parse_run_config("{}");
  return parse_run_config(read_file(path));
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["split"] = cfg.split;
  if (!cfg.misspellings_path.empty()) j["misspellings"] = cfg.misspellings_path;
  j["model"] = {{"layers", cfg.model.layers},
                {"heads", cfg.model.heads},
                {"d_model", cfg.model.d_model},
                {"d_ff", cfg.model.ffn_dim()},
                {"d_word", cfg.model.d_word},
                {"context_length", cfg.model.context_length},
                {"beam", cfg.model.beam},
                {"max_decode_len", cfg.model.max_decode_len},
                {"length_norm_exponent", cfg.model.length_norm_exponent},
                {"gate_bias_init", cfg.model.gate_bias_init}};
  j["noise"] = {{"p", cfg.noise.p},
                {"group_weights", cfg.noise.group_weights},
                {"vowel_op_weights", cfg.noise.vowel_op_weights},
                {"consonant_op_weights", cfg.noise.consonant_op_weights},
                {"seed", cfg.noise.seed}};
  j["train"] = {{"epsilon", cfg.train.epsilon},
                {"adversarial", cfg.train.adversarial},
                {"norm_scope", scope_name(cfg.train.norm_scope)},
                {"adv_clean_weight", cfg.train.adv_clean_weight},
                {"peak_lr", cfg.train.peak_lr},
                {"warmup_steps", cfg.train.warmup_steps},
                {"adam_beta1", cfg.train.adam_beta1},
                {"adam_beta2", cfg.train.adam_beta2},
                {"adam_eps", cfg.train.adam_eps},
                {"batch_size", cfg.train.batch_size},
                {"epochs", cfg.train.epochs},
                {"step2_epochs", cfg.train.step2_epochs},
                {"seed", cfg.train.seed}};
  return j.dump(2) + "\n";
}

// ------------------------------------------------------------- examples

static std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

static std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

static std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string examples_to_tsv(const std::vector<CorpusExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += join(ex.words, ' ');
    out += '\t';
    out += std::to_string(ex.target_index);
    out += '\t';
    out += ex.clean_word;
    out += '\t';
    out += join(ex.phonemes, ' ');
    out += '\n';
  }
  return out;
}

std::vector<CorpusExample> examples_from_tsv(const std::string& text) {
  std::vector<CorpusExample> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cols = split_on(line, '\t');
    if (cols.size() != 4)
      throw UsageError("example line " + std::to_string(lineno) + ": expected 4 tab-separated columns");
    CorpusExample ex;
    ex.words = split_ws(cols[0]);
    try {
      ex.target_index = std::stoi(cols[1]);
    } catch (const std::exception&) {
      throw UsageError("example line " + std::to_string(lineno) + ": bad target index");
    }
    ex.clean_word = cols[2];
    ex.phonemes = split_ws(cols[3]);
    if (ex.words.empty() || ex.phonemes.empty() || ex.target_index < 0 ||
        ex.target_index >= static_cast<int>(ex.words.size()))
      throw UsageError("example line " + std::to_string(lineno) + ": malformed example");
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<CorpusExample> to_corpus_examples(const std::vector<SentenceExample>& sentences) {
  std::vector<CorpusExample> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) {
    CorpusExample ex;
    ex.words = s.words;
    ex.target_index = s.target_index;
    ex.clean_word = s.words[static_cast<std::size_t>(s.target_index)];
    ex.phonemes = s.phonemes;
    out.push_back(std::move(ex));
  }
  return out;
}

static std::vector<SentenceExample> to_sentence_examples(const std::vector<CorpusExample>& examples) {
  std::vector<SentenceExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    SentenceExample s;
    s.words = ex.words;
    s.target_index = ex.target_index;
    s.phonemes = ex.phonemes;
    out.push_back(std::move(s));
  }
  return out;
}

// -------------------------------------------------------------- prepare

static std::string lexicon_to_text(const Lexicon& lexicon) {
  std::string out;
  for (const auto& e : lexicon.entries()) {
    out += e.word;
    if (e.variant > 0) out += "(" + std::to_string(e.variant) + ")";
    out += "  ";
    out += join(e.phonemes, ' ');
    out += '\n';
  }
  return out;
}

static std::string lines_to_text(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) {
    out += l;
    out += '\n';
  }
  return out;
}

static std::vector<std::string> text_to_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

template <typename T>
static void three_way_split(std::vector<T>& items, const std::array<double, 3>& split,
                            std::uint64_t seed, std::vector<T>& train, std::vector<T>& dev,
                            std::vector<T>& test) {
  double total = split[0] + split[1] + split[2];
  if (!(total > 0.0) || split[0] < 0 || split[1] < 0 || split[2] < 0)
    throw UsageError("split fractions must be non-negative and sum to a positive value");
  Rng rng(seed);
  rng.shuffle(items);
  std::size_t n = items.size();
  auto n_dev = static_cast<std::size_t>(std::llround(n * split[1] / total));
  auto n_test = static_cast<std::size_t>(std::llround(n * split[2] / total));
  if (n_dev + n_test > n) n_test = n - n_dev;
  std::size_t n_train = n - n_dev - n_test;
  train.assign(items.begin(), items.begin() + n_train);
  dev.assign(items.begin() + n_train, items.begin() + n_train + n_dev);
  test.assign(items.begin() + n_train + n_dev, items.end());
}

static Vocab full_grapheme_vocab() {
  std::vector<std::string> symbols{"'"};
  for (char c = 'A'; c <= 'Z'; ++c) symbols.emplace_back(1, c);
  return Vocab(symbols);
}

static std::vector<std::string> user_symbols(const Vocab& v) {
  return {v.symbols().begin() + 4, v.symbols().end()};
}

void cmd_prepare(const std::string& lexicon_path, const std::string& sentences_path,
                 const std::string& out_dir, std::uint64_t seed, std::array<double, 3> split) {
  ParseStats stats;
  Lexicon lexicon = parse_lexicon(lexicon_path, &stats);

  std::vector<SentenceExample> sentences;
  if (!sentences_path.empty()) sentences = load_sentences(sentences_path, lexicon);

  std::set<std::string> word_set;
  for (const auto& e : lexicon.entries()) word_set.insert(e.word);
  std::vector<std::string> words(word_set.begin(), word_set.end());

  std::vector<std::string> wt, wd, wx;
  three_way_split(words, split, derive_seed(seed, "split-words"), wt, wd, wx);

  auto examples = to_corpus_examples(sentences);
  std::vector<CorpusExample> st, sd, sx;
  three_way_split(examples, split, derive_seed(seed, "split-sentences"), st, sd, sx);

  Vocab phonemes = build_vocab(lexicon, sentences, VocabLevel::Phoneme);
  Vocab word_vocab = build_vocab(lexicon, sentences, VocabLevel::Word);
  Vocab graphemes = full_grapheme_vocab();

  ensure_dir(out_dir);
  write_file(out_dir + "/lexicon.txt", lexicon_to_text(lexicon));
  write_file(out_dir + "/words.train.txt", lines_to_text(wt));
  write_file(out_dir + "/words.dev.txt", lines_to_text(wd));
  write_file(out_dir + "/words.test.txt", lines_to_text(wx));
  write_file(out_dir + "/sentences.train.tsv", examples_to_tsv(st));
  write_file(out_dir + "/sentences.dev.tsv", examples_to_tsv(sd));
  write_file(out_dir + "/sentences.test.tsv", examples_to_tsv(sx));
  write_file(out_dir + "/vocab.graphemes.txt", lines_to_text(user_symbols(graphemes)));
  write_file(out_dir + "/vocab.phonemes.txt", lines_to_text(user_symbols(phonemes)));
  write_file(out_dir + "/vocab.words.txt", lines_to_text(user_symbols(word_vocab)));

  json meta;
  meta["seed"] = seed;
  meta["split"] = split;
  meta["lexicon_entries"] = lexicon.size();
  meta["lexicon_skipped"] = stats.skipped_malformed;
  meta["words"] = {{"train", wt.size()}, {"dev", wd.size()}, {"test", wx.size()}};
  meta["sentences"] = {{"train", st.size()}, {"dev", sd.size()}, {"test", sx.size()}};
  write_file(out_dir + "/meta.json", meta.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
  if (!file_exists(dir + "/lexicon.txt"))
    throw UsageError("not a dataset directory (missing lexicon.txt): " + dir);
  Dataset d;
  d.lexicon = parse_lexicon(dir + "/lexicon.txt");
  d.dw_train = text_to_lines(read_file(dir + "/words.train.txt"));
  d.dw_dev = text_to_lines(read_file(dir + "/words.dev.txt"));
  d.dw_test = text_to_lines(read_file(dir + "/words.test.txt"));
  auto load_examples = [&](const std::string& name) -> std::vector<CorpusExample> {
    if (!file_exists(dir + "/" + name)) return {};
    return examples_from_tsv(read_file(dir + "/" + name));
  };
  d.ds_train = load_examples("sentences.train.tsv");
  d.ds_dev = load_examples("sentences.dev.tsv");
  d.ds_test = load_examples("sentences.test.tsv");
  d.graphemes = Vocab(text_to_lines(read_file(dir + "/vocab.graphemes.txt")));
  d.phonemes = Vocab(text_to_lines(read_file(dir + "/vocab.phonemes.txt")));
  d.words = Vocab(text_to_lines(read_file(dir + "/vocab.words.txt")));
  return d;
}

// ---------------------------------------------------------- synth-noise

static std::map<std::string, std::size_t> count_kinds(const CorruptedCorpus& corpus) {
  std::map<std::string, std::size_t> counts;
  for (const auto& rec : corpus.log) {
    if (rec.event)
      ++counts[noise_kind_name(rec.event->kind)];
    else
      ++counts["nat"];
  }
  return counts;
}

SynthSummary cmd_synth_noise(const std::string& input, NoiseMethod method, const NoiseConfig& cfg,
                             const std::string& misspellings_path, const std::string& out_dir) {
  cfg.validate();
  std::string tsv_path = input;
  std::error_code ec;
  if (fs::is_directory(input, ec)) tsv_path = input + "/sentences.train.tsv";
  if (!file_exists(tsv_path)) throw UsageError("no example file at " + tsv_path);

  auto examples = examples_from_tsv(read_file(tsv_path));
  auto sentences = to_sentence_examples(examples);

  MisspellingTable table;
  if (method == NoiseMethod::Nat) {
    if (misspellings_path.empty())
      throw UsageError("nat noise requires a misspelling table (--misspellings or RG2P_MISSPELLINGS)");
    table = load_misspelling_table(misspellings_path);
  }

  CorruptedCorpus corrupted = corrupt_corpus(sentences, method, cfg,
                                             method == NoiseMethod::Nat ? &table : nullptr);

  auto out_examples = to_corpus_examples(corrupted.examples);
  for (std::size_t i = 0; i < out_examples.size(); ++i)
    out_examples[i].clean_word = examples[i].clean_word;

  SynthSummary summary;
  summary.total_examples = examples.size();
  summary.modified = corrupted.log.size();
  summary.infeasible = corrupted.infeasible;
  summary.kind_counts = count_kinds(corrupted);

  ensure_dir(out_dir);
  write_file(out_dir + "/corrupted.tsv", examples_to_tsv(out_examples));
  write_file(out_dir + "/events.jsonl", event_log_to_jsonl(corrupted, cfg.seed));
  json js;
  js["method"] = method == NoiseMethod::Nat ? "nat" : "syn";
  js["p"] = cfg.p;
  js["seed"] = cfg.seed;
  js["total_examples"] = summary.total_examples;
  js["modified"] = summary.modified;
  js["infeasible"] = summary.infeasible;
  js["kind_counts"] = summary.kind_counts;
  write_file(out_dir + "/summary.json", js.dump(2) + "\n");
  return summary;
}

// ------------------------------------------------------------- training

static std::vector<int> encode_graphemes(const Vocab& vocab, const std::string& word) {
  std::vector<int> ids;
  ids.reserve(word.size());
  for (char c : word) ids.push_back(vocab.encode(std::string(1, c)));
  return ids;
}

static std::vector<TrainExample> word_examples(const Dataset& d,
                                               const std::vector<std::string>& manifest,
                                               const Model& model) {
  std::vector<TrainExample> out;
  for (const auto& word : manifest) {
    const auto* phonemes = d.lexicon.find(word);
    if (!phonemes) continue;
    TrainExample ex;
    ex.grapheme_ids = encode_graphemes(model.grapheme_vocab(), word);
    ex.phoneme_ids = model.phoneme_vocab().encode_all(*phonemes);
    out.push_back(std::move(ex));
  }
  return out;
}

static std::vector<TrainExample> sentence_examples(const std::vector<CorpusExample>& corpus,
                                                   const Model& model) {
  std::vector<TrainExample> out;
  for (const auto& ce : corpus) {
    TrainExample ex;
    const std::string& target = ce.words[static_cast<std::size_t>(ce.target_index)];
    ex.grapheme_ids = encode_graphemes(model.grapheme_vocab(), target);
    ex.phoneme_ids = model.phoneme_vocab().encode_all(ce.phonemes);
    if (model.context_enabled()) ex.window = model.make_window(ce.words, ce.target_index);
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {

// Exclusive run lock, removed on destruction.
class LockFile {
 public:
  explicit LockFile(const std::string& path) : path_(path) {
    if (file_exists(path_))
      throw UsageError("run directory is locked (remove " + path_ + " if no run is active)");
    std::ofstream out(path_);
    if (!out) throw UsageError("cannot create lock file " + path_);
    out << "locked\n";
  }
  ~LockFile() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

 private:
  std::string path_;
};

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

struct Phase {
  std::string name;
  const std::vector<TrainExample>* examples = nullptr;
  bool use_context = false;
  bool update_baseline = true;
  bool update_context = true;
  int epochs = 0;
};

}  // namespace

static void append_line(const std::string& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw UsageError("cannot append to " + path);
  out << line << '\n';
}

static std::vector<WordResult> evaluate_examples(const Model& model,
                                                 const std::vector<CorpusExample>& corpus,
                                                 const Lexicon* lexicon,
                                                 const std::map<std::size_t, NoiseKind>* kinds) {
  std::vector<WordResult> results;
  results.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& ce = corpus[i];
    const std::string& input = ce.words[static_cast<std::size_t>(ce.target_index)];
    std::optional<ContextWindow> window;
    if (model.context_enabled()) window = model.make_window(ce.words, ce.target_index);
    WordResult r;
    r.clean_word = ce.clean_word;
    r.input_word = input;
    r.ref = ce.phonemes;
    r.hyp = model.convert(input, window);
    if (lexicon) {
      for (const auto* entry : lexicon->variants(ce.clean_word))
        r.accepted_variants.push_back(entry->phonemes);
    }
    if (kinds) {
      auto it = kinds->find(i);
      if (it != kinds->end()) r.logged_kind = it->second;
    }
    results.push_back(std::move(r));
  }
  return results;
}

static std::vector<WordResult> evaluate_words(const Model& model, const Lexicon& lexicon,
                                              const std::vector<std::string>& manifest) {
  std::vector<WordResult> results;
  for (const auto& word : manifest) {
    const auto* phonemes = lexicon.find(word);
    if (!phonemes) continue;
    WordResult r;
    r.clean_word = word;
    r.input_word = word;
    r.ref = *phonemes;
    r.hyp = model.convert(word);
    for (const auto* entry : lexicon.variants(word)) r.accepted_variants.push_back(entry->phonemes);
    results.push_back(std::move(r));
  }
  return results;
}

void cmd_train(const RunConfig& cfg_in, const std::string& mode, const std::string& data_dir,
               const std::string& run_dir, bool resume) {
  const bool two_step = (mode == "nat" || mode == "syn" || mode == "adv" || mode == "robust");
  if (!two_step && mode != "baseline") throw UsageError("unknown train mode: " + mode);

  RunConfig cfg = cfg_in;
  if (mode == "baseline") cfg.model.context_length = 0;
  if (mode == "adv") cfg.train.adversarial = true;
  if (two_step && cfg.model.context_length < 1)
    throw UsageError("mode " + mode + " requires context_length >= 1");
  cfg.model.validate();
  cfg.train.validate();

  Dataset data = load_dataset(data_dir);
  ensure_dir(run_dir);
  LockFile lock(run_dir + "/.lock");

  const std::string ckpt_path = run_dir + "/checkpoint.ckpt";
  const std::string state_path = run_dir + "/state.bin";
  const std::string runstate_path = run_dir + "/runstate.json";
  const std::string metrics_path = run_dir + "/metrics.jsonl";

  write_file(run_dir + "/config.json", run_config_to_json(cfg));

  // Corrupt the sentence corpus up front for the noise-trained modes so the
  // exact training data is reproducible from the run directory.
  std::vector<CorpusExample> train_sentences = data.ds_train;
  if (mode == "nat" || mode == "syn") {
    if (data.ds_train.empty()) throw UsageError("mode " + mode + " needs a sentence corpus");
    NoiseMethod method = mode == "nat" ? NoiseMethod::Nat : NoiseMethod::Syn;
    cmd_synth_noise(data_dir + "/sentences.train.tsv", method, cfg.noise, cfg.misspellings_path,
                    run_dir);
    train_sentences = examples_from_tsv(read_file(run_dir + "/corrupted.tsv"));
  }

  std::unique_ptr<Model> model;
  TrainState state;
  int phase_index = 0;
  if (resume && file_exists(ckpt_path) && file_exists(state_path) && file_exists(runstate_path)) {
    model = Model::load_checkpoint(ckpt_path);
    state = TrainState::load(state_path);
    json rs = json::parse(read_file(runstate_path));
    phase_index = rs.value("phase_index", 0);
    if (rs.value("status", "") == "complete") return;
  } else {
    model = std::make_unique<Model>(cfg.model, data.graphemes, data.phonemes, data.words,
                                    derive_seed(cfg.seed, "init"));
  }

  auto d_w = word_examples(data, data.dw_train, *model);
  auto d_s = sentence_examples(train_sentences, *model);
  std::vector<TrainExample> combined = d_w;
  combined.insert(combined.end(), d_s.begin(), d_s.end());
  if (combined.empty()) throw UsageError("no training examples in " + data_dir);

  std::vector<Phase> phases;
  if (mode == "baseline") {
    phases.push_back({"baseline", &combined, false, true, true, cfg.train.epochs});
  } else {
    if (d_s.empty()) throw UsageError("mode " + mode + " needs a sentence corpus");
    phases.push_back({"step1", &combined, false, true, false, cfg.train.epochs});
    phases.push_back({"step2", &d_s, true, false, true, cfg.train.step2_epochs});
  }

  double t0 = now_seconds();
  for (; phase_index < static_cast<int>(phases.size()); ++phase_index) {
    const Phase& ph = phases[static_cast<std::size_t>(phase_index)];
    TrainConfig phase_cfg = cfg.train;
    phase_cfg.seed = derive_seed(cfg.train.seed, ph.name);
    // Adversarial perturbation only applies to the baseline fitting phase.
    if (ph.name == "step2") phase_cfg.adversarial = false;

    // Bitwise freeze check for the second step.
    std::map<std::string, std::vector<tc::Real>> frozen;
    if (!ph.update_baseline)
      for (const auto& name : model->params().names(false))
        frozen[name] = model->params().get(name).data();

    model->params().set_requires_grad(ph.update_baseline, ph.update_context);

    auto on_epoch = [&](const EpochMetrics& em) {
      if (!ph.update_baseline) {
        for (const auto& [name, bytes] : frozen) {
          const auto& cur = model->params().get(name).data();
          if (cur.size() != bytes.size() ||
              std::memcmp(cur.data(), bytes.data(), bytes.size() * sizeof(tc::Real)) != 0)
            throw NumericFault("frozen baseline parameter changed: " + name);
        }
      }
      model->save_checkpoint(ckpt_path);
      state.save(state_path);
      json rs;
      rs["phase_index"] = phase_index;
      rs["mode"] = mode;
      rs["status"] = "running";
      write_file(runstate_path, rs.dump() + "\n");
      json line;
      line["phase"] = em.phase;
      line["epoch"] = em.epoch;
      line["loss"] = em.mean_loss;
      line["step"] = state.step;
      line["elapsed_s"] = now_seconds() - t0;
      append_line(metrics_path, line.dump());
    };

    train(*model, state, *ph.examples, phase_cfg, ph.use_context, ph.epochs, ph.update_baseline,
          ph.update_context, on_epoch, ph.name);
    state = TrainState{};  // next phase starts a fresh optimizer
    state.save(state_path);
  }
  model->params().set_requires_grad(true, true);
  model->save_checkpoint(ckpt_path);

  // Dev scores on both corpora for the run log.
  auto dev_words = evaluate_words(*model, data.lexicon, data.dw_dev);
  auto dev_sentences = evaluate_examples(*model, data.ds_dev, &data.lexicon, nullptr);
  auto all_dev = dev_words;
  all_dev.insert(all_dev.end(), dev_sentences.begin(), dev_sentences.end());
  if (!all_dev.empty()) {
    EvalReport report = aggregate_report(all_dev, {{"split", "dev"}, {"mode", mode}});
    json line;
    line["phase"] = "final";
    line["split"] = "dev";
    line["wer"] = report.wer;
    line["per"] = report.per;
    line["words"] = report.total_words;
    line["elapsed_s"] = now_seconds() - t0;
    append_line(metrics_path, line.dump());
  }

  json rs;
  rs["phase_index"] = static_cast<int>(phases.size());
  rs["mode"] = mode;
  rs["status"] = "complete";
  rs["elapsed_s"] = now_seconds() - t0;
  write_file(runstate_path, rs.dump() + "\n");
}

// ------------------------------------------------------------------ eval

static std::map<std::size_t, NoiseKind> load_event_kinds(const std::string& events_path) {
  std::map<std::size_t, NoiseKind> kinds;
  std::istringstream in(read_file(events_path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw UsageError(std::string("bad event log line: ") + e.what());
    }
    if (!j.contains("kind")) continue;
    std::string name = j.at("kind").get<std::string>();
    if (name == "nat") continue;  // table misspellings have no single-edit class
    auto kind = noise_kind_from_name(name);
    if (!kind) throw UsageError("unknown noise kind in event log: " + name);
    kinds[j.at("example_index").get<std::size_t>()] = *kind;
  }
  return kinds;
}

EvalReport cmd_eval(const std::string& checkpoint_path, const std::string& testset_path,
                    const std::string& report_path, const std::string& events_path,
                    const std::string& lexicon_path) {
  auto model = Model::load_checkpoint(checkpoint_path);

  Lexicon lexicon;
  bool have_lexicon = false;
  if (!lexicon_path.empty()) {
    lexicon = parse_lexicon(lexicon_path);
    have_lexicon = true;
  }

  std::map<std::size_t, NoiseKind> kinds;
  if (!events_path.empty()) kinds = load_event_kinds(events_path);

  std::vector<WordResult> results;
  const std::string text = read_file(testset_path);
  if (text.find('\t') != std::string::npos) {
    auto corpus = examples_from_tsv(text);
    results = evaluate_examples(*model, corpus, have_lexicon ? &lexicon : nullptr,
                                events_path.empty() ? nullptr : &kinds);
  } else if (have_lexicon) {
    results = evaluate_words(*model, lexicon, text_to_lines(text));
  } else {
    // lexicon-format testset: word + pronunciation per line
    Lexicon testset = parse_lexicon_text(text);
    for (const auto& e : testset.entries()) {
      if (e.variant != 0) continue;
      WordResult r;
      r.clean_word = e.word;
      r.input_word = e.word;
      r.ref = e.phonemes;
      r.hyp = model->convert(e.word);
      for (const auto* v : testset.variants(e.word)) r.accepted_variants.push_back(v->phonemes);
      results.push_back(std::move(r));
    }
  }

  EvalReport report = aggregate_report(results, {{"testset", testset_path}});
  if (!report_path.empty()) write_file(report_path, report_to_json(report));
  return report;
}

// --------------------------------------------------------------- convert

static AttentionExport build_attention_export(const Model& model, const std::string& word,
                                              const std::vector<int>& grapheme_ids,
                                              const std::optional<ContextWindow>& window) {
  std::vector<int> decoded;
  ForwardTrace trace = model.trace_conversion(grapheme_ids, window, &decoded);
  AttentionExport ex;
  ex.word = word;
  for (int id : decoded) ex.phonemes.push_back(model.phoneme_vocab().decode(id));
  for (std::size_t layer = 0; layer < trace.enc_dec_attn.size(); ++layer) {
    for (std::size_t head = 0; head < trace.enc_dec_attn[layer].size(); ++head) {
      AttentionMatrix m;
      m.layer = static_cast<int>(layer);
      m.head = static_cast<int>(head);
      m.name = "enc_dec";
      m.rows = trace.enc_dec_rows;
      m.cols = trace.enc_dec_cols;
      m.values = trace.enc_dec_attn[layer][head];
      ex.matrices.push_back(std::move(m));
    }
  }
  for (std::size_t layer = 0; layer < trace.lambda.size(); ++layer) {
    const auto& flat = trace.lambda[layer];
    int rows = trace.lambda_rows[layer];
    int cols = rows > 0 ? static_cast<int>(flat.size()) / rows : 0;
    std::vector<double> means;
    for (int r = 0; r < rows; ++r) {
      double s = 0.0;
      for (int c = 0; c < cols; ++c) s += flat[static_cast<std::size_t>(r * cols + c)];
      means.push_back(cols > 0 ? s / cols : 0.0);
    }
    ex.lambda_per_layer.push_back(std::move(means));
  }
  return ex;
}

std::vector<Conversion> cmd_convert(const std::string& checkpoint_path, const std::string& text,
                                    int target_index, const std::string& attention_out) {
  auto model = Model::load_checkpoint(checkpoint_path);
  return convert_text(*model, text, target_index, attention_out);
}

std::vector<Conversion> convert_text(const Model& model, const std::string& text,
                                     int target_index, const std::string& attention_out) {
  std::vector<std::string> words;
  for (const auto& tok : split_ws(text)) {
    std::string w = normalize_word(tok);
    if (!w.empty()) words.push_back(w);
  }
  if (words.empty()) throw UsageError("no convertible words in input");
  if (target_index >= static_cast<int>(words.size()))
    throw UsageError("target index out of range");

  std::vector<int> targets;
  if (target_index >= 0)
    targets.push_back(target_index);
  else
    for (int i = 0; i < static_cast<int>(words.size()); ++i) targets.push_back(i);

  std::vector<Conversion> out;
  for (int k : targets) {
    std::optional<ContextWindow> window;
    if (model.context_enabled() && words.size() > 1) window = model.make_window(words, k);
    Conversion c;
    c.word = words[static_cast<std::size_t>(k)];
    c.phonemes = model.convert(c.word, window);
    out.push_back(std::move(c));
  }

  if (!attention_out.empty()) {
    int k = targets.front();
    std::optional<ContextWindow> window;
    if (model.context_enabled() && words.size() > 1) window = model.make_window(words, k);
    auto ids = encode_graphemes(model.grapheme_vocab(), words[static_cast<std::size_t>(k)]);
    AttentionExport ex = build_attention_export(model, words[static_cast<std::size_t>(k)], ids, window);
    write_file(attention_out, attention_export_to_text(ex));
  }
  return out;
}

// ----------------------------------------------------------------- sweep

static std::string value_tag(double v) {
  std::ostringstream out;
  out << v;
  std::string s = out.str();
  for (auto& c : s)
    if (c == '.') c = '_';
  return s;
}

std::vector<SweepRow> cmd_sweep(const RunConfig& cfg_in, const std::string& mode,
                                const std::string& param, const std::vector<double>& values,
                                const std::string& data_dir, const std::string& out_dir) {
  if (param != "p" && param != "l") throw UsageError("sweep parameter must be p or l");
  if (values.empty()) throw UsageError("sweep needs at least one value");
  ensure_dir(out_dir);

  Dataset data = load_dataset(data_dir);

  std::vector<SweepRow> rows;
  for (double v : values) {
    RunConfig cfg = cfg_in;
    if (param == "p") {
      if (v < 0.0 || v > 1.0) throw UsageError("p must lie in [0, 1]");
      cfg.noise.p = v;
    } else {
      if (v < 0.0 || v != std::floor(v)) throw UsageError("l must be a non-negative integer");
      cfg.model.context_length = static_cast<int>(v);
    }

    std::string run_dir = out_dir + "/run_" + param + "_" + value_tag(v);
    std::string effective_mode = (param == "l" && cfg.model.context_length == 0) ? "baseline" : mode;
    double t0 = now_seconds();
    cmd_train(cfg, effective_mode, data_dir, run_dir, false);
    auto model = Model::load_checkpoint(run_dir + "/checkpoint.ckpt");

    SweepRow row;
    row.value = v;

    auto clean = evaluate_examples(*model, data.ds_test, &data.lexicon, nullptr);
    if (!clean.empty()) {
      EvalReport r = aggregate_report(clean);
      row.clean_wer = r.wer;
      row.clean_per = r.per;
    }

    // Noisy side of the table: syn-corrupted test split at the configured p.
    NoiseConfig test_noise = cfg.noise;
    test_noise.seed = derive_seed(cfg.seed, "sweep-test-noise");
    auto corrupted = corrupt_corpus(to_sentence_examples(data.ds_test), NoiseMethod::Syn, test_noise);
    auto noisy = to_corpus_examples(corrupted.examples);
    for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i].clean_word = data.ds_test[i].clean_word;
    std::map<std::size_t, NoiseKind> kinds;
    for (const auto& rec : corrupted.log)
      if (rec.event) kinds[rec.example_index] = rec.event->kind;
    auto noisy_results = evaluate_examples(*model, noisy, &data.lexicon, &kinds);
    if (!noisy_results.empty()) {
      EvalReport r = aggregate_report(noisy_results);
      row.noisy_wer = r.wer;
      row.noisy_per = r.per;
    }

    row.seconds = now_seconds() - t0;
    rows.push_back(row);
  }

  std::string table = param + "\tclean_wer\tclean_per\tnoisy_wer\tnoisy_per\tseconds\n";
  for (const auto& r : rows) {
    std::ostringstream line;
    line << r.value << '\t' << r.clean_wer << '\t' << r.clean_per << '\t' << r.noisy_wer << '\t'
         << r.noisy_per << '\t' << r.seconds << '\n';
    table += line.str();
  }
  write_file(out_dir + "/sweep.tsv", table);
  return rows;
}

}  // namespace rg2p::pipeline
