#pragma once

// End-to-end commands behind the CLI and the C API: dataset preparation,
// corpus corruption, training runs, evaluation, conversion and sweeps.
// Every command is deterministic given its inputs and seed, and a run
// directory carries everything needed to reproduce it.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eval.hpp"
#include "model.hpp"
#include "noise.hpp"
#include "training.hpp"

namespace rg2p::pipeline {

struct RunConfig {
  ModelConfig model;
  NoiseConfig noise;
  TrainConfig train;
  std::uint64_t seed = 0;
  std::array<double, 3> split{0.9, 0.05, 0.05};
  std::string misspellings_path;  // RG2P_MISSPELLINGS overrides

  void propagate_seed();  // copies seed into noise/train sub-configs
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);  // empty path -> defaults
std::string run_config_to_json(const RunConfig& cfg);

// --- example TSV: tokens<TAB>target_index<TAB>clean_word<TAB>phonemes ---
struct CorpusExample {
  std::vector<std::string> words;
  int target_index = 0;
  std::string clean_word;  // reference spelling (differs from words[k] when noisy)
  std::vector<std::string> phonemes;
};

std::string examples_to_tsv(const std::vector<CorpusExample>& examples);
std::vector<CorpusExample> examples_from_tsv(const std::string& text);
std::vector<CorpusExample> to_corpus_examples(const std::vector<SentenceExample>& sentences);

struct Dataset {
  Lexicon lexicon;
  std::vector<std::string> dw_train, dw_dev, dw_test;  // word manifests
  std::vector<CorpusExample> ds_train, ds_dev, ds_test;
  Vocab graphemes, phonemes, words;
};

void cmd_prepare(const std::string& lexicon_path, const std::string& sentences_path,
                 const std::string& out_dir, std::uint64_t seed,
                 std::array<double, 3> split = {0.9, 0.05, 0.05});

Dataset load_dataset(const std::string& dir);

struct SynthSummary {
  std::size_t total_examples = 0;
  std::size_t modified = 0;
  std::size_t infeasible = 0;
  std::map<std::string, std::size_t> kind_counts;
};

// `input` is an example TSV or a dataset directory (then sentences.train.tsv).
// Writes <out_dir>/corrupted.tsv, events.jsonl and summary.json.
SynthSummary cmd_synth_noise(const std::string& input, NoiseMethod method,
                             const NoiseConfig& cfg, const std::string& misspellings_path,
                             const std::string& out_dir);

// Training modes. nat/syn corrupt the sentence corpus then run the
// two-step schedule; adv runs the two-step schedule with embedding
// perturbation; robust is the clean two-step; baseline is a plain
// single-phase context-free run.
void cmd_train(const RunConfig& cfg, const std::string& mode, const std::string& data_dir,
               const std::string& run_dir, bool resume = false);

// Testset: example TSV (optionally with an events.jsonl alongside noisy
// data) or a lexicon-format word list. Lexicon path enables
// variant-tolerant word scoring.
EvalReport cmd_eval(const std::string& checkpoint_path, const std::string& testset_path,
                    const std::string& report_path, const std::string& events_path = "",
                    const std::string& lexicon_path = "");

struct Conversion {
  std::string word;
  std::vector<std::string> phonemes;
};

std::vector<Conversion> cmd_convert(const std::string& checkpoint_path, const std::string& text,
                                    int target_index = -1,
                                    const std::string& attention_out = "");

// Same as cmd_convert on an already loaded model.
std::vector<Conversion> convert_text(const Model& model, const std::string& text,
                                     int target_index = -1,
                                     const std::string& attention_out = "");

struct SweepRow {
  double value = 0.0;
  double clean_wer = 0.0, clean_per = 0.0;
  double noisy_wer = 0.0, noisy_per = 0.0;
  double seconds = 0.0;
};

std::vector<SweepRow> cmd_sweep(const RunConfig& cfg, const std::string& mode,
                                const std::string& param, const std::vector<double>& values,
                                const std::string& data_dir, const std::string& out_dir);

// Filesystem helpers shared with tests.
void ensure_dir(const std::string& path);
bool file_exists(const std::string& path);

}  // namespace rg2p::pipeline
