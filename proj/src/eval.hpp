#pragma once

// Scoring: phoneme/word error rates, the failure-taxonomy classifier over
// (clean, noisy) word pairs, and report aggregation.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lexicon.hpp"
#include "noise.hpp"

namespace rg2p {

// Levenshtein distance with unit costs over generic symbol sequences.
int edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b);
int edit_distance(const std::string& a, const std::string& b);

// 100 * distance / len(ref); corpus-level variant pools distances and lengths.
double phoneme_error_rate(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

struct WordResult {
  std::string clean_word;            // reference spelling
  std::string input_word;            // possibly noisy spelling fed to the model
  std::vector<std::string> ref;      // reference phonemes (variant 0)
  std::vector<std::string> hyp;      // predicted phonemes
  // Alternate reference pronunciations; a hypothesis equal to any is correct.
  std::vector<std::vector<std::string>> accepted_variants;
  std::optional<NoiseKind> logged_kind;  // from the corruption event log
};

bool is_word_correct(const WordResult& r);
double word_error_rate(const std::vector<WordResult>& results);

enum class FailureCategory { Base, VV, VDel, VIns, CC, CDel, CIns, Cross };

const char* failure_category_name(FailureCategory c);
FailureCategory failure_category_of_kind(NoiseKind k);

struct FailureClassification {
  FailureCategory category = FailureCategory::Base;
  bool multi_edit = false;  // pair differs by more than one edit
};

// Attributes a wrong conversion to the orthographic change between the
// clean and the observed spelling. Equal spellings are Base failures;
// multi-edit pairs take the category of the first edit.
FailureClassification classify_failure(const std::string& clean_word,
                                       const std::string& noisy_word);

struct EvalReport {
  double per = 0.0;
  double wer = 0.0;
  std::size_t total_words = 0;
  std::size_t total_failures = 0;
  std::map<std::string, std::size_t> category_counts;  // keyed by category name
  std::size_t multi_edit_failures = 0;
  std::map<std::string, std::string> metadata;
};

// When a result carries a logged noise kind, that kind decides the category;
// otherwise the alignment-based classifier does.
EvalReport aggregate_report(const std::vector<WordResult>& results,
                            std::map<std::string, std::string> metadata = {});

std::string report_to_json(const EvalReport& report);

// Attention/gating data captured during decoding, exported as plain text
// for external plotting; see model.hpp for the trace itself.
struct AttentionMatrix {
  int layer = 0;
  int head = 0;
  std::string name;  // e.g. "enc_dec"
  int rows = 0, cols = 0;
  std::vector<double> values;  // row-major
};

struct AttentionExport {
  std::string word;
  std::vector<std::string> phonemes;
  std::vector<AttentionMatrix> matrices;
  std::vector<std::vector<double>> lambda_per_layer;  // per-position gate means
};

std::string attention_export_to_text(const AttentionExport& ex);

}  // namespace rg2p
