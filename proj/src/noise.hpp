#pragma once

// Controlled corruption of grapheme words: natural misspellings from a
// lookup table (nat) and single-edit synthetic noise confined to one
// syllable (syn). Every modification is recorded as a NoiseEvent so the
// evaluation side can attribute failures to noise kinds.

#include <array>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "lexicon.hpp"
#include "rng.hpp"

namespace rg2p {

enum class NoiseKind { VIns, VDel, VSub, CIns, CDel, CSub, CrossSub };

const char* noise_kind_name(NoiseKind k);
std::optional<NoiseKind> noise_kind_from_name(const std::string& name);

struct Syllable {
  int start = 0;  // inclusive grapheme index
  int end = 0;    // exclusive
  int nucleus_start = 0;  // nucleus range within [start, end); empty if equal
  int nucleus_end = 0;
};

struct SyllableSegmentation {
  std::vector<Syllable> spans;
};

struct NoiseEvent {
  NoiseKind kind = NoiseKind::VSub;
  int position = 0;        // grapheme index in the clean word
  int syllable_index = 0;
  char replacement = 0;    // inserted or substituting letter; 0 for deletions
};

struct NoiseConfig {
  double p = 0.2;
  // {vowel, consonant, cross-substitution}; defaults follow the observed
  // failure shares 4.6 : 4.9 : 2.6 normalized.
  std::array<double, 3> group_weights{0.380, 0.405, 0.215};
  // {insertion, deletion, substitution} within the vowel and consonant groups.
  std::array<double, 3> vowel_op_weights{1.0 / 3, 1.0 / 3, 1.0 / 3};
  std::array<double, 3> consonant_op_weights{1.0 / 3, 1.0 / 3, 1.0 / 3};
  std::uint64_t seed = 0;

  void validate() const;  // throws UsageError on bad distributions
};

struct MisspellingTable {
  // correct word (uppercased) -> misspelled variants (uppercased)
  std::unordered_map<std::string, std::vector<std::string>> map;
};

MisspellingTable load_misspelling_table(const std::string& path);
MisspellingTable parse_misspelling_table(const std::string& text);

// True vowels are a,e,i,o,u; 'y' counts as a vowel only when it has no
// vowel letter adjacent to it in the word.
bool is_letter_vowel(const std::string& word, int pos);

// Consonant-cluster / vowel segmentation: nuclei are maximal vowel runs;
// a single inter-nucleus consonant goes to the next onset, longer clusters
// split as one coda letter plus the rest as onset.
SyllableSegmentation syllabify(const std::string& word);

// Group draw then per-group op draw; cross substitutions have no op draw.
NoiseKind sample_noise_op(const NoiseConfig& cfg, Rng& rng);

// One single-edit corruption inside one uniformly chosen syllable. Returns
// the unchanged word and no event when no edit is feasible.
std::pair<std::string, std::optional<NoiseEvent>> apply_syn_noise(const std::string& word,
                                                                  const NoiseConfig& cfg,
                                                                  Rng& rng);

// Table lookup replacement; identity for words without known misspellings.
std::string apply_nat_noise(const std::string& word, const MisspellingTable& table, Rng& rng);

enum class NoiseMethod { Nat, Syn };

struct CorruptionRecord {
  std::size_t example_index = 0;
  std::string clean;
  std::string noisy;
  std::optional<NoiseEvent> event;  // present for syn edits only
};

struct CorruptedCorpus {
  std::vector<SentenceExample> examples;
  std::vector<CorruptionRecord> log;   // one record per modified word
  std::size_t infeasible = 0;          // syn draws that found no valid edit
};

// Each target word is independently modified with probability cfg.p using a
// per-example RNG stream derived from (cfg.seed, example index); context
// words are left untouched.
CorruptedCorpus corrupt_corpus(const std::vector<SentenceExample>& examples,
                               NoiseMethod method, const NoiseConfig& cfg,
                               const MisspellingTable* table = nullptr);

// Line-delimited JSON, one record per modification; stable field order so
// equal seeds give byte-identical logs.
std::string event_log_to_jsonl(const CorruptedCorpus& corpus, std::uint64_t seed);

}  // namespace rg2p
