#pragma once

// Pronunciation-dictionary and sentence-corpus ingestion.
//
// Produces the word-level corpus (lexicon entries) and the sentence-level
// corpus (one example per in-lexicon word occurrence), plus the grapheme /
// phoneme / word vocabularies used by the model.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace rg2p {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct LexiconEntry {
  std::string word;                  // uppercased, letters and apostrophes only
  int variant = 0;                   // 0 for the base entry, n for "WORD(n)"
  std::vector<std::string> phonemes; // ARPAbet symbols, stress digits kept
};

struct SentenceExample {
  std::vector<std::string> words;    // normalized sentence tokens
  int target_index = 0;              // which word is converted
  std::vector<std::string> phonemes; // ground truth for the target word
};

// Symbol table with reserved ids 0=PAD, 1=BOS, 2=EOS, 3=UNK.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocab() = default;
  explicit Vocab(std::vector<std::string> sorted_symbols);

  int encode(const std::string& symbol) const;
  const std::string& decode(int id) const;
  std::vector<int> encode_all(const std::vector<std::string>& symbols) const;

  int size() const { return static_cast<int>(symbols_.size()); }
  const std::vector<std::string>& symbols() const { return symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> lookup_;
};

class Lexicon {
 public:
  void add(LexiconEntry entry);
  // Variant-0 phonemes, or the lowest variant present.
  const std::vector<std::string>* find(const std::string& word) const;
  // All variants of a word, for variant-tolerant scoring.
  std::vector<const LexiconEntry*> variants(const std::string& word) const;
  bool contains(const std::string& word) const { return index_.count(word) > 0; }

  const std::vector<LexiconEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<LexiconEntry> entries_;
  std::unordered_map<std::string, std::vector<std::size_t>> index_;
};

struct ParseStats {
  std::size_t parsed = 0;
  std::size_t skipped_comments = 0;
  std::size_t skipped_malformed = 0;
};

// Uppercase; drop everything except A-Z and apostrophe. Empty result means
// the token carries no word material.
std::string normalize_word(const std::string& raw);

// CMUdict 0.7b format: ";;;" comments, "WORD  PH PH PH", "WORD(n)" variants.
// Bytes outside ASCII are tolerated and dropped during normalization.
Lexicon parse_lexicon(const std::string& path, ParseStats* stats = nullptr);
Lexicon parse_lexicon_text(const std::string& text, ParseStats* stats = nullptr);

// One SentenceExample per (sentence, in-lexicon word). Out-of-lexicon words
// stay in the context but are never targets.
std::vector<SentenceExample> load_sentences(const std::string& path, const Lexicon& lexicon);
std::vector<SentenceExample> load_sentences_text(const std::string& text, const Lexicon& lexicon);

// Line-aligned noisy/corrected files -> test examples whose input is the
// noisy spelling and whose target comes from the corrected word.
struct NoisyPairStats {
  std::size_t emitted = 0;
  std::size_t skipped_lines = 0;  // per-line word-count mismatches
};
std::vector<SentenceExample> pair_noisy_corrected(const std::string& noisy_path,
                                                  const std::string& corrected_path,
                                                  const Lexicon& lexicon,
                                                  NoisyPairStats* stats = nullptr);

enum class VocabLevel { Grapheme, Phoneme, Word };

Vocab build_vocab(const Lexicon& lexicon, VocabLevel level);
Vocab build_vocab(const std::vector<SentenceExample>& corpus, VocabLevel level);
// Grapheme/word vocab over both corpora combined.
Vocab build_vocab(const Lexicon& lexicon, const std::vector<SentenceExample>& corpus,
                  VocabLevel level);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace rg2p
