#include "lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace rg2p {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) {
    if (cur.back() == '\r') cur.pop_back();
    lines.push_back(cur);
  }
  return lines;
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

Vocab::Vocab(std::vector<std::string> sorted_symbols) {
  symbols_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (auto& s : sorted_symbols) symbols_.push_back(std::move(s));
  for (int i = 0; i < static_cast<int>(symbols_.size()); ++i) lookup_[symbols_[i]] = i;
}

int Vocab::encode(const std::string& symbol) const {
  auto it = lookup_.find(symbol);
  return it == lookup_.end() ? kUnk : it->second;
}

const std::string& Vocab::decode(int id) const {
  if (id < 0 || id >= size()) throw UsageError("vocab id out of range: " + std::to_string(id));
  return symbols_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode_all(const std::vector<std::string>& symbols) const {
  std::vector<int> out;
  out.reserve(symbols.size());
  for (const auto& s : symbols) out.push_back(encode(s));
  return out;
}

void Lexicon::add(LexiconEntry entry) {
  index_[entry.word].push_back(entries_.size());
  entries_.push_back(std::move(entry));
}

const std::vector<std::string>* Lexicon::find(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return nullptr;
  const LexiconEntry* best = nullptr;
  for (std::size_t idx : it->second) {
    const LexiconEntry& e = entries_[idx];
    if (!best || e.variant < best->variant) best = &e;
  }
  return &best->phonemes;
}

std::vector<const LexiconEntry*> Lexicon::variants(const std::string& word) const {
  std::vector<const LexiconEntry*> out;
  auto it = index_.find(word);
  if (it == index_.end()) return out;
  for (std::size_t idx : it->second) out.push_back(&entries_[idx]);
  return out;
}

std::string normalize_word(const std::string& raw) {
  std::string out;
  for (char c : raw) {
    unsigned char u = static_cast<unsigned char>(c);
    if (std::isalpha(u)) {
      out += static_cast<char>(std::toupper(u));
    } else if (c == '\'') {
      out += c;
    }
  }
  return out;
}

Lexicon parse_lexicon_text(const std::string& text, ParseStats* stats) {
  Lexicon lex;
  ParseStats local;
  for (const std::string& line : split_lines(text)) {
    if (line.rfind(";;;", 0) == 0) {
      ++local.skipped_comments;
      continue;
    }
    auto tokens = split_ws(line);
    if (tokens.size() < 2) {
      if (!tokens.empty()) ++local.skipped_malformed;
      continue;
    }
    std::string head = tokens[0];
    int variant = 0;
    auto paren = head.find('(');
    if (paren != std::string::npos && head.back() == ')') {
      std::string num = head.substr(paren + 1, head.size() - paren - 2);
      bool all_digits = !num.empty() &&
          std::all_of(num.begin(), num.end(),
                      [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
      if (all_digits) {
        variant = std::stoi(num);
        head = head.substr(0, paren);
      }
    }
    std::string word = normalize_word(head);
    if (word.empty()) {
      ++local.skipped_malformed;
      continue;
    }
    LexiconEntry e;
    e.word = std::move(word);
    e.variant = variant;
    e.phonemes.assign(tokens.begin() + 1, tokens.end());
    lex.add(std::move(e));
    ++local.parsed;
  }
  if (stats) *stats = local;
  if (lex.size() == 0) throw UsageError("lexicon contains no valid entries");
  return lex;
}

Lexicon parse_lexicon(const std::string& path, ParseStats* stats) {
  return parse_lexicon_text(read_file(path), stats);
}

std::vector<SentenceExample> load_sentences_text(const std::string& text, const Lexicon& lexicon) {
  std::vector<SentenceExample> out;
  for (const std::string& line : split_lines(text)) {
    std::vector<std::string> words;
    for (const std::string& tok : split_ws(line)) {
      std::string w = normalize_word(tok);
      if (!w.empty()) words.push_back(std::move(w));
    }
    if (words.empty()) continue;
    for (int k = 0; k < static_cast<int>(words.size()); ++k) {
      const auto* phonemes = lexicon.find(words[k]);
      if (!phonemes) continue;  // context-only word
      SentenceExample ex;
      ex.words = words;
      ex.target_index = k;
      ex.phonemes = *phonemes;
      out.push_back(std::move(ex));
    }
  }
  if (out.empty()) throw UsageError("sentence corpus yielded no examples");
  return out;
}

std::vector<SentenceExample> load_sentences(const std::string& path, const Lexicon& lexicon) {
  return load_sentences_text(read_file(path), lexicon);
}

std::vector<SentenceExample> pair_noisy_corrected(const std::string& noisy_path,
                                                  const std::string& corrected_path,
                                                  const Lexicon& lexicon,
                                                  NoisyPairStats* stats) {
  auto noisy_lines = split_lines(read_file(noisy_path));
  auto corrected_lines = split_lines(read_file(corrected_path));
  if (noisy_lines.size() != corrected_lines.size()) {
    throw UsageError("noisy/corrected line counts differ: " +
                     std::to_string(noisy_lines.size()) + " vs " +
                     std::to_string(corrected_lines.size()));
  }
  NoisyPairStats local;
  std::vector<SentenceExample> out;
  for (std::size_t i = 0; i < noisy_lines.size(); ++i) {
    std::vector<std::string> noisy_words, corrected_words;
    for (const auto& t : split_ws(noisy_lines[i])) {
      std::string w = normalize_word(t);
      if (!w.empty()) noisy_words.push_back(std::move(w));
    }
    for (const auto& t : split_ws(corrected_lines[i])) {
      std::string w = normalize_word(t);
      if (!w.empty()) corrected_words.push_back(std::move(w));
    }
    if (noisy_words.size() != corrected_words.size()) {
      ++local.skipped_lines;
      continue;
    }
    for (int k = 0; k < static_cast<int>(noisy_words.size()); ++k) {
      const auto* phonemes = lexicon.find(corrected_words[k]);
      if (!phonemes) continue;
      SentenceExample ex;
      ex.words = noisy_words;  // context is the noisy sentence as observed
      ex.target_index = k;
      ex.phonemes = *phonemes;
      out.push_back(std::move(ex));
      ++local.emitted;
    }
  }
  if (stats) *stats = local;
  return out;
}

namespace {

Vocab vocab_from_set(std::set<std::string>& symbols) {
  return Vocab(std::vector<std::string>(symbols.begin(), symbols.end()));
}

void collect(const Lexicon& lexicon, VocabLevel level, std::set<std::string>& symbols) {
  for (const auto& e : lexicon.entries()) {
    switch (level) {
      case VocabLevel::Grapheme:
        for (char c : e.word) symbols.insert(std::string(1, c));
        break;
      case VocabLevel::Phoneme:
        for (const auto& p : e.phonemes) symbols.insert(p);
        break;
      case VocabLevel::Word:
        symbols.insert(e.word);
        break;
    }
  }
}

void collect(const std::vector<SentenceExample>& corpus, VocabLevel level,
             std::set<std::string>& symbols) {
  for (const auto& ex : corpus) {
    switch (level) {
      case VocabLevel::Grapheme:
        for (const auto& w : ex.words)
          for (char c : w) symbols.insert(std::string(1, c));
        break;
      case VocabLevel::Phoneme:
        for (const auto& p : ex.phonemes) symbols.insert(p);
        break;
      case VocabLevel::Word:
        for (const auto& w : ex.words) symbols.insert(w);
        break;
    }
  }
}

}  // namespace

Vocab build_vocab(const Lexicon& lexicon, VocabLevel level) {
  std::set<std::string> symbols;
  collect(lexicon, level, symbols);
  return vocab_from_set(symbols);
}

Vocab build_vocab(const std::vector<SentenceExample>& corpus, VocabLevel level) {
  std::set<std::string> symbols;
  collect(corpus, level, symbols);
  return vocab_from_set(symbols);
}

Vocab build_vocab(const Lexicon& lexicon, const std::vector<SentenceExample>& corpus,
                  VocabLevel level) {
  std::set<std::string> symbols;
  collect(lexicon, level, symbols);
  collect(corpus, level, symbols);
  return vocab_from_set(symbols);
}

}  // namespace rg2p
