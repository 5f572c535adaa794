#include "noise.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace rg2p {

namespace {

constexpr const char* kVowelAlphabet = "AEIOU";
// 'Y' is deliberately absent: an inserted or substituting letter must have
// an unambiguous class regardless of its neighbors.
constexpr const char* kConsonantAlphabet = "BCDFGHJKLMNPQRSTVWXZ";

bool is_true_vowel(char c) {
  switch (std::toupper(static_cast<unsigned char>(c))) {
    case 'A': case 'E': case 'I': case 'O': case 'U':
      return true;
    default:
      return false;
  }
}

bool is_letter(char c) { return std::isalpha(static_cast<unsigned char>(c)); }

}  // namespace

bool is_letter_vowel(const std::string& word, int pos) {
  const char c = word[static_cast<std::size_t>(pos)];
  if (is_true_vowel(c)) return true;
  if (std::toupper(static_cast<unsigned char>(c)) != 'Y') return false;
  const bool left_vowel = pos > 0 && is_true_vowel(word[static_cast<std::size_t>(pos) - 1]);
  const bool right_vowel = pos + 1 < static_cast<int>(word.size()) &&
                           is_true_vowel(word[static_cast<std::size_t>(pos) + 1]);
  return !left_vowel && !right_vowel;
}

const char* noise_kind_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::VIns: return "V_ins";
    case NoiseKind::VDel: return "V_del";
    case NoiseKind::VSub: return "V_sub";
    case NoiseKind::CIns: return "C_ins";
    case NoiseKind::CDel: return "C_del";
    case NoiseKind::CSub: return "C_sub";
    case NoiseKind::CrossSub: return "cross_sub";
  }
  return "?";
}

std::optional<NoiseKind> noise_kind_from_name(const std::string& name) {
  static const std::pair<const char*, NoiseKind> table[] = {
      {"V_ins", NoiseKind::VIns}, {"V_del", NoiseKind::VDel}, {"V_sub", NoiseKind::VSub},
      {"C_ins", NoiseKind::CIns}, {"C_del", NoiseKind::CDel}, {"C_sub", NoiseKind::CSub},
      {"cross_sub", NoiseKind::CrossSub}};
  for (const auto& [n, k] : table) {
    if (name == n) return k;
  }
  return std::nullopt;
}

void NoiseConfig::validate() const {
  if (p < 0.0 || p > 1.0) throw UsageError("noise probability p must lie in [0,1]");
  auto check = [](const std::array<double, 3>& w, const char* name) {
    double total = 0;
    for (double v : w) {
      if (v < 0) throw UsageError(std::string(name) + " weights must be nonnegative");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw UsageError(std::string(name) + " weights must sum to 1");
    }
  };
  check(group_weights, "group");
  check(vowel_op_weights, "vowel op");
  check(consonant_op_weights, "consonant op");
}

MisspellingTable parse_misspelling_table(const std::string& text) {
  MisspellingTable table;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    std::string correct = normalize_word(line.substr(0, tab));
    std::string wrong = normalize_word(line.substr(tab + 1));
    if (correct.empty() || wrong.empty() || correct == wrong) continue;
    table.map[correct].push_back(wrong);
  }
  return table;
}

MisspellingTable load_misspelling_table(const std::string& path) {
  return parse_misspelling_table(read_file(path));
}

SyllableSegmentation syllabify(const std::string& word) {
  if (word.empty()) throw UsageError("syllabify: empty word");
  const int n = static_cast<int>(word.size());

  // Nuclei: maximal runs of vowel letters.
  std::vector<std::pair<int, int>> nuclei;
  int i = 0;
  while (i < n) {
    if (is_letter(word[static_cast<std::size_t>(i)]) && is_letter_vowel(word, i)) {
      int j = i;
      while (j < n && is_letter(word[static_cast<std::size_t>(j)]) && is_letter_vowel(word, j)) ++j;
      nuclei.emplace_back(i, j);
      i = j;
    } else {
      ++i;
    }
  }

  SyllableSegmentation seg;
  if (nuclei.empty()) {
    Syllable s;
    s.start = 0;
    s.end = n;
    s.nucleus_start = s.nucleus_end = n;
    seg.spans.push_back(s);
    return seg;
  }

  std::vector<int> boundaries;  // span start indices
  boundaries.push_back(0);
  for (std::size_t k = 0; k + 1 < nuclei.size(); ++k) {
    const int cluster_start = nuclei[k].second;
    const int cluster_len = nuclei[k + 1].first - cluster_start;
    // One consonant joins the next onset; longer clusters keep one coda letter.
    boundaries.push_back(cluster_len <= 1 ? cluster_start : cluster_start + 1);
  }
  boundaries.push_back(n);

  for (std::size_t k = 0; k < nuclei.size(); ++k) {
    Syllable s;
    s.start = boundaries[k];
    s.end = boundaries[k + 1];
    s.nucleus_start = nuclei[k].first;
    s.nucleus_end = nuclei[k].second;
    seg.spans.push_back(s);
  }
  return seg;
}

NoiseKind sample_noise_op(const NoiseConfig& cfg, Rng& rng) {
  const int group = rng.categorical(cfg.group_weights);
  if (group == 2) return NoiseKind::CrossSub;
  const auto& ops = group == 0 ? cfg.vowel_op_weights : cfg.consonant_op_weights;
  const int op = rng.categorical(ops);
  static const NoiseKind vowel_kinds[] = {NoiseKind::VIns, NoiseKind::VDel, NoiseKind::VSub};
  static const NoiseKind cons_kinds[] = {NoiseKind::CIns, NoiseKind::CDel, NoiseKind::CSub};
  return group == 0 ? vowel_kinds[op] : cons_kinds[op];
}

namespace {

std::vector<int> class_positions(const std::string& word, const Syllable& span, bool vowel) {
  std::vector<int> out;
  for (int p = span.start; p < span.end; ++p) {
    if (!is_letter(word[static_cast<std::size_t>(p)])) continue;
    if (is_letter_vowel(word, p) == vowel) out.push_back(p);
  }
  return out;
}

char pick_letter(const char* alphabet, char exclude, Rng& rng) {
  std::string pool;
  for (const char* c = alphabet; *c; ++c) {
    if (*c != exclude) pool += *c;
  }
  return pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(pool.size()) - 1))];
}

bool kind_feasible(NoiseKind kind, const std::string& word, const Syllable& span) {
  switch (kind) {
    case NoiseKind::VIns:
    case NoiseKind::CIns:
      return true;
    case NoiseKind::VDel:
    case NoiseKind::VSub:
      return !class_positions(word, span, true).empty();
    case NoiseKind::CDel:
    case NoiseKind::CSub:
      return !class_positions(word, span, false).empty();
    case NoiseKind::CrossSub:
      return !class_positions(word, span, true).empty() ||
             !class_positions(word, span, false).empty();
  }
  return false;
}

}  // namespace

std::pair<std::string, std::optional<NoiseEvent>> apply_syn_noise(const std::string& word,
                                                                  const NoiseConfig& cfg,
                                                                  Rng& rng) {
  if (word.empty()) throw UsageError("apply_syn_noise: empty word");
  if (word.size() < 2) return {word, std::nullopt};

  const SyllableSegmentation seg = syllabify(word);
  const int syl_idx = rng.uniform_int(0, static_cast<int>(seg.spans.size()) - 1);
  const Syllable& span = seg.spans[static_cast<std::size_t>(syl_idx)];

  NoiseKind kind = sample_noise_op(cfg, rng);
  for (int attempt = 0; attempt < 8 && !kind_feasible(kind, word, span); ++attempt) {
    kind = sample_noise_op(cfg, rng);
  }
  if (!kind_feasible(kind, word, span)) {
    static const NoiseKind all_kinds[] = {NoiseKind::VIns, NoiseKind::VDel, NoiseKind::VSub,
                                          NoiseKind::CIns, NoiseKind::CDel, NoiseKind::CSub,
                                          NoiseKind::CrossSub};
    std::vector<NoiseKind> feasible;
    for (NoiseKind k : all_kinds) {
      if (kind_feasible(k, word, span)) feasible.push_back(k);
    }
    if (feasible.empty()) return {word, std::nullopt};
    kind = feasible[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(feasible.size()) - 1))];
  }

  NoiseEvent event;
  event.kind = kind;
  event.syllable_index = syl_idx;
  std::string noisy = word;

  switch (kind) {
    case NoiseKind::VIns:
    case NoiseKind::CIns: {
      const bool vowel = kind == NoiseKind::VIns;
      const int pos = rng.uniform_int(span.start, span.end);  // both boundaries allowed
      const char letter = pick_letter(vowel ? kVowelAlphabet : kConsonantAlphabet, 0, rng);
      noisy.insert(static_cast<std::size_t>(pos), 1, letter);
      event.position = pos;
      event.replacement = letter;
      break;
    }
    case NoiseKind::VDel:
    case NoiseKind::CDel: {
      const bool vowel = kind == NoiseKind::VDel;
      const auto candidates = class_positions(word, span, vowel);
      const int pos = candidates[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(candidates.size()) - 1))];
      noisy.erase(static_cast<std::size_t>(pos), 1);
      event.position = pos;
      break;
    }
    case NoiseKind::VSub:
    case NoiseKind::CSub: {
      const bool vowel = kind == NoiseKind::VSub;
      const auto candidates = class_positions(word, span, vowel);
      const int pos = candidates[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(candidates.size()) - 1))];
      const char original = std::toupper(static_cast<unsigned char>(word[static_cast<std::size_t>(pos)]));
      const char letter = pick_letter(vowel ? kVowelAlphabet : kConsonantAlphabet, original, rng);
      noisy[static_cast<std::size_t>(pos)] = letter;
      event.position = pos;
      event.replacement = letter;
      break;
    }
    case NoiseKind::CrossSub: {
      bool vowel_to_cons = rng.bernoulli(0.5);
      auto candidates = class_positions(word, span, vowel_to_cons);
      if (candidates.empty()) {
        vowel_to_cons = !vowel_to_cons;
        candidates = class_positions(word, span, vowel_to_cons);
      }
      const int pos = candidates[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(candidates.size()) - 1))];
      const char letter = pick_letter(vowel_to_cons ? kConsonantAlphabet : kVowelAlphabet, 0, rng);
      noisy[static_cast<std::size_t>(pos)] = letter;
      event.position = pos;
      event.replacement = letter;
      break;
    }
  }
  return {noisy, event};
}

std::string apply_nat_noise(const std::string& word, const MisspellingTable& table, Rng& rng) {
  auto it = table.map.find(normalize_word(word));
  if (it == table.map.end() || it->second.empty()) return word;
  const auto& variants = it->second;
  return variants[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<int>(variants.size()) - 1))];
}

CorruptedCorpus corrupt_corpus(const std::vector<SentenceExample>& examples,
                               NoiseMethod method, const NoiseConfig& cfg,
                               const MisspellingTable* table) {
  cfg.validate();
  if (method == NoiseMethod::Nat && !table) {
    throw UsageError("nat corruption requires a misspelling table");
  }
  CorruptedCorpus out;
  out.examples = examples;
  for (std::size_t i = 0; i < out.examples.size(); ++i) {
    Rng rng(derive_seed(cfg.seed, i));
    if (!rng.bernoulli(cfg.p)) continue;
    SentenceExample& ex = out.examples[i];
    std::string& target = ex.words[static_cast<std::size_t>(ex.target_index)];
    const std::string clean = target;
    if (method == NoiseMethod::Nat) {
      std::string noisy = apply_nat_noise(clean, *table, rng);
      if (noisy != clean) {
        target = noisy;
        out.log.push_back({i, clean, noisy, std::nullopt});
      }
    } else {
      auto [noisy, event] = apply_syn_noise(clean, cfg, rng);
      if (event) {
        target = noisy;
        out.log.push_back({i, clean, noisy, event});
      } else {
        ++out.infeasible;
      }
    }
  }
  return out;
}

namespace {

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

std::string event_log_to_jsonl(const CorruptedCorpus& corpus, std::uint64_t seed) {
  std::ostringstream out;
  for (const auto& rec : corpus.log) {
    out << "{\"example_index\":" << rec.example_index
        << ",\"clean\":\"" << json_escape(rec.clean)
        << "\",\"noisy\":\"" << json_escape(rec.noisy) << "\"";
    if (rec.event) {
      out << ",\"kind\":\"" << noise_kind_name(rec.event->kind)
          << "\",\"position\":" << rec.event->position
          << ",\"syllable_index\":" << rec.event->syllable_index;
      if (rec.event->replacement) {
        out << ",\"replacement\":\"" << rec.event->replacement << "\"";
      }
    } else {
      out << ",\"kind\":\"nat\"";
    }
    out << ",\"seed\":" << seed << "}\n";
  }
  return out.str();
}

}  // namespace rg2p
