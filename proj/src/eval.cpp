#include "eval.hpp"

#include <algorithm>
#include <sstream>

namespace rg2p {

namespace {

template <typename Seq>
int levenshtein(const Seq& a, const Seq& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

int edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  return levenshtein(a, b);
}

int edit_distance(const std::string& a, const std::string& b) {
  return levenshtein(a, b);
}

double phoneme_error_rate(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  if (ref.empty()) throw UsageError("phoneme_error_rate: empty reference");
  return 100.0 * edit_distance(ref, hyp) / static_cast<double>(ref.size());
}

bool is_word_correct(const WordResult& r) {
  if (r.hyp == r.ref) return true;
  for (const auto& v : r.accepted_variants) {
    if (r.hyp == v) return true;
  }
  return false;
}

double word_error_rate(const std::vector<WordResult>& results) {
  if (results.empty()) throw UsageError("word_error_rate: no results");
  std::size_t wrong = 0;
  for (const auto& r : results) {
    if (!is_word_correct(r)) ++wrong;
  }
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(results.size());
}

const char* failure_category_name(FailureCategory c) {
  switch (c) {
    case FailureCategory::Base: return "Base";
    case FailureCategory::VV: return "V-V";
    case FailureCategory::VDel: return "V-_";
    case FailureCategory::VIns: return "_-V";
    case FailureCategory::CC: return "C-C";
    case FailureCategory::CDel: return "C-_";
    case FailureCategory::CIns: return "_-C";
    case FailureCategory::Cross: return "Cross";
  }
  return "?";
}

FailureCategory failure_category_of_kind(NoiseKind k) {
  switch (k) {
    case NoiseKind::VIns: return FailureCategory::VIns;
    case NoiseKind::VDel: return FailureCategory::VDel;
    case NoiseKind::VSub: return FailureCategory::VV;
    case NoiseKind::CIns: return FailureCategory::CIns;
    case NoiseKind::CDel: return FailureCategory::CDel;
    case NoiseKind::CSub: return FailureCategory::CC;
    case NoiseKind::CrossSub: return FailureCategory::Cross;
  }
  return FailureCategory::Base;
}

namespace {

// Class of a letter standing alone: no neighbor context, so 'y' is a vowel
// here (used for inserted/substituting letters, which never come from 'y').
bool lone_letter_vowel(char c) {
  const std::string s(1, c);
  return is_letter_vowel(s, 0);
}

FailureCategory categorize_edit(bool deletion, bool insertion,
                                bool old_vowel, bool new_vowel) {
  if (deletion) return old_vowel ? FailureCategory::VDel : FailureCategory::CDel;
  if (insertion) return new_vowel ? FailureCategory::VIns : FailureCategory::CIns;
  if (old_vowel != new_vowel) return FailureCategory::Cross;
  return old_vowel ? FailureCategory::VV : FailureCategory::CC;
}

}  // namespace

FailureClassification classify_failure(const std::string& clean_word,
                                       const std::string& noisy_word) {
  FailureClassification out;
  if (clean_word == noisy_word) {
    out.category = FailureCategory::Base;
    return out;
  }
  out.multi_edit = edit_distance(clean_word, noisy_word) > 1;

  // First edit in the canonical script: skip the common prefix, then decide
  // by the length difference.
  std::size_t lcp = 0;
  while (lcp < clean_word.size() && lcp < noisy_word.size() && clean_word[lcp] == noisy_word[lcp]) {
    ++lcp;
  }
  if (clean_word.size() > noisy_word.size()) {
    const bool old_vowel = is_letter_vowel(clean_word, static_cast<int>(lcp));
    out.category = categorize_edit(true, false, old_vowel, false);
  } else if (clean_word.size() < noisy_word.size()) {
    const bool new_vowel = lone_letter_vowel(noisy_word[lcp]);
    out.category = categorize_edit(false, true, false, new_vowel);
  } else {
    const bool old_vowel = is_letter_vowel(clean_word, static_cast<int>(lcp));
    const bool new_vowel = lone_letter_vowel(noisy_word[lcp]);
    out.category = categorize_edit(false, false, old_vowel, new_vowel);
  }
  return out;
}

EvalReport aggregate_report(const std::vector<WordResult>& results,
                            std::map<std::string, std::string> metadata) {
  EvalReport report;
  report.metadata = std::move(metadata);
  report.total_words = results.size();
  for (FailureCategory c : {FailureCategory::Base, FailureCategory::VV, FailureCategory::VDel,
                            FailureCategory::VIns, FailureCategory::CC, FailureCategory::CDel,
                            FailureCategory::CIns, FailureCategory::Cross}) {
    report.category_counts[failure_category_name(c)] = 0;
  }

  std::size_t distance_sum = 0, ref_len_sum = 0, wrong = 0;
  for (const auto& r : results) {
    distance_sum += static_cast<std::size_t>(edit_distance(r.ref, r.hyp));
    ref_len_sum += r.ref.size();
    if (is_word_correct(r)) continue;
    ++wrong;
    FailureCategory cat;
    if (r.logged_kind) {
      cat = failure_category_of_kind(*r.logged_kind);
    } else {
      auto cls = classify_failure(r.clean_word, r.input_word);
      cat = cls.category;
      if (cls.multi_edit) ++report.multi_edit_failures;
    }
    ++report.category_counts[failure_category_name(cat)];
  }
  report.total_failures = wrong;
  report.wer = results.empty() ? 0.0 : 100.0 * static_cast<double>(wrong) / results.size();
  report.per = ref_len_sum == 0
                   ? 0.0
                   : 100.0 * static_cast<double>(distance_sum) / static_cast<double>(ref_len_sum);
  return report;
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

std::string report_to_json(const EvalReport& report) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "{\n  \"schema\": \"rg2p-report-v1\",\n  \"metadata\": {";
  bool first = true;
  for (const auto& [k, v] : report.metadata) {
    out << (first ? "\n" : ",\n") << "    \"" << json_escape(k) << "\": \"" << json_escape(v) << "\"";
    first = false;
  }
  out << (first ? "" : "\n  ") << "},\n";
  out << "  \"metrics\": {\n";
  out << "    \"per\": " << report.per << ",\n";
  out << "    \"wer\": " << report.wer << ",\n";
  out << "    \"total_words\": " << report.total_words << ",\n";
  out << "    \"total_failures\": " << report.total_failures << ",\n";
  out << "    \"multi_edit_failures\": " << report.multi_edit_failures << ",\n";
  out << "    \"failure_categories\": {";
  first = true;
  for (const auto& [k, v] : report.category_counts) {
    out << (first ? "\n" : ",\n") << "      \"" << json_escape(k) << "\": " << v;
    first = false;
  }
  out << "\n    }\n  }\n}\n";
  return out.str();
}

std::string attention_export_to_text(const AttentionExport& ex) {
  std::ostringstream out;
  out.precision(9);
  out << "word " << ex.word << "\n";
  out << "phonemes";
  for (const auto& p : ex.phonemes) out << " " << p;
  out << "\n";
  for (std::size_t layer = 0; layer < ex.lambda_per_layer.size(); ++layer) {
    out << "lambda layer=" << layer;
    for (double v : ex.lambda_per_layer[layer]) out << " " << v;
    out << "\n";
  }
  for (const auto& m : ex.matrices) {
    out << "matrix name=" << m.name << " layer=" << m.layer << " head=" << m.head
        << " rows=" << m.rows << " cols=" << m.cols << "\n";
    for (int r = 0; r < m.rows; ++r) {
      for (int c = 0; c < m.cols; ++c) {
        if (c) out << " ";
        out << m.values[static_cast<std::size_t>(r) * m.cols + c];
      }
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace rg2p
