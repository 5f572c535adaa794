#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <string>
#include <vector>

#include "eval.hpp"

using namespace rg2p;

namespace {

// Plain recursive definition used as the oracle for the DP implementation.
int edit_distance_reference(const std::string& a, const std::string& b) {
  if (a.empty()) return static_cast<int>(b.size());
  if (b.empty()) return static_cast<int>(a.size());
  int del = edit_distance_reference(a.substr(1), b) + 1;
  int ins = edit_distance_reference(a, b.substr(1)) + 1;
  int sub = edit_distance_reference(a.substr(1), b.substr(1)) + (a[0] == b[0] ? 0 : 1);
  return std::min({del, ins, sub});
}

std::vector<std::string> all_strings_up_to(int max_len, const std::string& alphabet) {
  std::vector<std::string> out{""};
  std::vector<std::string> frontier{""};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<std::string> next;
    for (const auto& s : frontier) {
      for (char c : alphabet) {
        next.push_back(s + c);
        out.push_back(s + c);
      }
    }
    frontier = std::move(next);
  }
  return out;
}

WordResult make_result(std::string clean, std::string input, std::vector<std::string> ref,
                       std::vector<std::string> hyp) {
  WordResult r;
  r.clean_word = std::move(clean);
  r.input_word = std::move(input);
  r.ref = std::move(ref);
  r.hyp = std::move(hyp);
  return r;
}

}  // namespace

TEST_CASE("edit distance matches the recursive oracle on every short pair") {
  auto strings = all_strings_up_to(4, "ABC");
  for (const auto& a : strings) {
    for (const auto& b : strings) {
      CHECK(edit_distance(a, b) == edit_distance_reference(a, b));
    }
  }
}

TEST_CASE("edit distance over symbol sequences mirrors the string version") {
  CHECK(edit_distance(std::vector<std::string>{"K", "AE1", "T"},
                      std::vector<std::string>{"K", "AA1", "T"}) == 1);
  CHECK(edit_distance(std::vector<std::string>{"K", "AE1", "T"},
                      std::vector<std::string>{}) == 3);
  CHECK(edit_distance(std::vector<std::string>{"A", "B"},
                      std::vector<std::string>{"B", "A", "B"}) == 1);
  // multi-character symbols differ as wholes, not per character
  CHECK(edit_distance(std::vector<std::string>{"AE1"}, std::vector<std::string>{"AE0"}) == 1);
}

TEST_CASE("phoneme error rate is distance over reference length") {
  CHECK(phoneme_error_rate({"K", "AE1", "T"}, {"K", "AE1", "T"}) == 0.0);
  CHECK(phoneme_error_rate({"K", "AE1", "T"}, {"K", "T"}) == doctest::Approx(100.0 / 3));
  CHECK(phoneme_error_rate({"A", "B"}, {"C", "D"}) == doctest::Approx(100.0));
  CHECK_THROWS_AS(phoneme_error_rate({}, {"A"}), UsageError);
}

TEST_CASE("word accuracy accepts any reference variant") {
  auto r = make_result("READ", "READ", {"R", "EH1", "D"}, {"R", "IY1", "D"});
  CHECK_FALSE(is_word_correct(r));
  r.accepted_variants = {{"R", "EH1", "D"}, {"R", "IY1", "D"}};
  CHECK(is_word_correct(r));

  std::vector<WordResult> results = {
      make_result("A", "A", {"AH0"}, {"AH0"}),
      make_result("B", "B", {"B", "IY1"}, {"B", "AY1"}),
  };
  CHECK(word_error_rate(results) == doctest::Approx(50.0));
  CHECK_THROWS_AS(word_error_rate({}), UsageError);
}

TEST_CASE("failure classification recovers the edit class of common misspellings") {
  SUBCASE("vowel for vowel") {
    auto c = classify_failure("THAN", "THEN");
    CHECK(c.category == FailureCategory::VV);
    CHECK_FALSE(c.multi_edit);
  }
  SUBCASE("vowel deleted") {
    auto c = classify_failure("NEIGHBOUR", "NEIGHBOR");
    CHECK(c.category == FailureCategory::VDel);
    CHECK_FALSE(c.multi_edit);
  }
  SUBCASE("vowel inserted") {
    auto c = classify_failure("LOSE", "LOOSE");
    CHECK(c.category == FailureCategory::VIns);
    CHECK_FALSE(c.multi_edit);
  }
  SUBCASE("consonant for consonant") {
    CHECK(classify_failure("CAT", "CAP").category == FailureCategory::CC);
  }
  SUBCASE("consonant deleted and inserted") {
    CHECK(classify_failure("WINDOW", "WIDOW").category == FailureCategory::CDel);
    CHECK(classify_failure("WIDOW", "WINDOW").category == FailureCategory::CIns);
  }
  SUBCASE("class-crossing substitution") {
    CHECK(classify_failure("CAT", "CVT").category == FailureCategory::Cross);
    CHECK(classify_failure("CVT", "CAT").category == FailureCategory::Cross);
  }
  SUBCASE("identical spellings are base failures") {
    auto c = classify_failure("CAT", "CAT");
    CHECK(c.category == FailureCategory::Base);
    CHECK_FALSE(c.multi_edit);
  }
  SUBCASE("multi-edit pairs are flagged and take the first edit") {
    auto c = classify_failure("WINDOW", "WENDEW");
    CHECK(c.multi_edit);
    CHECK(c.category == FailureCategory::VV);
  }
}

TEST_CASE("failure categories map one-to-one from noise kinds") {
  CHECK(failure_category_of_kind(NoiseKind::VSub) == FailureCategory::VV);
  CHECK(failure_category_of_kind(NoiseKind::VDel) == FailureCategory::VDel);
  CHECK(failure_category_of_kind(NoiseKind::VIns) == FailureCategory::VIns);
  CHECK(failure_category_of_kind(NoiseKind::CSub) == FailureCategory::CC);
  CHECK(failure_category_of_kind(NoiseKind::CDel) == FailureCategory::CDel);
  CHECK(failure_category_of_kind(NoiseKind::CIns) == FailureCategory::CIns);
  CHECK(failure_category_of_kind(NoiseKind::CrossSub) == FailureCategory::Cross);
  CHECK(std::string(failure_category_name(FailureCategory::VDel)) == "V-_");
  CHECK(std::string(failure_category_name(FailureCategory::CIns)) == "_-C");
}

TEST_CASE("report aggregation prefers logged kinds over alignment") {
  std::vector<WordResult> results;
  // correct conversion: contributes to totals only
  results.push_back(make_result("CAT", "CAT", {"K", "AE1", "T"}, {"K", "AE1", "T"}));
  // failure on clean input: Base
  results.push_back(make_result("DOG", "DOG", {"D", "AO1", "G"}, {"D", "AA1", "G"}));
  // failure whose spelling pair says V-V
  results.push_back(make_result("THAN", "THEN", {"DH", "AE1", "N"}, {"DH", "EH1", "N"}));
  // logged kind wins even when the alignment would disagree
  auto logged = make_result("THAN", "THEN", {"DH", "AE1", "N"}, {"DH", "EH1", "N"});
  logged.logged_kind = NoiseKind::CrossSub;
  results.push_back(logged);

  EvalReport report = aggregate_report(results, {{"split", "unit"}});
  CHECK(report.total_words == 4);
  CHECK(report.total_failures == 3);
  CHECK(report.wer == doctest::Approx(75.0));
  CHECK(report.category_counts.at("Base") == 1);
  CHECK(report.category_counts.at("V-V") == 1);
  CHECK(report.category_counts.at("Cross") == 1);
  CHECK(report.category_counts.at("C-C") == 0);
  CHECK(report.multi_edit_failures == 0);
  CHECK(report.metadata.at("split") == "unit");

  // per pools distances over pooled reference length: 0+1+1+1 over 12
  CHECK(report.per == doctest::Approx(100.0 * 3 / 12));
}

TEST_CASE("report JSON carries the schema tag and every category") {
  EvalReport report = aggregate_report(
      {make_result("A", "A", {"AH0"}, {"IY1"})}, {{"testset", "x.tsv"}});
  std::string js = report_to_json(report);
  CHECK(js.find("\"schema\": \"rg2p-report-v1\"") != std::string::npos);
  for (const char* cat : {"Base", "V-V", "V-_", "_-V", "C-C", "C-_", "_-C", "Cross"}) {
    CHECK(js.find(std::string("\"") + cat + "\"") != std::string::npos);
  }
  CHECK(js.find("\"wer\": 100.000000") != std::string::npos);
  CHECK(js.find("\"testset\": \"x.tsv\"") != std::string::npos);
}

TEST_CASE("attention export lists gates and matrices in plain text") {
  AttentionExport ex;
  ex.word = "CAT";
  ex.phonemes = {"K", "AE1", "T"};
  ex.lambda_per_layer = {{0.25, 0.5}};
  AttentionMatrix m;
  m.layer = 0;
  m.head = 1;
  m.name = "enc_dec";
  m.rows = 2;
  m.cols = 2;
  m.values = {0.1, 0.9, 0.4, 0.6};
  ex.matrices.push_back(m);
  std::string text = attention_export_to_text(ex);
  CHECK(text.find("word CAT\n") != std::string::npos);
  CHECK(text.find("phonemes K AE1 T\n") != std::string::npos);
  CHECK(text.find("lambda layer=0 0.25 0.5\n") != std::string::npos);
  CHECK(text.find("matrix name=enc_dec layer=0 head=1 rows=2 cols=2\n") != std::string::npos);
  CHECK(text.find("0.1 0.9\n") != std::string::npos);
}
