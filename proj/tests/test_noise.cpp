#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <set>
#include <string>

#include "eval.hpp"
#include "noise.hpp"
#include "rng.hpp"

using namespace rg2p;

namespace {

// Replays an event against the clean word; must reproduce the logged noisy
// spelling exactly.
std::string replay_event(const std::string& clean, const NoiseEvent& e) {
  std::string out = clean;
  switch (e.kind) {
    case NoiseKind::VIns:
    case NoiseKind::CIns:
      out.insert(static_cast<std::size_t>(e.position), 1, e.replacement);
      break;
    case NoiseKind::VDel:
    case NoiseKind::CDel:
      out.erase(static_cast<std::size_t>(e.position), 1);
      break;
    default:
      out[static_cast<std::size_t>(e.position)] = e.replacement;
      break;
  }
  return out;
}

std::string random_cvcv_word(Rng& rng, int syllables) {
  static const std::string cons = "BDKLMNPRST";
  static const std::string vows = "AEIOU";
  std::string w;
  for (int i = 0; i < syllables; ++i) {
    w += cons[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(cons.size()) - 1))];
    w += vows[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(vows.size()) - 1))];
  }
  return w;
}

std::vector<SentenceExample> single_word_corpus(const std::vector<std::string>& words) {
  std::vector<SentenceExample> out;
  for (const auto& w : words) {
    SentenceExample ex;
    ex.words = {w};
    ex.target_index = 0;
    ex.phonemes = {"X"};
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

TEST_CASE("y counts as a vowel only without adjacent true vowels") {
  CHECK(is_letter_vowel("RHYTHM", 2));   // H_Y_T
  CHECK(is_letter_vowel("BY", 1));       // B_Y
  CHECK_FALSE(is_letter_vowel("YES", 0));   // Y before E
  CHECK_FALSE(is_letter_vowel("DAY", 2));   // A before Y
  CHECK(is_letter_vowel("CAT", 1));
  CHECK_FALSE(is_letter_vowel("CAT", 0));
  CHECK_FALSE(is_letter_vowel("CAT", 2));
}

TEST_CASE("syllabification splits on consonant clusters") {
  SUBCASE("single syllable") {
    auto seg = syllabify("CAT");
    REQUIRE(seg.spans.size() == 1);
    CHECK(seg.spans[0].start == 0);
    CHECK(seg.spans[0].end == 3);
    CHECK(seg.spans[0].nucleus_start == 1);
    CHECK(seg.spans[0].nucleus_end == 2);
  }
  SUBCASE("two-consonant cluster splits one coda, one onset") {
    auto seg = syllabify("WINDOW");  // WIN | DOW
    REQUIRE(seg.spans.size() == 2);
    CHECK(seg.spans[0].start == 0);
    CHECK(seg.spans[0].end == 3);
    CHECK(seg.spans[1].start == 3);
    CHECK(seg.spans[1].end == 6);
  }
  SUBCASE("single consonant joins the next onset") {
    auto seg = syllabify("ABOUT");  // A | BOUT
    REQUIRE(seg.spans.size() == 2);
    CHECK(seg.spans[0].end == 1);
    CHECK(seg.spans[1].start == 1);
    CHECK(seg.spans[1].nucleus_start == 2);
    CHECK(seg.spans[1].nucleus_end == 4);
  }
  SUBCASE("one-letter word") {
    auto seg = syllabify("A");
    REQUIRE(seg.spans.size() == 1);
    CHECK(seg.spans[0].start == 0);
    CHECK(seg.spans[0].end == 1);
  }
  SUBCASE("no vowels at all") {
    auto seg = syllabify("SHH");
    REQUIRE(seg.spans.size() == 1);
    CHECK(seg.spans[0].nucleus_start == seg.spans[0].nucleus_end);
  }
  SUBCASE("spans tile the word") {
    Rng rng(7);
    for (int t = 0; t < 200; ++t) {
      std::string w = random_cvcv_word(rng, rng.uniform_int(1, 4));
      auto seg = syllabify(w);
      int expect = 0;
      for (const auto& s : seg.spans) {
        CHECK(s.start == expect);
        CHECK(s.start < s.end);
        expect = s.end;
      }
      CHECK(expect == static_cast<int>(w.size()));
    }
  }
}

TEST_CASE("config validation rejects malformed distributions") {
  NoiseConfig cfg;
  cfg.validate();
  cfg.p = -0.1;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg.p = 1.5;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg.p = 0.2;
  cfg.group_weights = {0.5, 0.4, 0.3};
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg.group_weights = {-0.1, 0.6, 0.5};
  CHECK_THROWS_AS(cfg.validate(), UsageError);
}

TEST_CASE("synthetic noise makes exactly one in-syllable edit of the logged kind") {
  NoiseConfig cfg;
  cfg.seed = 99;
  Rng word_rng(5);
  Rng noise_rng(31);
  int edits = 0;
  for (int t = 0; t < 5000; ++t) {
    std::string word = random_cvcv_word(word_rng, word_rng.uniform_int(1, 4));
    auto [noisy, event] = apply_syn_noise(word, cfg, noise_rng);
    REQUIRE(event.has_value());
    ++edits;

    // single edit
    CHECK(edit_distance(word, noisy) == 1);
    CHECK(replay_event(word, *event) == noisy);

    // edit confined to the drawn syllable
    auto seg = syllabify(word);
    REQUIRE(event->syllable_index < static_cast<int>(seg.spans.size()));
    const Syllable& span = seg.spans[static_cast<std::size_t>(event->syllable_index)];
    const bool insertion = event->kind == NoiseKind::VIns || event->kind == NoiseKind::CIns;
    CHECK(event->position >= span.start);
    CHECK(event->position <= (insertion ? span.end : span.end - 1));

    // the logged kind matches what actually happened
    switch (event->kind) {
      case NoiseKind::VIns:
        CHECK(noisy.size() == word.size() + 1);
        CHECK(is_letter_vowel(noisy, event->position));
        break;
      case NoiseKind::CIns:
        CHECK(noisy.size() == word.size() + 1);
        CHECK_FALSE(is_letter_vowel(noisy, event->position));
        break;
      case NoiseKind::VDel:
        CHECK(noisy.size() == word.size() - 1);
        CHECK(is_letter_vowel(word, event->position));
        break;
      case NoiseKind::CDel:
        CHECK(noisy.size() == word.size() - 1);
        CHECK_FALSE(is_letter_vowel(word, event->position));
        break;
      case NoiseKind::VSub:
        CHECK(noisy.size() == word.size());
        CHECK(is_letter_vowel(word, event->position));
        CHECK(is_letter_vowel(noisy, event->position));
        CHECK(noisy[static_cast<std::size_t>(event->position)] !=
              word[static_cast<std::size_t>(event->position)]);
        break;
      case NoiseKind::CSub:
        CHECK(noisy.size() == word.size());
        CHECK_FALSE(is_letter_vowel(word, event->position));
        CHECK_FALSE(is_letter_vowel(noisy, event->position));
        CHECK(noisy[static_cast<std::size_t>(event->position)] !=
              word[static_cast<std::size_t>(event->position)]);
        break;
      case NoiseKind::CrossSub:
        CHECK(noisy.size() == word.size());
        CHECK(is_letter_vowel(word, event->position) != is_letter_vowel(noisy, event->position));
        break;
    }
  }
  CHECK(edits == 5000);
}

TEST_CASE("words shorter than two letters pass through unchanged") {
  NoiseConfig cfg;
  Rng rng(3);
  auto [noisy, event] = apply_syn_noise("A", cfg, rng);
  CHECK(noisy == "A");
  CHECK_FALSE(event.has_value());
  CHECK_THROWS_AS(apply_syn_noise("", cfg, rng), UsageError);
}

TEST_CASE("corruption rate stays within three sigma of the binomial at p=0.2") {
  const std::size_t n = 100000;
  Rng word_rng(17);
  std::vector<std::string> words;
  words.reserve(n);
  for (std::size_t i = 0; i < n; ++i) words.push_back(random_cvcv_word(word_rng, 2));
  NoiseConfig cfg;
  cfg.p = 0.2;
  cfg.seed = 1234;
  auto corpus = corrupt_corpus(single_word_corpus(words), NoiseMethod::Syn, cfg);
  CHECK(corpus.infeasible == 0);
  double rate = static_cast<double>(corpus.log.size()) / static_cast<double>(n);
  double sigma = std::sqrt(0.2 * 0.8 / static_cast<double>(n));
  CHECK(std::abs(rate - 0.2) <= 3 * sigma);
}

TEST_CASE("kind frequencies match the configured mixture within one percent") {
  const std::size_t n = 100000;
  Rng word_rng(23);
  std::vector<std::string> words;
  words.reserve(n);
  // every syllable holds a consonant and a vowel, so every kind is feasible
  for (std::size_t i = 0; i < n; ++i) words.push_back(random_cvcv_word(word_rng, 2));
  NoiseConfig cfg;
  cfg.p = 1.0;
  cfg.seed = 777;
  auto corpus = corrupt_corpus(single_word_corpus(words), NoiseMethod::Syn, cfg);
  REQUIRE(corpus.log.size() == n);

  std::map<std::string, double> freq;
  for (const auto& rec : corpus.log) freq[noise_kind_name(rec.event->kind)] += 1.0 / n;

  const double v_each = cfg.group_weights[0] / 3;
  const double c_each = cfg.group_weights[1] / 3;
  CHECK(std::abs(freq["V_ins"] - v_each) <= 0.01);
  CHECK(std::abs(freq["V_del"] - v_each) <= 0.01);
  CHECK(std::abs(freq["V_sub"] - v_each) <= 0.01);
  CHECK(std::abs(freq["C_ins"] - c_each) <= 0.01);
  CHECK(std::abs(freq["C_del"] - c_each) <= 0.01);
  CHECK(std::abs(freq["C_sub"] - c_each) <= 0.01);
  CHECK(std::abs(freq["cross_sub"] - cfg.group_weights[2]) <= 0.01);
}

TEST_CASE("corruption is deterministic in the seed and independent of corpus order") {
  Rng word_rng(29);
  std::vector<std::string> words;
  for (int i = 0; i < 50; ++i) words.push_back(random_cvcv_word(word_rng, 3));
  auto corpus = single_word_corpus(words);
  NoiseConfig cfg;
  cfg.p = 0.5;
  cfg.seed = 42;

  auto a = corrupt_corpus(corpus, NoiseMethod::Syn, cfg);
  auto b = corrupt_corpus(corpus, NoiseMethod::Syn, cfg);
  REQUIRE(a.log.size() == b.log.size());
  CHECK(event_log_to_jsonl(a, cfg.seed) == event_log_to_jsonl(b, cfg.seed));
  for (std::size_t i = 0; i < a.examples.size(); ++i)
    CHECK(a.examples[i].words == b.examples[i].words);

  // a prefix of the corpus corrupts identically: example streams are
  // derived per index, not drawn from one shared sequence
  auto prefix = corpus;
  prefix.resize(20);
  auto c = corrupt_corpus(prefix, NoiseMethod::Syn, cfg);
  for (std::size_t i = 0; i < c.examples.size(); ++i)
    CHECK(c.examples[i].words == a.examples[i].words);

  cfg.seed = 43;
  auto d = corrupt_corpus(corpus, NoiseMethod::Syn, cfg);
  bool any_diff = false;
  for (std::size_t i = 0; i < d.examples.size(); ++i)
    if (d.examples[i].words != a.examples[i].words) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("only the target word of a sentence is corrupted") {
  SentenceExample ex;
  ex.words = {"HELLO", "WINDOW", "THERE"};
  ex.target_index = 1;
  ex.phonemes = {"W", "IH1", "N", "D", "OW0"};
  NoiseConfig cfg;
  cfg.p = 1.0;
  cfg.seed = 9;
  auto corpus = corrupt_corpus({ex}, NoiseMethod::Syn, cfg);
  REQUIRE(corpus.log.size() == 1);
  CHECK(corpus.examples[0].words[0] == "HELLO");
  CHECK(corpus.examples[0].words[2] == "THERE");
  CHECK(corpus.examples[0].words[1] != "WINDOW");
  CHECK(corpus.examples[0].phonemes == ex.phonemes);
}

TEST_CASE("natural noise replaces from the table and passes unknown words through") {
  auto table = parse_misspelling_table(
      "occurred\toccured\npronunciation\tpronounciation\nword\tword\n");
  CHECK(table.map.count("OCCURRED") == 1);
  CHECK(table.map.count("WORD") == 0);  // identical pair dropped

  Rng rng(1);
  CHECK(apply_nat_noise("OCCURRED", table, rng) == "OCCURED");
  CHECK(apply_nat_noise("occurred", table, rng) == "OCCURED");
  CHECK(apply_nat_noise("UNLISTED", table, rng) == "UNLISTED");

  NoiseConfig cfg;
  cfg.p = 1.0;
  cfg.seed = 2;
  auto corpus =
      corrupt_corpus(single_word_corpus({"OCCURRED", "PRONUNCIATION", "OTHER"}), NoiseMethod::Nat,
                     cfg, &table);
  REQUIRE(corpus.log.size() == 2);
  CHECK(corpus.log[0].noisy == "OCCURED");
  CHECK(corpus.log[1].noisy == "PRONOUNCIATION");
  CHECK_FALSE(corpus.log[0].event.has_value());

  CHECK_THROWS_AS(corrupt_corpus({}, NoiseMethod::Nat, cfg, nullptr), UsageError);
}

TEST_CASE("event log lines carry stable fields") {
  NoiseConfig cfg;
  cfg.p = 1.0;
  cfg.seed = 5;
  auto corpus = corrupt_corpus(single_word_corpus({"WINDOW"}), NoiseMethod::Syn, cfg);
  REQUIRE(corpus.log.size() == 1);
  std::string jsonl = event_log_to_jsonl(corpus, cfg.seed);
  CHECK(jsonl.find("\"example_index\":0") != std::string::npos);
  CHECK(jsonl.find("\"clean\":\"WINDOW\"") != std::string::npos);
  CHECK(jsonl.find("\"kind\":\"") != std::string::npos);
  CHECK(jsonl.find("\"position\":") != std::string::npos);
  CHECK(jsonl.find("\"syllable_index\":") != std::string::npos);
  CHECK(jsonl.find("\"seed\":5") != std::string::npos);
  CHECK(jsonl.back() == '\n');
}

TEST_CASE("noise kind names round-trip") {
  for (NoiseKind k : {NoiseKind::VIns, NoiseKind::VDel, NoiseKind::VSub, NoiseKind::CIns,
                      NoiseKind::CDel, NoiseKind::CSub, NoiseKind::CrossSub}) {
    auto back = noise_kind_from_name(noise_kind_name(k));
    REQUIRE(back.has_value());
    CHECK(*back == k);
  }
  CHECK_FALSE(noise_kind_from_name("bogus").has_value());
}
