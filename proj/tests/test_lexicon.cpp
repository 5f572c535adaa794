#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "lexicon.hpp"

using namespace rg2p;

namespace {

const char* kDict =
    ";;; comment line\n"
    "CAT  K AE1 T\n"
    "READ  R EH1 D\n"
    "READ(1)  R IY1 D\n"
    "WINDOW  W IH1 N D OW0\n"
    "O'CLOCK  AH0 K L AA1 K\n"
    "THE  DH AH0\n"
    "malformed-line-without-phonemes\n";

}  // namespace

TEST_CASE("normalize_word uppercases and keeps only letters and apostrophes") {
  CHECK(normalize_word("Cat!") == "CAT");
  CHECK(normalize_word("o'clock,") == "O'CLOCK");
  CHECK(normalize_word("123") == "");
  CHECK(normalize_word("re-read") == "REREAD");
  CHECK(normalize_word("  hello  ") == "HELLO");
}

TEST_CASE("lexicon parsing handles comments, variants and malformed lines") {
  ParseStats stats;
  Lexicon lex = parse_lexicon_text(kDict, &stats);
  CHECK(stats.parsed == 6);
  CHECK(stats.skipped_comments == 1);
  CHECK(stats.skipped_malformed == 1);

  REQUIRE(lex.find("CAT") != nullptr);
  CHECK(*lex.find("CAT") == std::vector<std::string>{"K", "AE1", "T"});

  // variant 0 wins for lookup, both remain visible
  CHECK(*lex.find("READ") == std::vector<std::string>{"R", "EH1", "D"});
  auto variants = lex.variants("READ");
  REQUIRE(variants.size() == 2);
  CHECK(variants[0]->variant == 0);
  CHECK(variants[1]->variant == 1);
  CHECK(variants[1]->phonemes == std::vector<std::string>{"R", "IY1", "D"});

  CHECK(lex.contains("O'CLOCK"));
  CHECK(lex.find("MISSING") == nullptr);
}

TEST_CASE("empty lexicon input is a usage error") {
  CHECK_THROWS_AS(parse_lexicon_text(""), UsageError);
  CHECK_THROWS_AS(parse_lexicon_text(";;; nothing but comments\n"), UsageError);
  CHECK_THROWS_AS(parse_lexicon("/nonexistent/path/dict.txt"), UsageError);
}

TEST_CASE("vocab reserves pad, bos, eos, unk and maps unknowns to unk") {
  Vocab v({"A", "B", "C"});
  CHECK(v.size() == 7);
  CHECK(v.decode(Vocab::kPad) == "<pad>");
  CHECK(v.decode(Vocab::kBos) == "<bos>");
  CHECK(v.decode(Vocab::kEos) == "<eos>");
  CHECK(v.decode(Vocab::kUnk) == "<unk>");
  CHECK(v.encode("A") == 4);
  CHECK(v.encode("C") == 6);
  CHECK(v.encode("Z") == Vocab::kUnk);
  CHECK(v.encode_all({"B", "Z"}) == std::vector<int>{5, Vocab::kUnk});
  CHECK_THROWS_AS(v.decode(7), UsageError);
  CHECK_THROWS_AS(v.decode(-1), UsageError);
}

TEST_CASE("vocab construction is deterministic for a fixed symbol set") {
  Lexicon lex = parse_lexicon_text(kDict);
  Vocab a = build_vocab(lex, VocabLevel::Grapheme);
  Vocab b = build_vocab(lex, VocabLevel::Grapheme);
  CHECK(a.symbols() == b.symbols());
  CHECK(std::is_sorted(a.symbols().begin() + 4, a.symbols().end()));

  Vocab ph = build_vocab(lex, VocabLevel::Phoneme);
  CHECK(ph.encode("AE1") != Vocab::kUnk);
  CHECK(ph.encode("K") != Vocab::kUnk);

  Vocab words = build_vocab(lex, VocabLevel::Word);
  CHECK(words.encode("CAT") != Vocab::kUnk);
  CHECK(words.encode("READ") != Vocab::kUnk);
}

TEST_CASE("sentence loading yields one example per in-lexicon word") {
  Lexicon lex = parse_lexicon_text(kDict);
  auto examples = load_sentences_text("The cat sat.\nRead the window\n", lex);
  // "sat" is out of lexicon: targets are THE, CAT / READ, THE, WINDOW
  REQUIRE(examples.size() == 5);
  CHECK(examples[0].words == std::vector<std::string>{"THE", "CAT", "SAT"});
  CHECK(examples[0].target_index == 0);
  CHECK(examples[0].phonemes == std::vector<std::string>{"DH", "AH0"});
  CHECK(examples[1].target_index == 1);
  CHECK(examples[1].phonemes == std::vector<std::string>{"K", "AE1", "T"});
  CHECK(examples[2].words == std::vector<std::string>{"READ", "THE", "WINDOW"});
  CHECK(examples[2].phonemes == std::vector<std::string>{"R", "EH1", "D"});
  CHECK(examples[4].target_index == 2);
}

TEST_CASE("noisy/corrected pairing aligns words line by line") {
  Lexicon lex = parse_lexicon_text(kDict);
  NoisyPairStats stats;
  write_file("/tmp/rg2p_noisy.txt", "teh cta\nbroken line here\n");
  write_file("/tmp/rg2p_corrected.txt", "the cat\nshort\n");
  auto examples =
      pair_noisy_corrected("/tmp/rg2p_noisy.txt", "/tmp/rg2p_corrected.txt", lex, &stats);
  REQUIRE(examples.size() == 2);
  CHECK(stats.emitted == 2);
  CHECK(stats.skipped_lines == 1);
  CHECK(examples[0].words == std::vector<std::string>{"TEH", "CTA"});
  CHECK(examples[0].target_index == 0);
  CHECK(examples[0].phonemes == *lex.find("THE"));
  CHECK(examples[1].words == std::vector<std::string>{"TEH", "CTA"});
  CHECK(examples[1].target_index == 1);
  CHECK(examples[1].phonemes == *lex.find("CAT"));
}

TEST_CASE("file round-trip") {
  std::string path = "/tmp/rg2p_lexicon_test.txt";
  write_file(path, "hello\n");
  CHECK(read_file(path) == "hello\n");
  CHECK_THROWS_AS(read_file("/nonexistent/file"), UsageError);
}
