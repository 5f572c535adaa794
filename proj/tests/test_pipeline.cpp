#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <string>

#include "pipeline.hpp"

using namespace rg2p;
using namespace rg2p::pipeline;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  std::string path;
  explicit TempDir(const std::string& name) : path("/tmp/rg2p_pipe_" + name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& child) const { return path + "/" + child; }
};

const char* kLexicon =
    "CAT  K AE T\n"
    "DOG  D AO G\n"
    "SUN  S AH N\n"
    "MOON  M UW N\n"
    "STAR  S T AA R\n"
    "LAKE  L EY K\n"
    "TREE  T R IY\n"
    "BIRD  B ER D\n"
    "FISH  F IH SH\n"
    "WIND  W IH N D\n";

const char* kSentences =
    "the cat saw the dog\n"
    "a bird in the tree\n"
    "sun and moon and star\n"
    "fish in the lake\n"
    "wind over the lake\n"
    "the dog saw the bird\n"
    "a star over the moon\n"
    "the fish saw the sun\n";

// small enough to train inside a unit test
const char* kTinyConfig = R"({
  "seed": 11,
  "model": {"layers": 1, "heads": 2, "d_model": 8, "d_ff": 16, "d_word": 8,
            "context_length": 1, "beam": 2, "max_decode_len": 6},
  "train": {"epochs": 2, "step2_epochs": 2, "batch_size": 4, "warmup_steps": 5}
})";

std::string prepare_fixture(const TempDir& dir) {
  write_file(dir / "lexicon.txt", kLexicon);
  write_file(dir / "sentences.txt", kSentences);
  std::string data = dir / "data";
  cmd_prepare(dir / "lexicon.txt", dir / "sentences.txt", data, 5, {0.6, 0.2, 0.2});
  return data;
}

}  // namespace

TEST_CASE("run config parsing applies defaults and rejects bad JSON") {
  RunConfig def = parse_run_config("{}");
  CHECK(def.model.layers == 4);
  CHECK(def.model.d_model == 128);
  CHECK(def.noise.p == doctest::Approx(0.2));
  CHECK(def.train.adv_clean_weight == doctest::Approx(0.5));

  RunConfig cfg = parse_run_config(kTinyConfig);
  CHECK(cfg.seed == 11);
  CHECK(cfg.model.layers == 1);
  CHECK(cfg.model.context_length == 1);
  CHECK(cfg.train.epochs == 2);
  // sub-seeds are derived from the master seed
  CHECK(cfg.noise.seed != 0);
  CHECK(cfg.train.seed != 0);
  CHECK(cfg.noise.seed != cfg.train.seed);

  CHECK_THROWS_AS(parse_run_config("{nope"), UsageError);
  CHECK_THROWS_AS(parse_run_config(R"({"model":{"heads":3,"d_model":8}})"), UsageError);
  CHECK_THROWS_AS(parse_run_config(R"({"train":{"norm_scope":"bogus"}})"), UsageError);

  // echo parses back to the same values
  RunConfig echoed = parse_run_config(run_config_to_json(cfg));
  CHECK(echoed.model.layers == cfg.model.layers);
  CHECK(echoed.seed == cfg.seed);
}

TEST_CASE("example TSV round-trips and validates") {
  std::vector<CorpusExample> examples;
  CorpusExample ex;
  ex.words = {"THE", "CTA", "SAT"};
  ex.target_index = 1;
  ex.clean_word = "CAT";
  ex.phonemes = {"K", "AE", "T"};
  examples.push_back(ex);
  auto parsed = examples_from_tsv(examples_to_tsv(examples));
  REQUIRE(parsed.size() == 1);
  CHECK(parsed[0].words == ex.words);
  CHECK(parsed[0].target_index == 1);
  CHECK(parsed[0].clean_word == "CAT");
  CHECK(parsed[0].phonemes == ex.phonemes);

  CHECK_THROWS_AS(examples_from_tsv("one column only\n"), UsageError);
  CHECK_THROWS_AS(examples_from_tsv("A B\t5\tA\tX Y\n"), UsageError);
}

TEST_CASE("prepare writes a loadable dataset with disjoint splits") {
  TempDir dir("prepare");
  std::string data = prepare_fixture(dir);

  Dataset d = load_dataset(data);
  CHECK(d.lexicon.size() == 10);
  CHECK(d.dw_train.size() + d.dw_dev.size() + d.dw_test.size() == 10);
  CHECK_FALSE(d.dw_train.empty());
  CHECK_FALSE(d.ds_train.empty());
  // every grapheme the noise model can produce is representable
  CHECK(d.graphemes.size() == 4 + 27);
  CHECK(d.words.encode("CAT") != Vocab::kUnk);
  CHECK(d.phonemes.encode("AE") != Vocab::kUnk);

  // same seed reproduces the same split
  std::string data2 = dir / "data2";
  cmd_prepare(dir / "lexicon.txt", dir / "sentences.txt", data2, 5, {0.6, 0.2, 0.2});
  CHECK(read_file(data + "/words.train.txt") == read_file(data2 + "/words.train.txt"));
  CHECK(read_file(data + "/sentences.train.tsv") == read_file(data2 + "/sentences.train.tsv"));

  std::string data3 = dir / "data3";
  cmd_prepare(dir / "lexicon.txt", dir / "sentences.txt", data3, 6, {0.6, 0.2, 0.2});
  CHECK(read_file(data + "/words.train.txt") != read_file(data3 + "/words.train.txt"));

  CHECK_THROWS_AS(load_dataset(dir / "missing"), UsageError);
}

TEST_CASE("synth-noise writes corrupted corpus, events and summary") {
  TempDir dir("synth");
  std::string data = prepare_fixture(dir);

  NoiseConfig cfg;
  cfg.p = 1.0;
  cfg.seed = 3;
  std::string out = dir / "noise";
  SynthSummary summary = cmd_synth_noise(data, NoiseMethod::Syn, cfg, "", out);
  CHECK(summary.total_examples > 0);
  CHECK(summary.modified > 0);
  CHECK(summary.modified <= summary.total_examples);

  auto corrupted = examples_from_tsv(read_file(out + "/corrupted.tsv"));
  auto originals = examples_from_tsv(read_file(data + "/sentences.train.tsv"));
  REQUIRE(corrupted.size() == originals.size());
  std::size_t changed = 0;
  for (std::size_t i = 0; i < corrupted.size(); ++i) {
    CHECK(corrupted[i].clean_word ==
          originals[i].words[static_cast<std::size_t>(originals[i].target_index)]);
    if (corrupted[i].words[static_cast<std::size_t>(corrupted[i].target_index)] !=
        corrupted[i].clean_word)
      ++changed;
  }
  CHECK(changed == summary.modified);
  CHECK(read_file(out + "/events.jsonl").find("\"kind\"") != std::string::npos);
  CHECK(read_file(out + "/summary.json").find("\"method\": \"syn\"") != std::string::npos);

  CHECK_THROWS_AS(cmd_synth_noise(data, NoiseMethod::Nat, cfg, "", dir / "nat"), UsageError);
  CHECK_THROWS_AS(cmd_synth_noise(dir / "missing.tsv", NoiseMethod::Syn, cfg, "", out), UsageError);
}

TEST_CASE("baseline training produces a run directory with a usable checkpoint") {
  TempDir dir("train_base");
  std::string data = prepare_fixture(dir);
  RunConfig cfg = parse_run_config(kTinyConfig);
  std::string run = dir / "run";
  cmd_train(cfg, "baseline", data, run, false);

  CHECK(file_exists(run + "/checkpoint.ckpt"));
  CHECK(file_exists(run + "/config.json"));
  CHECK(file_exists(run + "/metrics.jsonl"));
  CHECK(file_exists(run + "/runstate.json"));
  CHECK_FALSE(file_exists(run + "/.lock"));
  CHECK(read_file(run + "/runstate.json").find("\"status\":\"complete\"") != std::string::npos);
  // baseline forces the context off in the resolved config echo
  CHECK(read_file(run + "/config.json").find("\"context_length\": 0") != std::string::npos);

  auto model = Model::load_checkpoint(run + "/checkpoint.ckpt");
  CHECK_FALSE(model->context_enabled());
  auto conversions = cmd_convert(run + "/checkpoint.ckpt", "cat", -1, "");
  REQUIRE(conversions.size() == 1);
  CHECK(conversions[0].word == "CAT");

  // the run can be scored against the word testset
  EvalReport report = cmd_eval(run + "/checkpoint.ckpt", data + "/words.test.txt",
                               dir / "report.json", "", data + "/lexicon.txt");
  CHECK(report.total_words > 0);
  CHECK(read_file(dir / "report.json").find("rg2p-report-v1") != std::string::npos);
}

TEST_CASE("two-step modes corrupt, train both phases and log them") {
  TempDir dir("train_syn");
  std::string data = prepare_fixture(dir);
  RunConfig cfg = parse_run_config(kTinyConfig);
  std::string run = dir / "run";
  cmd_train(cfg, "syn", data, run, false);

  CHECK(file_exists(run + "/corrupted.tsv"));
  CHECK(file_exists(run + "/events.jsonl"));
  std::string metrics = read_file(run + "/metrics.jsonl");
  CHECK(metrics.find("\"phase\":\"step1\"") != std::string::npos);
  CHECK(metrics.find("\"phase\":\"step2\"") != std::string::npos);
  CHECK(metrics.find("\"elapsed_s\"") != std::string::npos);

  auto model = Model::load_checkpoint(run + "/checkpoint.ckpt");
  CHECK(model->context_enabled());

  // evaluating the corrupted training file with its event log attributes
  // failures to logged kinds
  EvalReport report = cmd_eval(run + "/checkpoint.ckpt", run + "/corrupted.tsv",
                               "", run + "/events.jsonl", data + "/lexicon.txt");
  CHECK(report.total_words > 0);
}

TEST_CASE("training validates mode and honors the run lock") {
  TempDir dir("train_bad");
  std::string data = prepare_fixture(dir);
  RunConfig cfg = parse_run_config(kTinyConfig);
  CHECK_THROWS_AS(cmd_train(cfg, "bogus", data, dir / "r1", false), UsageError);

  cfg.model.context_length = 0;
  CHECK_THROWS_AS(cmd_train(cfg, "syn", data, dir / "r2", false), UsageError);

  std::string locked = dir / "locked";
  ensure_dir(locked);
  write_file(locked + "/.lock", "locked\n");
  cfg = parse_run_config(kTinyConfig);
  CHECK_THROWS_AS(cmd_train(cfg, "baseline", data, locked, false), UsageError);
  // a failed start must not remove someone else's lock
  CHECK(file_exists(locked + "/.lock"));
}

TEST_CASE("a completed run resumes as a no-op and an interrupted one continues") {
  TempDir dir("resume");
  std::string data = prepare_fixture(dir);
  RunConfig cfg = parse_run_config(kTinyConfig);
  std::string run = dir / "run";
  cmd_train(cfg, "baseline", data, run, false);
  std::string before = read_file(run + "/metrics.jsonl");
  cmd_train(cfg, "baseline", data, run, true);  // complete: returns immediately
  CHECK(read_file(run + "/metrics.jsonl") == before);

  // simulate an interruption after the first phase epoch
  std::string broken = dir / "broken";
  ensure_dir(broken);
  fs::copy(run + "/checkpoint.ckpt", broken + "/checkpoint.ckpt");
  write_file(broken + "/runstate.json", R"({"phase_index":0,"mode":"baseline","status":"running"})"
                                        "\n");
  TrainState st;
  st.epoch = 1;
  st.step = 1;
  st.save(broken + "/state.bin");
  cmd_train(cfg, "baseline", data, broken, true);
  CHECK(read_file(broken + "/runstate.json").find("complete") != std::string::npos);
}

TEST_CASE("convert handles sentences, target selection and attention dumps") {
  TempDir dir("convert");
  std::string data = prepare_fixture(dir);
  RunConfig cfg = parse_run_config(kTinyConfig);
  std::string run = dir / "run";
  cmd_train(cfg, "robust", data, run, false);
  std::string ckpt = run + "/checkpoint.ckpt";

  auto all = cmd_convert(ckpt, "the cat saw the dog", -1, "");
  CHECK(all.size() == 5);
  CHECK(all[1].word == "CAT");

  auto one = cmd_convert(ckpt, "the cat saw the dog", 1, dir / "attn.txt");
  REQUIRE(one.size() == 1);
  CHECK(one[0].word == "CAT");
  std::string attn = read_file(dir / "attn.txt");
  CHECK(attn.find("word CAT") != std::string::npos);
  CHECK(attn.find("lambda layer=0") != std::string::npos);
  CHECK(attn.find("matrix name=enc_dec") != std::string::npos);

  CHECK_THROWS_AS(cmd_convert(ckpt, "...", -1, ""), UsageError);
  CHECK_THROWS_AS(cmd_convert(ckpt, "the cat", 7, ""), UsageError);
}

TEST_CASE("sweep trains one run per value and tabulates both test conditions") {
  TempDir dir("sweep");
  std::string data = prepare_fixture(dir);
  RunConfig cfg = parse_run_config(kTinyConfig);
  std::string out = dir / "sweep";
  auto rows = cmd_sweep(cfg, "syn", "p", {0.0, 0.4}, data, out);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].value == 0.0);
  CHECK(rows[1].value == 0.4);
  CHECK(rows[0].seconds > 0.0);
  std::string table = read_file(out + "/sweep.tsv");
  CHECK(table.find("clean_wer") != std::string::npos);
  CHECK(file_exists(out + "/run_p_0/checkpoint.ckpt"));
  CHECK(file_exists(out + "/run_p_0_4/checkpoint.ckpt"));

  CHECK_THROWS_AS(cmd_sweep(cfg, "syn", "q", {0.1}, data, out), UsageError);
  CHECK_THROWS_AS(cmd_sweep(cfg, "syn", "p", {}, data, out), UsageError);
  CHECK_THROWS_AS(cmd_sweep(cfg, "syn", "p", {2.0}, data, out), UsageError);
}
