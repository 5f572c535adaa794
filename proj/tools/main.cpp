// Command-line front end; all real work goes through the C API in rg2p.h.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rg2p.h"

using nlohmann::json;

namespace {

int fail(int code) {
  std::fprintf(stderr, "error: %s\n", rg2p_last_error());
  return code;
}

std::string read_file_or_die(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::fprintf(stderr, "error: cannot read %s\n", path.c_str());
    std::exit(2);
  }
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// Flags win over the config file; both win over built-in defaults.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> p;
  std::optional<int> context_length;
  std::optional<int> epochs, step2_epochs, batch_size, beam;
  std::optional<double> epsilon, peak_lr;
  std::optional<std::string> misspellings;

  std::string merge(const std::string& config_path) const {
    json j = json::object();
    if (!config_path.empty()) {
      try {
        j = json::parse(read_file_or_die(config_path));
      } catch (const json::exception& e) {
        std::fprintf(stderr, "error: invalid config JSON: %s\n", e.what());
        std::exit(2);
      }
    }
    if (seed) j["seed"] = *seed;
    if (p) j["noise"]["p"] = *p;
    if (context_length) j["model"]["context_length"] = *context_length;
    if (beam) j["model"]["beam"] = *beam;
    if (epochs) j["train"]["epochs"] = *epochs;
    if (step2_epochs) j["train"]["step2_epochs"] = *step2_epochs;
    if (batch_size) j["train"]["batch_size"] = *batch_size;
    if (epsilon) j["train"]["epsilon"] = *epsilon;
    if (peak_lr) j["train"]["peak_lr"] = *peak_lr;
    if (misspellings) j["misspellings"] = *misspellings;
    return j.dump();
  }

  void attach(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "master random seed");
    cmd->add_option("--p", p, "per-word corruption probability");
    cmd->add_option("--context-length", context_length, "context words per side (l)");
    cmd->add_option("--beam", beam, "beam width");
    cmd->add_option("--epochs", epochs, "epochs for the first (or only) phase");
    cmd->add_option("--step2-epochs", step2_epochs, "epochs for the context phase");
    cmd->add_option("--batch-size", batch_size, "examples per optimizer step");
    cmd->add_option("--epsilon", epsilon, "adversarial perturbation magnitude");
    cmd->add_option("--peak-lr", peak_lr, "peak learning rate");
    cmd->add_option("--misspellings", misspellings, "misspelling table (TSV) for nat noise");
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robust grapheme-to-phoneme conversion"};
  app.require_subcommand(1);

  // prepare
  std::string lexicon_path, sentences_path, out_dir;
  std::uint64_t prep_seed = 0;
  auto* prepare = app.add_subcommand("prepare", "build a dataset directory from a lexicon");
  prepare->add_option("--lexicon", lexicon_path, "pronunciation dictionary")->required();
  prepare->add_option("--sentences", sentences_path, "sentence corpus, one sentence per line");
  prepare->add_option("--out", out_dir, "dataset directory to create")->required();
  prepare->add_option("--seed", prep_seed, "split seed");

  // synth-noise
  std::string sn_input, sn_method = "syn", sn_config, sn_out;
  ConfigOverrides sn_over;
  auto* synth = app.add_subcommand("synth-noise", "corrupt the target words of a corpus");
  synth->add_option("--input", sn_input, "example TSV or dataset directory")->required();
  synth->add_option("--method", sn_method, "syn or nat")->check(CLI::IsMember({"syn", "nat"}));
  synth->add_option("--config", sn_config, "config JSON file");
  synth->add_option("--out", sn_out, "output directory")->required();
  sn_over.attach(synth);

  // train
  std::string tr_config, tr_mode, tr_data, tr_run;
  bool tr_resume = false;
  ConfigOverrides tr_over;
  auto* train = app.add_subcommand("train", "train a model into a run directory");
  train->add_option("--config", tr_config, "config JSON file");
  train->add_option("--mode", tr_mode, "baseline | nat | syn | adv | robust")
      ->required()
      ->check(CLI::IsMember({"baseline", "nat", "syn", "adv", "robust"}));
  train->add_option("--data", tr_data, "dataset directory")->required();
  train->add_option("--run", tr_run, "run directory")->required();
  train->add_flag("--resume", tr_resume, "continue an interrupted run");
  tr_over.attach(train);

  // eval
  std::string ev_ckpt, ev_testset, ev_report, ev_events, ev_lexicon;
  auto* eval = app.add_subcommand("eval", "score a checkpoint against a testset");
  eval->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
  eval->add_option("--testset", ev_testset, "example TSV or lexicon-format file")->required();
  eval->add_option("--report", ev_report, "write the JSON report here");
  eval->add_option("--events", ev_events, "noise event log for failure attribution");
  eval->add_option("--lexicon", ev_lexicon, "lexicon for variant-tolerant scoring");

  // convert
  std::string cv_ckpt, cv_attention;
  std::vector<std::string> cv_words;
  int cv_index = -1;
  auto* convert = app.add_subcommand("convert", "convert words to phonemes");
  convert->add_option("--checkpoint", cv_ckpt, "model checkpoint")->required();
  convert->add_option("words", cv_words, "word or sentence to convert")->required();
  convert->add_option("--index", cv_index, "convert only the word at this index");
  convert->add_option("--attention", cv_attention, "write an attention/gating dump here");

  // sweep
  std::string sw_config, sw_mode = "syn", sw_param, sw_data, sw_out;
  std::vector<double> sw_values;
  ConfigOverrides sw_over;
  auto* sweep = app.add_subcommand("sweep", "train and score one run per parameter value");
  sweep->add_option("--config", sw_config, "config JSON file");
  sweep->add_option("--mode", sw_mode, "training mode for each run")
      ->check(CLI::IsMember({"baseline", "nat", "syn", "adv", "robust"}));
  sweep->add_option("--param", sw_param, "p or l")->required()->check(CLI::IsMember({"p", "l"}));
  sweep->add_option("--values", sw_values, "parameter values")->required();
  sweep->add_option("--data", sw_data, "dataset directory")->required();
  sweep->add_option("--out", sw_out, "output directory")->required();
  sw_over.attach(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (prepare->parsed()) {
    int rc = rg2p_prepare(lexicon_path.c_str(),
                          sentences_path.empty() ? nullptr : sentences_path.c_str(),
                          out_dir.c_str(), prep_seed);
    if (rc != RG2P_OK) return fail(rc);
    std::printf("dataset written to %s\n", out_dir.c_str());
    return 0;
  }

  if (synth->parsed()) {
    std::string cfg = sn_over.merge(sn_config);
    char* summary = nullptr;
    int rc = rg2p_synth_noise(sn_input.c_str(), sn_method.c_str(), cfg.c_str(), nullptr,
                              sn_out.c_str(), &summary);
    if (rc != RG2P_OK) return fail(rc);
    std::printf("%s", summary);
    rg2p_free_string(summary);
    return 0;
  }

  if (train->parsed()) {
    std::string cfg = tr_over.merge(tr_config);
    int rc = rg2p_train(cfg.c_str(), tr_mode.c_str(), tr_data.c_str(), tr_run.c_str(),
                        tr_resume ? 1 : 0);
    if (rc != RG2P_OK) return fail(rc);
    std::printf("run complete: %s\n", tr_run.c_str());
    return 0;
  }

  if (eval->parsed()) {
    char* report = nullptr;
    int rc = rg2p_eval(ev_ckpt.c_str(), ev_testset.c_str(),
                       ev_report.empty() ? nullptr : ev_report.c_str(),
                       ev_events.empty() ? nullptr : ev_events.c_str(),
                       ev_lexicon.empty() ? nullptr : ev_lexicon.c_str(), &report);
    if (rc != RG2P_OK) return fail(rc);
    std::printf("%s", report);
    rg2p_free_string(report);
    return 0;
  }

  if (convert->parsed()) {
    std::string text;
    for (std::size_t i = 0; i < cv_words.size(); ++i) {
      if (i) text += ' ';
      text += cv_words[i];
    }
    rg2p_model* model = nullptr;
    int rc = rg2p_model_open(cv_ckpt.c_str(), &model);
    if (rc != RG2P_OK) return fail(rc);
    char* lines = nullptr;
    rc = rg2p_model_convert(model, text.c_str(), cv_index,
                            cv_attention.empty() ? nullptr : cv_attention.c_str(), &lines);
    if (rc != RG2P_OK) {
      rg2p_model_close(model);
      return fail(rc);
    }
    std::printf("%s", lines);
    rg2p_free_string(lines);
    rg2p_model_close(model);
    return 0;
  }

  if (sweep->parsed()) {
    std::string cfg = sw_over.merge(sw_config);
    int rc = rg2p_sweep(cfg.c_str(), sw_mode.c_str(), sw_param.c_str(), sw_values.data(),
                        sw_values.size(), sw_data.c_str(), sw_out.c_str());
    if (rc != RG2P_OK) return fail(rc);
    std::printf("sweep written to %s/sweep.tsv\n", sw_out.c_str());
    return 0;
  }

  return 2;
}
