#include "rg2p.h"

#include <cstring>
#include <new>
#include <string>

#include "model.hpp"
#include "pipeline.hpp"
#include "tensor.hpp"
#include "training.hpp"

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string opt(const char* s) { return s ? std::string(s) : std::string(); }

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return RG2P_OK;
  } catch (const rg2p::UsageError& e) {
    g_last_error = e.what();
    return RG2P_USAGE_ERROR;
  } catch (const rg2p::NumericFault& e) {
    g_last_error = e.what();
    return RG2P_NUMERIC_ERROR;
  } catch (const rg2p::tc::NumericError& e) {
    g_last_error = e.what();
    return RG2P_NUMERIC_ERROR;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return RG2P_USAGE_ERROR;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return RG2P_NUMERIC_ERROR;
  }
}

int require(const char* arg, const char* name) {
  if (arg) return RG2P_OK;
  g_last_error = std::string(name) + " must not be NULL";
  return RG2P_USAGE_ERROR;
}

}  // namespace

struct rg2p_model {
  std::unique_ptr<rg2p::Model> model;
};

extern "C" {

const char* rg2p_last_error(void) { return g_last_error.c_str(); }

void rg2p_free_string(char* s) { delete[] s; }

int rg2p_prepare(const char* lexicon_path, const char* sentences_path, const char* out_dir,
                 uint64_t seed) {
  if (int rc = require(lexicon_path, "lexicon_path")) return rc;
  if (int rc = require(out_dir, "out_dir")) return rc;
  return guarded([&] {
    rg2p::pipeline::cmd_prepare(lexicon_path, opt(sentences_path), out_dir, seed);
  });
}

int rg2p_synth_noise(const char* input_path, const char* method, const char* config_json,
                     const char* misspellings_path, const char* out_dir,
                     char** summary_json_out) {
  if (int rc = require(input_path, "input_path")) return rc;
  if (int rc = require(method, "method")) return rc;
  if (int rc = require(out_dir, "out_dir")) return rc;
  return guarded([&] {
    rg2p::NoiseMethod m;
    std::string name(method);
    if (name == "nat")
      m = rg2p::NoiseMethod::Nat;
    else if (name == "syn")
      m = rg2p::NoiseMethod::Syn;
    else
      throw rg2p::UsageError("method must be nat or syn, got " + name);

    auto cfg = rg2p::pipeline::parse_run_config(config_json ? config_json : "{}");
    std::string table = opt(misspellings_path);
    if (table.empty()) table = cfg.misspellings_path;
    auto summary = rg2p::pipeline::cmd_synth_noise(input_path, m, cfg.noise, table, out_dir);
    if (summary_json_out)
      *summary_json_out = dup_string(rg2p::read_file(std::string(out_dir) + "/summary.json"));
    (void)summary;
  });
}

int rg2p_train(const char* config_json, const char* mode, const char* data_dir,
               const char* run_dir, int resume) {
  if (int rc = require(mode, "mode")) return rc;
  if (int rc = require(data_dir, "data_dir")) return rc;
  if (int rc = require(run_dir, "run_dir")) return rc;
  return guarded([&] {
    auto cfg = rg2p::pipeline::parse_run_config(config_json ? config_json : "{}");
    rg2p::pipeline::cmd_train(cfg, mode, data_dir, run_dir, resume != 0);
  });
}

int rg2p_eval(const char* checkpoint_path, const char* testset_path, const char* report_path,
              const char* events_path, const char* lexicon_path, char** report_json_out) {
  if (int rc = require(checkpoint_path, "checkpoint_path")) return rc;
  if (int rc = require(testset_path, "testset_path")) return rc;
  return guarded([&] {
    auto report = rg2p::pipeline::cmd_eval(checkpoint_path, testset_path, opt(report_path),
                                           opt(events_path), opt(lexicon_path));
    if (report_json_out) *report_json_out = dup_string(rg2p::report_to_json(report));
  });
}

int rg2p_sweep(const char* config_json, const char* mode, const char* param, const double* values,
               size_t n_values, const char* data_dir, const char* out_dir) {
  if (int rc = require(mode, "mode")) return rc;
  if (int rc = require(param, "param")) return rc;
  if (int rc = require(data_dir, "data_dir")) return rc;
  if (int rc = require(out_dir, "out_dir")) return rc;
  if (!values || n_values == 0) {
    g_last_error = "values must contain at least one entry";
    return RG2P_USAGE_ERROR;
  }
  return guarded([&] {
    auto cfg = rg2p::pipeline::parse_run_config(config_json ? config_json : "{}");
    std::vector<double> vals(values, values + n_values);
    rg2p::pipeline::cmd_sweep(cfg, mode, param, vals, data_dir, out_dir);
  });
}

int rg2p_model_open(const char* checkpoint_path, rg2p_model** out) {
  if (int rc = require(checkpoint_path, "checkpoint_path")) return rc;
  if (int rc = require(reinterpret_cast<const char*>(out), "out")) return rc;
  return guarded([&] {
    auto handle = std::make_unique<rg2p_model>();
    handle->model = rg2p::Model::load_checkpoint(checkpoint_path);
    *out = handle.release();
  });
}

void rg2p_model_close(rg2p_model* m) { delete m; }

int rg2p_model_convert(const rg2p_model* m, const char* text, int target_index,
                       const char* attention_out, char** phonemes_out) {
  if (!m || !m->model) {
    g_last_error = "model handle must not be NULL";
    return RG2P_USAGE_ERROR;
  }
  if (int rc = require(text, "text")) return rc;
  if (int rc = require(reinterpret_cast<const char*>(phonemes_out), "phonemes_out")) return rc;
  return guarded([&] {
    auto conversions =
        rg2p::pipeline::convert_text(*m->model, text, target_index, opt(attention_out));
    std::string out;
    for (const auto& c : conversions) {
      out += c.word;
      out += '\t';
      for (std::size_t i = 0; i < c.phonemes.size(); ++i) {
        if (i) out += ' ';
        out += c.phonemes[i];
      }
      out += '\n';
    }
    *phonemes_out = dup_string(out);
  });
}

}  // extern "C"
