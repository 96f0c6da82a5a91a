// Flat key=value run configuration shared by the training and decoding
// commands. File values are overridden by command-line flags; unknown keys
// are rejected so typos fail loudly.
#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "lexnmt/beam.hpp"
#include "lexnmt/model.hpp"
#include "lexnmt/trainer.hpp"

namespace lexnmt {

struct RunConfig {
  // model
  std::string variant = "tied";
  int num_layers = 1;
  int hidden_size = 64;
  double r = -1;  // unset: resolved per variant (fixnorm 5.0, fixnorm_lex 3.5)
  double dropout = 0.0;
  bool lex_hidden_bias = false;
  std::string precision = "float64";
  // data
  std::string train_src, train_tgt;
  std::string dev_src, dev_tgt;
  std::string src_vocab, tgt_vocab;
  std::string out_dir = ".";
  // training
  int epochs = 50;
  int batch_size = 32;
  double clip_norm = 5.0;
  double init_range = 0.01;
  bool init_biases = false;
  bool per_param_clip = false;
  std::uint64_t seed = 1;
  // decoding
  int beam_size = 12;
  double alpha = 0.8;
  int max_out_len = 0;  // 0: 2*source_length + 10
  bool prune_with_lp = false;
  bool replace_unk = true;

  // The radius actually used: explicit value, or the per-variant default.
  double effective_r() const {
    if (r >= 0) return r;
    if (variant == "fixnorm") return 5.0;
    if (variant == "fixnorm_lex") return 3.5;
    return 0.0;
  }

  void validate() const {
    const Variant v = parse_variant(variant);  // throws on unknown
    const bool fixed = v == Variant::fixnorm || v == Variant::fixnorm_lex;
    if (!fixed && r >= 0)
      throw std::invalid_argument("config: r only applies to the fixnorm variants");
    if (fixed && effective_r() <= 0)
      throw std::invalid_argument("config: variant " + variant +
                                  " needs a positive r");
    if (precision != "float32" && precision != "float64")
      throw std::invalid_argument("config: precision must be float32 or float64");
    if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    ModelConfig mc = model_config(5, 5);
    mc.validate();
    beam_config().validate();
  }

  ModelConfig model_config(int src_vocab_size, int tgt_vocab_size) const {
    ModelConfig mc;
    mc.variant = parse_variant(variant);
    mc.num_layers = num_layers;
    mc.hidden_size = hidden_size;
    mc.radius = effective_r();
    mc.dropout_p = dropout;
    mc.src_vocab_size = src_vocab_size;
    mc.tgt_vocab_size = tgt_vocab_size;
    mc.lex_hidden_bias = lex_hidden_bias;
    return mc;
  }

  TrainConfig train_config() const {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = batch_size;
    tc.clip_norm = clip_norm;
    tc.init_range = init_range;
    tc.init_biases = init_biases;
    tc.per_param_clip = per_param_clip;
    tc.seed = seed;
    tc.beam_size = beam_size;
    tc.alpha = alpha;
    tc.replace_unk = replace_unk;
    return tc;
  }

  BeamConfig beam_config() const {
    BeamConfig bc;
    bc.beam_size = beam_size;
    bc.alpha = alpha;
    bc.max_len = max_out_len;
    bc.prune_with_lp = prune_with_lp;
    return bc;
  }
};

namespace detail {

inline bool parse_config_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": '" + v + "'");
}

}  // namespace detail

inline void set_config_key(RunConfig& rc, const std::string& key,
                           const std::string& value) {
  try {
    if (key == "variant") rc.variant = value;
    else if (key == "num_layers") rc.num_layers = std::stoi(value);
    else if (key == "hidden_size") rc.hidden_size = std::stoi(value);
    else if (key == "r") rc.r = std::stod(value);
    else if (key == "dropout") rc.dropout = std::stod(value);
    else if (key == "lex_hidden_bias") rc.lex_hidden_bias = detail::parse_config_bool(key, value);
    else if (key == "precision") rc.precision = value;
    else if (key == "train_src") rc.train_src = value;
    else if (key == "train_tgt") rc.train_tgt = value;
    else if (key == "dev_src") rc.dev_src = value;
    else if (key == "dev_tgt") rc.dev_tgt = value;
    else if (key == "src_vocab") rc.src_vocab = value;
    else if (key == "tgt_vocab") rc.tgt_vocab = value;
    else if (key == "out_dir") rc.out_dir = value;
    else if (key == "epochs") rc.epochs = std::stoi(value);
    else if (key == "batch_size") rc.batch_size = std::stoi(value);
    else if (key == "clip_norm") rc.clip_norm = std::stod(value);
    else if (key == "init_range") rc.init_range = std::stod(value);
    else if (key == "init_biases") rc.init_biases = detail::parse_config_bool(key, value);
    else if (key == "per_param_clip") rc.per_param_clip = detail::parse_config_bool(key, value);
    else if (key == "seed") rc.seed = std::stoull(value);
    else if (key == "beam_size") rc.beam_size = std::stoi(value);
    else if (key == "alpha") rc.alpha = std::stod(value);
    else if (key == "max_out_len") rc.max_out_len = std::stoi(value);
    else if (key == "prune_with_lp") rc.prune_with_lp = detail::parse_config_bool(key, value);
    else if (key == "replace_unk") rc.replace_unk = detail::parse_config_bool(key, value);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad value for " + key + ": '" + value + "'");
  }
}

// key=value per line; '#' starts a comment; blank lines ignored.
inline RunConfig parse_run_config(std::istream& is) {
  RunConfig rc;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
      line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    const auto eq = line.find('=', start);
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key=value, got '" + line + "'");
    std::string key = line.substr(start, eq - start);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    std::string value = line.substr(eq + 1);
    const auto vstart = value.find_first_not_of(" \t");
    value = vstart == std::string::npos ? "" : value.substr(vstart);
    set_config_key(rc, key, value);
  }
  return rc;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot read config file " + path);
  return parse_run_config(is);
}

}  // namespace lexnmt
