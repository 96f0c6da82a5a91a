// lexnmt command line: preprocessing, BPE, training, decoding, scoring, and
// model diagnostics behind one binary. Exit codes: 0 success, 1 runtime
// failure, 2 usage/config error.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lexnmt/beam.hpp"
#include "lexnmt/bpe.hpp"
#include "lexnmt/checkpoint.hpp"
#include "lexnmt/config.hpp"
#include "lexnmt/corpus.hpp"
#include "lexnmt/eval.hpp"
#include "lexnmt/model.hpp"
#include "lexnmt/trainer.hpp"
#include "lexnmt/vocab.hpp"

namespace fs = std::filesystem;
using namespace lexnmt;

namespace {

std::vector<Sentence> read_sentences(const std::string& path) {
  std::vector<Sentence> out;
  for (const auto& line : read_lines(path)) out.push_back(split_tokens(line));
  return out;
}

void write_text_lines(const std::string& path,
                      const std::vector<std::string>& lines) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  for (const auto& l : lines) os << l << '\n';
  if (!os) throw std::runtime_error("write failed for " + path);
}

// ---- prep ------------------------------------------------------------------

struct PrepArgs {
  std::string train_src, train_tgt, dev_src, dev_tgt, out_dir;
  std::int64_t min_count = 1;
  int max_len = 50;
};

// Returns true on success; a line-count mismatch prints both counts and
// reports a usage error through `code`.
bool load_pair_checked(const std::string& src_path, const std::string& tgt_path,
                       ParallelCorpus& out, int& code) {
  const auto src = read_lines(src_path);
  const auto tgt = read_lines(tgt_path);
  if (src.size() != tgt.size()) {
    std::cerr << "error: line count mismatch: " << src_path << " has "
              << src.size() << " lines, " << tgt_path << " has " << tgt.size()
              << " lines\n";
    code = 2;
    return false;
  }
  out.clear();
  out.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i)
    out.push_back({split_tokens(src[i]), split_tokens(tgt[i])});
  return true;
}

double unk_rate(const Vocabulary& v, const ParallelCorpus& corpus, bool source) {
  std::int64_t unk = 0, total = 0;
  for (const auto& p : corpus) {
    for (const auto& w : source ? p.src : p.tgt) {
      ++total;
      if (!v.contains(w)) ++unk;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(unk) / static_cast<double>(total);
}

int cmd_prep(const PrepArgs& a) {
  int code = 0;
  ParallelCorpus train;
  if (!load_pair_checked(a.train_src, a.train_tgt, train, code)) return code;
  ParallelCorpus dev;
  const bool has_dev = !a.dev_src.empty() || !a.dev_tgt.empty();
  if (has_dev) {
    if (a.dev_src.empty() || a.dev_tgt.empty()) {
      std::cerr << "error: --dev-src and --dev-tgt must be given together\n";
      return 2;
    }
    if (!load_pair_checked(a.dev_src, a.dev_tgt, dev, code)) return code;
  }

  const ParallelCorpus filtered =
      filter_by_length(train, static_cast<std::size_t>(a.max_len));
  if (filtered.empty())
    throw std::runtime_error("no training pairs survive length filtering");
  const Vocabulary vs = Vocabulary::build(side_of(filtered, true), a.min_count);
  const Vocabulary vt = Vocabulary::build(side_of(filtered, false), a.min_count);

  fs::create_directories(a.out_dir);
  vs.save_file(a.out_dir + "/vocab.src");
  vt.save_file(a.out_dir + "/vocab.tgt");
  std::vector<std::string> src_out, tgt_out;
  for (const auto& p : filtered) {
    src_out.push_back(join_tokens(p.src));
    tgt_out.push_back(join_tokens(p.tgt));
  }
  write_text_lines(a.out_dir + "/train.src", src_out);
  write_text_lines(a.out_dir + "/train.tgt", tgt_out);
  if (has_dev) {
    src_out.clear();
    tgt_out.clear();
    for (const auto& p : dev) {
      src_out.push_back(join_tokens(p.src));
      tgt_out.push_back(join_tokens(p.tgt));
    }
    write_text_lines(a.out_dir + "/dev.src", src_out);
    write_text_lines(a.out_dir + "/dev.tgt", tgt_out);
  }

  std::cout << std::setprecision(10) << "train_pairs=" << filtered.size() << '\n'
            << "src_vocab=" << vs.size() << '\n'
            << "tgt_vocab=" << vt.size() << '\n'
            << "src_unk_rate=" << unk_rate(vs, filtered, true) << '\n'
            << "tgt_unk_rate=" << unk_rate(vt, filtered, false) << '\n';
  return 0;
}

// ---- bpe -------------------------------------------------------------------

struct BpeLearnArgs {
  std::string input, output;
  int merges = 0;
};

int cmd_bpe_learn(const BpeLearnArgs& a) {
  const BpeModel model = BpeModel::learn(read_sentences(a.input), a.merges);
  model.save_file(a.output);
  std::cout << "merges=" << model.merges().size() << '\n';
  return 0;
}

struct BpeApplyArgs {
  std::string input, model, output;
  std::string pair_input, pair_model, pair_output;
  bool augment = false;
};

int cmd_bpe_apply(const BpeApplyArgs& a) {
  const bool paired = !a.pair_input.empty() || !a.pair_model.empty() ||
                      !a.pair_output.empty();
  if (a.augment && !paired) {
    std::cerr << "error: --augment-singleton-unk needs the paired form "
                 "(--pair-input/--pair-model/--pair-output)\n";
    return 2;
  }
  const BpeModel model = BpeModel::load_file(a.model);
  const auto sents = read_sentences(a.input);
  if (!paired) {
    std::vector<std::string> out;
    out.reserve(sents.size());
    for (const auto& s : sents) out.push_back(join_tokens(model.apply(s)));
    write_text_lines(a.output, out);
    return 0;
  }
  if (a.pair_input.empty() || a.pair_model.empty() || a.pair_output.empty()) {
    std::cerr << "error: paired mode needs all of --pair-input, --pair-model, "
                 "and --pair-output\n";
    return 2;
  }
  const BpeModel pair_model = BpeModel::load_file(a.pair_model);
  const auto pair_sents = read_sentences(a.pair_input);
  if (sents.size() != pair_sents.size()) {
    std::cerr << "error: line count mismatch: " << a.input << " has "
              << sents.size() << " lines, " << a.pair_input << " has "
              << pair_sents.size() << " lines\n";
    return 2;
  }
  ParallelCorpus corpus;
  corpus.reserve(sents.size());
  for (std::size_t i = 0; i < sents.size(); ++i)
    corpus.push_back({model.apply(sents[i]), pair_model.apply(pair_sents[i])});
  if (a.augment) corpus = augment_singleton_unk(corpus);
  std::vector<std::string> src_out, tgt_out;
  for (const auto& p : corpus) {
    src_out.push_back(join_tokens(p.src));
    tgt_out.push_back(join_tokens(p.tgt));
  }
  write_text_lines(a.output, src_out);
  write_text_lines(a.pair_output, tgt_out);
  return 0;
}

// ---- train -----------------------------------------------------------------

template <typename T>
int run_train(const RunConfig& rc, bool resume) {
  fs::create_directories(rc.out_dir);
  const std::string best_path = rc.out_dir + "/best.ckpt";
  const std::string last_path = rc.out_dir + "/last.ckpt";
  const std::string log_path = rc.out_dir + "/train.log";

  if (rc.train_src.empty() || rc.train_tgt.empty())
    throw std::invalid_argument("config: train_src and train_tgt are required");
  ParallelCorpus train = load_corpus(rc.train_src, rc.train_tgt);
  // Length policy belongs to prep; only empty-side pairs are dropped here.
  train = filter_by_length(train, std::numeric_limits<std::size_t>::max());
  ParallelCorpus dev;
  if (!rc.dev_src.empty() || !rc.dev_tgt.empty()) {
    if (rc.dev_src.empty() || rc.dev_tgt.empty())
      throw std::invalid_argument("config: dev_src and dev_tgt must be given together");
    dev = load_corpus(rc.dev_src, rc.dev_tgt);
  }

  const TrainConfig tc = rc.train_config();
  Checkpoint<T> ck;
  if (resume) {
    ck = load_checkpoint<T>(last_path);
  } else {
    const Vocabulary vs = rc.src_vocab.empty()
                              ? Vocabulary::build(side_of(train, true), 1)
                              : Vocabulary::load_file(rc.src_vocab);
    const Vocabulary vt = rc.tgt_vocab.empty()
                              ? Vocabulary::build(side_of(train, false), 1)
                              : Vocabulary::load_file(rc.tgt_vocab);
    ck = make_initial_checkpoint<T>(rc.model_config(vs.size(), vt.size()), vs,
                                    vt, tc);
  }

  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + log_path);
  const TrainOutcome out =
      train_loop(ck, train, dev, tc, &log, best_path, last_path);
  if (out.aborted) {
    std::cerr << "error: training aborted: " << out.abort_reason << '\n';
    return 1;
  }
  std::cout << std::setprecision(10) << "completed_epochs="
            << ck.completed_epochs << '\n';
  if (!out.log.empty())
    std::cout << "final_train_ppl=" << out.log.back().train_ppl << '\n';
  std::cout << "best_dev_bleu=" << out.best_dev_bleu << '\n'
            << "best_epoch=" << out.best_epoch << '\n';
  return 0;
}

int cmd_train(const RunConfig& rc, bool resume) {
  rc.validate();
  if (resume) {
    const int width = checkpoint_value_width(rc.out_dir + "/last.ckpt");
    return width == 4 ? run_train<float>(rc, true) : run_train<double>(rc, true);
  }
  return rc.precision == "float32" ? run_train<float>(rc, false)
                                   : run_train<double>(rc, false);
}

// ---- translate -------------------------------------------------------------

struct TranslateArgs {
  std::string checkpoint, input, output, dump_attention;
  int beam = 12;
  double alpha = 0.8;
  int max_len = 0;
  bool replace_unk = true;
  bool prune_with_lp = false;
};

template <typename T>
int run_translate(const TranslateArgs& a) {
  Checkpoint<T> ck = load_checkpoint<T>(a.checkpoint);
  const auto sents = read_sentences(a.input);
  BeamConfig bc;
  bc.beam_size = a.beam;
  bc.alpha = a.alpha;
  bc.max_len = a.max_len;
  bc.prune_with_lp = a.prune_with_lp;
  bc.validate();
  TranslateOptions opts;
  opts.replace_unk = a.replace_unk;
  std::ofstream dump;
  if (!a.dump_attention.empty()) {
    dump.open(a.dump_attention);
    if (!dump) throw std::runtime_error("cannot write " + a.dump_attention);
    opts.attention_dump = &dump;
  }
  const auto hyps =
      translate_corpus(ck.params, sents, ck.src_vocab, ck.tgt_vocab, bc, opts);
  std::ofstream file_out;
  std::ostream* os = &std::cout;
  if (!a.output.empty()) {
    file_out.open(a.output);
    if (!file_out) throw std::runtime_error("cannot write " + a.output);
    os = &file_out;
  }
  for (const auto& h : hyps) (*os) << join_tokens(h) << '\n';
  if (!*os) throw std::runtime_error("write failed for translation output");
  return 0;
}

// ---- evaluate / significance -----------------------------------------------

int cmd_evaluate(const std::string& hyp, const std::string& ref) {
  const BleuReport rep = bleu(read_sentences(hyp), read_sentences(ref));
  std::cout << rep.to_text();
  return 0;
}

struct SignificanceArgs {
  std::string hyp_a, hyp_b, ref;
  int resamples = 1000;
  std::uint64_t seed = 1;
};

int cmd_significance(const SignificanceArgs& a) {
  const auto ha = read_sentences(a.hyp_a);
  const auto hb = read_sentences(a.hyp_b);
  const auto refs = read_sentences(a.ref);
  Rng rng(a.seed);
  const SignificanceReport rep =
      bootstrap_significance(ha, hb, refs, a.resamples, rng);
  std::cout << std::setprecision(10) << "bleu_a=" << bleu(ha, refs).bleu << '\n'
            << "bleu_b=" << bleu(hb, refs).bleu << '\n'
            << "mean_resampled_bleu_a=" << rep.mean_bleu_a << '\n'
            << "mean_resampled_bleu_b=" << rep.mean_bleu_b << '\n'
            << "p_value=" << rep.p_value << '\n'
            << "resamples=" << rep.n_resamples << '\n';
  return 0;
}

// ---- lexicon / inspect -----------------------------------------------------

template <typename T>
int run_lexicon(const std::string& path, int top_k) {
  Checkpoint<T> ck = load_checkpoint<T>(path);
  const auto table =
      extract_lexicon(ck.params, ck.src_vocab, ck.tgt_vocab, top_k);
  for (const auto& [src, entries] : table)
    std::cout << src << " ⇒ " << format_lexicon_row(entries) << '\n';
  return 0;
}

struct InspectArgs {
  std::string checkpoint, source, candidates;
  int position = 0;
};

template <typename T>
int run_inspect(const InspectArgs& a) {
  Checkpoint<T> ck = load_checkpoint<T>(a.checkpoint);
  ModelParams<T>& mp = ck.params;
  const Sentence toks = split_tokens(a.source);
  if (toks.empty()) throw std::invalid_argument("inspect: empty source sentence");
  if (a.position < 0) throw std::invalid_argument("inspect: negative position");

  std::vector<int> cand_ids;
  std::istringstream cs(a.candidates);
  std::string tok;
  while (std::getline(cs, tok, ',')) {
    if (tok.empty()) continue;
    if (!ck.tgt_vocab.contains(tok))
      throw std::invalid_argument("inspect: candidate '" + tok +
                                  "' is not in the target vocabulary");
    cand_ids.push_back(ck.tgt_vocab.id(tok));
  }
  if (cand_ids.empty())
    throw std::invalid_argument("inspect: no candidates given");

  const std::vector<int> src_ids = ck.src_vocab.encode(toks, true, false);
  const auto src = detail::encode_source(mp, src_ids);
  std::vector<Tensor<T>> h = src.h, c = src.c;
  Tensor<T> feed({1, mp.config.hidden_size});
  int prev = kBos;
  detail::StepScore<T> step;
  for (int t = 0;; ++t) {
    step = detail::score_step(mp, src, prev, h, c, feed);
    if (t == a.position) break;
    int best = -1;
    for (int y = 0; y < step.log_probs.cols(); ++y) {
      if (y == kPad || y == kBos) continue;
      if (best < 0 || step.log_probs.at(0, y) > step.log_probs.at(0, best))
        best = y;
    }
    if (best == kEos)
      throw std::runtime_error("inspect: decode finished at position " +
                               std::to_string(t) + ", before position " +
                               std::to_string(a.position));
    prev = best;
    h = step.h;
    c = step.c;
    feed = step.feed;
  }

  const Tensor<T>* h_lex = mp.config.uses_lex() ? &step.h_lex : nullptr;
  const auto rows = inspect_logits(mp, ck.tgt_vocab, step.feed, cand_ids, h_lex);
  std::cout << "token\t|W_e|\t|h~|\tcos\tb_e";
  if (!rows.empty() && rows.front().has_lex)
    std::cout << "\t|W_lex|\t|h_lex|\tcos_lex\tb_lex";
  std::cout << "\tlogit\n" << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    std::cout << r.token << '\t' << r.w_norm << '\t' << r.h_norm << '\t'
              << r.cosine << '\t' << r.bias;
    if (r.has_lex)
      std::cout << '\t' << r.lex_w_norm << '\t' << r.lex_h_norm << '\t'
                << r.lex_cosine << '\t' << r.lex_bias;
    std::cout << '\t' << r.logit << '\n';
  }
  return 0;
}

template <typename F>
int dispatch_checkpoint(const std::string& path, F&& fn) {
  const int width = checkpoint_value_width(path);
  if (width == 4) return fn(float{});
  if (width == 8) return fn(double{});
  throw std::runtime_error("checkpoint " + path + " has unsupported value width " +
                           std::to_string(width));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neural machine translation with normalized and lexical output layers"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  // The training config file loads before flag parsing so that explicit flags
  // override file values. --config wins over the LEXNMT_CONFIG environment
  // variable.
  std::string config_path;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) config_path = argv[i + 1];
    else if (arg.rfind("--config=", 0) == 0) config_path = arg.substr(9);
  }
  if (config_path.empty())
    if (const char* env = std::getenv("LEXNMT_CONFIG")) config_path = env;

  RunConfig rc;
  try {
    if (!config_path.empty()) rc = load_run_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  PrepArgs prep_args;
  CLI::App* prep = app.add_subcommand("prep", "tokenized corpus -> filtered corpus + vocabularies");
  prep->add_option("--train-src", prep_args.train_src, "source training text")->required();
  prep->add_option("--train-tgt", prep_args.train_tgt, "target training text")->required();
  prep->add_option("--dev-src", prep_args.dev_src, "source dev text (copied through unfiltered)");
  prep->add_option("--dev-tgt", prep_args.dev_tgt, "target dev text (copied through unfiltered)");
  prep->add_option("--out-dir", prep_args.out_dir, "output directory")->required();
  prep->add_option("--min-count", prep_args.min_count, "keep types seen at least this often")
      ->capture_default_str();
  prep->add_option("--max-len", prep_args.max_len, "drop training pairs longer than this")
      ->capture_default_str();

  BpeLearnArgs bl_args;
  CLI::App* bl = app.add_subcommand("bpe-learn", "learn byte-pair merges from one corpus side");
  bl->add_option("--input", bl_args.input, "tokenized text")->required();
  bl->add_option("--merges", bl_args.merges, "number of merge operations")->required();
  bl->add_option("--output", bl_args.output, "merge table file")->required();

  BpeApplyArgs ba_args;
  CLI::App* ba = app.add_subcommand("bpe-apply", "segment text with a learned merge table");
  ba->add_option("--input", ba_args.input, "tokenized text")->required();
  ba->add_option("--model", ba_args.model, "merge table from bpe-learn")->required();
  ba->add_option("--output", ba_args.output, "segmented output")->required();
  ba->add_option("--pair-input", ba_args.pair_input, "other side of a parallel corpus");
  ba->add_option("--pair-model", ba_args.pair_model, "merge table for the other side");
  ba->add_option("--pair-output", ba_args.pair_output, "segmented output for the other side");
  ba->add_flag("--augment-singleton-unk", ba_args.augment,
               "append a corpus copy with per-side singleton types replaced by <unk>");

  bool resume = false;
  CLI::App* train = app.add_subcommand("train", "train a model; writes best.ckpt, last.ckpt, train.log");
  train->add_option("--config", config_path,
                    "key=value config file (or env LEXNMT_CONFIG); flags override it");
  train->add_option("--variant", rc.variant, "untied | tied | fixnorm | fixnorm_lex")
      ->capture_default_str();
  train->add_option("--r", rc.r, "norm radius (default 5 for fixnorm, 3.5 for fixnorm_lex)");
  train->add_option("--num-layers", rc.num_layers, "stacked LSTM layers")->capture_default_str();
  train->add_option("--hidden-size", rc.hidden_size, "hidden and embedding size")
      ->capture_default_str();
  train->add_option("--dropout", rc.dropout, "dropout probability")->capture_default_str();
  train->add_flag("--lex-hidden-bias,!--no-lex-hidden-bias", rc.lex_hidden_bias,
                  "bias inside the lexical hidden layer");
  train->add_option("--precision", rc.precision, "float32 | float64")->capture_default_str();
  train->add_option("--train-src", rc.train_src, "source training text");
  train->add_option("--train-tgt", rc.train_tgt, "target training text");
  train->add_option("--dev-src", rc.dev_src, "source dev text");
  train->add_option("--dev-tgt", rc.dev_tgt, "target dev text");
  train->add_option("--src-vocab", rc.src_vocab, "source vocabulary file (default: build from training data)");
  train->add_option("--tgt-vocab", rc.tgt_vocab, "target vocabulary file (default: build from training data)");
  train->add_option("--out-dir", rc.out_dir, "checkpoint/log directory")->capture_default_str();
  train->add_option("--epochs", rc.epochs, "training epochs")->capture_default_str();
  train->add_option("--batch-size", rc.batch_size, "minibatch size")->capture_default_str();
  train->add_option("--clip-norm", rc.clip_norm, "gradient norm ceiling")->capture_default_str();
  train->add_option("--init-range", rc.init_range, "uniform init half-width")->capture_default_str();
  train->add_flag("--init-biases,!--no-init-biases", rc.init_biases,
                  "initialize biases uniformly instead of zero");
  train->add_flag("--per-param-clip,!--no-per-param-clip", rc.per_param_clip,
                  "clip each parameter's gradient norm separately");
  train->add_option("--seed", rc.seed, "seed for init, batching, and dropout")
      ->capture_default_str();
  train->add_option("--beam-size", rc.beam_size, "dev-decode beam width")->capture_default_str();
  train->add_option("--alpha", rc.alpha, "dev-decode length penalty exponent")
      ->capture_default_str();
  train->add_option("--max-out-len", rc.max_out_len,
                    "dev-decode output length cap (0: 2*source+10)")->capture_default_str();
  train->add_flag("--prune-with-lp,!--no-prune-with-lp", rc.prune_with_lp,
                  "apply the length penalty during beam pruning");
  train->add_flag("--replace-unk,!--no-replace-unk", rc.replace_unk,
                  "replace <unk> via attention in dev decoding");
  train->add_flag("--resume", resume, "continue from out_dir/last.ckpt");

  TranslateArgs tr_args;
  CLI::App* tr = app.add_subcommand("translate", "beam-search decode a text file");
  tr->add_option("--checkpoint", tr_args.checkpoint, "model checkpoint")->required();
  tr->add_option("--input", tr_args.input, "source text")->required();
  tr->add_option("--output", tr_args.output, "output file (default: stdout)");
  tr->add_option("--beam", tr_args.beam, "beam width")->capture_default_str();
  tr->add_option("--alpha", tr_args.alpha, "length penalty exponent")->capture_default_str();
  tr->add_option("--max-len", tr_args.max_len, "output length cap (0: 2*source+10)")
      ->capture_default_str();
  tr->add_flag("--replace-unk,!--no-replace-unk", tr_args.replace_unk,
               "replace <unk> with the most-attended source token (default on)");
  tr->add_flag("--prune-with-lp,!--no-prune-with-lp", tr_args.prune_with_lp,
               "apply the length penalty during beam pruning");
  tr->add_option("--dump-attention", tr_args.dump_attention,
                 "write per-sentence attention matrices to this file");

  std::string ev_hyp, ev_ref;
  CLI::App* ev = app.add_subcommand("evaluate", "corpus BLEU of a hypothesis file");
  ev->add_option("--hyp", ev_hyp, "hypothesis text")->required();
  ev->add_option("--ref", ev_ref, "reference text")->required();

  SignificanceArgs sig_args;
  CLI::App* sig = app.add_subcommand("significance", "paired bootstrap between two systems");
  sig->add_option("--hyp-a", sig_args.hyp_a, "system A hypotheses")->required();
  sig->add_option("--hyp-b", sig_args.hyp_b, "system B hypotheses")->required();
  sig->add_option("--ref", sig_args.ref, "reference text")->required();
  sig->add_option("--resamples", sig_args.resamples, "bootstrap resamples")->capture_default_str();
  sig->add_option("--seed", sig_args.seed, "resampling seed")->capture_default_str();

  std::string lex_ckpt;
  int lex_top_k = 5;
  CLI::App* lex = app.add_subcommand("lexicon", "lexical translation table of a fixnorm_lex model");
  lex->add_option("--checkpoint", lex_ckpt, "model checkpoint")->required();
  lex->add_option("--top-k", lex_top_k, "entries per source word")->capture_default_str();

  InspectArgs in_args;
  CLI::App* ins = app.add_subcommand("inspect", "logit decomposition |W_e||h~|cos + b_e at one decode step");
  ins->add_option("--checkpoint", in_args.checkpoint, "model checkpoint")->required();
  ins->add_option("--source", in_args.source, "source sentence (quoted tokens)")->required();
  ins->add_option("--position", in_args.position, "0-based greedy-decode step to inspect")
      ->capture_default_str();
  ins->add_option("--candidates", in_args.candidates, "comma-separated target tokens")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(prep)) return cmd_prep(prep_args);
    if (app.got_subcommand(bl)) return cmd_bpe_learn(bl_args);
    if (app.got_subcommand(ba)) return cmd_bpe_apply(ba_args);
    if (app.got_subcommand(train)) return cmd_train(rc, resume);
    if (app.got_subcommand(tr))
      return dispatch_checkpoint(tr_args.checkpoint, [&](auto tag) {
        return run_translate<decltype(tag)>(tr_args);
      });
    if (app.got_subcommand(ev)) return cmd_evaluate(ev_hyp, ev_ref);
    if (app.got_subcommand(sig)) return cmd_significance(sig_args);
    if (app.got_subcommand(lex))
      return dispatch_checkpoint(lex_ckpt, [&](auto tag) {
        return run_lexicon<decltype(tag)>(lex_ckpt, lex_top_k);
      });
    if (app.got_subcommand(ins))
      return dispatch_checkpoint(in_args.checkpoint, [&](auto tag) {
        return run_inspect<decltype(tag)>(in_args);
      });
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
