// Epoch loop: shuffled minibatches, Adadelta with clipping, per-epoch dev
// decoding for checkpoint selection, and deterministic resume.
#pragma once

#include <cmath>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "lexnmt/beam.hpp"
#include "lexnmt/checkpoint.hpp"
#include "lexnmt/corpus.hpp"
#include "lexnmt/eval.hpp"
#include "lexnmt/model.hpp"
#include "lexnmt/optimizer.hpp"

namespace lexnmt {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  double clip_norm = 5.0;
  double init_range = 0.01;
  bool init_biases = false;
  bool per_param_clip = false;  // clipping-ambiguity knob; default global norm
  std::uint64_t seed = 1;
  // Dev decoding recipe, shared with test-time inference.
  int beam_size = 12;
  double alpha = 0.8;
  bool replace_unk = true;
};

struct EpochLog {
  int epoch = 0;
  std::int64_t step = 0;
  double train_ppl = 0;
  double dev_bleu = 0;
  bool is_best = false;

  std::string row() const {
    std::ostringstream os;
    os.precision(6);
    os << epoch << '\t' << step << '\t' << train_ppl << '\t' << dev_bleu << '\t'
       << (is_best ? 1 : 0);
    return os.str();
  }
};

struct TrainOutcome {
  std::vector<EpochLog> log;
  double best_dev_bleu = -1;
  int best_epoch = -1;
  bool aborted = false;
  std::string abort_reason;
};

template <typename T>
double decode_dev_bleu(ModelParams<T>& mp, const ParallelCorpus& dev,
                       const Vocabulary& vs, const Vocabulary& vt,
                       const TrainConfig& tc) {
  BeamConfig bc;
  bc.beam_size = tc.beam_size;
  bc.alpha = tc.alpha;
  TranslateOptions opts;
  opts.replace_unk = tc.replace_unk;
  std::ostringstream sink;  // per-line failures are counted via empty outputs
  opts.errors = &sink;
  std::vector<Sentence> srcs = side_of(dev, true), refs = side_of(dev, false);
  std::vector<Sentence> hyps = translate_corpus(mp, srcs, vs, vt, bc, opts);
  return bleu(hyps, refs).bleu;
}

// Runs epochs completed_epochs+1 .. tc.epochs, mutating `ck` in place as the
// rolling "last" state. The best-by-dev-BLEU checkpoint is written to
// best_path whenever it improves; `ck` is written to last_path after every
// epoch. On a non-finite loss or gradient the loop aborts, leaving the last
// good files in place.
template <typename T>
TrainOutcome train_loop(Checkpoint<T>& ck, const ParallelCorpus& train_corpus,
                        const ParallelCorpus& dev_corpus, const TrainConfig& tc,
                        std::ostream* log_os = nullptr,
                        const std::string& best_path = "",
                        const std::string& last_path = "") {
  if (train_corpus.empty()) throw std::invalid_argument("train: empty corpus");
  Rng rng(tc.seed);
  if (!ck.rng_state.empty()) rng.load_state(ck.rng_state);
  auto params = ck.params.all();
  TrainOutcome out;
  out.best_dev_bleu = ck.best_dev_bleu;
  out.best_epoch = ck.best_epoch;

  for (int epoch = ck.completed_epochs + 1; epoch <= tc.epochs; ++epoch) {
    double nll_sum = 0;
    std::int64_t token_sum = 0;
    try {
      for (Batch& batch : make_batches(train_corpus, ck.src_vocab, ck.tgt_vocab,
                                       tc.batch_size, rng)) {
        Tape<T> tape;
        Binder<T> bind(tape);
        auto fwd = forward_teacher_forced(bind, ck.params, batch, true, rng);
        const double loss = static_cast<double>(tape.value(fwd.loss)[0]);
        if (!std::isfinite(loss))
          throw std::runtime_error("non-finite loss at epoch " +
                                   std::to_string(epoch));
        nll_sum += loss * static_cast<double>(fwd.num_tokens);
        token_sum += fwd.num_tokens;
        zero_grads(params);
        tape.backward(fwd.loss);
        if (tc.per_param_clip)
          clip_per_param_norm(params, tc.clip_norm);
        else
          clip_global_norm(params, tc.clip_norm);
        adadelta_step(params, ck.opt);
        ++ck.global_step;
      }
    } catch (const std::runtime_error& e) {
      out.aborted = true;
      out.abort_reason = e.what();
      break;
    }

    EpochLog row;
    row.epoch = epoch;
    row.step = ck.global_step;
    row.train_ppl = std::exp(nll_sum / static_cast<double>(token_sum));
    row.dev_bleu = dev_corpus.empty()
                       ? 0.0
                       : decode_dev_bleu(ck.params, dev_corpus, ck.src_vocab,
                                         ck.tgt_vocab, tc);
    row.is_best = row.dev_bleu > out.best_dev_bleu;
    if (row.is_best) {
      out.best_dev_bleu = row.dev_bleu;
      out.best_epoch = epoch;
    }
    out.log.push_back(row);
    if (log_os) (*log_os) << row.row() << '\n' << std::flush;

    ck.completed_epochs = epoch;
    ck.best_dev_bleu = out.best_dev_bleu;
    ck.best_epoch = out.best_epoch;
    ck.rng_state = rng.save_state();
    if (row.is_best && !best_path.empty()) save_checkpoint(best_path, ck);
    if (!last_path.empty()) save_checkpoint(last_path, ck);
  }
  return out;
}

// Fresh training state: built, initialized, ready for train_loop.
template <typename T>
Checkpoint<T> make_initial_checkpoint(const ModelConfig& cfg,
                                      const Vocabulary& vs, const Vocabulary& vt,
                                      const TrainConfig& tc) {
  Checkpoint<T> ck;
  ck.config = cfg;
  ck.config.src_vocab_size = vs.size();
  ck.config.tgt_vocab_size = vt.size();
  ck.src_vocab = vs;
  ck.tgt_vocab = vt;
  ck.params = ModelParams<T>::build(ck.config);
  Rng init_rng(tc.seed);
  init_params(ck.params.all(), init_rng, tc.init_range, tc.init_biases);
  ck.opt = AdadeltaState<T>::make(ck.params.all());
  return ck;
}

}  // namespace lexnmt
