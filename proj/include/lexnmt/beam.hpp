// Beam-search decoding with length normalization, attention-based UNK
// replacement, and the corpus translation driver. Decoding runs one tape per
// hypothesis per step, with decoder states carried between tapes as plain
// tensors; single-row scoring keeps every log-prob bit-identical to scoring
// the same sequence alone, so the search is exactly comparable to exhaustive
// enumeration.
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lexnmt/corpus.hpp"
#include "lexnmt/model.hpp"

namespace lexnmt {

struct BeamConfig {
  int beam_size = 12;
  double alpha = 0.8;
  int max_len = 0;  // 0: use 2*source_length + 10
  bool prune_with_lp = false;  // apply lp during pruning, not just final ranking

  void validate() const {
    if (beam_size < 1) throw std::invalid_argument("beam_size must be >= 1");
    if (alpha < 0) throw std::invalid_argument("alpha must be >= 0");
  }
};

// lp(e) = ((5+|e|)/6)^alpha
inline double length_penalty(int length, double alpha) {
  if (length < 1) throw std::invalid_argument("length_penalty: length must be >= 1");
  return std::pow((5.0 + length) / 6.0, alpha);
}

template <typename T>
struct BeamHypothesis {
  std::vector<int> ids{kBos};  // BOS-rooted
  double log_prob = 0;
  std::vector<Tensor<T>> attention;  // one [S] row per emitted token
  bool finished = false;

  // Emitted length |e|: excludes BOS, includes EOS once finished.
  int length() const { return static_cast<int>(ids.size()) - 1; }
  double score(double alpha) const {
    return log_prob / length_penalty(std::max(length(), 1), alpha);
  }
};

namespace detail {

// Value snapshot of one encoded sentence, reusable across step tapes.
template <typename T>
struct EncodedSource {
  int S = 0;
  std::vector<Tensor<T>> H;     // per position [1 x d]
  std::vector<Tensor<T>> h, c;  // per layer [1 x d]
  std::vector<int> src_ids;     // reversed order, as encoded
};

template <typename T>
EncodedSource<T> encode_source(ModelParams<T>& mp, const std::vector<int>& src_ids) {
  if (src_ids.empty()) throw std::invalid_argument("beam_search: empty source");
  Batch b;
  b.size = 1;
  b.src_len = static_cast<int>(src_ids.size());
  b.src_ids = src_ids;
  b.src_mask.assign(src_ids.size(), 1);
  b.src_lengths = {b.src_len};
  b.tgt_len = 1;
  b.tgt_in = {kBos};
  b.tgt_out = {kEos};
  b.tgt_lengths = {1};
  Tape<T> tape;
  Binder<T> bind(tape);
  Rng drop(0);
  EncoderOutput<T> enc = encode(bind, mp, b, false, drop);
  EncodedSource<T> out;
  out.S = b.src_len;
  out.src_ids = src_ids;
  for (auto v : enc.H) out.H.push_back(tape.value(v));
  for (auto v : enc.final_h) out.h.push_back(tape.value(v));
  for (auto v : enc.final_c) out.c.push_back(tape.value(v));
  return out;
}

template <typename T>
Tensor<T> take_row(const Tensor<T>& m, int i) {
  Tensor<T> out({m.cols()});
  for (int j = 0; j < m.cols(); ++j) out[j] = m.at(i, j);
  return out;
}

// One decoder step for one hypothesis on a fresh tape.
template <typename T>
struct StepScore {
  Tensor<T> log_probs;        // [1 x V_e]
  Tensor<T> attention;        // [S]
  std::vector<Tensor<T>> h, c;
  Tensor<T> feed;             // raw h~ for this step
  Tensor<T> h_lex;            // raw lexical state (lex variants only)
};

template <typename T>
StepScore<T> score_step(ModelParams<T>& mp, const EncodedSource<T>& src,
                        int prev_token, const std::vector<Tensor<T>>& h,
                        const std::vector<Tensor<T>>& c, const Tensor<T>& feed) {
  Tape<T> tape;
  Binder<T> bind(tape);
  EncoderOutput<T> enc;
  enc.mask_neg = Tensor<T>({1, src.S});
  for (int s = 0; s < src.S; ++s) {
    enc.H.push_back(tape.constant(src.H[s]));
    enc.src_cols.push_back({src.src_ids[s]});
  }
  DecoderState<T> state;
  for (std::size_t l = 0; l < h.size(); ++l) {
    state.h.push_back(tape.constant(h[l]));
    state.c.push_back(tape.constant(c[l]));
  }
  state.input_feed = tape.constant(feed);
  OutputTables<T> tables = make_output_tables(bind, mp);
  Rng drop(0);
  DecoderStepResult<T> step = decoder_step(bind, mp, tables, {prev_token},
                                           state, enc, false, drop);
  std::optional<Var<T>> h_lex;
  if (mp.config.uses_lex())
    h_lex = lex_step(bind, mp, step.attn.weights, enc.src_cols);
  StepScore<T> out;
  out.log_probs = tape.value(
      log_softmax_rows(output_logits(bind, mp, tables, step.h_tilde, h_lex)));
  out.attention = take_row(tape.value(step.attn.weights), 0);
  if (h_lex) out.h_lex = tape.value(*h_lex);
  for (std::size_t l = 0; l < h.size(); ++l) {
    out.h.push_back(tape.value(state.h[l]));
    out.c.push_back(tape.value(state.c[l]));
  }
  out.feed = tape.value(state.input_feed);
  return out;
}

}  // namespace detail

// Standard beam search; finished hypotheses move to a completed pool and the
// live beam refills from the remaining expansions. Pruning uses raw log-prob
// unless prune_with_lp; the length penalty always applies at final ranking.
template <typename T>
std::vector<BeamHypothesis<T>> beam_search(ModelParams<T>& mp,
                                           const std::vector<int>& src_ids,
                                           const BeamConfig& bc) {
  bc.validate();
  const detail::EncodedSource<T> src = detail::encode_source(mp, src_ids);
  const int max_len = bc.max_len > 0 ? bc.max_len : 2 * src.S + 10;
  const int K = bc.beam_size;
  const int layers = mp.config.num_layers;
  const int d = mp.config.hidden_size;

  struct LiveState {
    BeamHypothesis<T> hyp;
    std::vector<Tensor<T>> h, c;  // per layer, single row
    Tensor<T> feed;
  };
  std::vector<LiveState> live(1);
  for (int l = 0; l < layers; ++l) {
    live[0].h.push_back(src.h[l]);  // encoder finals are already [1 x d]
    live[0].c.push_back(src.c[l]);
  }
  live[0].feed = Tensor<T>({1, d});
  std::vector<BeamHypothesis<T>> completed;

  for (int t = 0; t < max_len && !live.empty(); ++t) {
    const int B = static_cast<int>(live.size());
    std::vector<detail::StepScore<T>> scored;
    scored.reserve(B);
    for (const LiveState& ls : live)
      scored.push_back(detail::score_step(mp, src, ls.hyp.ids.back(), ls.h,
                                          ls.c, ls.feed));

    struct Cand {
      double log_prob;
      double rank_key;
      int from;
      int token;
    };
    std::vector<Cand> cands;
    cands.reserve(static_cast<std::size_t>(B) * scored[0].log_probs.cols());
    for (int i = 0; i < B; ++i)
      for (int y = 0; y < scored[i].log_probs.cols(); ++y) {
        if (y == kPad || y == kBos) continue;  // never emitted
        const double lp_new =
            live[i].hyp.log_prob + static_cast<double>(scored[i].log_probs.at(0, y));
        const int len_new = live[i].hyp.length() + 1;
        const double key =
            bc.prune_with_lp ? lp_new / length_penalty(len_new, bc.alpha) : lp_new;
        cands.push_back({lp_new, key, i, y});
      }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      return a.rank_key > b.rank_key;
    });

    // Consume candidates in rank order until the live beam is refilled. An
    // EOS candidate ranked above the cutoff completes (at most K per step);
    // anything below the K-th surviving expansion is out of the beam.
    std::vector<LiveState> next;
    int emitted_eos = 0;
    for (const Cand& cand : cands) {
      if (static_cast<int>(next.size()) >= K) break;
      BeamHypothesis<T> hyp = live[cand.from].hyp;
      hyp.ids.push_back(cand.token);
      hyp.log_prob = cand.log_prob;
      hyp.attention.push_back(scored[cand.from].attention);
      if (cand.token == kEos) {
        if (emitted_eos < K) {
          hyp.finished = true;
          completed.push_back(std::move(hyp));
          ++emitted_eos;
        }
      } else {
        LiveState ls;
        ls.hyp = std::move(hyp);
        ls.h = scored[cand.from].h;
        ls.c = scored[cand.from].c;
        ls.feed = scored[cand.from].feed;
        next.push_back(std::move(ls));
      }
    }
    live = std::move(next);

    // Sound early stop: a live hypothesis can only lose log-prob, and lp is
    // capped at lp(max_len), so its final score is bounded above.
    if (!completed.empty() && !live.empty()) {
      double best_completed = -1e300;
      for (const auto& h : completed)
        best_completed = std::max(best_completed, h.score(bc.alpha));
      double best_live_bound = -1e300;
      for (const auto& ls : live)
        best_live_bound = std::max(
            best_live_bound, ls.hyp.log_prob / length_penalty(max_len, bc.alpha));
      if (best_completed >= best_live_bound) live.clear();
    }
  }

  // Fallback: nothing reached EOS within max_len.
  for (auto& ls : live) completed.push_back(std::move(ls.hyp));
  std::stable_sort(completed.begin(), completed.end(),
                   [&](const BeamHypothesis<T>& a, const BeamHypothesis<T>& b) {
                     return a.score(bc.alpha) > b.score(bc.alpha);
                   });
  if (completed.size() > static_cast<std::size_t>(K)) completed.resize(K);
  return completed;
}

// Replaces each UNK with the source token under the attention argmax for that
// step; ties break toward the lowest source position, and the position maps
// back through the source reversal.
template <typename T>
Sentence unk_replace(const Sentence& hyp_tokens,
                     const std::vector<Tensor<T>>& attention,
                     const Sentence& src_original) {
  Sentence out = hyp_tokens;
  const int S = static_cast<int>(src_original.size());
  for (std::size_t t = 0; t < out.size(); ++t) {
    if (out[t] != kSpecials[kUnk]) continue;
    if (t >= attention.size())
      throw std::invalid_argument("unk_replace: missing attention for step " +
                                  std::to_string(t));
    const Tensor<T>& a = attention[t];
    int best = 0;
    for (std::int64_t j = 1; j < a.size(); ++j)
      if (static_cast<double>(a[j]) > static_cast<double>(a[best])) best = static_cast<int>(j);
    const int orig = S - 1 - best;
    if (orig < 0 || orig >= S)
      throw std::out_of_range("unk_replace: attention index " +
                              std::to_string(best) + " outside source length " +
                              std::to_string(S));
    out[t] = src_original[orig];
  }
  return out;
}

struct TranslateOptions {
  bool replace_unk = false;
  std::ostream* attention_dump = nullptr;
  std::ostream* errors = nullptr;  // defaults to std::cerr
};

// Order-preserving corpus driver: one output line per input line; failures
// are reported with their line number and leave an empty line.
template <typename T>
std::vector<Sentence> translate_corpus(ModelParams<T>& mp,
                                       const std::vector<Sentence>& sentences,
                                       const Vocabulary& src_vocab,
                                       const Vocabulary& tgt_vocab,
                                       const BeamConfig& bc,
                                       const TranslateOptions& opts = {}) {
  std::ostream& err = opts.errors ? *opts.errors : std::cerr;
  std::vector<Sentence> out;
  out.reserve(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    try {
      const std::vector<int> ids =
          src_vocab.encode(sentences[i], /*reverse=*/true, false);
      auto nbest = beam_search(mp, ids, bc);
      const BeamHypothesis<T>& best = nbest.front();
      // Strip BOS and trailing EOS.
      std::vector<int> body(best.ids.begin() + 1, best.ids.end());
      std::vector<Tensor<T>> attn = best.attention;
      if (!body.empty() && body.back() == kEos) {
        body.pop_back();
        attn.pop_back();
      }
      Sentence toks = tgt_vocab.decode(body);
      if (opts.replace_unk) toks = unk_replace(toks, attn, sentences[i]);
      if (opts.attention_dump) {
        std::ostream& os = *opts.attention_dump;
        os << "SENT " << i << ' ' << attn.size() << ' ' << ids.size() << '\n';
        os << std::fixed << std::setprecision(6);
        for (const auto& row : attn) {
          for (std::int64_t j = 0; j < row.size(); ++j)
            os << (j ? " " : "") << static_cast<double>(row[j]);
          os << '\n';
        }
        os.unsetf(std::ios_base::fixed);
      }
      out.push_back(std::move(toks));
    } catch (const std::exception& e) {
      err << "line " << i + 1 << ": " << e.what() << '\n';
      out.emplace_back();
    }
  }
  return out;
}

}  // namespace lexnmt
