// Corpus BLEU with clipping and brevity penalty, teacher-forced perplexity,
// and paired bootstrap significance.
#pragma once

#include <array>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lexnmt/corpus.hpp"
#include "lexnmt/model.hpp"

namespace lexnmt {

inline constexpr int kBleuMaxN = 4;

// Per-sentence sufficient statistics; corpus BLEU is a function of their sum,
// which is what bootstrap resampling aggregates.
struct BleuStats {
  std::array<std::int64_t, kBleuMaxN> match{};  // clipped n-gram matches
  std::array<std::int64_t, kBleuMaxN> total{};  // hypothesis n-gram counts
  std::int64_t hyp_len = 0;
  std::int64_t ref_len = 0;

  BleuStats& operator+=(const BleuStats& o) {
    for (int n = 0; n < kBleuMaxN; ++n) {
      match[n] += o.match[n];
      total[n] += o.total[n];
    }
    hyp_len += o.hyp_len;
    ref_len += o.ref_len;
    return *this;
  }
};

namespace detail {

inline std::map<std::string, std::int64_t> ngram_counts(const Sentence& toks,
                                                        int n) {
  std::map<std::string, std::int64_t> counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key;
    for (int j = 0; j < n; ++j) {
      if (j) key += '\x1f';
      key += toks[i + j];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace detail

inline BleuStats sentence_bleu_stats(const Sentence& hyp, const Sentence& ref) {
  BleuStats st;
  st.hyp_len = static_cast<std::int64_t>(hyp.size());
  st.ref_len = static_cast<std::int64_t>(ref.size());
  for (int n = 1; n <= kBleuMaxN; ++n) {
    const auto hc = detail::ngram_counts(hyp, n);
    const auto rc = detail::ngram_counts(ref, n);
    for (const auto& [gram, cnt] : hc) {
      st.total[n - 1] += cnt;
      auto it = rc.find(gram);
      if (it != rc.end()) st.match[n - 1] += std::min(cnt, it->second);
    }
  }
  return st;
}

struct BleuReport {
  double bleu = 0;  // 0..100
  std::array<double, kBleuMaxN> precisions{};
  double brevity_penalty = 1;
  std::int64_t hyp_len = 0;
  std::int64_t ref_len = 0;

  std::string to_text() const {
    std::ostringstream os;
    os << "bleu=" << bleu << "\n";
    for (int n = 0; n < kBleuMaxN; ++n)
      os << "p" << n + 1 << "=" << precisions[n] << "\n";
    os << "bp=" << brevity_penalty << "\n";
    os << "hyp_len=" << hyp_len << "\nref_len=" << ref_len << "\n";
    return os.str();
  }
};

inline BleuReport bleu_from_stats(const BleuStats& st) {
  BleuReport rep;
  rep.hyp_len = st.hyp_len;
  rep.ref_len = st.ref_len;
  double log_prec = 0;
  bool zero = false;
  for (int n = 0; n < kBleuMaxN; ++n) {
    rep.precisions[n] =
        st.total[n] == 0 ? 0.0
                         : static_cast<double>(st.match[n]) /
                               static_cast<double>(st.total[n]);
    if (rep.precisions[n] == 0.0)
      zero = true;  // no smoothing: any zero precision zeroes BLEU
    else
      log_prec += std::log(rep.precisions[n]) / kBleuMaxN;
  }
  rep.brevity_penalty =
      st.hyp_len == 0 ? 0.0
      : st.hyp_len < st.ref_len
          ? std::exp(1.0 - static_cast<double>(st.ref_len) /
                               static_cast<double>(st.hyp_len))
          : 1.0;
  rep.bleu = zero ? 0.0 : 100.0 * rep.brevity_penalty * std::exp(log_prec);
  return rep;
}

inline BleuReport bleu(const std::vector<Sentence>& hyps,
                       const std::vector<Sentence>& refs) {
  if (hyps.size() != refs.size())
    throw std::invalid_argument("bleu: " + std::to_string(hyps.size()) +
                                " hypotheses vs " + std::to_string(refs.size()) +
                                " references");
  BleuStats total;
  for (std::size_t i = 0; i < hyps.size(); ++i)
    total += sentence_bleu_stats(hyps[i], refs[i]);
  return bleu_from_stats(total);
}

// exp(mean per-token NLL), teacher-forced without dropout.
template <typename T>
double perplexity(ModelParams<T>& mp, const ParallelCorpus& corpus,
                  const Vocabulary& vs, const Vocabulary& vt,
                  int batch_size = 32) {
  if (corpus.empty()) throw std::invalid_argument("perplexity: empty corpus");
  Rng batch_rng(0);
  double nll_sum = 0;
  std::int64_t tokens = 0;
  for (const Batch& b : make_batches(corpus, vs, vt, batch_size, batch_rng)) {
    Tape<T> tape;
    Binder<T> bind(tape);
    Rng drop(0);
    auto fwd = forward_teacher_forced(bind, mp, b, false, drop);
    nll_sum += static_cast<double>(tape.value(fwd.loss)[0]) *
               static_cast<double>(fwd.num_tokens);
    tokens += fwd.num_tokens;
  }
  return std::exp(nll_sum / static_cast<double>(tokens));
}

struct SignificanceReport {
  double p_value = 1;
  int n_resamples = 0;
  double mean_bleu_a = 0;
  double mean_bleu_b = 0;
};

// Paired bootstrap over sentences; p = fraction of resamples where system B
// scores at least as high as system A (small p favors A).
inline SignificanceReport bootstrap_significance(
    const std::vector<Sentence>& hyp_a, const std::vector<Sentence>& hyp_b,
    const std::vector<Sentence>& refs, int n_resamples, Rng& rng) {
  if (hyp_a.size() != refs.size() || hyp_b.size() != refs.size())
    throw std::invalid_argument("bootstrap: system/reference size mismatch");
  if (refs.empty()) throw std::invalid_argument("bootstrap: empty corpus");
  std::vector<BleuStats> sa, sb;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    sa.push_back(sentence_bleu_stats(hyp_a[i], refs[i]));
    sb.push_back(sentence_bleu_stats(hyp_b[i], refs[i]));
  }
  SignificanceReport rep;
  rep.n_resamples = n_resamples;
  int b_wins = 0;
  for (int r = 0; r < n_resamples; ++r) {
    BleuStats ta, tb;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const auto j = static_cast<std::size_t>(rng.below(refs.size()));
      ta += sa[j];
      tb += sb[j];
    }
    const double ba = bleu_from_stats(ta).bleu;
    const double bb = bleu_from_stats(tb).bleu;
    rep.mean_bleu_a += ba;
    rep.mean_bleu_b += bb;
    if (bb >= ba) ++b_wins;
  }
  rep.mean_bleu_a /= n_resamples;
  rep.mean_bleu_b /= n_resamples;
  rep.p_value = static_cast<double>(b_wins) / n_resamples;
  return rep;
}

}  // namespace lexnmt
