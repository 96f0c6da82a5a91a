// Attentional encoder-decoder with input feeding and four output-layer
// variants: untied, tied, fixnorm (fixed-norm embeddings and attentional
// state), fixnorm_lex (fixnorm plus a lexical FFNN fed by raw source
// embeddings). Row-vector convention throughout: activations are [B x d],
// weights multiply on the right.
#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "lexnmt/corpus.hpp"
#include "lexnmt/tape.hpp"
#include "lexnmt/vocab.hpp"

namespace lexnmt {

enum class Variant { untied, tied, fixnorm, fixnorm_lex };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::untied: return "untied";
    case Variant::tied: return "tied";
    case Variant::fixnorm: return "fixnorm";
    case Variant::fixnorm_lex: return "fixnorm_lex";
  }
  throw std::logic_error("bad variant");
}

inline Variant parse_variant(const std::string& s) {
  if (s == "untied") return Variant::untied;
  if (s == "tied") return Variant::tied;
  if (s == "fixnorm") return Variant::fixnorm;
  if (s == "fixnorm_lex") return Variant::fixnorm_lex;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

struct ModelConfig {
  Variant variant = Variant::tied;
  int num_layers = 1;
  int hidden_size = 64;  // embedding size always equals hidden size
  double radius = 0.0;   // r, required by the fixnorm variants
  double dropout_p = 0.0;
  int src_vocab_size = 0;
  int tgt_vocab_size = 0;
  bool lex_hidden_bias = false;  // optional bias inside the lex FFNN tanh

  bool uses_fixnorm() const {
    return variant == Variant::fixnorm || variant == Variant::fixnorm_lex;
  }
  bool uses_lex() const { return variant == Variant::fixnorm_lex; }

  void validate() const {
    if (hidden_size <= 0) throw std::invalid_argument("hidden_size must be > 0");
    if (num_layers < 1) throw std::invalid_argument("num_layers must be >= 1");
    if (src_vocab_size < 5 || tgt_vocab_size < 5)
      throw std::invalid_argument("vocab sizes must cover the specials");
    if (dropout_p < 0.0 || dropout_p >= 1.0)
      throw std::invalid_argument("dropout_p must be in [0,1)");
    if (uses_fixnorm() && radius <= 0.0)
      throw std::invalid_argument("variant " + variant_name(variant) +
                                  " requires a positive radius");
  }
};

template <typename T>
struct ModelParams {
  ModelConfig config;

  // The named handles point into store_; moving a deque preserves element
  // addresses, copying would not.
  ModelParams() = default;
  ModelParams(const ModelParams&) = delete;
  ModelParams& operator=(const ModelParams&) = delete;
  ModelParams(ModelParams&&) = default;
  ModelParams& operator=(ModelParams&&) = default;

  struct LstmLayer {
    Parameter<T>* wx;  // [in x 4d]
    Parameter<T>* wh;  // [d x 4d]
    Parameter<T>* b;   // [4d]
  };

  Parameter<T>* src_emb = nullptr;  // F [V_f x d]
  Parameter<T>* tgt_emb = nullptr;  // E [V_e x d]; output rows when tied
  Parameter<T>* out_w = nullptr;    // W^o [V_e x d], untied only
  Parameter<T>* out_b = nullptr;    // b^o [V_e]
  Parameter<T>* attn_w = nullptr;   // W_a [d x d]
  Parameter<T>* comb_w = nullptr;   // W_c [2d x d]
  std::vector<LstmLayer> enc, dec;
  Parameter<T>* lex_w = nullptr;    // W [d x d]
  Parameter<T>* lex_hb = nullptr;   // optional bias inside the lex tanh [d]
  Parameter<T>* lex_out = nullptr;  // W^l [V_e x d], never tied to E
  Parameter<T>* lex_b = nullptr;    // b^l [V_e]

  static ModelParams build(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams mp;
    mp.config = cfg;
    const int d = cfg.hidden_size;
    auto mk = [&mp](const std::string& name, std::vector<int> shape,
                    bool bias = false) {
      mp.store_.emplace_back(name, Tensor<T>(std::move(shape)), bias);
      return &mp.store_.back();
    };
    mp.src_emb = mk("src_emb", {cfg.src_vocab_size, d});
    mp.tgt_emb = mk("tgt_emb", {cfg.tgt_vocab_size, d});
    if (cfg.variant == Variant::untied) mp.out_w = mk("out_w", {cfg.tgt_vocab_size, d});
    mp.out_b = mk("out_b", {cfg.tgt_vocab_size}, true);
    mp.attn_w = mk("attn_w", {d, d});
    mp.comb_w = mk("comb_w", {2 * d, d});
    for (int l = 0; l < cfg.num_layers; ++l) {
      const std::string p = std::to_string(l);
      mp.enc.push_back({mk("enc" + p + "_wx", {d, 4 * d}),
                        mk("enc" + p + "_wh", {d, 4 * d}),
                        mk("enc" + p + "_b", {4 * d}, true)});
    }
    for (int l = 0; l < cfg.num_layers; ++l) {
      const std::string p = std::to_string(l);
      const int in = l == 0 ? 2 * d : d;  // layer 0 sees [embedding; input feed]
      mp.dec.push_back({mk("dec" + p + "_wx", {in, 4 * d}),
                        mk("dec" + p + "_wh", {d, 4 * d}),
                        mk("dec" + p + "_b", {4 * d}, true)});
    }
    if (cfg.uses_lex()) {
      mp.lex_w = mk("lex_w", {d, d});
      if (cfg.lex_hidden_bias) mp.lex_hb = mk("lex_hb", {d}, true);
      mp.lex_out = mk("lex_out", {cfg.tgt_vocab_size, d});
      mp.lex_b = mk("lex_b", {cfg.tgt_vocab_size}, true);
    }
    return mp;
  }

  std::vector<Parameter<T>*> all() {
    std::vector<Parameter<T>*> out;
    for (auto& p : store_) out.push_back(&p);
    return out;
  }

  Parameter<T>* find(const std::string& name) {
    for (auto& p : store_)
      if (p.name == name) return &p;
    return nullptr;
  }

  std::int64_t num_values() const {
    std::int64_t n = 0;
    for (const auto& p : store_) n += p.value.size();
    return n;
  }

  ModelParams clone() const {
    ModelParams out = build(config);
    auto it = out.store_.begin();
    for (const auto& p : store_) {
      it->value = p.value;
      it->grad = p.grad;
      ++it;
    }
    return out;
  }

 private:
  std::deque<Parameter<T>> store_;  // stable addresses for the named handles
};

// Per-tape parameter bindings; each Parameter enters a tape once.
template <typename T>
class Binder {
 public:
  explicit Binder(Tape<T>& tape) : tape_(&tape) {}

  Var<T> operator()(Parameter<T>& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) return it->second;
    Var<T> v = tape_->input(p);
    bound_.emplace(&p, v);
    return v;
  }
  Var<T> operator()(Parameter<T>* p) { return (*this)(*p); }

  Tape<T>& tape() { return *tape_; }

 private:
  Tape<T>* tape_;
  std::unordered_map<const Parameter<T>*, Var<T>> bound_;
};

// Effective (post-reparameterization) tables for one tape.
template <typename T>
struct OutputTables {
  Var<T> tgt_table;  // embedding rows used for target input lookup
  Var<T> out_w;      // effective output projection rows
  Var<T> out_b;
  Var<T> lex_out;  // effective lex output rows (fixnorm_lex)
  Var<T> lex_b;
};

template <typename T>
OutputTables<T> make_output_tables(Binder<T>& bind, ModelParams<T>& mp) {
  const ModelConfig& cfg = mp.config;
  OutputTables<T> ot;
  Var<T> e = bind(mp.tgt_emb);
  if (cfg.uses_fixnorm()) {
    // E stores pre-normalization values; the model only ever sees r*v/|v|.
    Var<T> eff = normalize_to_radius(e, static_cast<T>(cfg.radius));
    ot.tgt_table = eff;
    ot.out_w = eff;
  } else {
    ot.tgt_table = e;
    ot.out_w = cfg.variant == Variant::untied ? bind(mp.out_w) : e;
  }
  ot.out_b = bind(mp.out_b);
  if (cfg.uses_lex()) {
    ot.lex_out = normalize_to_radius(bind(mp.lex_out), static_cast<T>(cfg.radius));
    ot.lex_b = bind(mp.lex_b);
  }
  return ot;
}

template <typename T>
Var<T> lstm_cell(Binder<T>& bind, const typename ModelParams<T>::LstmLayer& layer,
                 Var<T> x, Var<T>& h, Var<T>& c) {
  const int d = static_cast<int>(bind.tape().value(h).cols());
  Var<T> gates = add(add(matmul(x, bind(layer.wx)), matmul(h, bind(layer.wh))),
                     bind(layer.b));
  Var<T> i = sigmoid_(slice_cols(gates, 0, d));
  Var<T> f = sigmoid_(slice_cols(gates, d, 2 * d));
  Var<T> g = tanh_(slice_cols(gates, 2 * d, 3 * d));
  Var<T> o = sigmoid_(slice_cols(gates, 3 * d, 4 * d));
  c = add(mul(f, c), mul(i, g));
  h = mul(o, tanh_(c));
  return h;
}

template <typename T>
struct EncoderOutput {
  std::vector<Var<T>> H;  // top-layer state per source position, each [B x d]
  std::vector<Var<T>> final_h, final_c;  // per layer, each [B x d]
  Tensor<T> mask_neg;  // [B x S]: 0 at real positions, -1e9 at PAD
  std::vector<std::vector<int>> src_cols;  // ids per position, for lex lookups
};

template <typename T>
EncoderOutput<T> encode(Binder<T>& bind, ModelParams<T>& mp, const Batch& batch,
                        bool training, Rng& rng) {
  const ModelConfig& cfg = mp.config;
  Tape<T>& tape = bind.tape();
  const int B = batch.size, S = batch.src_len, d = cfg.hidden_size;

  EncoderOutput<T> out;
  out.mask_neg = Tensor<T>({B, S});
  for (int i = 0; i < B; ++i) {
    if (batch.src_lengths[i] == 0)
      throw std::invalid_argument("encode: empty source row");
    for (int s = 0; s < S; ++s)
      out.mask_neg.at(i, s) = batch.src_mask[i * S + s] ? T(0) : T(-1e9);
  }

  std::vector<Var<T>> h(cfg.num_layers), c(cfg.num_layers);
  for (int l = 0; l < cfg.num_layers; ++l) {
    h[l] = tape.constant(Tensor<T>({B, d}));
    c[l] = tape.constant(Tensor<T>({B, d}));
  }
  Var<T> src_table = bind(mp.src_emb);
  for (int s = 0; s < S; ++s) {
    std::vector<int> ids(B);
    Tensor<T> m({B}), m_inv({B});
    for (int i = 0; i < B; ++i) {
      ids[i] = batch.src_ids[i * S + s];
      m[i] = static_cast<T>(batch.src_mask[i * S + s]);
      m_inv[i] = T(1) - m[i];
    }
    out.src_cols.push_back(ids);
    Var<T> mv = tape.constant(m), mi = tape.constant(m_inv);
    Var<T> x = dropout(lookup(src_table, ids), static_cast<T>(cfg.dropout_p),
                       training, rng);
    for (int l = 0; l < cfg.num_layers; ++l) {
      Var<T> ph = h[l], pc = c[l];
      lstm_cell(bind, mp.enc[l], x, h[l], c[l]);
      // Frozen past the sentence end so PAD never leaks into the state.
      h[l] = add(mul_colvec(h[l], mv), mul_colvec(ph, mi));
      c[l] = add(mul_colvec(c[l], mv), mul_colvec(pc, mi));
      x = l + 1 < cfg.num_layers
              ? dropout(h[l], static_cast<T>(cfg.dropout_p), training, rng)
              : h[l];
    }
    out.H.push_back(h.back());
  }
  out.final_h = h;
  out.final_c = c;
  return out;
}

template <typename T>
struct AttentionResult {
  Var<T> weights;  // [B x S]
  Var<T> context;  // [B x d]
};

// Luong "general" scoring against all encoder states, masked softmax.
template <typename T>
AttentionResult<T> attend(Binder<T>& bind, ModelParams<T>& mp, Var<T> h_t,
                          const EncoderOutput<T>& enc) {
  Tape<T>& tape = bind.tape();
  const int S = static_cast<int>(enc.H.size());
  for (std::int64_t i = 0; i < enc.mask_neg.rows(); ++i) {
    bool any = false;
    for (int s = 0; s < S; ++s) any = any || enc.mask_neg.at(i, s) == T(0);
    if (!any) throw std::invalid_argument("attend: fully masked row");
  }
  Var<T> q = matmul(h_t, bind(mp.attn_w));
  std::vector<Var<T>> scores;
  scores.reserve(S);
  for (int s = 0; s < S; ++s) scores.push_back(rowsum(mul(q, enc.H[s])));
  Var<T> a = softmax_rows(add(stack_cols(scores), tape.constant(enc.mask_neg)));
  if (debug_checks()) {
    const Tensor<T>& av = tape.value(a);
    for (std::int64_t i = 0; i < av.rows(); ++i) {
      T total = 0;
      for (int s = 0; s < S; ++s) {
        total += av.at(i, s);
        if (enc.mask_neg.at(i, s) != T(0) && av.at(i, s) != T(0))
          throw std::logic_error("attend: nonzero weight at masked position");
      }
      if (std::abs(total - T(1)) > T(1e-6))
        throw std::logic_error("attend: weights do not sum to 1");
    }
  }
  AttentionResult<T> res;
  res.weights = a;
  Var<T> ctx = mul_colvec(enc.H[0], col(a, 0));
  for (int s = 1; s < S; ++s)
    ctx = add(ctx, mul_colvec(enc.H[s], col(a, s)));
  res.context = ctx;
  return res;
}

template <typename T>
struct DecoderState {
  std::vector<Var<T>> h, c;  // per layer [B x d]
  Var<T> input_feed;         // [B x d], zeros at t=1
};

template <typename T>
DecoderState<T> decoder_start(Binder<T>& bind, const EncoderOutput<T>& enc) {
  DecoderState<T> st;
  st.h = enc.final_h;
  st.c = enc.final_c;
  const Tensor<T>& top = bind.tape().value(enc.final_h.back());
  st.input_feed = bind.tape().constant(Tensor<T>(top.shape()));
  return st;
}

template <typename T>
struct DecoderStepResult {
  Var<T> h_tilde;  // [B x d]
  AttentionResult<T> attn;
};

// One target step: LSTM over [embedding; input feed], attention, then
// h~_t = tanh(W_c [c_t; h_t]) stored back as the next input feed.
template <typename T>
DecoderStepResult<T> decoder_step(Binder<T>& bind, ModelParams<T>& mp,
                                  const OutputTables<T>& tables,
                                  const std::vector<int>& prev_ids,
                                  DecoderState<T>& state,
                                  const EncoderOutput<T>& enc, bool training,
                                  Rng& rng) {
  const ModelConfig& cfg = mp.config;
  Var<T> emb = dropout(lookup(tables.tgt_table, prev_ids),
                       static_cast<T>(cfg.dropout_p), training, rng);
  Var<T> x = concat_cols(emb, state.input_feed);
  for (int l = 0; l < cfg.num_layers; ++l) {
    lstm_cell(bind, mp.dec[l], x, state.h[l], state.c[l]);
    x = l + 1 < cfg.num_layers
            ? dropout(state.h[l], static_cast<T>(cfg.dropout_p), training, rng)
            : state.h[l];
  }
  AttentionResult<T> attn = attend(bind, mp, state.h.back(), enc);
  Var<T> h_tilde =
      tanh_(matmul(concat_cols(attn.context, state.h.back()), bind(mp.comb_w)));
  state.input_feed = h_tilde;
  DecoderStepResult<T> res;
  res.h_tilde = h_tilde;
  res.attn = attn;
  return res;
}

// Weighted sum of raw source embeddings through the lexical FFNN:
// f^l = tanh(sum_s a(s) f_s), h^l = tanh(W f^l) + f^l.
template <typename T>
Var<T> lex_step(Binder<T>& bind, ModelParams<T>& mp, Var<T> attn_weights,
                const std::vector<std::vector<int>>& src_cols) {
  Var<T> src_table = bind(mp.src_emb);
  const int S = static_cast<int>(src_cols.size());
  Var<T> acc = mul_colvec(lookup(src_table, src_cols[0]), col(attn_weights, 0));
  for (int s = 1; s < S; ++s)
    acc = add(acc, mul_colvec(lookup(src_table, src_cols[s]), col(attn_weights, s)));
  Var<T> f_lex = tanh_(acc);
  Var<T> hidden = matmul(f_lex, bind(mp.lex_w));
  if (mp.lex_hb) hidden = add(hidden, bind(mp.lex_hb));
  return add(tanh_(hidden), f_lex);
}

template <typename T>
Var<T> output_logits(Binder<T>& bind, ModelParams<T>& mp,
                     const OutputTables<T>& tables, Var<T> h_tilde,
                     std::optional<Var<T>> h_lex = std::nullopt) {
  const ModelConfig& cfg = mp.config;
  if (cfg.uses_lex() != h_lex.has_value())
    throw std::invalid_argument("output_logits: lex input " +
                                std::string(h_lex ? "set" : "missing") +
                                " for variant " + variant_name(cfg.variant));
  Var<T> h_eff = cfg.uses_fixnorm()
                     ? normalize_to_radius(h_tilde, static_cast<T>(cfg.radius))
                     : h_tilde;
  Var<T> logits = add(matmul_nt(h_eff, tables.out_w), tables.out_b);
  if (h_lex) {
    Var<T> hl_eff = normalize_to_radius(*h_lex, static_cast<T>(cfg.radius));
    logits = add(add(logits, matmul_nt(hl_eff, tables.lex_out)), tables.lex_b);
  }
  return logits;
}

template <typename T>
Var<T> output_logits(Binder<T>& bind, ModelParams<T>& mp,
                     const OutputTables<T>& tables, Var<T> h_tilde, Var<T> h_lex) {
  return output_logits(bind, mp, tables, h_tilde, std::optional<Var<T>>(h_lex));
}

template <typename T>
struct ForwardResult {
  Var<T> loss;  // scalar mean NLL per non-PAD target token
  std::int64_t num_tokens = 0;
  std::vector<Tensor<T>> attention;  // per step [B x S] (optional)
  std::vector<Tensor<T>> logits;     // per step [B x V_e] (optional)
};

template <typename T>
ForwardResult<T> forward_teacher_forced(Binder<T>& bind, ModelParams<T>& mp,
                                        const Batch& batch, bool training,
                                        Rng& rng, bool keep_attention = false,
                                        bool keep_logits = false) {
  Tape<T>& tape = bind.tape();
  EncoderOutput<T> enc = encode(bind, mp, batch, training, rng);
  OutputTables<T> tables = make_output_tables(bind, mp);
  DecoderState<T> state = decoder_start(bind, enc);

  ForwardResult<T> out;
  out.num_tokens = batch.num_target_tokens();
  Var<T> total;
  for (int t = 0; t < batch.tgt_len; ++t) {
    std::vector<int> prev(batch.size), want(batch.size);
    Tensor<T> loss_mask({batch.size});
    for (int i = 0; i < batch.size; ++i) {
      prev[i] = batch.tgt_in_at(i, t);
      want[i] = batch.tgt_out_at(i, t);
      loss_mask[i] = t < batch.tgt_lengths[i] ? T(1) : T(0);
    }
    DecoderStepResult<T> step =
        decoder_step(bind, mp, tables, prev, state, enc, training, rng);
    std::optional<Var<T>> h_lex;
    if (mp.config.uses_lex())
      h_lex = lex_step(bind, mp, step.attn.weights, enc.src_cols);
    Var<T> h_for_output =
        dropout(step.h_tilde, static_cast<T>(mp.config.dropout_p), training, rng);
    Var<T> logits = output_logits(bind, mp, tables, h_for_output, h_lex);
    Var<T> logp = pick_rows(log_softmax_rows(logits), want);
    Var<T> contrib = sum(mul(logp, tape.constant(loss_mask)));
    total = t == 0 ? contrib : add(total, contrib);
    if (keep_attention) out.attention.push_back(tape.value(step.attn.weights));
    if (keep_logits) out.logits.push_back(tape.value(logits));
  }
  out.loss = scale(total, T(-1) / static_cast<T>(out.num_tokens));
  return out;
}

// ---- diagnostics -----------------------------------------------------------

struct LexiconEntry {
  std::string token;
  double prob;
};

// p^l(y | source word) with one-hot attention: probabilities of the lexical
// path alone, per source type.
template <typename T>
std::vector<std::pair<std::string, std::vector<LexiconEntry>>> extract_lexicon(
    ModelParams<T>& mp, const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
    int top_k) {
  const ModelConfig& cfg = mp.config;
  if (!cfg.uses_lex())
    throw std::invalid_argument("extract_lexicon requires fixnorm_lex, got " +
                                variant_name(cfg.variant));
  std::vector<std::pair<std::string, std::vector<LexiconEntry>>> table;
  for (int w = 4; w < src_vocab.size(); ++w) {
    Tape<T> tape;
    Binder<T> bind(tape);
    Var<T> f = lookup(bind(mp.src_emb), {w});
    Var<T> f_lex = tanh_(f);
    Var<T> hidden = matmul(f_lex, bind(mp.lex_w));
    if (mp.lex_hb) hidden = add(hidden, bind(mp.lex_hb));
    Var<T> h_lex = add(tanh_(hidden), f_lex);
    Var<T> logits =
        add(matmul_nt(normalize_to_radius(h_lex, static_cast<T>(cfg.radius)),
                      normalize_to_radius(bind(mp.lex_out), static_cast<T>(cfg.radius))),
            bind(mp.lex_b));
    const Tensor<T>& probs = tape.value(softmax_rows(logits));
    std::vector<int> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return probs[a] > probs[b]; });
    std::vector<LexiconEntry> entries;
    for (int k = 0; k < top_k && k < static_cast<int>(order.size()); ++k)
      entries.push_back({tgt_vocab.token(order[k]), static_cast<double>(probs[order[k]])});
    table.emplace_back(src_vocab.token(w), std::move(entries));
  }
  return table;
}

inline std::string format_lexicon_row(const std::vector<LexiconEntry>& entries) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (i) os << ' ';
    os << entries[i].token << " (" << entries[i].prob << ")";
  }
  return os.str();
}

struct LogitRow {
  int id = 0;
  std::string token;
  double w_norm = 0, h_norm = 0, cosine = 0, bias = 0;
  double lex_w_norm = 0, lex_h_norm = 0, lex_cosine = 0, lex_bias = 0;
  bool has_lex = false;
  double logit = 0;  // recomposed from the columns

  double recompose() const {
    double v = w_norm * h_norm * cosine + bias;
    if (has_lex) v += lex_w_norm * lex_h_norm * lex_cosine + lex_bias;
    return v;
  }
};

namespace detail {

template <typename T>
double row_dot(const Tensor<T>& m, int row, const Tensor<T>& v) {
  double acc = 0;
  for (std::int64_t j = 0; j < m.cols(); ++j)
    acc += static_cast<double>(m.at(row, j)) * static_cast<double>(v[j]);
  return acc;
}

template <typename T>
double row_norm(const Tensor<T>& m, int row) {
  double acc = 0;
  for (std::int64_t j = 0; j < m.cols(); ++j)
    acc += static_cast<double>(m.at(row, j)) * static_cast<double>(m.at(row, j));
  return std::sqrt(acc);
}

}  // namespace detail

// Per-candidate decomposition logit = |W_e||h~|cos + b_e (+ lex term), built
// from the same effective tables as output_logits.
template <typename T>
std::vector<LogitRow> inspect_logits(ModelParams<T>& mp, const Vocabulary& tgt_vocab,
                                     const Tensor<T>& h_tilde,
                                     const std::vector<int>& candidates,
                                     const Tensor<T>* h_lex = nullptr) {
  const ModelConfig& cfg = mp.config;
  if (cfg.uses_lex() && h_lex == nullptr)
    throw std::invalid_argument("inspect_logits: fixnorm_lex needs h_lex");
  Tape<T> tape;
  Binder<T> bind(tape);
  OutputTables<T> tables = make_output_tables(bind, mp);
  Var<T> h_eff_v = cfg.uses_fixnorm()
                       ? normalize_to_radius(tape.constant(h_tilde),
                                             static_cast<T>(cfg.radius))
                       : tape.constant(h_tilde);
  const Tensor<T> h_eff = tape.value(h_eff_v);
  const Tensor<T> out_w = tape.value(tables.out_w);
  const Tensor<T> out_b = tape.value(tables.out_b);
  Tensor<T> hl_eff, lex_w, lex_b;
  if (cfg.uses_lex()) {
    hl_eff = tape.value(normalize_to_radius(tape.constant(*h_lex),
                                            static_cast<T>(cfg.radius)));
    lex_w = tape.value(tables.lex_out);
    lex_b = tape.value(tables.lex_b);
  }
  const double h_norm = detail::row_norm(h_eff, 0);
  std::vector<LogitRow> rows;
  for (int id : candidates) {
    if (id < 0 || id >= tgt_vocab.size())
      throw std::out_of_range("inspect_logits: candidate id " + std::to_string(id));
    LogitRow r;
    r.id = id;
    r.token = tgt_vocab.token(id);
    r.w_norm = detail::row_norm(out_w, id);
    r.h_norm = h_norm;
    const double dot = detail::row_dot(out_w, id, h_eff);
    r.cosine = r.w_norm == 0 || h_norm == 0 ? 0 : dot / (r.w_norm * h_norm);
    r.bias = static_cast<double>(out_b[id]);
    if (cfg.uses_lex()) {
      r.has_lex = true;
      r.lex_w_norm = detail::row_norm(lex_w, id);
      r.lex_h_norm = detail::row_norm(hl_eff, 0);
      const double ldot = detail::row_dot(lex_w, id, hl_eff);
      r.lex_cosine = r.lex_w_norm == 0 || r.lex_h_norm == 0
                         ? 0
                         : ldot / (r.lex_w_norm * r.lex_h_norm);
      r.lex_bias = static_cast<double>(lex_b[id]);
    }
    r.logit = r.recompose();
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace lexnmt
