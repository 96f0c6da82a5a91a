// Parallel corpus loading, length filtering, and padded minibatching.
#pragma once

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lexnmt/rng.hpp"
#include "lexnmt/vocab.hpp"

namespace lexnmt {

using Sentence = std::vector<std::string>;

struct SentencePair {
  Sentence src;
  Sentence tgt;
  bool operator==(const SentencePair&) const = default;
};

using ParallelCorpus = std::vector<SentencePair>;

inline Sentence split_tokens(const std::string& line) {
  Sentence out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(std::move(tok));
  return out;
}

inline std::string join_tokens(const Sentence& toks) {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline ParallelCorpus load_corpus(const std::string& src_path,
                                  const std::string& tgt_path) {
  const auto src = read_lines(src_path);
  const auto tgt = read_lines(tgt_path);
  if (src.size() != tgt.size()) {
    throw std::runtime_error("line count mismatch: " + src_path + " has " +
                             std::to_string(src.size()) + " lines, " + tgt_path +
                             " has " + std::to_string(tgt.size()));
  }
  ParallelCorpus corpus;
  corpus.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i)
    corpus.push_back({split_tokens(src[i]), split_tokens(tgt[i])});
  return corpus;
}

// Drops pairs with an over-long or empty side.
inline ParallelCorpus filter_by_length(const ParallelCorpus& corpus,
                                       std::size_t max_len = 50) {
  ParallelCorpus out;
  for (const auto& p : corpus) {
    if (p.src.empty() || p.tgt.empty()) continue;
    if (p.src.size() > max_len || p.tgt.size() > max_len) continue;
    out.push_back(p);
  }
  return out;
}

inline std::vector<Sentence> side_of(const ParallelCorpus& corpus, bool source) {
  std::vector<Sentence> out;
  out.reserve(corpus.size());
  for (const auto& p : corpus) out.push_back(source ? p.src : p.tgt);
  return out;
}

struct Batch {
  int size = 0;     // B
  int src_len = 0;  // S
  int tgt_len = 0;  // T
  std::vector<int> src_ids;   // [B*S], reversed tokens, PAD on the right
  std::vector<int> src_mask;  // [B*S], 1 at real tokens
  std::vector<int> tgt_in;    // [B*T], BOS-prefixed
  std::vector<int> tgt_out;   // [B*T], EOS-suffixed; PAD past the end
  std::vector<int> src_lengths;
  std::vector<int> tgt_lengths;  // includes the EOS position

  int src_at(int b, int s) const { return src_ids[b * src_len + s]; }
  int tgt_in_at(int b, int t) const { return tgt_in[b * tgt_len + t]; }
  int tgt_out_at(int b, int t) const { return tgt_out[b * tgt_len + t]; }
  std::int64_t num_target_tokens() const {
    return std::accumulate(tgt_lengths.begin(), tgt_lengths.end(), std::int64_t(0));
  }
};

inline Batch make_batch(const ParallelCorpus& pairs, const Vocabulary& vocab_src,
                        const Vocabulary& vocab_tgt) {
  if (pairs.empty()) throw std::invalid_argument("make_batch: empty slice");
  Batch b;
  b.size = static_cast<int>(pairs.size());
  for (const auto& p : pairs) {
    b.src_len = std::max(b.src_len, static_cast<int>(p.src.size()));
    b.tgt_len = std::max(b.tgt_len, static_cast<int>(p.tgt.size()) + 1);
  }
  b.src_ids.assign(static_cast<std::size_t>(b.size) * b.src_len, kPad);
  b.src_mask.assign(b.src_ids.size(), 0);
  b.tgt_in.assign(static_cast<std::size_t>(b.size) * b.tgt_len, kPad);
  b.tgt_out = b.tgt_in;
  for (int i = 0; i < b.size; ++i) {
    const auto src = vocab_src.encode(pairs[i].src, /*reverse=*/true, false);
    const auto tgt = vocab_tgt.encode(pairs[i].tgt, false, false);
    b.src_lengths.push_back(static_cast<int>(src.size()));
    b.tgt_lengths.push_back(static_cast<int>(tgt.size()) + 1);
    for (std::size_t s = 0; s < src.size(); ++s) {
      b.src_ids[i * b.src_len + s] = src[s];
      b.src_mask[i * b.src_len + s] = 1;
    }
    b.tgt_in[i * b.tgt_len + 0] = kBos;
    for (std::size_t t = 0; t < tgt.size(); ++t) {
      b.tgt_in[i * b.tgt_len + t + 1] = tgt[t];
      b.tgt_out[i * b.tgt_len + t] = tgt[t];
    }
    b.tgt_out[i * b.tgt_len + tgt.size()] = kEos;
  }
  return b;
}

// One epoch of batches: sort by target length, slice, shuffle batch order.
inline std::vector<Batch> make_batches(const ParallelCorpus& corpus,
                                       const Vocabulary& vocab_src,
                                       const Vocabulary& vocab_tgt,
                                       int batch_size, Rng& rng) {
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  std::vector<int> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return corpus[x].tgt.size() < corpus[y].tgt.size();
  });
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    ParallelCorpus slice;
    for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i)
      slice.push_back(corpus[order[i]]);
    batches.push_back(make_batch(slice, vocab_src, vocab_tgt));
  }
  rng.shuffle(batches);
  return batches;
}

}  // namespace lexnmt
