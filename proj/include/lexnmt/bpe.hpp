// Byte-pair encoding: learn merges, segment, and invert the segmentation.
// Words are split into UTF-8 characters with an internal "</w>" marker on the
// final character; emitted pieces carry the "@@" continuation suffix instead.
#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "lexnmt/corpus.hpp"

namespace lexnmt {

inline constexpr const char* kWordEnd = "</w>";

inline std::vector<std::string> utf8_chars(const std::string& s) {
  std::vector<std::string> chars;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t len = 1;
    const auto b = static_cast<unsigned char>(s[i]);
    if ((b & 0x80) == 0x00) len = 1;
    else if ((b & 0xE0) == 0xC0) len = 2;
    else if ((b & 0xF0) == 0xE0) len = 3;
    else if ((b & 0xF8) == 0xF0) len = 4;
    len = std::min(len, s.size() - i);
    chars.push_back(s.substr(i, len));
    i += len;
  }
  return chars;
}

using Symbols = std::vector<std::string>;

inline Symbols word_symbols(const std::string& word) {
  if (word.empty()) throw std::invalid_argument("bpe: empty word");
  Symbols syms = utf8_chars(word);
  syms.back() += kWordEnd;
  return syms;
}

class BpeModel {
 public:
  using Pair = std::pair<std::string, std::string>;

  BpeModel() = default;
  explicit BpeModel(std::vector<Pair> merges) : merges_(std::move(merges)) {
    for (std::size_t i = 0; i < merges_.size(); ++i) priority_[merges_[i]] = i;
  }

  const std::vector<Pair>& merges() const { return merges_; }

  // Greedy highest-frequency merge, n_merges rounds; equal frequencies break
  // toward the lexicographically smallest (left, right). Stops early when no
  // pair repeats.
  static BpeModel learn(const std::vector<Sentence>& side, int n_merges) {
    if (n_merges < 0) throw std::invalid_argument("bpe_learn: negative merges");
    std::map<std::string, std::int64_t> word_freq;
    for (const auto& sent : side)
      for (const auto& w : sent) ++word_freq[w];
    std::vector<std::pair<Symbols, std::int64_t>> types;
    types.reserve(word_freq.size());
    for (const auto& [w, n] : word_freq) types.emplace_back(word_symbols(w), n);

    std::vector<Pair> merges;
    for (int round = 0; round < n_merges; ++round) {
      std::map<Pair, std::int64_t> pair_freq;
      for (const auto& [syms, n] : types)
        for (std::size_t i = 0; i + 1 < syms.size(); ++i)
          pair_freq[{syms[i], syms[i + 1]}] += n;
      Pair best;
      std::int64_t best_n = 0;
      for (const auto& [p, n] : pair_freq) {
        if (n > best_n) {  // map iteration order gives the lexicographic tie-break
          best = p;
          best_n = n;
        }
      }
      if (best_n < 2) break;
      merges.push_back(best);
      const std::string joined = best.first + best.second;
      for (auto& [syms, n] : types) {
        Symbols out;
        for (std::size_t i = 0; i < syms.size(); ++i) {
          if (i + 1 < syms.size() && syms[i] == best.first &&
              syms[i + 1] == best.second) {
            out.push_back(joined);
            ++i;
          } else {
            out.push_back(syms[i]);
          }
        }
        syms = std::move(out);
      }
    }
    return BpeModel(std::move(merges));
  }

  // Segments one word into pieces; non-final pieces get the "@@" suffix.
  std::vector<std::string> apply_word(const std::string& word) const {
    Symbols syms = word_symbols(word);
    while (syms.size() > 1) {
      std::size_t best_rank = priority_.size();
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        auto it = priority_.find({syms[i], syms[i + 1]});
        if (it != priority_.end()) best_rank = std::min(best_rank, it->second);
      }
      if (best_rank == priority_.size()) break;
      const Pair& m = merges_[best_rank];
      const std::string joined = m.first + m.second;
      Symbols out;
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == m.first && syms[i + 1] == m.second) {
          out.push_back(joined);
          ++i;
        } else {
          out.push_back(syms[i]);
        }
      }
      syms = std::move(out);
    }
    std::vector<std::string> pieces;
    pieces.reserve(syms.size());
    for (std::size_t i = 0; i < syms.size(); ++i) {
      std::string piece = syms[i];
      if (i + 1 == syms.size()) {
        piece.resize(piece.size() - std::string(kWordEnd).size());
      } else {
        piece += "@@";
      }
      pieces.push_back(std::move(piece));
    }
    return pieces;
  }

  Sentence apply(const Sentence& tokens) const {
    Sentence out;
    for (const auto& w : tokens) {
      auto pieces = apply_word(w);
      out.insert(out.end(), pieces.begin(), pieces.end());
    }
    return out;
  }

  void save(std::ostream& os) const {
    os << merges_.size() << '\n';
    for (const auto& [l, r] : merges_) os << l << ' ' << r << '\n';
  }

  void save_file(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    save(os);
  }

  static BpeModel load(std::istream& is) {
    std::size_t n = 0;
    if (!(is >> n)) throw std::runtime_error("bpe model: missing merge count");
    std::vector<Pair> merges;
    merges.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::string l, r;
      if (!(is >> l >> r))
        throw std::runtime_error("bpe model: truncated at merge " +
                                 std::to_string(i));
      merges.emplace_back(std::move(l), std::move(r));
    }
    return BpeModel(std::move(merges));
  }

  static BpeModel load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    return load(is);
  }

 private:
  std::vector<Pair> merges_;
  std::map<Pair, std::size_t> priority_;
};

// Inverse of apply: pieces ending in "@@" glue onto the next piece.
inline Sentence bpe_undo(const Sentence& subwords) {
  Sentence out;
  std::string pending;
  for (const auto& piece : subwords) {
    if (piece.size() >= 2 && piece.compare(piece.size() - 2, 2, "@@") == 0) {
      pending += piece.substr(0, piece.size() - 2);
    } else {
      out.push_back(pending + piece);
      pending.clear();
    }
  }
  if (!pending.empty()) out.push_back(pending);  // dangling continuation
  return out;
}

// Original corpus followed by a copy in which per-side hapax types are
// replaced by the UNK token string.
inline ParallelCorpus augment_singleton_unk(const ParallelCorpus& corpus) {
  std::unordered_map<std::string, std::int64_t> src_freq, tgt_freq;
  for (const auto& p : corpus) {
    for (const auto& w : p.src) ++src_freq[w];
    for (const auto& w : p.tgt) ++tgt_freq[w];
  }
  ParallelCorpus out = corpus;
  out.reserve(corpus.size() * 2);
  for (const auto& p : corpus) {
    SentencePair q = p;
    for (auto& w : q.src)
      if (src_freq.at(w) == 1) w = kSpecials[kUnk];
    for (auto& w : q.tgt)
      if (tgt_freq.at(w) == 1) w = kSpecials[kUnk];
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace lexnmt
