// Token <-> id maps with reserved specials and frequency counts.
#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace lexnmt {

inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kBos = 2;
inline constexpr int kEos = 3;
inline const char* kSpecials[4] = {"<pad>", "<unk>", "<s>", "</s>"};

class Vocabulary {
 public:
  Vocabulary() {
    for (int i = 0; i < 4; ++i) {
      id_to_token_.push_back(kSpecials[i]);
      token_to_id_[kSpecials[i]] = i;
      counts_.push_back(0);
    }
  }

  // In-vocab types ordered by descending count, ties broken lexicographically.
  static Vocabulary build(const std::vector<std::vector<std::string>>& side,
                          std::int64_t min_count) {
    if (side.empty()) throw std::invalid_argument("build_vocab: empty corpus");
    std::unordered_map<std::string, std::int64_t> freq;
    for (const auto& sent : side)
      for (const auto& tok : sent) ++freq[tok];
    std::vector<std::pair<std::string, std::int64_t>> kept;
    for (const auto& [tok, n] : freq)
      if (n >= min_count) kept.emplace_back(tok, n);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    Vocabulary v;
    for (const auto& [tok, n] : kept) v.add(tok, n);
    return v;
  }

  int add(const std::string& token, std::int64_t count) {
    auto it = token_to_id_.find(token);
    if (it != token_to_id_.end())
      throw std::invalid_argument("vocab: duplicate token '" + token + "'");
    const int id = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back(token);
    counts_.push_back(count);
    token_to_id_[token] = id;
    return id;
  }

  int size() const { return static_cast<int>(id_to_token_.size()); }

  int id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const {
    return token_to_id_.count(token) > 0;
  }

  const std::string& token(int id) const {
    if (id < 0 || id >= size())
      throw std::out_of_range("vocab: id " + std::to_string(id) + " out of range");
    return id_to_token_[id];
  }

  std::int64_t count(int id) const {
    if (id < 0 || id >= size())
      throw std::out_of_range("vocab: id " + std::to_string(id) + " out of range");
    return counts_[id];
  }

  std::vector<int> encode(const std::vector<std::string>& tokens, bool reverse,
                          bool add_bos_eos) const {
    std::vector<int> ids;
    ids.reserve(tokens.size() + 2);
    if (add_bos_eos) ids.push_back(kBos);
    for (const auto& tok : tokens) ids.push_back(id(tok));
    if (add_bos_eos) ids.push_back(kEos);
    if (reverse) std::reverse(ids.begin(), ids.end());
    return ids;
  }

  std::vector<std::string> decode(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int i : ids) out.push_back(token(i));
    return out;
  }

  void save(std::ostream& os) const {
    for (int i = 0; i < size(); ++i)
      os << id_to_token_[i] << '\t' << counts_[i] << '\n';
  }

  void save_file(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    save(os);
  }

  static Vocabulary load(std::istream& is) {
    Vocabulary v;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw std::runtime_error("vocab line " + std::to_string(lineno) +
                                 ": missing tab");
      const std::string tok = line.substr(0, tab);
      const std::int64_t n = std::stoll(line.substr(tab + 1));
      if (lineno <= 4) {
        if (tok != kSpecials[lineno - 1])
          throw std::runtime_error("vocab line " + std::to_string(lineno) +
                                   ": expected special '" +
                                   kSpecials[lineno - 1] + "', got '" + tok + "'");
        v.counts_[lineno - 1] = n;
      } else {
        v.add(tok, n);
      }
    }
    if (lineno < 4) throw std::runtime_error("vocab file truncated");
    return v;
  }

  static Vocabulary load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    return load(is);
  }

  bool operator==(const Vocabulary& o) const {
    return id_to_token_ == o.id_to_token_ && counts_ == o.counts_;
  }

 private:
  std::vector<std::string> id_to_token_;
  std::vector<std::int64_t> counts_;
  std::unordered_map<std::string, int> token_to_id_;
};

}  // namespace lexnmt
