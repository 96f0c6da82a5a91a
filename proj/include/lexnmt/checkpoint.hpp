// Versioned binary checkpoint: magic, version, value width, config text,
// vocab blocks, named parameter arrays with shape headers, optimizer
// accumulators, selection metadata, and the rng state. Round trips are
// bit-exact at equal precision.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lexnmt/model.hpp"
#include "lexnmt/optimizer.hpp"
#include "lexnmt/vocab.hpp"

namespace lexnmt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'L', 'X', 'N', 'M',
                                             'T', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace ckdetail {

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename V>
void write_pod(std::ostream& os, V v) {
  write_bytes(os, &v, sizeof(V));
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint64_t>(os, s.size());
  write_bytes(os, s.data(), s.size());
}

inline void read_bytes(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw std::runtime_error("checkpoint truncated");
}

template <typename V>
V read_pod(std::istream& is) {
  V v;
  read_bytes(is, &v, sizeof(V));
  return v;
}

inline std::string read_string(std::istream& is) {
  const auto n = read_pod<std::uint64_t>(is);
  if (n > (1u << 30)) throw std::runtime_error("checkpoint: string block too large");
  std::string s(n, '\0');
  read_bytes(is, s.data(), n);
  return s;
}

template <typename T>
void write_array(std::ostream& os, const Tensor<T>& t) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) write_pod<std::int32_t>(os, t.dim(i));
  write_bytes(os, t.data(), sizeof(T) * static_cast<std::size_t>(t.size()));
}

template <typename T>
Tensor<T> read_array(std::istream& is) {
  const auto rank = read_pod<std::uint32_t>(is);
  if (rank > 4) throw std::runtime_error("checkpoint: implausible array rank");
  std::vector<int> shape;
  for (std::uint32_t i = 0; i < rank; ++i)
    shape.push_back(read_pod<std::int32_t>(is));
  Tensor<T> t(shape);
  read_bytes(is, t.data(), sizeof(T) * static_cast<std::size_t>(t.size()));
  return t;
}

inline std::string config_to_text(const ModelConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "variant=" << variant_name(cfg.variant) << "\n"
     << "num_layers=" << cfg.num_layers << "\n"
     << "hidden_size=" << cfg.hidden_size << "\n"
     << "radius=" << cfg.radius << "\n"
     << "dropout_p=" << cfg.dropout_p << "\n"
     << "src_vocab_size=" << cfg.src_vocab_size << "\n"
     << "tgt_vocab_size=" << cfg.tgt_vocab_size << "\n"
     << "lex_hidden_bias=" << (cfg.lex_hidden_bias ? 1 : 0) << "\n";
  return os.str();
}

inline ModelConfig config_from_text(const std::string& text) {
  ModelConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("checkpoint config: bad line '" + line + "'");
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "variant") cfg.variant = parse_variant(val);
    else if (key == "num_layers") cfg.num_layers = std::stoi(val);
    else if (key == "hidden_size") cfg.hidden_size = std::stoi(val);
    else if (key == "radius") cfg.radius = std::stod(val);
    else if (key == "dropout_p") cfg.dropout_p = std::stod(val);
    else if (key == "src_vocab_size") cfg.src_vocab_size = std::stoi(val);
    else if (key == "tgt_vocab_size") cfg.tgt_vocab_size = std::stoi(val);
    else if (key == "lex_hidden_bias") cfg.lex_hidden_bias = val == "1";
    else throw std::runtime_error("checkpoint config: unknown key '" + key + "'");
  }
  return cfg;
}

}  // namespace ckdetail

template <typename T>
struct Checkpoint {
  ModelConfig config;
  ModelParams<T> params;
  AdadeltaState<T> opt;
  Vocabulary src_vocab, tgt_vocab;
  double best_dev_bleu = -1;
  int best_epoch = -1;
  int completed_epochs = 0;
  std::int64_t global_step = 0;
  std::string rng_state;
};

template <typename T>
void save_checkpoint(const std::string& path, Checkpoint<T>& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  ckdetail::write_bytes(os, kCheckpointMagic, sizeof(kCheckpointMagic));
  ckdetail::write_pod<std::uint32_t>(os, kCheckpointVersion);
  ckdetail::write_pod<std::uint32_t>(os, sizeof(T));
  ckdetail::write_string(os, ckdetail::config_to_text(ck.config));
  std::ostringstream sv, tv;
  ck.src_vocab.save(sv);
  ck.tgt_vocab.save(tv);
  ckdetail::write_string(os, sv.str());
  ckdetail::write_string(os, tv.str());
  auto params = ck.params.all();
  ckdetail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    ckdetail::write_string(os, p->name);
    ckdetail::write_array(os, p->value);
  }
  ckdetail::write_pod<double>(os, ck.opt.rho);
  ckdetail::write_pod<double>(os, ck.opt.eps);
  for (const auto& t : ck.opt.sq_grad) ckdetail::write_array(os, t);
  for (const auto& t : ck.opt.sq_delta) ckdetail::write_array(os, t);
  ckdetail::write_pod<double>(os, ck.best_dev_bleu);
  ckdetail::write_pod<std::int32_t>(os, ck.best_epoch);
  ckdetail::write_pod<std::int32_t>(os, ck.completed_epochs);
  ckdetail::write_pod<std::int64_t>(os, ck.global_step);
  ckdetail::write_string(os, ck.rng_state);
  if (!os) throw std::runtime_error("write failed for " + path);
}

// Value width stored in the header, for precision dispatch before loading.
inline int checkpoint_value_width(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  char magic[8];
  ckdetail::read_bytes(is, magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error(path + " is not a checkpoint (bad magic)");
  const auto version = ckdetail::read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  return static_cast<int>(ckdetail::read_pod<std::uint32_t>(is));
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  char magic[8];
  ckdetail::read_bytes(is, magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error(path + " is not a checkpoint (bad magic)");
  const auto version = ckdetail::read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  const auto width = ckdetail::read_pod<std::uint32_t>(is);
  if (width != sizeof(T))
    throw std::runtime_error("checkpoint stores " + std::to_string(width * 8) +
                             "-bit values, expected " +
                             std::to_string(sizeof(T) * 8) + "-bit");
  Checkpoint<T> ck;
  ck.config = ckdetail::config_from_text(ckdetail::read_string(is));
  {
    std::istringstream sv(ckdetail::read_string(is));
    ck.src_vocab = Vocabulary::load(sv);
    std::istringstream tv(ckdetail::read_string(is));
    ck.tgt_vocab = Vocabulary::load(tv);
  }
  ck.params = ModelParams<T>::build(ck.config);
  const auto n = ckdetail::read_pod<std::uint32_t>(is);
  if (n != ck.params.all().size())
    throw std::runtime_error("checkpoint parameter count mismatch");
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::string name = ckdetail::read_string(is);
    Tensor<T> value = ckdetail::read_array<T>(is);
    Parameter<T>* p = ck.params.find(name);
    if (!p) throw std::runtime_error("checkpoint has unknown parameter '" + name + "'");
    if (!p->value.same_shape(value))
      throw std::runtime_error("checkpoint shape mismatch for '" + name + "': " +
                               shape_str(value.shape()) + " vs expected " +
                               shape_str(p->value.shape()));
    p->value = std::move(value);
  }
  const double rho = ckdetail::read_pod<double>(is);
  const double eps = ckdetail::read_pod<double>(is);
  ck.opt = AdadeltaState<T>::make(ck.params.all(), rho, eps);
  for (auto& t : ck.opt.sq_grad) t = ckdetail::read_array<T>(is);
  for (auto& t : ck.opt.sq_delta) t = ckdetail::read_array<T>(is);
  ck.opt.check(ck.params.all());
  ck.best_dev_bleu = ckdetail::read_pod<double>(is);
  ck.best_epoch = ckdetail::read_pod<std::int32_t>(is);
  ck.completed_epochs = ckdetail::read_pod<std::int32_t>(is);
  ck.global_step = ckdetail::read_pod<std::int64_t>(is);
  ck.rng_state = ckdetail::read_string(is);
  return ck;
}

}  // namespace lexnmt
