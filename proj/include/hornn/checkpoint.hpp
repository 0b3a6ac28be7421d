#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hornn/corpus.hpp"
#include "hornn/training.hpp"

namespace hornn {

// File layout: magic "HORN", one version byte, a little-endian u32 header
// length, the UTF-8 JSON header, then the raw matrix data. Matrices are
// written in manifest order as row-major little-endian IEEE-754 arrays at
// the element width given by the header's "precision" field; manifest
// offsets are bytes from the start of the data section.
inline constexpr char kCheckpointMagic[4] = {'H', 'O', 'R', 'N'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CorruptCheckpoint : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct CheckpointVersionMismatch : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct CheckpointShapeMismatch : CheckpointError {
  using CheckpointError::CheckpointError;
};

template <class S>
struct Checkpoint {
  HornnConfig config;
  Parameters<S> params;
  OptState<S> opt;
  std::uint64_t rng_state = 0;
  std::uint64_t corpus_hash = 0;
  Vocab vocab;
  TokenizerOptions tokenizer;
};

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint i/o assumes a little-endian host");

inline nlohmann::ordered_json config_to_json(const HornnConfig& c) {
  return {{"order", c.order},        {"hidden", c.hidden},
          {"vocab", c.vocab},        {"pooling", to_string(c.pooling)},
          {"alpha", c.alpha},        {"activation", to_string(c.activation)},
          {"seed", c.seed},          {"init_std", c.init_std},
          {"bias", c.bias}};
}

inline HornnConfig config_from_json(const nlohmann::json& j) {
  HornnConfig c;
  c.order = j.at("order").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.vocab = j.at("vocab").get<int>();
  c.pooling = pooling_from_string(j.at("pooling").get<std::string>());
  c.alpha = j.at("alpha").get<double>();
  c.activation = activation_from_string(j.at("activation").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.init_std = j.at("init_std").get<double>();
  c.bias = j.at("bias").get<bool>();
  return c;
}

// JSON has no infinity; absent best-valid is stored as null.
inline nlohmann::ordered_json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

inline double double_or_inf(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity()
                     : j.get<double>();
}

inline std::string hex_u64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx", (unsigned long long)v);
  return buf;
}

inline std::uint64_t parse_hex_u64(const std::string& s) {
  return std::strtoull(s.c_str(), nullptr, 16);
}

template <class S>
void write_matrix_rowmajor(std::ostream& out, const Matrix<S>& m) {
  std::vector<char> buf(std::size_t(m.size()) * sizeof(S));
  char* p = buf.data();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const S v = m(r, c);
      std::memcpy(p, &v, sizeof(S));
      p += sizeof(S);
    }
  out.write(buf.data(), std::streamsize(buf.size()));
}

template <class S>
void read_matrix_rowmajor(std::istream& in, Matrix<S>& m,
                          const std::string& name) {
  std::vector<char> buf(std::size_t(m.size()) * sizeof(S));
  if (!in.read(buf.data(), std::streamsize(buf.size())))
    throw CorruptCheckpoint("checkpoint truncated while reading matrix '" +
                            name + "'");
  const char* p = buf.data();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      S v;
      std::memcpy(&v, p, sizeof(S));
      m(r, c) = v;
      p += sizeof(S);
    }
}

}  // namespace detail

template <class S>
nlohmann::ordered_json checkpoint_header(const Checkpoint<S>& c) {
  nlohmann::ordered_json h;
  h["precision"] = int(sizeof(S) * 8);
  h["config"] = detail::config_to_json(c.config);
  h["opt"] = {{"lr", c.opt.lr},
              {"momentum_coef", c.opt.momentum_coef},
              {"weight_decay", c.opt.weight_decay},
              {"column_norm_cap", c.opt.column_norm_cap},
              {"epoch", c.opt.epoch},
              {"best_valid_nll", detail::finite_or_null(c.opt.best_valid_nll)}};
  h["rng_state"] = c.rng_state;
  h["corpus_hash"] = detail::hex_u64(c.corpus_hash);
  h["vocab_hash"] = detail::hex_u64(c.vocab.hash());
  h["tokenizer"] = {{"unk", c.tokenizer.unk},
                    {"eos", c.tokenizer.eos},
                    {"add_eos", c.tokenizer.add_eos},
                    {"min_count", c.tokenizer.min_count}};
  nlohmann::ordered_json vocab = nlohmann::ordered_json::array();
  for (int id = 0; id < c.vocab.size(); ++id)
    vocab.push_back({c.vocab.id_to_token[id], c.vocab.counts[id]});
  h["vocab"] = std::move(vocab);

  nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  auto add = [&](const std::string& prefix, const Parameters<S>& set) {
    set.for_each([&](const std::string& name, const Matrix<S>& m) {
      manifest.push_back({{"name", prefix + name},
                          {"rows", m.rows()},
                          {"cols", m.cols()},
                          {"offset", offset}});
      offset += std::uint64_t(m.size()) * sizeof(S);
    });
  };
  add("", c.params);
  add("momentum/", c.opt.momentum);
  h["manifest"] = std::move(manifest);
  return h;
}

template <class S>
void save_checkpoint(const Checkpoint<S>& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  const std::string header = checkpoint_header(c).dump();
  out.write(kCheckpointMagic, 4);
  out.put(char(kCheckpointVersion));
  const std::uint32_t len = std::uint32_t(header.size());
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(header.data(), std::streamsize(header.size()));
  c.params.for_each([&](const std::string&, const Matrix<S>& m) {
    detail::write_matrix_rowmajor(out, m);
  });
  c.opt.momentum.for_each([&](const std::string&, const Matrix<S>& m) {
    detail::write_matrix_rowmajor(out, m);
  });
  if (!out) throw std::runtime_error("write failed for checkpoint: " + path);
}

// Magic, version and JSON header only; `header_end` (when given) receives
// the stream offset of the data section.
inline nlohmann::json read_checkpoint_header(std::istream& in,
                                             std::uint64_t* header_end =
                                                 nullptr) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw CorruptCheckpoint("not a checkpoint file (bad magic)");
  const int version = in.get();
  if (version == EOF) throw CorruptCheckpoint("checkpoint truncated");
  if (version != kCheckpointVersion)
    throw CheckpointVersionMismatch(
        "checkpoint format version " + std::to_string(version) +
        ", this build reads version " + std::to_string(kCheckpointVersion));
  std::uint32_t len = 0;
  if (!in.read(reinterpret_cast<char*>(&len), 4))
    throw CorruptCheckpoint("checkpoint truncated (no header length)");
  std::string header(len, '\0');
  if (!in.read(header.data(), len))
    throw CorruptCheckpoint("checkpoint truncated (header)");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(std::string("checkpoint header is not valid "
                                        "JSON: ") + e.what());
  }
  if (header_end) *header_end = 9 + std::uint64_t(len);
  return j;
}

inline nlohmann::json read_checkpoint_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  return read_checkpoint_header(in);
}

template <class S>
Checkpoint<S> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  const nlohmann::json h = read_checkpoint_header(in);

  Checkpoint<S> c;
  try {
    const int precision = h.at("precision").get<int>();
    if (precision != int(sizeof(S) * 8))
      throw CheckpointShapeMismatch(
          "checkpoint stores " + std::to_string(precision) +
          "-bit values, caller requested " + std::to_string(sizeof(S) * 8) +
          "-bit");
    c.config = detail::config_from_json(h.at("config"));
    const auto& opt = h.at("opt");
    c.opt.lr = opt.at("lr").get<double>();
    c.opt.momentum_coef = opt.at("momentum_coef").get<double>();
    c.opt.weight_decay = opt.at("weight_decay").get<double>();
    c.opt.column_norm_cap = opt.at("column_norm_cap").get<double>();
    c.opt.epoch = opt.at("epoch").get<int>();
    c.opt.best_valid_nll = detail::double_or_inf(opt.at("best_valid_nll"));
    c.rng_state = h.at("rng_state").get<std::uint64_t>();
    c.corpus_hash = detail::parse_hex_u64(h.at("corpus_hash"));
    const auto& tok = h.at("tokenizer");
    c.tokenizer.unk = tok.at("unk").get<std::string>();
    c.tokenizer.eos = tok.at("eos").get<std::string>();
    c.tokenizer.add_eos = tok.at("add_eos").get<bool>();
    c.tokenizer.min_count = tok.at("min_count").get<std::int64_t>();
    for (const auto& entry : h.at("vocab")) {
      const std::string token = entry.at(0).get<std::string>();
      c.vocab.token_to_id.emplace(token, c.vocab.size());
      c.vocab.id_to_token.push_back(token);
      c.vocab.counts.push_back(entry.at(1).get<std::int64_t>());
    }
    c.vocab.unk_id = 0;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(std::string("checkpoint header malformed: ") +
                            e.what());
  }
  if (c.vocab.size() != c.config.vocab)
    throw CheckpointShapeMismatch(
        "embedded vocab has " + std::to_string(c.vocab.size()) +
        " entries but config says vocab=" + std::to_string(c.config.vocab));

  c.params = param_shapes<S>(c.config);
  c.opt.momentum = param_shapes<S>(c.config);

  // The manifest must match the shapes the config dictates, in order.
  std::vector<std::pair<std::string, Matrix<S>*>> expected;
  c.params.for_each([&](const std::string& name, Matrix<S>& m) {
    expected.emplace_back(name, &m);
  });
  c.opt.momentum.for_each([&](const std::string& name, Matrix<S>& m) {
    expected.emplace_back("momentum/" + name, &m);
  });
  const auto& manifest = h.at("manifest");
  if (manifest.size() != expected.size())
    throw CheckpointShapeMismatch(
        "manifest lists " + std::to_string(manifest.size()) +
        " matrices, config requires " + std::to_string(expected.size()));
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& entry = manifest.at(i);
    const auto& [name, mat] = expected[i];
    if (entry.at("name").get<std::string>() != name ||
        entry.at("rows").get<Eigen::Index>() != mat->rows() ||
        entry.at("cols").get<Eigen::Index>() != mat->cols() ||
        entry.at("offset").get<std::uint64_t>() != offset)
      throw CheckpointShapeMismatch(
          "manifest entry " + std::to_string(i) + " ('" +
          entry.value("name", std::string("?")) + "') does not match the " +
          "expected matrix '" + name + "' (" + std::to_string(mat->rows()) +
          "x" + std::to_string(mat->cols()) + " at offset " +
          std::to_string(offset) + ")");
    detail::read_matrix_rowmajor(in, *mat, name);
    offset += std::uint64_t(mat->size()) * sizeof(S);
  }
  if (in.peek() != EOF)
    throw CorruptCheckpoint("checkpoint has trailing bytes after matrix data");
  return c;
}

}  // namespace hornn
