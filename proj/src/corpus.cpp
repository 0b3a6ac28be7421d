#include "hornn/corpus.hpp"

#include <fstream>
#include <sstream>

namespace hornn {

std::uint64_t Vocab::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (int id = 0; id < size(); ++id) {
    h = fnv1a64(id_to_token[id], h);
    const std::int64_t fields[2] = {id, counts[id]};
    h = fnv1a64(fields, sizeof(fields), h);
  }
  return h;
}

Vocab build_vocab(const std::vector<std::string>& tokens,
                  std::int64_t min_count, const std::string& unk_token) {
  if (tokens.empty())
    throw ContractViolation("build_vocab: empty corpus");

  std::unordered_map<std::string, std::int64_t> freq;
  for (const auto& t : tokens) ++freq[t];

  Vocab v;
  v.token_to_id.emplace(unk_token, 0);
  v.id_to_token.push_back(unk_token);
  v.counts.push_back(0);
  v.unk_id = 0;

  for (const auto& t : tokens) {
    if (freq[t] >= min_count && !v.token_to_id.contains(t)) {
      v.token_to_id.emplace(t, v.size());
      v.id_to_token.push_back(t);
      v.counts.push_back(0);
    }
  }
  for (const auto& t : tokens) ++v.counts[v.lookup(t)];
  return v;
}

std::vector<int> encode(const Vocab& vocab,
                        const std::vector<std::string>& tokens) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.lookup(t));
  return ids;
}

std::vector<std::string> decode(const Vocab& vocab,
                                const std::vector<int>& ids) {
  std::vector<std::string> tokens;
  tokens.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= vocab.size())
      throw ContractViolation("decode: id " + std::to_string(id) +
                              " outside vocab of size " +
                              std::to_string(vocab.size()));
    tokens.push_back(vocab.id_to_token[id]);
  }
  return tokens;
}

void write_vocab_tsv(const Vocab& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocab file: " + path);
  for (int id = 0; id < vocab.size(); ++id)
    out << vocab.id_to_token[id] << '\t' << id << '\t' << vocab.counts[id]
        << '\n';
}

Vocab read_vocab_tsv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read vocab file: " + path);
  Vocab v;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    int id;
    std::int64_t count;
    if (!std::getline(ls, token, '\t') || !(ls >> id >> count))
      throw std::runtime_error("malformed vocab line: " + line);
    if (id != v.size())
      throw std::runtime_error("vocab file ids not dense/sorted at: " + line);
    v.token_to_id.emplace(token, id);
    v.id_to_token.push_back(token);
    v.counts.push_back(count);
  }
  if (v.id_to_token.empty())
    throw std::runtime_error("vocab file is empty: " + path);
  v.unk_id = 0;
  return v;
}

std::vector<std::string> tokenize(const std::string& text, bool add_eos,
                                  const std::string& eos_token) {
  std::vector<std::string> tokens;
  if (!add_eos) {
    std::istringstream ss(text);
    std::string t;
    while (ss >> t) tokens.push_back(t);
    return tokens;
  }
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    std::istringstream ls(line);
    std::string t;
    while (ls >> t) tokens.push_back(t);
    tokens.push_back(eos_token);
  }
  return tokens;
}

CorpusFile read_corpus_file(const std::string& path, bool add_eos,
                            const std::string& eos_token) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read corpus file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  CorpusFile cf;
  cf.content_hash = fnv1a64(text);
  cf.tokens = tokenize(text, add_eos, eos_token);
  return cf;
}

BatchStream::BatchStream(std::vector<int> ids, int lanes, int window)
    : ids_(std::move(ids)), lanes_(lanes), window_(window) {
  if (lanes_ < 1 || window_ < 1)
    throw ContractViolation("BatchStream: lanes and window must be >= 1");
  const std::int64_t needed = std::int64_t(lanes_) * (window_ + 1);
  if (std::int64_t(ids_.size()) < needed)
    throw ContractViolation(
        "BatchStream: corpus has " + std::to_string(ids_.size()) +
        " tokens but lanes*(window+1) = " + std::to_string(needed) +
        " are required");
  shard_ = std::int64_t(ids_.size()) / lanes_;
}

std::optional<Batch> BatchStream::next_batch() {
  if (cursor_ + window_ + 1 > shard_) return std::nullopt;
  Batch b;
  b.lanes = lanes_;
  b.window = window_;
  b.inputs.resize(std::size_t(lanes_) * window_);
  b.targets.resize(std::size_t(lanes_) * window_);
  for (int lane = 0; lane < lanes_; ++lane) {
    const std::int64_t base = std::int64_t(lane) * shard_ + cursor_;
    for (int t = 0; t < window_; ++t) {
      b.inputs[std::size_t(lane) * window_ + t] = ids_[base + t];
      b.targets[std::size_t(lane) * window_ + t] = ids_[base + t + 1];
    }
  }
  cursor_ += window_;
  return b;
}

BatchStream make_stream(std::vector<int> ids, int lanes, int window) {
  return BatchStream(std::move(ids), lanes, window);
}

}  // namespace hornn
