#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hornn/common.hpp"

namespace hornn {

// Token ids are dense ints in [0, size). The unknown token always has an id
// (id 0 unless it also occurs in the corpus with its own slot, which is the
// same thing). Id order is first appearance in the build corpus.
struct Vocab {
  std::unordered_map<std::string, int> token_to_id;
  std::vector<std::string> id_to_token;
  std::vector<std::int64_t> counts;  // occurrences mapped to each id
  int unk_id = 0;

  int size() const { return static_cast<int>(id_to_token.size()); }

  int lookup(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? unk_id : it->second;
  }

  // Fingerprint over (token, id, count) triples in id order.
  std::uint64_t hash() const;
};

Vocab build_vocab(const std::vector<std::string>& tokens,
                  std::int64_t min_count, const std::string& unk_token);

std::vector<int> encode(const Vocab& vocab,
                        const std::vector<std::string>& tokens);
std::vector<std::string> decode(const Vocab& vocab,
                                const std::vector<int>& ids);

void write_vocab_tsv(const Vocab& vocab, const std::string& path);
Vocab read_vocab_tsv(const std::string& path);

struct CorpusFile {
  std::vector<std::string> tokens;
  std::uint64_t content_hash = 0;  // FNV-1a over the raw file bytes
};

// How text was turned into ids; travels with checkpoints so evaluation
// encodes new corpora the same way training did.
struct TokenizerOptions {
  std::string unk = "<unk>";
  std::string eos = "<eos>";
  bool add_eos = true;
  std::int64_t min_count = 0;
};

// Whitespace tokenization of an already-tokenized text file. With add_eos,
// every line is terminated by `eos_token` (blank lines included).
CorpusFile read_corpus_file(const std::string& path, bool add_eos,
                            const std::string& eos_token = "<eos>");
std::vector<std::string> tokenize(const std::string& text, bool add_eos,
                                  const std::string& eos_token = "<eos>");

// One mini-batch: `lanes` x `window` blocks of input ids and of next-token
// target ids, row-major.
struct Batch {
  int lanes = 0;
  int window = 0;
  std::vector<int> inputs;
  std::vector<int> targets;

  int input(int lane, int t) const { return inputs[lane * window + t]; }
  int target(int lane, int t) const { return targets[lane * window + t]; }
  const int* input_row(int lane) const { return inputs.data() + lane * window; }
  const int* target_row(int lane) const {
    return targets.data() + lane * window;
  }
};

// The id-encoded corpus split into `lanes` equal contiguous shards, walked in
// fixed windows so hidden state can be carried across consecutive batches of
// the same lane. Tokens that do not fill a complete aligned structure are
// dropped.
class BatchStream {
 public:
  BatchStream(std::vector<int> ids, int lanes, int window);

  std::optional<Batch> next_batch();
  void reset() { cursor_ = 0; }

  int lanes() const { return lanes_; }
  int window() const { return window_; }
  std::int64_t shard_len() const { return shard_; }
  std::int64_t cursor() const { return cursor_; }
  // Complete batches per epoch: floor((shard_len - 1) / window).
  std::int64_t batches_per_epoch() const { return (shard_ - 1) / window_; }

 private:
  std::vector<int> ids_;
  int lanes_;
  int window_;
  std::int64_t shard_;
  std::int64_t cursor_ = 0;
};

BatchStream make_stream(std::vector<int> ids, int lanes, int window);

}  // namespace hornn
