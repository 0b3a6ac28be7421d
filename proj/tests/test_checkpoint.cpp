#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "hornn/checkpoint.hpp"

using namespace hornn;
namespace fs = std::filesystem;

namespace {

template <class S>
Checkpoint<S> sample_checkpoint(Pooling pooling = Pooling::kGated) {
  HornnConfig cfg;
  cfg.order = 2;
  cfg.hidden = 3;
  cfg.pooling = pooling;
  cfg.seed = 77;
  std::vector<std::string> tokens{"a", "b", "a", "c"};
  Vocab vocab = build_vocab(tokens, 0, "<unk>");
  cfg.vocab = vocab.size();
  Checkpoint<S> c;
  c.config = cfg;
  c.params = init_params<S>(cfg);
  c.opt.lr = 0.25;
  c.opt.epoch = 3;
  c.opt.best_valid_nll = 1.75;
  c.opt.momentum = init_params<S>(cfg);  // arbitrary non-zero buffers
  c.rng_state = 0xDEADBEEFull;
  c.corpus_hash = 0x1234ull;
  c.vocab = vocab;
  return c;
}

struct TempFile {
  fs::path path;
  explicit TempFile(const char* name)
      : path(fs::temp_directory_path() / name) {}
  ~TempFile() { fs::remove(path); }
};

}  // namespace

TEST_CASE("checkpoint round trip is bitwise for both precisions") {
  TempFile f("hornn_ckpt_roundtrip.hornn");
  {
    Checkpoint<double> c = sample_checkpoint<double>();
    save_checkpoint(c, f.path.string());
    Checkpoint<double> r = load_checkpoint<double>(f.path.string());
    CHECK(r.params.w_in == c.params.w_in);
    CHECK(r.params.w_out == c.params.w_out);
    for (std::size_t n = 0; n < 2; ++n) {
      CHECK(r.params.w_h[n] == c.params.w_h[n]);
      CHECK(r.params.gate_w1[n] == c.params.gate_w1[n]);
      CHECK(r.params.gate_w2[n] == c.params.gate_w2[n]);
      CHECK(r.opt.momentum.w_h[n] == c.opt.momentum.w_h[n]);
    }
    CHECK(r.opt.lr == 0.25);
    CHECK(r.opt.epoch == 3);
    CHECK(r.opt.best_valid_nll == 1.75);
    CHECK(r.rng_state == 0xDEADBEEFull);
    CHECK(r.corpus_hash == 0x1234ull);
    CHECK(r.vocab.id_to_token == c.vocab.id_to_token);
    CHECK(r.vocab.hash() == c.vocab.hash());
    CHECK(r.config.pooling == Pooling::kGated);
  }
  {
    Checkpoint<float> c = sample_checkpoint<float>(Pooling::kFofe);
    save_checkpoint(c, f.path.string());
    Checkpoint<float> r = load_checkpoint<float>(f.path.string());
    CHECK(r.params.w_in == c.params.w_in);
    CHECK(r.params.w_h[1] == c.params.w_h[1]);
  }
}

TEST_CASE("unset best_valid_nll survives as infinity") {
  TempFile f("hornn_ckpt_inf.hornn");
  Checkpoint<double> c = sample_checkpoint<double>();
  c.opt.best_valid_nll = std::numeric_limits<double>::infinity();
  save_checkpoint(c, f.path.string());
  Checkpoint<double> r = load_checkpoint<double>(f.path.string());
  CHECK(std::isinf(r.opt.best_valid_nll));
}

TEST_CASE("truncated checkpoints are reported corrupt") {
  TempFile f("hornn_ckpt_trunc.hornn");
  Checkpoint<double> c = sample_checkpoint<double>();
  save_checkpoint(c, f.path.string());
  const auto full = fs::file_size(f.path);
  fs::resize_file(f.path, full - 16);
  CHECK_THROWS_AS(load_checkpoint<double>(f.path.string()),
                  CorruptCheckpoint);
  fs::resize_file(f.path, 7);  // inside the header length field
  CHECK_THROWS_AS(load_checkpoint<double>(f.path.string()),
                  CorruptCheckpoint);
}

TEST_CASE("garbage bytes are not a checkpoint") {
  TempFile f("hornn_ckpt_garbage.hornn");
  std::ofstream(f.path) << "definitely not a checkpoint";
  CHECK_THROWS_AS(load_checkpoint<double>(f.path.string()),
                  CorruptCheckpoint);
}

TEST_CASE("future format versions are rejected naming both versions") {
  TempFile f("hornn_ckpt_version.hornn");
  Checkpoint<double> c = sample_checkpoint<double>();
  save_checkpoint(c, f.path.string());
  {
    std::fstream io(f.path, std::ios::in | std::ios::out | std::ios::binary);
    io.seekp(4);
    io.put(char(kCheckpointVersion + 1));
  }
  CHECK_THROWS_WITH_AS(load_checkpoint<double>(f.path.string()),
                       doctest::Contains("version 2"),
                       CheckpointVersionMismatch);
}

TEST_CASE("precision mismatch is a shape error") {
  TempFile f("hornn_ckpt_precision.hornn");
  Checkpoint<double> c = sample_checkpoint<double>();
  save_checkpoint(c, f.path.string());
  CHECK_THROWS_AS(load_checkpoint<float>(f.path.string()),
                  CheckpointShapeMismatch);
}

TEST_CASE("manifest tampering is a shape error") {
  TempFile f("hornn_ckpt_shape.hornn");
  Checkpoint<double> c = sample_checkpoint<double>();
  save_checkpoint(c, f.path.string());

  // Rewrite the file with a manifest whose first shape disagrees.
  std::ifstream in(f.path, std::ios::binary);
  nlohmann::json header = read_checkpoint_header(in);
  std::string rest((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  in.close();
  header["manifest"][0]["rows"] = 99;
  const std::string dumped = header.dump();
  std::ofstream out(f.path, std::ios::binary | std::ios::trunc);
  out.write(kCheckpointMagic, 4);
  out.put(char(kCheckpointVersion));
  const std::uint32_t len = std::uint32_t(dumped.size());
  out.write(reinterpret_cast<const char*>(&len), 4);
  out << dumped << rest;
  out.close();

  CHECK_THROWS_WITH_AS(load_checkpoint<double>(f.path.string()),
                       doctest::Contains("w_in"), CheckpointShapeMismatch);
}

TEST_CASE("header inspection does not need the matrices") {
  TempFile f("hornn_ckpt_header.hornn");
  Checkpoint<double> c = sample_checkpoint<double>();
  save_checkpoint(c, f.path.string());
  const nlohmann::json h = read_checkpoint_header(f.path.string());
  CHECK(h.at("precision") == 64);
  CHECK(h.at("config").at("order") == 2);
  CHECK(h.at("manifest").size() == 2 * 8);  // params + momentum, 8 each
  CHECK(h.at("vocab").size() == 4);
}
