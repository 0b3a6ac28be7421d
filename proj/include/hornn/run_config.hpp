#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hornn/corpus.hpp"
#include "hornn/trainer.hpp"

namespace hornn {

// Every operator-facing knob with its built-in default. Defaults are the
// full-scale word-level recipe: order-3, 400 hidden units, 30-step BPTT over
// 20 lanes, initial learning rate 0.5 with validation-driven halving,
// elementwise clip 5.0, Gaussian init std 0.1, fofe alpha 0.6.
struct RunConfig {
  // model
  int order = 3;
  int hidden = 400;
  std::string pooling = "plain";
  double alpha = 0.6;
  std::string activation = "sigmoid";
  std::uint64_t seed = 1;
  double init_std = 0.1;
  bool bias = false;
  // optimization
  double lr = 0.5;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  double clip = 5.0;     // <= 0 disables clipping
  double col_norm = 1.0;  // <= 0 disables column normalization
  std::string schedule = "validation_halving";
  int epochs = 20;
  int batch = 20;  // mini-batch subsequences (lanes)
  int bptt = 30;   // window length
  // corpus
  std::string corpus;
  std::string valid;
  std::string test;
  std::int64_t min_count = 0;
  std::string unk = "<unk>";
  std::string eos = "<eos>";
  bool add_eos = true;
  // run / io
  std::string out;  // run directory; empty resolves to $HORNN_OUT/run or runs/run
  int precision = 32;  // 32 or 64
  int jobs = 1;
  // command-specific
  std::string values;        // sweep axis values: "2,3,4" or "0.2..0.9:0.1"
  std::string checkpoint;    // eval/inspect input
  std::string vocab_file;    // eval: external vocab override
  bool histogram = false;    // eval: per-target NLL histogram
  bool stats = false;        // inspect: load matrices and print norms
  std::string inject_fault;  // gradcheck self-test: sign-flip this matrix
  double tolerance = 1e-5;   // gradcheck
  std::string resume;        // train: continue from this checkpoint
};

nlohmann::ordered_json to_json(const RunConfig& rc);

// Applies a flat JSON object onto `rc`. Unknown keys and wrong value types
// are contract violations.
void apply_json(RunConfig& rc, const nlohmann::json& j);

// Config files are either a flat JSON object or `key = value` lines
// (value parsed as JSON when possible, bare word otherwise; '#' comments).
void apply_config_file(RunConfig& rc, const std::string& path);

void validate_run_config(const RunConfig& rc);

// "2,3,4", "0.2..0.9" (step 0.1) or "0.2..0.9:0.05".
std::vector<double> parse_sweep_values(const std::string& spec);

RunRecipe recipe_from_config(const RunConfig& rc);
TokenizerOptions tokenizer_from_config(const RunConfig& rc);

}  // namespace hornn
