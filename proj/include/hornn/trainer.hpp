#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "hornn/checkpoint.hpp"
#include "hornn/corpus.hpp"

namespace hornn {

// Collects the JSONL metrics log; optionally tees every line to a stream.
// Two runs with the same seed, corpus and config produce identical lines
// except for the wall_ms field.
class MetricsSink {
 public:
  explicit MetricsSink(std::ostream* tee = nullptr) : tee_(tee) {}

  void emit(const nlohmann::ordered_json& j) {
    lines_.push_back(j.dump());
    if (tee_) *tee_ << lines_.back() << '\n' << std::flush;
  }

  const std::vector<std::string>& lines() const { return lines_; }

 private:
  std::vector<std::string> lines_;
  std::ostream* tee_ = nullptr;
};

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainSettings {
  int epochs = 20;
  int lanes = 20;   // mini-batch subsequences
  int window = 30;  // BPTT truncation length
  double clip = 5.0;  // elementwise gradient clamp; <= 0 disables
  Schedule schedule = Schedule::kValidationHalving;
  std::string checkpoint_dir;  // empty: nothing written to disk
};

// Hyperparameters for one training run; the corpus-dependent vocab size is
// filled in separately.
struct RunRecipe {
  HornnConfig model;
  double lr = 0.5;
  double momentum_coef = 0.9;
  double weight_decay = 1e-5;
  double column_norm_cap = 1.0;
  TrainSettings train;
};

template <class S>
Checkpoint<S> init_run(const RunRecipe& recipe, Vocab vocab,
                       TokenizerOptions tokenizer, std::uint64_t corpus_hash) {
  Checkpoint<S> c;
  c.config = recipe.model;
  c.config.vocab = vocab.size();
  c.config.validate();
  c.params = init_params<S>(c.config);
  c.opt.lr = recipe.lr;
  c.opt.momentum_coef = recipe.momentum_coef;
  c.opt.weight_decay = recipe.weight_decay;
  c.opt.column_norm_cap = recipe.column_norm_cap;
  c.opt.momentum = param_shapes<S>(c.config);
  c.rng_state = c.config.seed;  // no randomness is consumed after init
  c.corpus_hash = corpus_hash;
  c.vocab = std::move(vocab);
  c.tokenizer = std::move(tokenizer);
  return c;
}

template <class S>
struct TrainResult {
  Checkpoint<S> checkpoint;
  double final_train_nll = std::numeric_limits<double>::quiet_NaN();
  double final_valid_nll = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> checkpoint_files;
};

// Epoch loop: forward/backward/clip/update per batch with hidden state
// carried across the windows of each lane, validation scoring and the
// learning-rate schedule at every epoch end, one checkpoint per epoch plus
// a final one. Resuming from a saved per-epoch checkpoint continues with
// bitwise-identical arithmetic because parameters, momentum buffers and the
// schedule state all round-trip exactly; lanes restart each epoch from zero
// state, so epoch boundaries are clean resume points.
template <class S>
TrainResult<S> train(Checkpoint<S> run, const TrainSettings& ts,
                     std::span<const int> train_ids,
                     std::span<const int> valid_ids = {},
                     MetricsSink* metrics = nullptr) {
  const HornnConfig& cfg = run.config;
  cfg.validate();
  if (ts.lanes < 1 || ts.window < 1 || ts.epochs < 0)
    throw ContractViolation("train: lanes/window must be >= 1, epochs >= 0");

  BatchStream stream =
      make_stream(std::vector<int>(train_ids.begin(), train_ids.end()),
                  ts.lanes, ts.window);
  std::vector<StateBuffer<S>> states(
      std::size_t(ts.lanes), StateBuffer<S>(cfg.order, cfg.hidden));
  std::vector<std::vector<StepTrace<S>>> traces(std::size_t(ts.lanes));
  Gradients<S> g = param_shapes<S>(cfg);

  TrainResult<S> result{std::move(run)};
  Checkpoint<S>& ck = result.checkpoint;

  auto checkpoint_path = [&](const std::string& stem) {
    return ts.checkpoint_dir + "/" + stem + ".hornn";
  };

  for (int epoch = ck.opt.epoch + 1; epoch <= ts.epochs; ++epoch) {
    stream.reset();
    for (auto& st : states) st.reset();
    std::int64_t batch_idx = 0;
    double epoch_nll_sum = 0.0;

    while (auto batch = stream.next_batch()) {
      const auto t0 = std::chrono::steady_clock::now();
      ++batch_idx;
      g.set_zero();
      double batch_nll = 0.0;
      for (int lane = 0; lane < ts.lanes; ++lane) {
        const std::vector<Vector<S>> carried =
            states[std::size_t(lane)].snapshot();
        const std::span<const int> in(batch->input_row(lane),
                                      std::size_t(ts.window));
        const std::span<const int> tg(batch->target_row(lane),
                                      std::size_t(ts.window));
        batch_nll += forward_window(cfg, ck.params,
                                    states[std::size_t(lane)], in, tg,
                                    traces[std::size_t(lane)]);
        BackwardOptions bo;
        bo.loss_scale = 1.0 / ts.lanes;
        backward_window_into(g, cfg, ck.params, traces[std::size_t(lane)],
                             tg, carried, bo);
      }
      batch_nll /= ts.lanes;
      if (!std::isfinite(batch_nll)) {
        if (!ts.checkpoint_dir.empty())
          save_checkpoint(ck, checkpoint_path("aborted"));
        throw TrainingDiverged(
            "non-finite training loss at epoch " + std::to_string(epoch) +
            " batch " + std::to_string(batch_idx) +
            " (max |param| = " + std::to_string(ck.params.max_abs()) + ")");
      }
      epoch_nll_sum += batch_nll;
      const double grad_maxabs = g.max_abs();
      if (ts.clip > 0.0) g = clip_gradients(std::move(g), ts.clip);
      sgd_update(ck.params, g, ck.opt);
      if (metrics) {
        const double wall_ms =
            std::chrono::duration<double, std::milli>(
                std::chrono::steady_clock::now() - t0)
                .count();
        metrics->emit({{"epoch", epoch},
                       {"batch", batch_idx},
                       {"train_nll", batch_nll},
                       {"lr", ck.opt.lr},
                       {"grad_maxabs", grad_maxabs},
                       {"wall_ms", wall_ms}});
      }
    }

    ck.opt.epoch = epoch;
    result.final_train_nll = epoch_nll_sum / double(batch_idx);

    double valid_nll = std::numeric_limits<double>::quiet_NaN();
    double valid_ppl = std::numeric_limits<double>::quiet_NaN();
    if (!valid_ids.empty()) {
      const ScoreResult sr = score_corpus<S>(cfg, ck.params, valid_ids);
      valid_nll = sr.mean_nll;
      valid_ppl = std::exp(valid_nll);
      result.final_valid_nll = valid_nll;
    }
    if (ts.schedule == Schedule::kText8)
      end_of_epoch_schedule(ck.opt, valid_nll, Schedule::kText8);
    else if (!valid_ids.empty())
      end_of_epoch_schedule(ck.opt, valid_nll, Schedule::kValidationHalving);
    if (metrics)
      metrics->emit({{"epoch", epoch},
                     {"valid_nll", valid_nll},
                     {"valid_ppl", valid_ppl},
                     {"lr_next", ck.opt.lr}});

    if (!ts.checkpoint_dir.empty()) {
      char stem[32];
      std::snprintf(stem, sizeof(stem), "epoch_%03d", epoch);
      const std::string path = checkpoint_path(stem);
      save_checkpoint(ck, path);
      result.checkpoint_files.push_back(path);
    }
  }

  if (!ts.checkpoint_dir.empty()) {
    const std::string path = checkpoint_path("final");
    save_checkpoint(ck, path);
    result.checkpoint_files.push_back(path);
  }
  return result;
}

template <class S>
TrainResult<S> run_recipe(const RunRecipe& recipe, Vocab vocab,
                          TokenizerOptions tokenizer,
                          std::uint64_t corpus_hash,
                          std::span<const int> train_ids,
                          std::span<const int> valid_ids = {},
                          MetricsSink* metrics = nullptr) {
  return train<S>(init_run<S>(recipe, std::move(vocab), std::move(tokenizer),
                              corpus_hash),
                  recipe.train, train_ids, valid_ids, metrics);
}

}  // namespace hornn
