#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "hornn/trainer.hpp"

namespace hornn {

struct EvalReport {
  std::string corpus;
  std::int64_t tokens = 0;  // scored targets
  double mean_nll = 0.0;    // natural log
  double perplexity = 1.0;  // exp(mean_nll)
  double histogram_bucket_nats = 0.5;
  std::vector<std::int64_t> nll_histogram;  // filled only on request

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j{{"corpus", corpus},
                             {"tokens", tokens},
                             {"mean_nll", mean_nll},
                             {"perplexity", perplexity}};
    if (!nll_histogram.empty()) {
      j["histogram_bucket_nats"] = histogram_bucket_nats;
      j["nll_histogram"] = nll_histogram;
    }
    return j;
  }
};

// Single-lane stateful pass over the whole corpus; every target scored
// exactly once.
template <class S>
EvalReport perplexity(const HornnConfig& cfg, const Parameters<S>& params,
                      std::span<const int> ids,
                      const std::string& corpus_name = "",
                      bool histogram = false) {
  if (ids.size() < 2)
    throw ContractViolation("perplexity: corpus must have at least 2 tokens "
                            "after encoding, got " +
                            std::to_string(ids.size()));
  std::vector<double> per_target;
  const ScoreResult sr = score_corpus<S>(
      cfg, params, ids, nullptr, histogram ? &per_target : nullptr);
  EvalReport r;
  r.corpus = corpus_name;
  r.tokens = sr.targets;
  r.mean_nll = sr.mean_nll;
  r.perplexity = std::exp(sr.mean_nll);
  if (histogram) {
    for (double nll : per_target) {
      const auto bucket = std::size_t(nll / r.histogram_bucket_nats);
      if (r.nll_histogram.size() <= bucket) r.nll_histogram.resize(bucket + 1);
      ++r.nll_histogram[bucket];
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient oracle.

struct GradCheckSettings {
  Pooling pooling = Pooling::kPlain;
  int order = 3;
  Activation activation = Activation::kSigmoid;
  std::uint64_t seed = 1;
  int vocab = 11;
  int hidden = 7;
  int window = 5;
  double alpha = 0.6;
  double init_std = 0.1;
  bool bias = false;
  double fd_step = 1e-5;
  double tolerance = 1e-5;
  // Exclusion zones where the loss is not differentiable enough for central
  // differences: any relu pre-activation within `relu_zone` of zero, or a
  // max-pool top-two path gap below `max_tie_zone`.
  double relu_zone = 1e-4;
  double max_tie_zone = 1e-6;
  // Test hook: flip the sign of this matrix's analytic gradient so the
  // comparison must fail there.
  std::string fault_matrix;
};

struct GradCheckReport {
  struct PerMatrix {
    std::string name;
    double max_err = 0.0;
    int row = -1;
    int col = -1;
    double analytic = 0.0;
    double numeric = 0.0;
  };

  bool pass = false;
  bool excluded = false;
  std::string exclusion_reason;
  double tolerance = 0.0;
  double max_err = 0.0;
  std::string worst_matrix;
  int worst_row = -1;
  int worst_col = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::vector<PerMatrix> matrices;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json per = nlohmann::ordered_json::array();
    for (const auto& m : matrices)
      per.push_back({{"name", m.name},
                     {"max_err", m.max_err},
                     {"row", m.row},
                     {"col", m.col},
                     {"analytic", m.analytic},
                     {"numeric", m.numeric}});
    return {{"pass", pass},
            {"excluded", excluded},
            {"exclusion_reason", exclusion_reason},
            {"tolerance", tolerance},
            {"max_err", max_err},
            {"worst_matrix", worst_matrix},
            {"worst_row", worst_row},
            {"worst_col", worst_col},
            {"worst_analytic", worst_analytic},
            {"worst_numeric", worst_numeric},
            {"matrices", per}};
  }
};

// Relative error with an absolute floor: errors on coordinates where both
// gradients are below 1e-3 are measured against 1e-3 instead, which keeps
// finite-difference roundoff on near-cancelling coordinates from raising
// false alarms.
inline double gradcheck_error(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / denom;
}

// Compares the analytic BPTT gradients against central finite differences
// of the window loss on a tiny random instance. Runs in 64-bit regardless
// of the training precision. Carried-in states are random, so the weight
// gradients through pre-window inputs are exercised too.
inline GradCheckReport gradient_check(const GradCheckSettings& gs) {
  using S = double;
  HornnConfig cfg;
  cfg.order = gs.order;
  cfg.hidden = gs.hidden;
  cfg.vocab = gs.vocab;
  cfg.pooling = gs.pooling;
  cfg.alpha = gs.alpha;
  cfg.activation = gs.activation;
  cfg.seed = gs.seed;
  cfg.init_std = gs.init_std;
  cfg.bias = gs.bias;
  cfg.validate();

  GradCheckReport report;
  report.tolerance = gs.tolerance;

  Parameters<S> params = init_params<S>(cfg);
  Rng data_rng(Rng::derive_stream(gs.seed, 1000));
  std::vector<Vector<S>> carried(std::size_t(cfg.order));
  for (auto& c : carried) {
    c.resize(cfg.hidden);
    for (int i = 0; i < cfg.hidden; ++i) c[i] = data_rng.next_double();
  }
  std::vector<int> inputs(std::size_t(gs.window)),
      targets(std::size_t(gs.window));
  for (auto& x : inputs) x = int(data_rng.next_u64() % std::uint64_t(cfg.vocab));
  for (auto& x : targets)
    x = int(data_rng.next_u64() % std::uint64_t(cfg.vocab));

  auto preload = [&](StateBuffer<S>& st) {
    for (int n = cfg.order; n >= 1; --n) st.push(carried[std::size_t(n - 1)]);
  };
  auto window_loss = [&](const Parameters<S>& p,
                         std::vector<StepTrace<S>>& traces) {
    StateBuffer<S> st(cfg.order, cfg.hidden);
    preload(st);
    return forward_window<S>(cfg, p, st, inputs, targets, traces);
  };

  std::vector<StepTrace<S>> traces;
  window_loss(params, traces);

  if (cfg.activation == Activation::kRelu) {
    double min_abs_z = std::numeric_limits<double>::infinity();
    for (const auto& tr : traces)
      min_abs_z = std::min(min_abs_z, double(tr.z.cwiseAbs().minCoeff()));
    if (min_abs_z < gs.relu_zone) {
      report.excluded = true;
      report.exclusion_reason =
          "relu pre-activation within " + std::to_string(gs.relu_zone) +
          " of zero (min |z| = " + std::to_string(min_abs_z) + ")";
      return report;
    }
  }
  if (cfg.pooling == Pooling::kMax && cfg.order >= 2) {
    double min_gap = std::numeric_limits<double>::infinity();
    for (const auto& tr : traces)
      for (int i = 0; i < cfg.hidden; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        double second = best;
        for (const auto& p : tr.path) {
          const double v = p[i];
          if (v > best) {
            second = best;
            best = v;
          } else if (v > second) {
            second = v;
          }
        }
        min_gap = std::min(min_gap, best - second);
      }
    if (min_gap < gs.max_tie_zone) {
      report.excluded = true;
      report.exclusion_reason =
          "max-pool top-two path gap below " + std::to_string(gs.max_tie_zone);
      return report;
    }
  }

  Gradients<S> analytic =
      backward_window<S>(cfg, params, traces, targets, carried);
  if (!gs.fault_matrix.empty()) {
    bool found = false;
    analytic.for_each([&](const std::string& name, Matrix<S>& m) {
      if (name == gs.fault_matrix) {
        m = -m;
        found = true;
      }
    });
    if (!found)
      throw ContractViolation("gradient_check: no matrix named '" +
                              gs.fault_matrix + "'");
  }

  std::vector<std::pair<std::string, Matrix<S>*>> mutable_mats;
  params.for_each([&](const std::string& name, Matrix<S>& m) {
    mutable_mats.emplace_back(name, &m);
  });
  std::vector<std::pair<std::string, const Matrix<S>*>> analytic_mats;
  analytic.for_each([&](const std::string& name, const Matrix<S>& m) {
    analytic_mats.emplace_back(name, &m);
  });

  std::vector<StepTrace<S>> scratch;
  for (std::size_t k = 0; k < mutable_mats.size(); ++k) {
    auto& [name, mat] = mutable_mats[k];
    GradCheckReport::PerMatrix pm;
    pm.name = name;
    for (Eigen::Index r = 0; r < mat->rows(); ++r)
      for (Eigen::Index c = 0; c < mat->cols(); ++c) {
        const double saved = (*mat)(r, c);
        (*mat)(r, c) = saved + gs.fd_step;
        const double up = window_loss(params, scratch);
        (*mat)(r, c) = saved - gs.fd_step;
        const double down = window_loss(params, scratch);
        (*mat)(r, c) = saved;
        const double numeric = (up - down) / (2.0 * gs.fd_step);
        const double a = (*analytic_mats[k].second)(r, c);
        const double err = gradcheck_error(a, numeric);
        if (err > pm.max_err) {
          pm.max_err = err;
          pm.row = int(r);
          pm.col = int(c);
          pm.analytic = a;
          pm.numeric = numeric;
        }
      }
    if (pm.max_err > report.max_err) {
      report.max_err = pm.max_err;
      report.worst_matrix = pm.name;
      report.worst_row = pm.row;
      report.worst_col = pm.col;
      report.worst_analytic = pm.analytic;
      report.worst_numeric = pm.numeric;
    }
    report.matrices.push_back(std::move(pm));
  }
  report.pass = report.max_err <= gs.tolerance;
  return report;
}

// Retries with shifted seeds until the instance falls outside the exclusion
// zones (relu kinks, max-pool near-ties).
inline GradCheckReport gradient_check_resample(GradCheckSettings gs,
                                               int max_tries = 16) {
  GradCheckReport report;
  for (int k = 0; k < max_tries; ++k) {
    report = gradient_check(gs);
    if (!report.excluded) return report;
    gs.seed += 0xA5A5A5A5ull;
  }
  return report;  // still excluded; caller sees the reason
}

// ---------------------------------------------------------------------------
// Sweep harnesses.

struct SweepPoint {
  double axis_value = 0.0;
  double test_ppl = 0.0;
};

struct SweepResult {
  std::string axis;  // "order" or "alpha"
  std::vector<SweepPoint> points;
  std::string config_fingerprint;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json pts = nlohmann::ordered_json::array();
    for (const auto& p : points)
      pts.push_back({{axis, p.axis_value}, {"test_ppl", p.test_ppl}});
    return {{"axis", axis},
            {"config_fingerprint", config_fingerprint},
            {"points", pts}};
  }

  std::string to_table() const {
    std::string out = axis + "\ttest_ppl\n";
    char line[64];
    for (const auto& p : points) {
      if (axis == "order")
        std::snprintf(line, sizeof(line), "%d\t%.4f\n", int(p.axis_value),
                      p.test_ppl);
      else
        std::snprintf(line, sizeof(line), "%.3f\t%.4f\n", p.axis_value,
                      p.test_ppl);
      out += line;
    }
    return out;
  }
};

namespace detail {

inline std::string recipe_fingerprint(const RunRecipe& r) {
  const nlohmann::ordered_json j{
      {"config", config_to_json(r.model)},
      {"lr", r.lr},
      {"momentum_coef", r.momentum_coef},
      {"weight_decay", r.weight_decay},
      {"column_norm_cap", r.column_norm_cap},
      {"epochs", r.train.epochs},
      {"lanes", r.train.lanes},
      {"window", r.train.window},
      {"clip", r.train.clip},
      {"schedule", to_string(r.train.schedule)}};
  return hex_u64(fnv1a64(j.dump()));
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each call must be
// fully isolated; results are indexed, so the outcome is identical to the
// sequential order.
template <class F>
void parallel_for(std::size_t n, int jobs, F&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1))
      fn(i);
  };
  std::vector<std::thread> pool;
  const int count = std::min<int>(jobs, int(n));
  pool.reserve(std::size_t(count));
  for (int t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

}  // namespace detail

// Trains one model per order with a shared recipe and seed, then scores the
// test corpus. Orders are deduplicated and reported in increasing order.
template <class S>
SweepResult order_sweep(const RunRecipe& base, std::vector<int> orders,
                        const Vocab& vocab, const TokenizerOptions& tokenizer,
                        std::uint64_t corpus_hash,
                        std::span<const int> train_ids,
                        std::span<const int> valid_ids,
                        std::span<const int> test_ids, int jobs = 1) {
  if (orders.empty())
    throw ContractViolation("order_sweep: empty order list");
  for (int o : orders)
    if (o < 1) throw ContractViolation("order_sweep: order must be >= 1");
  std::sort(orders.begin(), orders.end());
  orders.erase(std::unique(orders.begin(), orders.end()), orders.end());

  SweepResult result;
  result.axis = "order";
  result.config_fingerprint = detail::recipe_fingerprint(base);
  result.points.resize(orders.size());
  detail::parallel_for(orders.size(), jobs, [&](std::size_t i) {
    RunRecipe recipe = base;
    recipe.model.order = orders[i];
    const auto tr = run_recipe<S>(recipe, vocab, tokenizer, corpus_hash,
                                  train_ids, valid_ids);
    const auto report =
        perplexity<S>(tr.checkpoint.config, tr.checkpoint.params, test_ids);
    result.points[i] = {double(orders[i]), report.perplexity};
  });
  return result;
}

template <class S>
SweepResult alpha_sweep(const RunRecipe& base, std::vector<double> alphas,
                        const Vocab& vocab, const TokenizerOptions& tokenizer,
                        std::uint64_t corpus_hash,
                        std::span<const int> train_ids,
                        std::span<const int> valid_ids,
                        std::span<const int> test_ids, int jobs = 1) {
  if (base.model.pooling != Pooling::kFofe)
    throw ContractViolation("alpha_sweep: pooling must be fofe");
  if (alphas.empty())
    throw ContractViolation("alpha_sweep: empty alpha list");
  for (double a : alphas)
    if (!(a > 0.0 && a < 1.0))
      throw ContractViolation("alpha_sweep: alpha " + std::to_string(a) +
                              " outside (0,1)");
  std::sort(alphas.begin(), alphas.end());
  alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());

  SweepResult result;
  result.axis = "alpha";
  result.config_fingerprint = detail::recipe_fingerprint(base);
  result.points.resize(alphas.size());
  detail::parallel_for(alphas.size(), jobs, [&](std::size_t i) {
    RunRecipe recipe = base;
    recipe.model.alpha = alphas[i];
    const auto tr = run_recipe<S>(recipe, vocab, tokenizer, corpus_hash,
                                  train_ids, valid_ids);
    const auto report =
        perplexity<S>(tr.checkpoint.config, tr.checkpoint.params, test_ids);
    result.points[i] = {alphas[i], report.perplexity};
  });
  return result;
}

// ---------------------------------------------------------------------------
// Long-dependency diagnostic: a synthetic copy task plus backward
// instrumentation of how much gradient reaches each delayed state.

struct CopyTaskSpec {
  int lag = 3;
  int alphabet = 6;
  int region = 12;  // first `lag` tokens of each region are fresh noise
  std::int64_t length = 4000;
  std::uint64_t seed = 9;
};

struct CopyTask {
  std::vector<int> ids;
  // determined[i]: ids[i] was forced equal to ids[i - lag] by construction.
  std::vector<std::uint8_t> determined;
};

inline CopyTask make_copy_task(const CopyTaskSpec& spec) {
  if (spec.lag < 1 || spec.alphabet < 2 || spec.region <= spec.lag ||
      spec.length < spec.region)
    throw ContractViolation("make_copy_task: need lag >= 1, alphabet >= 2, "
                            "region > lag, length >= region");
  Rng rng(spec.seed);
  CopyTask task;
  task.ids.resize(std::size_t(spec.length));
  task.determined.assign(std::size_t(spec.length), 0);
  for (std::int64_t i = 0; i < spec.length; ++i) {
    if (i % spec.region < spec.lag) {
      task.ids[std::size_t(i)] =
          int(rng.next_u64() % std::uint64_t(spec.alphabet));
    } else {
      task.ids[std::size_t(i)] = task.ids[std::size_t(i - spec.lag)];
      task.determined[std::size_t(i)] = 1;
    }
  }
  return task;
}

inline Vocab synthetic_vocab(int alphabet) {
  std::vector<std::string> tokens;
  tokens.reserve(std::size_t(alphabet));
  for (int i = 0; i < alphabet; ++i) tokens.push_back("tok" + std::to_string(i));
  return build_vocab(tokens, 0, "<unk>");
}

struct ProbeRow {
  Pooling pooling = Pooling::kPlain;
  int order = 1;
  double nll_determined = 0.0;
  double nll_all = 0.0;
  std::vector<double> grad_reach;  // mean |grad| into h_{t-k}, k = 1..lag
};

struct ProbeResult {
  CopyTaskSpec task;
  std::vector<ProbeRow> rows;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json rs = nlohmann::ordered_json::array();
    for (const auto& r : rows)
      rs.push_back({{"pooling", to_string(r.pooling)},
                    {"order", r.order},
                    {"nll_determined", r.nll_determined},
                    {"nll_all", r.nll_all},
                    {"grad_reach", r.grad_reach}});
    return {{"lag", task.lag},
            {"alphabet", task.alphabet},
            {"region", task.region},
            {"rows", rs}};
  }
};

// Trains each (pooling, order) variant on the copy task, reports NLL on the
// lag-determined target positions, and measures the gradient a final-step
// loss sends back into each delayed hidden state.
template <class S>
ProbeResult long_dependency_probe(
    const std::vector<std::pair<Pooling, int>>& variants,
    const RunRecipe& base, const CopyTaskSpec& spec,
    std::int64_t test_length = 2000) {
  ProbeResult result;
  result.task = spec;
  const CopyTask train_task = make_copy_task(spec);
  CopyTaskSpec test_spec = spec;
  test_spec.seed = spec.seed + 1;
  test_spec.length = test_length;
  const CopyTask test_task = make_copy_task(test_spec);
  const Vocab vocab = synthetic_vocab(spec.alphabet);

  for (const auto& [pooling, order] : variants) {
    RunRecipe recipe = base;
    recipe.model.pooling = pooling;
    recipe.model.order = order;
    const auto tr = run_recipe<S>(recipe, vocab, TokenizerOptions{}, 0,
                                  train_task.ids);
    const HornnConfig& cfg = tr.checkpoint.config;
    const Parameters<S>& params = tr.checkpoint.params;

    ProbeRow row;
    row.pooling = pooling;
    row.order = order;
    row.nll_all = score_corpus<S>(cfg, params, test_task.ids).mean_nll;
    row.nll_determined =
        score_corpus<S>(cfg, params, test_task.ids, &test_task.determined)
            .mean_nll;

    // Warm up state over one window, then backpropagate only the final
    // step's loss of the next window and read the per-state inflow.
    const int T = recipe.train.window;
    if (std::int64_t(2 * T + 1) > std::int64_t(test_task.ids.size()) ||
        T <= spec.lag)
      throw ContractViolation("long_dependency_probe: window too small for "
                              "the requested lag");
    StateBuffer<S> state(cfg.order, cfg.hidden);
    std::vector<StepTrace<S>> traces;
    std::vector<int> warm_in(test_task.ids.begin(),
                             test_task.ids.begin() + T);
    std::vector<int> warm_tg(test_task.ids.begin() + 1,
                             test_task.ids.begin() + T + 1);
    forward_window<S>(cfg, params, state, warm_in, warm_tg, traces);
    const std::vector<Vector<S>> carried = state.snapshot();
    std::vector<int> in(test_task.ids.begin() + T,
                        test_task.ids.begin() + 2 * T);
    std::vector<int> tg(test_task.ids.begin() + T + 1,
                        test_task.ids.begin() + 2 * T + 1);
    forward_window<S>(cfg, params, state, in, tg, traces);
    std::vector<double> weights(std::size_t(T), 0.0);
    weights.back() = 1.0;
    std::vector<double> inflow;
    BackwardOptions bo;
    bo.step_weights = weights;
    bo.state_grad_meanabs = &inflow;
    backward_window<S>(cfg, params, traces, tg, carried, bo);
    for (int k = 1; k <= spec.lag; ++k)
      row.grad_reach.push_back(inflow[std::size_t(T - 1 - k)]);
    result.rows.push_back(std::move(row));
  }
  return result;
}

}  // namespace hornn
