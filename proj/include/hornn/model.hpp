#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "hornn/numerics.hpp"

namespace hornn {

struct HornnConfig {
  int order = 3;
  int hidden = 400;
  int vocab = 0;
  Pooling pooling = Pooling::kPlain;
  double alpha = 0.6;  // fofe forgetting factor
  Activation activation = Activation::kSigmoid;
  std::uint64_t seed = 1;
  double init_std = 0.1;
  bool bias = false;  // off: the update equations carry no bias terms

  void validate() const {
    if (order < 1) throw ContractViolation("config: order must be >= 1");
    if (hidden < 1) throw ContractViolation("config: hidden must be >= 1");
    if (vocab < 2) throw ContractViolation("config: vocab must be >= 2");
    if (init_std <= 0.0)
      throw ContractViolation("config: init_std must be > 0");
    if (pooling == Pooling::kFofe && !(alpha > 0.0 && alpha < 1.0))
      throw ContractViolation("config: alpha must lie in (0,1) for fofe "
                              "pooling, got " + std::to_string(alpha));
  }
};

// All weight matrices of one model. Biases are stored as 1-column matrices
// and have size 0 unless the bias flag is on. Gate lists are empty unless
// pooling is gated. The same container doubles as the gradient and momentum
// accumulator, which always mirror the parameter shapes.
template <class S>
struct ParamSet {
  Matrix<S> w_in;                  // hidden x vocab
  std::vector<Matrix<S>> w_h;      // order entries, hidden x hidden
  Matrix<S> w_out;                 // vocab x hidden
  std::vector<Matrix<S>> gate_w1;  // hidden x vocab
  std::vector<Matrix<S>> gate_w2;  // hidden x hidden
  Matrix<S> b_h;                   // hidden x 1
  Matrix<S> b_out;                 // vocab x 1

  template <class F>
  void for_each(F&& f) {
    f(std::string("w_in"), w_in);
    for (std::size_t n = 0; n < w_h.size(); ++n)
      f("w_h" + std::to_string(n + 1), w_h[n]);
    f(std::string("w_out"), w_out);
    for (std::size_t n = 0; n < gate_w1.size(); ++n)
      f("gate_w1_" + std::to_string(n + 1), gate_w1[n]);
    for (std::size_t n = 0; n < gate_w2.size(); ++n)
      f("gate_w2_" + std::to_string(n + 1), gate_w2[n]);
    if (b_h.size() > 0) f(std::string("b_h"), b_h);
    if (b_out.size() > 0) f(std::string("b_out"), b_out);
  }

  template <class F>
  void for_each(F&& f) const {
    const_cast<ParamSet*>(this)->for_each(
        [&](const std::string& name, Matrix<S>& m) {
          f(name, static_cast<const Matrix<S>&>(m));
        });
  }

  void set_zero() {
    for_each([](const std::string&, Matrix<S>& m) { m.setZero(); });
  }

  double max_abs() const {
    double mx = 0.0;
    for_each([&](const std::string&, const Matrix<S>& m) {
      if (m.size() > 0) mx = std::max(mx, double(m.cwiseAbs().maxCoeff()));
    });
    return mx;
  }
};

template <class S>
using Parameters = ParamSet<S>;

// Zero-valued ParamSet with the shapes the config dictates.
template <class S>
ParamSet<S> param_shapes(const HornnConfig& cfg) {
  cfg.validate();
  ParamSet<S> p;
  p.w_in = Matrix<S>::Zero(cfg.hidden, cfg.vocab);
  p.w_h.assign(cfg.order, Matrix<S>::Zero(cfg.hidden, cfg.hidden));
  p.w_out = Matrix<S>::Zero(cfg.vocab, cfg.hidden);
  if (cfg.pooling == Pooling::kGated) {
    p.gate_w1.assign(cfg.order, Matrix<S>::Zero(cfg.hidden, cfg.vocab));
    p.gate_w2.assign(cfg.order, Matrix<S>::Zero(cfg.hidden, cfg.hidden));
  }
  if (cfg.bias) {
    p.b_h = Matrix<S>::Zero(cfg.hidden, 1);
    p.b_out = Matrix<S>::Zero(cfg.vocab, 1);
  }
  return p;
}

template <class S>
ParamSet<S> zeros_like(const ParamSet<S>& other) {
  ParamSet<S> p = other;
  p.set_zero();
  return p;
}

// Every weight matrix gets its own splitmix64-derived stream, assigned in
// for_each order. Biases start at zero and consume no stream.
template <class S>
Parameters<S> init_params(const HornnConfig& cfg) {
  Parameters<S> p = param_shapes<S>(cfg);
  std::uint64_t stream = 0;
  p.for_each([&](const std::string& name, Matrix<S>& m) {
    if (name[0] == 'b') return;  // biases stay zero
    Rng rng(Rng::derive_stream(cfg.seed, stream++));
    m = gaussian_init<S>(rng, int(m.rows()), int(m.cols()), cfg.init_std);
  });
  return p;
}

// Ring of the N most recent hidden states for one lane. States before the
// start of a sequence read as zero vectors.
template <class S>
class StateBuffer {
 public:
  StateBuffer(int order, int hidden)
      : slots_(order, Vector<S>::Zero(hidden)) {}

  int order() const { return int(slots_.size()); }
  std::int64_t steps() const { return steps_; }

  // h_{t-n}, n = 1..order, where t is the next step to be computed.
  const Vector<S>& back(int n) const {
    const int N = order();
    return slots_[std::size_t((newest_ - (n - 1) + N) % N)];
  }

  void push(const Vector<S>& h) {
    newest_ = (newest_ + 1) % order();
    slots_[std::size_t(newest_)] = h;
    ++steps_;
  }

  void reset() {
    for (auto& s : slots_) s.setZero();
    steps_ = 0;
    newest_ = 0;
  }

  // Newest first: {h_{t-1}, h_{t-2}, ..., h_{t-N}}.
  std::vector<Vector<S>> snapshot() const {
    std::vector<Vector<S>> out;
    out.reserve(slots_.size());
    for (int n = 1; n <= order(); ++n) out.push_back(back(n));
    return out;
  }

 private:
  std::vector<Vector<S>> slots_;
  int newest_ = 0;
  std::int64_t steps_ = 0;
};

// Forward cache for one timestep; holds everything the backward pass needs
// so nothing is recomputed.
template <class S>
struct StepTrace {
  int input_id = -1;
  Vector<S> z;                      // hidden pre-activation
  Vector<S> h;                      // hidden state f(z)
  Vector<S> pooled;                 // combined feedback term
  Vector<S> y;                      // output distribution
  std::vector<Vector<S>> path;      // p_n = w_hn * h_{t-n}
  std::vector<Vector<S>> gate;      // r_n (gated pooling)
  std::vector<Vector<S>> gate_pre;  // gate pre-activations (gated pooling)
  Eigen::VectorXi max_sel;          // winning path per element (max pooling)
};

// Path coefficients alpha^n, n = 1..order, by successive multiplication.
// The backward pass must reuse exactly these values.
template <class S>
std::vector<S> fofe_coefficients(double alpha, int order) {
  std::vector<S> c(static_cast<std::size_t>(order));
  S coef = S(alpha);
  for (int n = 0; n < order; ++n) {
    c[std::size_t(n)] = coef;
    coef *= S(alpha);
  }
  return c;
}

// Pooled feedback term of the hidden pre-activation. Fills the per-path
// products and, depending on the variant, gates or selector masks into the
// trace.
template <class S>
Vector<S> feedback(const HornnConfig& cfg, const Parameters<S>& params,
                   const StateBuffer<S>& state, int x_id,
                   StepTrace<S>& trace) {
  const int N = cfg.order;
  const int d = cfg.hidden;

  trace.path.resize(std::size_t(N));
  for (int n = 1; n <= N; ++n)
    trace.path[std::size_t(n - 1)].noalias() =
        params.w_h[std::size_t(n - 1)] * state.back(n);

  Vector<S> pooled;
  switch (cfg.pooling) {
    case Pooling::kPlain: {
      pooled = trace.path[0];
      for (int n = 2; n <= N; ++n) pooled += trace.path[std::size_t(n - 1)];
      break;
    }
    case Pooling::kMax: {
      pooled = trace.path[0];
      trace.max_sel = Eigen::VectorXi::Constant(d, 1);
      for (int n = 2; n <= N; ++n) {
        const auto& p = trace.path[std::size_t(n - 1)];
        for (int i = 0; i < d; ++i) {
          if (p[i] > pooled[i]) {  // ties keep the smallest path index
            pooled[i] = p[i];
            trace.max_sel[i] = n;
          }
        }
      }
      break;
    }
    case Pooling::kFofe: {
      const auto coef = fofe_coefficients<S>(cfg.alpha, N);
      pooled = coef[0] * trace.path[0];
      for (int n = 2; n <= N; ++n)
        pooled += coef[std::size_t(n - 1)] * trace.path[std::size_t(n - 1)];
      break;
    }
    case Pooling::kGated: {
      trace.gate.resize(std::size_t(N));
      trace.gate_pre.resize(std::size_t(N));
      pooled = Vector<S>::Zero(d);
      for (int n = 1; n <= N; ++n) {
        auto& pre = trace.gate_pre[std::size_t(n - 1)];
        pre = params.gate_w1[std::size_t(n - 1)].col(x_id);
        pre.noalias() += params.gate_w2[std::size_t(n - 1)] * state.back(n);
        trace.gate[std::size_t(n - 1)] =
            activation<S>(Activation::kSigmoid, pre);
        pooled.array() += trace.gate[std::size_t(n - 1)].array() *
                          trace.path[std::size_t(n - 1)].array();
      }
      break;
    }
  }
  trace.pooled = pooled;
  return pooled;
}

// One recurrent step: h_t = f(w_in x_t + pooled feedback), y_t =
// softmax(w_out h_t). Advances the state ring. Results live in the trace.
template <class S>
void step(const HornnConfig& cfg, const Parameters<S>& params,
          StateBuffer<S>& state, int x_id, StepTrace<S>& trace) {
  if (x_id < 0 || x_id >= cfg.vocab)
    throw ContractViolation("step: token id " + std::to_string(x_id) +
                            " outside vocab of size " +
                            std::to_string(cfg.vocab));
  trace.input_id = x_id;
  Vector<S> z = params.w_in.col(x_id);
  z += feedback(cfg, params, state, x_id, trace);
  if (cfg.bias) z += params.b_h.col(0);
  trace.z = z;
  trace.h = activation<S>(cfg.activation, z);
  Vector<S> o = params.w_out * trace.h;
  if (cfg.bias) o += params.b_out.col(0);
  trace.y = softmax<S>(o);
  state.push(trace.h);
}

// Runs `step` across a window, caching one trace per timestep. Returns the
// mean negative log-likelihood (natural log) of the targets. State carries
// in and out, so consecutive windows of one lane chain together.
template <class S>
double forward_window(const HornnConfig& cfg, const Parameters<S>& params,
                      StateBuffer<S>& state, std::span<const int> inputs,
                      std::span<const int> targets,
                      std::vector<StepTrace<S>>& traces) {
  if (inputs.size() != targets.size() || inputs.empty())
    throw ContractViolation("forward_window: inputs/targets must be equal "
                            "non-zero length");
  const int T = int(inputs.size());
  traces.assign(std::size_t(T), StepTrace<S>{});
  double nll = 0.0;
  for (int t = 0; t < T; ++t) {
    const int target = targets[std::size_t(t)];
    if (target < 0 || target >= cfg.vocab)
      throw ContractViolation("forward_window: target id " +
                              std::to_string(target) +
                              " outside vocab of size " +
                              std::to_string(cfg.vocab));
    step(cfg, params, state, inputs[std::size_t(t)], traces[std::size_t(t)]);
    nll -= std::log(double(traces[std::size_t(t)].y[target]));
  }
  return nll / T;
}

// Forward-only corpus scorer: one lane, zero initial state, every target
// scored exactly once. `target_mask`, when given, selects which target
// positions count (index i masks the prediction of ids[i]).
struct ScoreResult {
  double mean_nll = 0.0;
  std::int64_t targets = 0;
};

template <class S>
ScoreResult score_corpus(const HornnConfig& cfg, const Parameters<S>& params,
                         std::span<const int> ids,
                         const std::vector<std::uint8_t>* target_mask = nullptr,
                         std::vector<double>* per_target_nll = nullptr) {
  if (ids.size() < 2)
    throw ContractViolation("score_corpus: need at least 2 tokens, got " +
                            std::to_string(ids.size()));
  if (target_mask && target_mask->size() != ids.size())
    throw ContractViolation("score_corpus: mask length mismatch");
  StateBuffer<S> state(cfg.order, cfg.hidden);
  StepTrace<S> trace;
  double nll_sum = 0.0;
  std::int64_t scored = 0;
  for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
    const int target = ids[i + 1];
    if (target < 0 || target >= cfg.vocab)
      throw ContractViolation("score_corpus: target id " +
                              std::to_string(target) +
                              " outside vocab of size " +
                              std::to_string(cfg.vocab));
    step(cfg, params, state, ids[i], trace);
    if (target_mask && !(*target_mask)[i + 1]) continue;
    const double nll = -std::log(double(trace.y[target]));
    nll_sum += nll;
    ++scored;
    if (per_target_nll) per_target_nll->push_back(nll);
  }
  if (scored == 0)
    throw ContractViolation("score_corpus: mask selected no targets");
  return {nll_sum / double(scored), scored};
}

}  // namespace hornn
