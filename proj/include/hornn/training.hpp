#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "hornn/model.hpp"

namespace hornn {

template <class S>
using Gradients = ParamSet<S>;

template <class S>
struct OptState {
  double lr = 0.5;
  double momentum_coef = 0.9;
  double weight_decay = 1e-5;
  double column_norm_cap = 1.0;  // <= 0 disables column normalization
  int epoch = 0;                 // epochs completed
  double best_valid_nll = std::numeric_limits<double>::infinity();
  ParamSet<S> momentum;
};

struct BackwardOptions {
  // Per-step loss weights; empty means the uniform 1/T of a window-mean
  // loss. A one-hot weight vector backpropagates a single step's loss.
  std::span<const double> step_weights = {};
  // Extra factor on every weight (used to average gradients across lanes).
  double loss_scale = 1.0;
  // When set, receives one value per in-window step: the mean |gradient|
  // that flowed into that hidden state from later timesteps.
  std::vector<double>* state_grad_meanabs = nullptr;
};

// Truncated BPTT over one window. Gradients of the weighted sum of per-step
// NLLs are accumulated into `g`. `carried_in` holds the N states preceding
// the window (newest first); they enter the weight gradients as inputs but
// receive no gradient themselves, which is the truncation boundary.
//
// Pooling rules: plain routes the pre-activation error to every path; max
// routes per element through the recorded selector only; fofe scales path n
// by alpha^n; gated applies the product rule through r_n (.) p_n and sends
// the sigmoid-gate error into both gate matrices and the delayed state.
template <class S>
void backward_window_into(Gradients<S>& g, const HornnConfig& cfg,
                          const Parameters<S>& params,
                          const std::vector<StepTrace<S>>& traces,
                          std::span<const int> targets,
                          const std::vector<Vector<S>>& carried_in,
                          const BackwardOptions& opts = {}) {
  const int T = int(traces.size());
  const int N = cfg.order;
  const int d = cfg.hidden;
  if (T == 0 || targets.size() != std::size_t(T))
    throw ContractViolation("backward_window: trace/window mismatch (" +
                            std::to_string(T) + " traces, " +
                            std::to_string(targets.size()) + " targets)");
  if (int(carried_in.size()) < N)
    throw ContractViolation("backward_window: need " + std::to_string(N) +
                            " carried-in states, got " +
                            std::to_string(carried_in.size()));
  if (!opts.step_weights.empty() && opts.step_weights.size() != std::size_t(T))
    throw ContractViolation("backward_window: step_weights length mismatch");
  for (const auto& tr : traces)
    if (tr.h.size() != d || tr.y.size() != cfg.vocab ||
        int(tr.path.size()) != N)
      throw ContractViolation(
          "backward_window: trace shape does not match config");

  const bool gated = cfg.pooling == Pooling::kGated;
  const std::vector<S> fofe_coef =
      cfg.pooling == Pooling::kFofe ? fofe_coefficients<S>(cfg.alpha, N)
                                    : std::vector<S>{};

  // h_{t-n} for the 0-based step tt; falls back to carried-in states.
  auto delayed_state = [&](int tt, int n) -> const Vector<S>& {
    const int idx = tt - n;
    return idx >= 0 ? traces[std::size_t(idx)].h
                    : carried_in[std::size_t(n - tt - 1)];
  };

  if (opts.state_grad_meanabs)
    opts.state_grad_meanabs->assign(std::size_t(T), 0.0);

  std::vector<Vector<S>> dh(std::size_t(T), Vector<S>::Zero(d));
  Vector<S> dout(cfg.vocab), dz(d), dp(d), dgate(d), into_state(d);

  for (int tt = T - 1; tt >= 0; --tt) {
    const StepTrace<S>& tr = traces[std::size_t(tt)];
    const int target = targets[std::size_t(tt)];
    if (target < 0 || target >= cfg.vocab)
      throw ContractViolation("backward_window: target id out of range");
    const double w =
        opts.loss_scale * (opts.step_weights.empty()
                               ? 1.0 / T
                               : opts.step_weights[std::size_t(tt)]);

    if (opts.state_grad_meanabs)
      (*opts.state_grad_meanabs)[std::size_t(tt)] =
          double(dh[std::size_t(tt)].template lpNorm<1>()) / d;

    // Softmax cross-entropy at the output layer.
    dout = tr.y;
    dout[target] -= S(1);
    dout *= S(w);
    g.w_out.noalias() += dout * tr.h.transpose();
    if (cfg.bias) g.b_out.col(0) += dout;
    dh[std::size_t(tt)].noalias() += params.w_out.transpose() * dout;

    dz = dh[std::size_t(tt)].cwiseProduct(
        activation_grad<S>(cfg.activation, tr.z, tr.h));
    g.w_in.col(tr.input_id) += dz;
    if (cfg.bias) g.b_h.col(0) += dz;

    for (int n = 1; n <= N; ++n) {
      const std::size_t ni = std::size_t(n - 1);
      switch (cfg.pooling) {
        case Pooling::kPlain:
          dp = dz;
          break;
        case Pooling::kFofe:
          dp = fofe_coef[ni] * dz;
          break;
        case Pooling::kMax:
          dp.setZero();
          for (int i = 0; i < d; ++i)
            if (tr.max_sel[i] == n) dp[i] = dz[i];
          break;
        case Pooling::kGated:
          dp = tr.gate[ni].cwiseProduct(dz);
          break;
      }
      const Vector<S>& hprev = delayed_state(tt, n);
      g.w_h[ni].noalias() += dp * hprev.transpose();
      into_state.noalias() = params.w_h[ni].transpose() * dp;
      if (gated) {
        const Vector<S>& r = tr.gate[ni];
        dgate = tr.path[ni].cwiseProduct(dz).cwiseProduct(r).cwiseProduct(
            (S(1) - r.array()).matrix());
        g.gate_w1[ni].col(tr.input_id) += dgate;
        g.gate_w2[ni].noalias() += dgate * hprev.transpose();
        into_state.noalias() += params.gate_w2[ni].transpose() * dgate;
      }
      const int idx = tt - n;
      if (idx >= 0) dh[std::size_t(idx)] += into_state;
    }
  }
}

template <class S>
Gradients<S> backward_window(const HornnConfig& cfg,
                             const Parameters<S>& params,
                             const std::vector<StepTrace<S>>& traces,
                             std::span<const int> targets,
                             const std::vector<Vector<S>>& carried_in,
                             const BackwardOptions& opts = {}) {
  Gradients<S> g = param_shapes<S>(cfg);
  backward_window_into(g, cfg, params, traces, targets, carried_in, opts);
  return g;
}

// Elementwise clamp into [-limit, +limit].
template <class S>
Gradients<S> clip_gradients(Gradients<S> g, double limit) {
  if (limit <= 0.0)
    throw ContractViolation("clip_gradients: limit must be > 0");
  g.for_each([&](const std::string&, Matrix<S>& m) {
    m = m.cwiseMax(S(-limit)).cwiseMin(S(limit));
  });
  return g;
}

// buffer <- momentum*buffer + g + weight_decay*param; param <- param -
// lr*buffer. Afterwards, columns of w_in and each w_hn whose L2 norm
// exceeds the cap are rescaled to the cap.
template <class S>
void sgd_update(Parameters<S>& params, const Gradients<S>& g,
                OptState<S>& opt) {
  auto update = [&](Matrix<S>& p, const Matrix<S>& gm, Matrix<S>& buf) {
    buf = S(opt.momentum_coef) * buf + gm + S(opt.weight_decay) * p;
    p.noalias() -= S(opt.lr) * buf;
  };
  update(params.w_in, g.w_in, opt.momentum.w_in);
  for (std::size_t n = 0; n < params.w_h.size(); ++n)
    update(params.w_h[n], g.w_h[n], opt.momentum.w_h[n]);
  update(params.w_out, g.w_out, opt.momentum.w_out);
  for (std::size_t n = 0; n < params.gate_w1.size(); ++n) {
    update(params.gate_w1[n], g.gate_w1[n], opt.momentum.gate_w1[n]);
    update(params.gate_w2[n], g.gate_w2[n], opt.momentum.gate_w2[n]);
  }
  if (params.b_h.size() > 0) update(params.b_h, g.b_h, opt.momentum.b_h);
  if (params.b_out.size() > 0)
    update(params.b_out, g.b_out, opt.momentum.b_out);

  if (opt.column_norm_cap > 0.0) {
    const S cap = S(opt.column_norm_cap);
    auto normalize_columns = [&](Matrix<S>& m) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const S nrm = m.col(j).norm();
        if (nrm > cap) m.col(j) *= cap / nrm;
      }
    };
    normalize_columns(params.w_in);
    for (auto& wh : params.w_h) normalize_columns(wh);
  }
}

// End-of-epoch learning-rate rule. Call with opt.epoch already set to the
// epoch that just finished (1-based).
//   validation_halving: halve iff valid_nll did not improve on the best.
//   text8: fixed for the first five epochs, then halved unconditionally
//   (valid_nll is ignored and may be NaN).
// Returns true when the rate was halved.
template <class S>
bool end_of_epoch_schedule(OptState<S>& opt, double valid_nll,
                           Schedule schedule) {
  bool halve = false;
  if (schedule == Schedule::kText8) {
    halve = opt.epoch >= 6;
  } else {
    if (!std::isfinite(valid_nll))
      throw ContractViolation(
          "end_of_epoch_schedule: validation loss must be finite");
    halve = valid_nll >= opt.best_valid_nll;
    opt.best_valid_nll = std::min(opt.best_valid_nll, valid_nll);
  }
  if (halve) opt.lr /= 2.0;
  return halve;
}

}  // namespace hornn
