// Test-only oracle: a first-order sigmoid recurrent language model written
// with plain loops and flat arrays, kept deliberately independent of the
// library's numerics so it can arbitrate the order-1 reduction.
#pragma once

#include <cmath>
#include <vector>

namespace refrnn {

struct Model {
  int d = 0;
  int V = 0;
  std::vector<double> w_in;   // d x V, row-major
  std::vector<double> w_h;    // d x d, row-major
  std::vector<double> w_out;  // V x d, row-major
};

struct Grads {
  std::vector<double> w_in, w_h, w_out;
};

struct Result {
  double mean_nll = 0.0;
  Grads grads;
  std::vector<std::vector<double>> hidden;  // h_t per step
};

// Forward + truncated BPTT over one window with mean NLL loss. `h0` is the
// carried-in state; it receives no gradient.
inline Result run(const Model& m, const std::vector<int>& inputs,
                  const std::vector<int>& targets,
                  const std::vector<double>& h0) {
  const int T = int(inputs.size());
  const int d = m.d, V = m.V;
  const auto Tn = static_cast<size_t>(T);
  const auto dn = static_cast<size_t>(d);
  const auto Vn = static_cast<size_t>(V);
  Result res;
  res.grads.w_in.assign(m.w_in.size(), 0.0);
  res.grads.w_h.assign(m.w_h.size(), 0.0);
  res.grads.w_out.assign(m.w_out.size(), 0.0);

  std::vector<std::vector<double>> h(Tn, std::vector<double>(dn));
  std::vector<std::vector<double>> y(Tn, std::vector<double>(Vn));
  const std::vector<double>* prev = &h0;
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < d; ++i) {
      double z = m.w_in[size_t(i) * V + size_t(inputs[size_t(t)])];
      for (int j = 0; j < d; ++j)
        z += m.w_h[size_t(i) * d + size_t(j)] * (*prev)[size_t(j)];
      h[size_t(t)][size_t(i)] = 1.0 / (1.0 + std::exp(-z));
    }
    double mx = -1e300;
    std::vector<double> o(Vn);
    for (int k = 0; k < V; ++k) {
      double v = 0.0;
      for (int j = 0; j < d; ++j)
        v += m.w_out[size_t(k) * d + size_t(j)] * h[size_t(t)][size_t(j)];
      o[size_t(k)] = v;
      mx = std::max(mx, v);
    }
    double sum = 0.0;
    for (int k = 0; k < V; ++k) sum += std::exp(o[size_t(k)] - mx);
    for (int k = 0; k < V; ++k)
      y[size_t(t)][size_t(k)] = std::exp(o[size_t(k)] - mx) / sum;
    res.mean_nll -= std::log(y[size_t(t)][size_t(targets[size_t(t)])]);
    prev = &h[size_t(t)];
  }
  res.mean_nll /= T;

  std::vector<std::vector<double>> dh(Tn, std::vector<double>(dn, 0.0));
  for (int t = T - 1; t >= 0; --t) {
    std::vector<double> dout(y[size_t(t)]);
    dout[size_t(targets[size_t(t)])] -= 1.0;
    for (double& v : dout) v /= T;
    for (int k = 0; k < V; ++k)
      for (int j = 0; j < d; ++j) {
        res.grads.w_out[size_t(k) * d + size_t(j)] +=
            dout[size_t(k)] * h[size_t(t)][size_t(j)];
        dh[size_t(t)][size_t(j)] +=
            m.w_out[size_t(k) * d + size_t(j)] * dout[size_t(k)];
      }
    const std::vector<double>& hp = t > 0 ? h[size_t(t - 1)] : h0;
    for (int i = 0; i < d; ++i) {
      const double hi = h[size_t(t)][size_t(i)];
      const double dz = dh[size_t(t)][size_t(i)] * hi * (1.0 - hi);
      res.grads.w_in[size_t(i) * V + size_t(inputs[size_t(t)])] += dz;
      for (int j = 0; j < d; ++j) {
        res.grads.w_h[size_t(i) * d + size_t(j)] += dz * hp[size_t(j)];
        if (t > 0)
          dh[size_t(t - 1)][size_t(j)] +=
              m.w_h[size_t(i) * d + size_t(j)] * dz;
      }
    }
  }
  res.hidden = std::move(h);
  return res;
}

}  // namespace refrnn
