#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>

#include "hornn/common.hpp"

namespace hornn {

template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

// Portable PRNG: xorshift64* (Vigna). One 64-bit word of state, update
//   x ^= x >> 12;  x ^= x << 25;  x ^= x >> 27;  output x * 0x2545F4914F6CDD1D
// Gaussians come from the Marsaglia polar method, which needs only sqrt and
// log from libm. Substreams are derived with splitmix64 so every weight
// matrix gets its own independent stream from one master seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed)
      : state_(seed != 0 ? seed : 0x9E3779B97F4A7C15ull) {}

  std::uint64_t next_u64() {
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1Dull;
  }

  // Uniform in [0, 1), 53 significant bits.
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * next_double() - 1.0;
      v = 2.0 * next_double() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  std::uint64_t raw_state() const { return state_; }
  void set_raw_state(std::uint64_t s) {
    state_ = s;
    has_spare_ = false;
  }

  // k-th substream seed derived from `master` via splitmix64.
  static std::uint64_t derive_stream(std::uint64_t master, std::uint64_t k) {
    std::uint64_t s = master;
    std::uint64_t out = 0;
    for (std::uint64_t i = 0; i <= k; ++i) {
      s += 0x9E3779B97F4A7C15ull;
      std::uint64_t z = s;
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
      out = z ^ (z >> 31);
    }
    return out;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

template <class S>
Vector<S> matvec(const Matrix<S>& m, const Vector<S>& v) {
  if (m.cols() != v.size()) {
    throw ContractViolation("matvec: matrix is " + std::to_string(m.rows()) +
                            "x" + std::to_string(m.cols()) +
                            " but vector has length " +
                            std::to_string(v.size()));
  }
  return m * v;
}

// Column lookup; equals matvec(m, e_index) for a one-hot e_index.
template <class S>
Vector<S> matvec_onehot(const Matrix<S>& m, int index) {
  if (index < 0 || index >= m.cols()) {
    throw ContractViolation("matvec_onehot: index " + std::to_string(index) +
                            " out of range for " + std::to_string(m.rows()) +
                            "x" + std::to_string(m.cols()) + " matrix");
  }
  return m.col(index);
}

// Scalar std::exp, not Eigen's packet exp: the vectorized version clamps
// large negative arguments instead of underflowing to zero, which would
// leave subnormal residue in saturated softmax outputs.
template <class S>
Vector<S> activation(Activation kind, const Vector<S>& z) {
  switch (kind) {
    case Activation::kSigmoid:
      return z.unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-v)); });
    case Activation::kRelu:
      return z.cwiseMax(S(0));
    case Activation::kTanh:
      return z.array().tanh().matrix();
  }
  throw ContractViolation("activation: bad kind");
}

// Derivative at z, given f_of_z == activation(kind, z).
template <class S>
Vector<S> activation_grad(Activation kind, const Vector<S>& z,
                          const Vector<S>& f_of_z) {
  switch (kind) {
    case Activation::kSigmoid:
      return (f_of_z.array() * (S(1) - f_of_z.array())).matrix();
    case Activation::kRelu:
      return (z.array() > S(0)).template cast<S>().matrix();
    case Activation::kTanh:
      return (S(1) - f_of_z.array().square()).matrix();
  }
  throw ContractViolation("activation_grad: bad kind");
}

template <class S>
Vector<S> softmax(const Vector<S>& z) {
  const S zmax = z.maxCoeff();
  Vector<S> y = z.unaryExpr([zmax](S v) { return std::exp(v - zmax); });
  y /= y.sum();
  return y;
}

// I.i.d. N(0, std^2) fill, row-major traversal order.
template <class S>
Matrix<S> gaussian_init(Rng& rng, int rows, int cols, double std) {
  if (std <= 0.0) throw ContractViolation("gaussian_init: std must be > 0");
  Matrix<S> m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = S(std * rng.next_gaussian());
  return m;
}

}  // namespace hornn
