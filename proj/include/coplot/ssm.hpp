#pragma once

// Frequency-enhanced selective state-space scan and the causal linear
// attention recurrence it generalizes.
//
//   h_i = exp(delta_i * A) h_{i-1} + (delta_i B_i) (delta_i x_i)^T
//   y_i = (C_i + gamma * Q_i)^T h_i + D .* x_i
//
// A is diagonal with non-positive entries and shared by all channels; the
// state h is n_state x d. All accumulation is in double precision.

#include "coplot/common.hpp"

#include <stdexcept>
#include <vector>

namespace coplot {

class DegenerateNormalization : public std::runtime_error {
 public:
  explicit DegenerateNormalization(const std::string& what) : std::runtime_error(what) {}
};

struct SSMParams {
  Vector a;      // n_state, entries <= 0
  Vector delta;  // N, entries > 0
  Matrix b;      // N x n_state
  Matrix c;      // N x n_state
  Vector d;      // channels
  double gamma = 0.0;

  Eigen::Index n_state() const { return a.size(); }
  Eigen::Index length() const { return delta.size(); }
  /// Rows [begin, begin + count) of the per-token arrays.
  SSMParams slice(Eigen::Index begin, Eigen::Index count) const;
  void validate(Eigen::Index tokens, Eigen::Index channels) const;
};

struct Discretized {
  Vector a_bar;
  Vector b_bar;
};

/// Zero-order-hold transition exp(delta * A) with the first-order input
/// approximation B_bar = delta * B.
Discretized discretize(const Vector& a, double delta, const Vector& b);

/// Full recurrence. q_freq may be empty (plain selective scan) or N x n_state.
Matrix fssm_scan(const Matrix& x, const SSMParams& params, const Matrix& q_freq = {});

struct LinearAttention {
  Matrix numerator;     // N x d: Q_i S_i
  Vector denominator;   // N: Q_i Z_i
  Matrix output;        // numerator / denominator
};

/// Running-sum form; throws DegenerateNormalization when |Q_i Z_i| < 1e-12.
LinearAttention causal_linear_attention(const Matrix& q, const Matrix& k, const Matrix& v);
/// Unnormalized numerator only; never throws on small denominators.
Matrix causal_linear_attention_numerator(const Matrix& q, const Matrix& k, const Matrix& v);

struct DualScopeOutput {
  Matrix global;  // whole-sequence scan
  Matrix local;   // independent scans over consecutive windows
  Matrix y;       // standardize(global + local)
};

DualScopeOutput dual_scope_scan(const Matrix& x, const SSMParams& global_params,
                                const SSMParams& local_params, const Matrix& q_freq,
                                Eigen::Index window = 128);

/// Token-conditioned parameter generator (the selection mechanism).
struct SelectiveWeights {
  Linear delta;  // d -> 1, followed by softplus
  Linear b;      // d -> n_state
  Linear c;      // d -> n_state
  Vector a_log;  // A = -exp(a_log)
  Vector d_skip;
  double gamma = 0.0;
};

SSMParams make_params(const Matrix& x, const SelectiveWeights& weights);

}  // namespace coplot
