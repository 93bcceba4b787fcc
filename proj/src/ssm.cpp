#include "coplot/ssm.hpp"

#include <cmath>

namespace coplot {

SSMParams SSMParams::slice(Eigen::Index begin, Eigen::Index count) const {
  SSMParams out;
  out.a = a;
  out.delta = delta.segment(begin, count);
  out.b = b.middleRows(begin, count);
  out.c = c.middleRows(begin, count);
  out.d = d;
  out.gamma = gamma;
  return out;
}

void SSMParams::validate(Eigen::Index tokens, Eigen::Index channels) const {
  const Eigen::Index n = n_state();
  if (delta.size() != tokens || b.rows() != tokens || c.rows() != tokens) {
    throw InvalidInput("ssm: per-token parameter arrays must have one row per token");
  }
  if (b.cols() != n || c.cols() != n) throw InvalidInput("ssm: B and C must have n_state columns");
  if (d.size() != channels) throw InvalidInput("ssm: D must have one entry per channel");
  if ((a.array() > 0.0).any()) throw InvalidInput("ssm: A entries must be <= 0");
  if (tokens > 0 && !(delta.array() > 0.0).all()) throw InvalidInput("ssm: delta must be > 0");
  if (!(gamma >= 0.0)) throw InvalidInput("ssm: gamma must be >= 0");
}

Discretized discretize(const Vector& a, double delta, const Vector& b) {
  if (!(delta > 0.0)) throw InvalidInput("discretize: delta must be positive");
  if (a.size() != b.size()) throw InvalidInput("discretize: A and B sizes differ");
  return {(delta * a).array().exp().matrix(), delta * b};
}

Matrix fssm_scan(const Matrix& x, const SSMParams& params, const Matrix& q_freq) {
  const Eigen::Index len = x.rows();
  const Eigen::Index ch = x.cols();
  const Eigen::Index n = params.n_state();
  params.validate(len, ch);
  const bool freq = q_freq.size() > 0;
  if (freq && (q_freq.rows() != len || q_freq.cols() != n)) {
    throw InvalidInput("fssm_scan: Q^freq must be tokens x n_state");
  }

  Matrix y(len, ch);
  // h stored row-major n x d: state row s holds all channels.
  std::vector<double> h(static_cast<std::size_t>(n * ch), 0.0);
  std::vector<double> a_bar(static_cast<std::size_t>(n)), b_bar(static_cast<std::size_t>(n)),
      read(static_cast<std::size_t>(n)), gated(static_cast<std::size_t>(ch));
  for (Eigen::Index i = 0; i < len; ++i) {
    const double dt = params.delta[i];
    for (Eigen::Index s = 0; s < n; ++s) {
      a_bar[s] = std::exp(dt * params.a[s]);
      b_bar[s] = dt * params.b(i, s);
      read[s] = freq ? params.c(i, s) + params.gamma * q_freq(i, s) : params.c(i, s);
    }
    for (Eigen::Index k = 0; k < ch; ++k) gated[k] = dt * x(i, k);
    double* yi = &y(i, 0);
    for (Eigen::Index k = 0; k < ch; ++k) yi[k] = 0.0;
    for (Eigen::Index s = 0; s < n; ++s) {
      double* hs = h.data() + s * ch;
      const double decay = a_bar[s], inject = b_bar[s], r = read[s];
      for (Eigen::Index k = 0; k < ch; ++k) {
        hs[k] = decay * hs[k] + inject * gated[k];
        yi[k] += r * hs[k];
      }
    }
    for (Eigen::Index k = 0; k < ch; ++k) yi[k] += params.d[k] * x(i, k);
  }
  return y;
}

namespace {

void check_attention_shapes(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (q.rows() != k.rows() || q.rows() != v.rows()) {
    throw InvalidInput("linear attention: Q, K and V must have equal sequence lengths");
  }
  if (q.cols() != k.cols()) throw InvalidInput("linear attention: Q and K widths differ");
}

}  // namespace

Matrix causal_linear_attention_numerator(const Matrix& q, const Matrix& k, const Matrix& v) {
  check_attention_shapes(q, k, v);
  Matrix running = Matrix::Zero(k.cols(), v.cols());
  Matrix out(q.rows(), v.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    running.noalias() += k.row(i).transpose() * v.row(i);
    out.row(i).noalias() = q.row(i) * running;
  }
  return out;
}

LinearAttention causal_linear_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  check_attention_shapes(q, k, v);
  LinearAttention out;
  out.numerator = causal_linear_attention_numerator(q, k, v);
  out.denominator.resize(q.rows());
  out.output.resize(q.rows(), v.cols());
  Vector z = Vector::Zero(k.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    z += k.row(i).transpose();
    const double den = q.row(i).dot(z);
    out.denominator[i] = den;
    if (std::abs(den) < 1e-12) {
      throw DegenerateNormalization("linear attention: normalizer Q_i Z_i vanishes at token " +
                                    std::to_string(i));
    }
    out.output.row(i) = out.numerator.row(i) / den;
  }
  return out;
}

DualScopeOutput dual_scope_scan(const Matrix& x, const SSMParams& global_params,
                                const SSMParams& local_params, const Matrix& q_freq,
                                Eigen::Index window) {
  if (window <= 0) throw InvalidInput("dual_scope_scan: window must be positive");
  DualScopeOutput out;
  out.global = fssm_scan(x, global_params, q_freq);
  local_params.validate(x.rows(), x.cols());
  out.local.resize(x.rows(), x.cols());
  const bool freq = q_freq.size() > 0;
  for (Eigen::Index begin = 0; begin < x.rows(); begin += window) {
    const Eigen::Index count = std::min(window, x.rows() - begin);
    const Matrix q_slice = freq ? Matrix(q_freq.middleRows(begin, count)) : Matrix();
    out.local.middleRows(begin, count) =
        fssm_scan(x.middleRows(begin, count), local_params.slice(begin, count), q_slice);
  }
  out.y = standardize_columns(out.global + out.local);
  return out;
}

SSMParams make_params(const Matrix& x, const SelectiveWeights& weights) {
  SSMParams p;
  p.a = -weights.a_log.array().exp().matrix();
  const Matrix dt = weights.delta.forward(x);
  p.delta.resize(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    // softplus can underflow to 0 for very negative inputs; keep the step positive
    p.delta[i] = std::max(softplus(dt(i, 0)), 1e-12);
  }
  p.b = weights.b.forward(x);
  p.c = weights.c.forward(x);
  p.d = weights.d_skip;
  p.gamma = weights.gamma;
  return p;
}

}  // namespace coplot
