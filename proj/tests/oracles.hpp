#pragma once

// Independent reference implementations used by the tests. Each one is the
// slow, obvious version of a library routine and shares no code with it.

#include "coplot/common.hpp"
#include "coplot/frequency.hpp"
#include "coplot/scene_context.hpp"
#include "coplot/ssm.hpp"
#include "coplot/tokenizer.hpp"

#include <array>
#include <cmath>
#include <complex>
#include <cstring>
#include <map>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

using coplot::Matrix;
using coplot::Vec3;
using coplot::Vector;

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                            double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index size, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Vector v(size);
  for (Eigen::Index i = 0; i < size; ++i) v[i] = n(rng);
  return v;
}

inline coplot::Linear random_linear(std::mt19937_64& rng, Eigen::Index in, Eigen::Index out,
                                    double scale = 0.3) {
  coplot::Linear l(in, out);
  l.weight = random_matrix(rng, out, in, scale);
  l.bias = random_vector(rng, out, scale);
  return l;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// 4x4 homogeneous pose matrix built from elementary rotations.
inline Eigen::Matrix4d pose_matrix(const Vec3& t, double yaw, double pitch, double roll) {
  Eigen::Matrix3d rz, ry, rx;
  rz << std::cos(yaw), -std::sin(yaw), 0, std::sin(yaw), std::cos(yaw), 0, 0, 0, 1;
  ry << std::cos(pitch), 0, std::sin(pitch), 0, 1, 0, -std::sin(pitch), 0, std::cos(pitch);
  rx << 1, 0, 0, 0, std::cos(roll), -std::sin(roll), 0, std::sin(roll), std::cos(roll);
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rz * ry * rx;
  m.topRightCorner<3, 1>() = t;
  return m;
}

inline Vec3 apply_h(const Eigen::Matrix4d& m, const Vec3& p) {
  const Eigen::Vector4d h = m * Eigen::Vector4d(p.x(), p.y(), p.z(), 1.0);
  return h.head<3>();
}

struct TokenStats {
  std::size_t count = 0;
  std::array<double, coplot::kNumStats> stats{};
};

// Groups points by floor(p / interval) with a std::map and recomputes every
// statistic with explicit loops.
inline std::map<std::array<long, 3>, TokenStats> brute_tokenize(const coplot::RawPointCloud& cloud,
                                                                const coplot::TokenizerConfig& cfg) {
  std::map<std::array<long, 3>, std::vector<coplot::LidarPoint>> groups;
  for (const auto& p : cloud.points) {
    const double v[3] = {p.x, p.y, p.z};
    bool inside = true;
    for (int a = 0; a < 3; ++a) {
      if (!(v[a] >= cfg.range_min[a] && v[a] < cfg.range_max[a])) inside = false;
    }
    if (!inside) continue;
    std::array<long, 3> key{};
    for (int a = 0; a < 3; ++a) key[a] = static_cast<long>(std::floor(v[a] / cfg.grid_interval));
    groups[key].push_back(p);
  }
  std::map<std::array<long, 3>, TokenStats> out;
  for (const auto& [key, pts] : groups) {
    if (pts.size() < cfg.min_points) continue;
    TokenStats t;
    t.count = pts.size();
    const double n = static_cast<double>(pts.size());
    double center[3];
    for (int a = 0; a < 3; ++a) {
      const double lo = std::max(key[a] * cfg.grid_interval, cfg.range_min[a]);
      const double hi = std::min((key[a] + 1) * cfg.grid_interval, cfg.range_max[a]);
      center[a] = (lo + hi) / 2;
    }
    double mean[3] = {0, 0, 0}, imean = 0, imax = -1;
    for (const auto& p : pts) {
      mean[0] += p.x;
      mean[1] += p.y;
      mean[2] += p.z;
      imean += p.intensity;
      imax = std::max(imax, p.intensity);
    }
    for (double& m : mean) m /= n;
    imean /= n;
    double disp = 0, offset = 0, ivar = 0;
    for (const auto& p : pts) {
      const double v[3] = {p.x, p.y, p.z};
      for (int a = 0; a < 3; ++a) {
        disp += std::abs(v[a] - mean[a]) / 3.0;
        offset += std::abs(v[a] - center[a]) / 3.0;
      }
      ivar += (p.intensity - imean) * (p.intensity - imean);
    }
    t.stats[coplot::kMeanX] = mean[0];
    t.stats[coplot::kMeanY] = mean[1];
    t.stats[coplot::kMeanZ] = mean[2];
    t.stats[coplot::kDispersion] = disp / n;
    t.stats[coplot::kDensity] = std::min(n / cfg.density_normalizer, 1.0);
    t.stats[coplot::kGridOffset] = offset / n;
    t.stats[coplot::kIntensityMean] = imean;
    t.stats[coplot::kIntensityMax] = imax;
    t.stats[coplot::kIntensityStd] = std::sqrt(ivar / n);
    const Vec3 c{center[0], center[1], center[2]};
    t.stats[coplot::kSensorDistance] = (c - cloud.sensor_origin).norm();
    out[key] = t;
  }
  return out;
}

// Direct zero-padded 3x3 convolution with explicit index arithmetic.
inline coplot::FeatureMap2D naive_conv(const coplot::FeatureMap2D& in, const coplot::Conv3x3& k) {
  const int oh = (in.height() + k.stride_y - 1) / k.stride_y;
  const int ow = (in.width() + k.stride_x - 1) / k.stride_x;
  coplot::FeatureMap2D out(k.out_channels, oh, ow);
  for (int o = 0; o < k.out_channels; ++o)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double s = k.bias[o];
        for (int i = 0; i < k.in_channels; ++i)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int iy = y * k.stride_y + dy, ix = x * k.stride_x + dx;
              if (iy < 0 || ix < 0 || iy >= in.height() || ix >= in.width()) continue;
              s += k.w(o, i, dy + 1, dx + 1) * in.at(i, iy, ix);
            }
        out.at(o, y, x) = s;
      }
  return out;
}

inline coplot::FeatureMap2D relu(coplot::FeatureMap2D m) {
  for (double& v : m.raw()) v = std::max(v, 0.0);
  return m;
}

inline coplot::FeatureMap2D standardize(const coplot::FeatureMap2D& m, double eps = 1e-5) {
  coplot::FeatureMap2D out = m;
  const double n = static_cast<double>(m.height()) * m.width();
  for (int c = 0; c < m.channels(); ++c) {
    double mean = 0;
    for (int y = 0; y < m.height(); ++y)
      for (int x = 0; x < m.width(); ++x) mean += m.at(c, y, x);
    mean /= n;
    double var = 0;
    for (int y = 0; y < m.height(); ++y)
      for (int x = 0; x < m.width(); ++x) var += (m.at(c, y, x) - mean) * (m.at(c, y, x) - mean);
    var /= n;
    for (int y = 0; y < m.height(); ++y)
      for (int x = 0; x < m.width(); ++x) out.at(c, y, x) = (m.at(c, y, x) - mean) / std::sqrt(var + eps);
  }
  return out;
}

inline Matrix standardize_cols(const Matrix& m, double eps = 1e-5) {
  Matrix out = m;
  const double n = static_cast<double>(m.rows());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    double mean = 0, var = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) mean += m(r, c);
    mean /= n;
    for (Eigen::Index r = 0; r < m.rows(); ++r) var += (m(r, c) - mean) * (m(r, c) - mean);
    var /= n;
    for (Eigen::Index r = 0; r < m.rows(); ++r) out(r, c) = (m(r, c) - mean) / std::sqrt(var + eps);
  }
  return out;
}

// Double-sum orthonormal DFT of one channel.
inline std::vector<std::complex<double>> naive_dft(const coplot::Patch& p, int c) {
  const int h = p.height, w = p.width;
  std::vector<std::complex<double>> out(static_cast<std::size_t>(h) * w);
  for (int r = 0; r < h; ++r)
    for (int s = 0; s < w; ++s) {
      std::complex<double> acc = 0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double ang = -2.0 * std::numbers::pi * (double(r) * y / h + double(s) * x / w);
          acc += p.at(c, y, x) * std::complex<double>(std::cos(ang), std::sin(ang));
        }
      out[static_cast<std::size_t>(r) * w + s] = acc / std::sqrt(double(h) * w);
    }
  return out;
}

inline int centered(int i, int n) { return i < n / 2 ? i : i - n; }

// y_i = sum_{j<=i} (C_i + g Q_i)^T diag(prod_{k=j+1..i} Abar_k) Bbar_j (delta_j x_j) + D x_i
inline Matrix quadratic_scan(const Matrix& x, const coplot::SSMParams& p, const Matrix& q) {
  const Eigen::Index n = x.rows(), d = x.cols(), ns = p.a.size();
  Matrix y = Matrix::Zero(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      for (Eigen::Index s = 0; s < ns; ++s) {
        double decay = 1.0;
        for (Eigen::Index k = j + 1; k <= i; ++k) decay *= std::exp(p.delta[k] * p.a[s]);
        const double read = p.c(i, s) + (q.size() ? p.gamma * q(i, s) : 0.0);
        const double coef = read * decay * p.delta[j] * p.b(j, s) * p.delta[j];
        for (Eigen::Index ch = 0; ch < d; ++ch) y(i, ch) += coef * x(j, ch);
      }
    }
    for (Eigen::Index ch = 0; ch < d; ++ch) y(i, ch) += p.d[ch] * x(i, ch);
  }
  return y;
}

// Masked attention with feature map phi = identity: sum_{j<=i} (q_i . k_j) v_j.
inline Matrix masked_numerator(const Matrix& q, const Matrix& k, const Matrix& v) {
  Matrix out = Matrix::Zero(q.rows(), v.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i)
    for (Eigen::Index j = 0; j <= i; ++j) out.row(i) += q.row(i).dot(k.row(j)) * v.row(j);
  return out;
}

inline Vector masked_denominator(const Matrix& q, const Matrix& k) {
  Vector out = Vector::Zero(q.rows());
  for (Eigen::Index i = 0; i < q.rows(); ++i)
    for (Eigen::Index j = 0; j <= i; ++j) out[i] += q.row(i).dot(k.row(j));
  return out;
}

inline bool in_obb(const Vec3& p, const Vec3& center, const Vec3& size, double yaw) {
  Eigen::Matrix3d r;
  r << std::cos(yaw), -std::sin(yaw), 0, std::sin(yaw), std::cos(yaw), 0, 0, 0, 1;
  const Vec3 local = r.transpose() * (p - center);
  for (int a = 0; a < 3; ++a) {
    if (std::abs(local[a]) > size[a] / 2) return false;
  }
  return true;
}

inline std::vector<std::uint64_t> float_bits(const Matrix& m) {
  std::vector<std::uint64_t> out(static_cast<std::size_t>(m.size()));
  std::memcpy(out.data(), m.data(), out.size() * sizeof(double));
  return out;
}

}  // namespace oracle
