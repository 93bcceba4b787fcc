#pragma once

// Shared numeric types, error classes, deterministic random numbers and the
// small dense building blocks (linear layers, standardization) used by every
// stage of the pipeline.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace coplot {

/// Row i of a token matrix is token i.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;

class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Stateless counter-based generator: the n-th draw of a (seed, stream) pair
/// depends only on n, so independent consumers never perturb each other.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (both outputs are used).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);
/// FNV-1a, used to derive RNG streams from tensor names.
std::uint64_t hash_name(std::string_view name);

/// Affine map y = W x + b with W stored out x in.
struct Linear {
  Matrix weight;
  Vector bias;

  Linear() = default;
  Linear(Eigen::Index in, Eigen::Index out)
      : weight(Matrix::Zero(out, in)), bias(Vector::Zero(out)) {}

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }

  /// Applies the map to every row of x.
  Matrix forward(const Matrix& x) const;
  Vector apply(const Vector& x) const;
};

inline constexpr double kStandardizeEps = 1e-5;

/// Per-channel (column) standardization over rows: (v - mean) / sqrt(var + eps).
/// Population variance. An empty matrix is returned unchanged.
Matrix standardize_columns(const Matrix& x, double eps = kStandardizeEps);

double sigmoid(double x);
double softplus(double x);

/// Throws InvalidInput if any entry is NaN or infinite.
void require_finite(const Matrix& m, std::string_view what);

}  // namespace coplot
