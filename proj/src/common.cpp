#include "coplot/common.hpp"

#include <cmath>
#include <numbers>

namespace coplot {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(splitmix64(seed) ^ splitmix64(splitmix64(stream) + 0x632BE59BD9B4E019ULL)) {}

std::uint64_t CounterRng::next_u64() {
  return splitmix64(key_ + 0x9E3779B97F4A7C15ULL * (counter_++));
}

double CounterRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Matrix Linear::forward(const Matrix& x) const {
  if (x.cols() != in_dim()) {
    throw InvalidInput("linear: input width " + std::to_string(x.cols()) +
                       " does not match weight input " + std::to_string(in_dim()));
  }
  Matrix y = x * weight.transpose();
  y.rowwise() += bias.transpose();
  return y;
}

Vector Linear::apply(const Vector& x) const {
  if (x.size() != in_dim()) {
    throw InvalidInput("linear: input length " + std::to_string(x.size()) +
                       " does not match weight input " + std::to_string(in_dim()));
  }
  return weight * x + bias;
}

Matrix standardize_columns(const Matrix& x, double eps) {
  Matrix out(x.rows(), x.cols());
  if (x.rows() == 0) return out;
  const double n = static_cast<double>(x.rows());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    double mean = 0.0;
    for (Eigen::Index r = 0; r < x.rows(); ++r) mean += x(r, c);
    mean /= n;
    double var = 0.0;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double dv = x(r, c) - mean;
      var += dv * dv;
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (Eigen::Index r = 0; r < x.rows(); ++r) out(r, c) = (x(r, c) - mean) * inv;
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

void require_finite(const Matrix& m, std::string_view what) {
  if (!m.allFinite()) throw InvalidInput(std::string(what) + ": non-finite value");
}

}  // namespace coplot

#include "coplot/bytes.hpp"

#include <fstream>
#include <iterator>

namespace coplot::bytes {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace coplot::bytes
