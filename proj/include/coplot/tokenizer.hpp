#pragma once

// Grid-sampled point tokenizer. Each occupied grid cell becomes one token whose
// raw feature vector summarizes the points that fell into the cell.

#include "coplot/common.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace coplot {

struct LidarPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;
};

struct RawPointCloud {
  std::vector<LidarPoint> points;
  Vec3 sensor_origin = Vec3::Zero();

  /// Throws InvalidInput on non-finite coordinates or intensity outside [0, 1].
  void validate() const;
};

struct TokenizerConfig {
  double grid_interval = 0.4;
  std::size_t min_points = 1;
  double density_normalizer = 32.0;
  Vec3 range_min{-140.0, -40.0, -3.0};
  Vec3 range_max{140.0, 40.0, 1.0};

  void validate() const;
  /// Half-open: min <= p < max on every axis.
  bool in_range(const Vec3& p) const;
};

/// Raw statistic channels of a token.
enum StatChannel : int {
  kMeanX = 0,
  kMeanY,
  kMeanZ,
  kDispersion,
  kDensity,
  kGridOffset,
  kIntensityMean,
  kIntensityMax,
  kIntensityStd,
  kSensorDistance,
  kReserved0,
  kReserved1,
  kNumStats
};

using Cell3 = std::array<std::int32_t, 3>;

struct PointToken {
  std::array<double, kNumStats> stats{};
  Vec3 coord = Vec3::Zero();
  Cell3 cell{};
  std::uint32_t agent_id = 0;
};

/// Ordered tokens plus the per-token metadata filled in by later stages.
struct TokenSequence {
  std::vector<PointToken> tokens;
  /// One row per token; width is the current embedding dimension.
  Matrix features;
  /// Permutation over token indices (identity until a reordering is applied).
  std::vector<std::size_t> order;
  std::vector<int> group;
  std::vector<double> importance;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  Eigen::Index embed_dim() const { return features.cols(); }

  std::vector<Vec3> coords() const;
  /// Checks that every per-token array has the token count and that order is a bijection.
  void validate() const;
};

/// Cell index of a coordinate, floor(p / interval) per axis.
Cell3 cell_of(const Vec3& p, double interval);
Vec3 cell_center(const Cell3& cell, double interval);

/// One token per cell holding at least min_points in-range points, in raster
/// order (z, then y, then x). The token coordinate is the cell center; cells cut
/// by the range boundary use the center of their in-range part. Returns an
/// empty sequence when no cell qualifies.
TokenSequence tokenize(const RawPointCloud& cloud, const TokenizerConfig& config,
                       std::uint32_t agent_id = 0);

/// Per-token affine lift of the raw statistics to model width.
TokenSequence embed(const TokenSequence& tokens, const Linear& weights);

/// Binary cloud file: "CPPC" magic, u64 point count, then count x 4 little-endian f32.
RawPointCloud read_point_cloud(const std::string& path);
void write_point_cloud(const std::string& path, const RawPointCloud& cloud);

}  // namespace coplot
