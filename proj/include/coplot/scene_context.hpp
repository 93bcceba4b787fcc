#pragma once

// Bird's-eye-view scene context: tokens are pooled onto a 2D xy grid
// (channel-wise mean and max per cell) and refined with small 3x3 convolutions.

#include "coplot/common.hpp"
#include "coplot/tokenizer.hpp"

#include <map>
#include <vector>

namespace coplot {

struct BevGrid {
  double cell_size = 0.4;
  double x_min = -140.0;
  double y_min = -40.0;
  int height = 200;  // rows, along y
  int width = 700;   // columns, along x

  static BevGrid from_range(const Vec3& range_min, const Vec3& range_max, double cell_size);
  void validate() const;
  /// False when the coordinate lies outside the grid extents.
  bool locate(const Vec3& p, int& row, int& col) const;
};

/// Dense channels x height x width map, stored pixel-major (all channels of a
/// pixel are contiguous).
class FeatureMap2D {
 public:
  FeatureMap2D() = default;
  FeatureMap2D(int channels, int height, int width)
      : channels_(channels), height_(height), width_(width),
        data_(static_cast<std::size_t>(channels) * height * width, 0.0) {}

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }

  double& at(int c, int y, int x) { return data_[index(y, x) + c]; }
  double at(int c, int y, int x) const { return data_[index(y, x) + c]; }
  double* pixel(int y, int x) { return data_.data() + index(y, x); }
  const double* pixel(int y, int x) const { return data_.data() + index(y, x); }
  bool pixel_is_zero(int y, int x) const;

  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }
  bool same_shape(const FeatureMap2D& o) const {
    return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
  }

  /// Channel-major (c, y, x) little-endian f64 dump for debugging.
  void dump(const std::string& path) const;

 private:
  std::size_t index(int y, int x) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// 3x3 convolution with zero padding of one pixel. Output pixel (oy, ox) is
/// centered on input pixel (oy * stride_y, ox * stride_x).
struct Conv3x3 {
  int in_channels = 0;
  int out_channels = 0;
  int stride_y = 1;
  int stride_x = 1;
  /// Indexed [out][in][ky][kx].
  std::vector<double> weight;
  Vector bias;

  Conv3x3() = default;
  Conv3x3(int in, int out, int stride_ = 1)
      : in_channels(in), out_channels(out), stride_y(stride_), stride_x(stride_),
        weight(static_cast<std::size_t>(in) * out * 9, 0.0), bias(Vector::Zero(out)) {}

  double& w(int o, int i, int ky, int kx) {
    return weight[((static_cast<std::size_t>(o) * in_channels + i) * 3 + ky) * 3 + kx];
  }
  double w(int o, int i, int ky, int kx) const {
    return weight[((static_cast<std::size_t>(o) * in_channels + i) * 3 + ky) * 3 + kx];
  }

  FeatureMap2D apply(const FeatureMap2D& input) const;
};

/// Two stride-1 convolutions with an optional rectifier between them.
struct ConvStack {
  Conv3x3 first;
  Conv3x3 second;
  bool rectify = true;
};

struct BevProjection {
  FeatureMap2D map;
  std::size_t dropped = 0;
};

/// Per-cell concatenation [mean, max] of token features; empty cells are zero.
BevProjection project_to_bev(const Matrix& features, std::span<const Vec3> coords,
                             const BevGrid& grid);
BevProjection project_to_bev(const TokenSequence& tokens, const BevGrid& grid);

FeatureMap2D conv_refine(const FeatureMap2D& map, const ConvStack& weights);

/// Per-channel standardization over all spatial positions.
FeatureMap2D standardize_channels(const FeatureMap2D& map, double eps = kStandardizeEps);

struct AgentContext {
  FeatureMap2D fused;
  std::map<std::uint32_t, FeatureMap2D> per_agent;
};

/// Pooled maps of the whole multiset and of each listed agent on one grid.
AgentContext per_agent_context(const Matrix& features, std::span<const Vec3> coords,
                               std::span<const std::uint32_t> token_agents,
                               std::span<const std::uint32_t> agents, const BevGrid& grid);

struct SceneContextWeights {
  /// Narrows token features before pooling so the dense map stays small.
  Linear reduce;
  ConvStack refine;
};

/// F_sc = refine(pool(reduce(tokens))).
FeatureMap2D extract_scene_context(const Matrix& features, std::span<const Vec3> coords,
                                   const BevGrid& grid, const SceneContextWeights& weights);

}  // namespace coplot
