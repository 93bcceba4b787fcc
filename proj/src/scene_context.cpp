#include "coplot/scene_context.hpp"

#include "coplot/bytes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace coplot {

BevGrid BevGrid::from_range(const Vec3& range_min, const Vec3& range_max, double cell_size) {
  BevGrid g;
  g.cell_size = cell_size;
  g.x_min = range_min.x();
  g.y_min = range_min.y();
  g.width = static_cast<int>(std::ceil((range_max.x() - range_min.x()) / cell_size - 1e-9));
  g.height = static_cast<int>(std::ceil((range_max.y() - range_min.y()) / cell_size - 1e-9));
  g.validate();
  return g;
}

void BevGrid::validate() const {
  if (!(cell_size > 0.0)) throw InvalidInput("bev grid: cell size must be positive");
  if (height <= 0 || width <= 0) throw InvalidInput("bev grid: empty grid");
}

bool BevGrid::locate(const Vec3& p, int& row, int& col) const {
  const double c = std::floor((p.x() - x_min) / cell_size);
  const double r = std::floor((p.y() - y_min) / cell_size);
  if (!(c >= 0.0 && c < width && r >= 0.0 && r < height)) return false;
  row = static_cast<int>(r);
  col = static_cast<int>(c);
  return true;
}

bool FeatureMap2D::pixel_is_zero(int y, int x) const {
  const double* p = pixel(y, x);
  for (int c = 0; c < channels_; ++c) {
    if (p[c] != 0.0) return false;
  }
  return true;
}

void FeatureMap2D::dump(const std::string& path) const {
  std::vector<std::uint8_t> out;
  out.reserve(data_.size() * 8);
  for (int c = 0; c < channels_; ++c)
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x) bytes::put<double>(out, at(c, y, x));
  bytes::write_file(path, out);
}

FeatureMap2D Conv3x3::apply(const FeatureMap2D& input) const {
  if (input.channels() != in_channels) {
    throw InvalidInput("conv3x3: input has " + std::to_string(input.channels()) +
                       " channels, kernel expects " + std::to_string(in_channels));
  }
  if (weight.size() != static_cast<std::size_t>(in_channels) * out_channels * 9 ||
      bias.size() != out_channels || stride_y < 1 || stride_x < 1) {
    throw InvalidInput("conv3x3: malformed kernel");
  }
  const int out_h = (input.height() + stride_y - 1) / stride_y;
  const int out_w = (input.width() + stride_x - 1) / stride_x;
  FeatureMap2D out(out_channels, out_h, out_w);

  using TapMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  std::array<TapMatrix, 9> taps;
  for (int ky = 0; ky < 3; ++ky)
    for (int kx = 0; kx < 3; ++kx) {
      auto& t = taps[ky * 3 + kx];
      t.resize(out_channels, in_channels);
      for (int o = 0; o < out_channels; ++o)
        for (int i = 0; i < in_channels; ++i) t(o, i) = w(o, i, ky, kx);
    }

  // All-zero input pixels contribute nothing; skipping them keeps sparse BEV
  // maps cheap and leaves the result unchanged.
  std::vector<char> nonzero(input.pixels());
  for (int y = 0; y < input.height(); ++y)
    for (int x = 0; x < input.width(); ++x)
      nonzero[static_cast<std::size_t>(y) * input.width() + x] = !input.pixel_is_zero(y, x);

  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      Eigen::Map<Eigen::VectorXd> acc(out.pixel(oy, ox), out_channels);
      acc = bias;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * stride_y + ky - 1;
        if (iy < 0 || iy >= input.height()) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * stride_x + kx - 1;
          if (ix < 0 || ix >= input.width()) continue;
          if (!nonzero[static_cast<std::size_t>(iy) * input.width() + ix]) continue;
          Eigen::Map<const Eigen::VectorXd> in(input.pixel(iy, ix), in_channels);
          acc.noalias() += taps[ky * 3 + kx] * in;
        }
      }
    }
  }
  return out;
}

BevProjection project_to_bev(const Matrix& features, std::span<const Vec3> coords,
                             const BevGrid& grid) {
  grid.validate();
  if (static_cast<std::size_t>(features.rows()) != coords.size()) {
    throw InvalidInput("project_to_bev: feature rows do not match coordinate count");
  }
  const int c = static_cast<int>(features.cols());
  BevProjection result{FeatureMap2D(2 * c, grid.height, grid.width), 0};
  std::vector<int> counts(result.map.pixels(), 0);
  for (std::size_t t = 0; t < coords.size(); ++t) {
    int row = 0, col = 0;
    if (!grid.locate(coords[t], row, col)) {
      ++result.dropped;
      continue;
    }
    double* px = result.map.pixel(row, col);
    int& n = counts[static_cast<std::size_t>(row) * grid.width + col];
    for (int ch = 0; ch < c; ++ch) {
      const double v = features(static_cast<Eigen::Index>(t), ch);
      px[ch] += v;
      px[c + ch] = n == 0 ? v : std::max(px[c + ch], v);
    }
    ++n;
  }
  for (int y = 0; y < grid.height; ++y)
    for (int x = 0; x < grid.width; ++x) {
      const int n = counts[static_cast<std::size_t>(y) * grid.width + x];
      if (n > 1) {
        double* px = result.map.pixel(y, x);
        for (int ch = 0; ch < c; ++ch) px[ch] /= n;
      }
    }
  return result;
}

BevProjection project_to_bev(const TokenSequence& tokens, const BevGrid& grid) {
  const auto coords = tokens.coords();
  return project_to_bev(tokens.features, coords, grid);
}

FeatureMap2D conv_refine(const FeatureMap2D& map, const ConvStack& weights) {
  if (weights.first.stride_y != 1 || weights.first.stride_x != 1 ||
      weights.second.stride_y != 1 || weights.second.stride_x != 1) {
    throw InvalidInput("conv_refine: refinement convolutions must have stride 1");
  }
  if (weights.first.out_channels != weights.second.in_channels) {
    throw InvalidInput("conv_refine: inconsistent channel counts between layers");
  }
  FeatureMap2D hidden = weights.first.apply(map);
  if (weights.rectify) {
    for (auto& v : hidden.raw()) v = std::max(v, 0.0);
  }
  return weights.second.apply(hidden);
}

FeatureMap2D standardize_channels(const FeatureMap2D& map, double eps) {
  FeatureMap2D out(map.channels(), map.height(), map.width());
  const std::size_t n = map.pixels();
  if (n == 0) return out;
  const int c = map.channels();
  const auto& in = map.raw();
  for (int ch = 0; ch < c; ++ch) {
    double mean = 0.0;
    for (std::size_t p = 0; p < n; ++p) mean += in[p * c + ch];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      const double d = in[p * c + ch] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t p = 0; p < n; ++p) out.raw()[p * c + ch] = (in[p * c + ch] - mean) * inv;
  }
  return out;
}

AgentContext per_agent_context(const Matrix& features, std::span<const Vec3> coords,
                               std::span<const std::uint32_t> token_agents,
                               std::span<const std::uint32_t> agents, const BevGrid& grid) {
  if (token_agents.size() != coords.size()) {
    throw InvalidInput("per_agent_context: agent tags do not match token count");
  }
  for (auto a : token_agents) {
    if (std::find(agents.begin(), agents.end(), a) == agents.end()) {
      throw InvalidInput("per_agent_context: unknown agent_id " + std::to_string(a));
    }
  }
  AgentContext ctx;
  ctx.fused = project_to_bev(features, coords, grid).map;
  for (auto a : agents) {
    std::vector<Eigen::Index> rows;
    std::vector<Vec3> sub_coords;
    for (std::size_t t = 0; t < token_agents.size(); ++t) {
      if (token_agents[t] == a) {
        rows.push_back(static_cast<Eigen::Index>(t));
        sub_coords.push_back(coords[t]);
      }
    }
    Matrix sub(static_cast<Eigen::Index>(rows.size()), features.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      sub.row(static_cast<Eigen::Index>(r)) = features.row(rows[r]);
    }
    ctx.per_agent.emplace(a, project_to_bev(sub, sub_coords, grid).map);
  }
  return ctx;
}

FeatureMap2D extract_scene_context(const Matrix& features, std::span<const Vec3> coords,
                                   const BevGrid& grid, const SceneContextWeights& weights) {
  const Matrix reduced = weights.reduce.forward(features);
  return conv_refine(project_to_bev(reduced, coords, grid).map, weights.refine);
}

}  // namespace coplot
