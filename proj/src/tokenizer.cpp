#include "coplot/tokenizer.hpp"

#include "coplot/bytes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace coplot {

void RawPointCloud::validate() const {
  for (const auto& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) ||
        !std::isfinite(p.intensity)) {
      throw InvalidInput("point cloud: non-finite point");
    }
    if (p.intensity < 0.0 || p.intensity > 1.0) {
      throw InvalidInput("point cloud: intensity outside [0, 1]");
    }
  }
  if (!sensor_origin.allFinite()) throw InvalidInput("point cloud: non-finite sensor origin");
}

void TokenizerConfig::validate() const {
  if (!(grid_interval > 0.0) || !std::isfinite(grid_interval)) {
    throw InvalidInput("tokenizer: grid_interval must be positive");
  }
  if (!(density_normalizer > 0.0)) {
    throw InvalidInput("tokenizer: density_normalizer must be positive");
  }
  for (int a = 0; a < 3; ++a) {
    if (!(range_min[a] < range_max[a])) throw InvalidInput("tokenizer: empty range");
  }
}

bool TokenizerConfig::in_range(const Vec3& p) const {
  for (int a = 0; a < 3; ++a) {
    if (p[a] < range_min[a] || p[a] >= range_max[a]) return false;
  }
  return true;
}

std::vector<Vec3> TokenSequence::coords() const {
  std::vector<Vec3> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.coord);
  return out;
}

void TokenSequence::validate() const {
  const auto n = tokens.size();
  if (static_cast<std::size_t>(features.rows()) != n) {
    throw InvalidInput("token sequence: feature rows do not match token count");
  }
  if (order.size() != n) throw InvalidInput("token sequence: order has wrong length");
  std::vector<bool> seen(n, false);
  for (auto i : order) {
    if (i >= n || seen[i]) throw InvalidInput("token sequence: order is not a permutation");
    seen[i] = true;
  }
  if (!group.empty() && group.size() != n) throw InvalidInput("token sequence: group length");
  if (!importance.empty() && importance.size() != n) {
    throw InvalidInput("token sequence: importance length");
  }
}

Cell3 cell_of(const Vec3& p, double interval) {
  Cell3 c{};
  for (int a = 0; a < 3; ++a) {
    const double f = std::floor(p[a] / interval);
    if (f < std::numeric_limits<std::int32_t>::min() ||
        f > std::numeric_limits<std::int32_t>::max()) {
      throw InvalidInput("cell index overflows 32 bits");
    }
    c[a] = static_cast<std::int32_t>(f);
  }
  return c;
}

Vec3 cell_center(const Cell3& cell, double interval) {
  return {(cell[0] + 0.5) * interval, (cell[1] + 0.5) * interval, (cell[2] + 0.5) * interval};
}

namespace {

bool raster_less(const Cell3& a, const Cell3& b) {
  if (a[2] != b[2]) return a[2] < b[2];
  if (a[1] != b[1]) return a[1] < b[1];
  return a[0] < b[0];
}

// Cell center, or the center of the in-range part for cells cut by the range
// boundary, so every token coordinate stays inside the configured range.
Vec3 sampling_point(const Cell3& cell, const TokenizerConfig& config) {
  Vec3 out;
  for (int a = 0; a < 3; ++a) {
    const double lo = std::max(cell[a] * config.grid_interval, config.range_min[a]);
    const double hi = std::min((cell[a] + 1.0) * config.grid_interval, config.range_max[a]);
    out[a] = 0.5 * (lo + hi);
  }
  return out;
}

double l1_mean_abs(const LidarPoint& p, const Vec3& ref) {
  return (std::abs(p.x - ref.x()) + std::abs(p.y - ref.y()) + std::abs(p.z - ref.z())) / 3.0;
}

}  // namespace

TokenSequence tokenize(const RawPointCloud& cloud, const TokenizerConfig& config,
                       std::uint32_t agent_id) {
  config.validate();
  cloud.validate();

  struct Entry {
    Cell3 cell;
    std::size_t index;
  };
  std::vector<Entry> entries;
  entries.reserve(cloud.points.size());
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const auto& p = cloud.points[i];
    const Vec3 xyz{p.x, p.y, p.z};
    if (!config.in_range(xyz)) continue;
    entries.push_back({cell_of(xyz, config.grid_interval), i});
  }
  // Ties on the cell are broken by point index only to make the summation
  // order independent of the sort implementation.
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.cell != b.cell) return raster_less(a.cell, b.cell);
    return a.index < b.index;
  });

  TokenSequence seq;
  std::vector<std::array<double, kNumStats>> rows;
  for (std::size_t begin = 0; begin < entries.size();) {
    std::size_t end = begin;
    while (end < entries.size() && entries[end].cell == entries[begin].cell) ++end;
    const std::size_t count = end - begin;
    if (count >= config.min_points) {
      PointToken tok;
      tok.cell = entries[begin].cell;
      tok.coord = sampling_point(tok.cell, config);
      tok.agent_id = agent_id;

      Vec3 mean = Vec3::Zero();
      double i_sum = 0.0;
      double i_max = -std::numeric_limits<double>::infinity();
      for (std::size_t e = begin; e < end; ++e) {
        const auto& p = cloud.points[entries[e].index];
        mean += Vec3{p.x, p.y, p.z};
        i_sum += p.intensity;
        i_max = std::max(i_max, p.intensity);
      }
      const double n = static_cast<double>(count);
      mean /= n;
      const double i_mean = i_sum / n;

      double dispersion = 0.0, offset = 0.0, i_var = 0.0;
      for (std::size_t e = begin; e < end; ++e) {
        const auto& p = cloud.points[entries[e].index];
        dispersion += l1_mean_abs(p, mean);
        offset += l1_mean_abs(p, tok.coord);
        i_var += (p.intensity - i_mean) * (p.intensity - i_mean);
      }

      auto& s = tok.stats;
      s[kMeanX] = mean.x();
      s[kMeanY] = mean.y();
      s[kMeanZ] = mean.z();
      s[kDispersion] = dispersion / n;
      s[kDensity] = std::min(n / config.density_normalizer, 1.0);
      s[kGridOffset] = offset / n;
      s[kIntensityMean] = i_mean;
      s[kIntensityMax] = i_max;
      s[kIntensityStd] = std::sqrt(i_var / n);
      s[kSensorDistance] = (tok.coord - cloud.sensor_origin).norm();
      s[kReserved0] = 0.0;
      s[kReserved1] = 0.0;
      rows.push_back(s);
      seq.tokens.push_back(tok);
    }
    begin = end;
  }

  seq.features.resize(static_cast<Eigen::Index>(rows.size()), kNumStats);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int c = 0; c < kNumStats; ++c) seq.features(static_cast<Eigen::Index>(r), c) = rows[r][c];
  }
  seq.order.resize(seq.tokens.size());
  std::iota(seq.order.begin(), seq.order.end(), std::size_t{0});
  return seq;
}

TokenSequence embed(const TokenSequence& tokens, const Linear& weights) {
  if (weights.in_dim() != tokens.embed_dim()) {
    throw InvalidInput("embed: weight input width " + std::to_string(weights.in_dim()) +
                       " does not match token width " + std::to_string(tokens.embed_dim()));
  }
  if (weights.bias.size() != weights.out_dim()) throw InvalidInput("embed: bias length");
  TokenSequence out = tokens;
  out.features = weights.forward(tokens.features);
  return out;
}

namespace {
constexpr char kCloudMagic[4] = {'C', 'P', 'P', 'C'};
}

RawPointCloud read_point_cloud(const std::string& path) {
  const auto data = bytes::read_file(path);
  const std::span<const std::uint8_t> in(data);
  if (in.size() < 12 || std::memcmp(in.data(), kCloudMagic, 4) != 0) {
    throw IoError(path + ": not a point cloud file (bad magic)");
  }
  const auto count = bytes::get<std::uint64_t>(in, 4);
  if (count > (in.size() - 12) / 16 || in.size() != 12 + count * 16) {
    throw IoError(path + ": expected " + std::to_string(12 + count * 16) + " bytes, found " +
                  std::to_string(in.size()));
  }
  RawPointCloud cloud;
  cloud.points.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t o = 12 + i * 16;
    cloud.points[i] = {bytes::get<float>(in, o), bytes::get<float>(in, o + 4),
                       bytes::get<float>(in, o + 8), bytes::get<float>(in, o + 12)};
  }
  return cloud;
}

void write_point_cloud(const std::string& path, const RawPointCloud& cloud) {
  std::vector<std::uint8_t> out(kCloudMagic, kCloudMagic + 4);
  bytes::put<std::uint64_t>(out, cloud.points.size());
  for (const auto& p : cloud.points) {
    bytes::put_f32(out, p.x);
    bytes::put_f32(out, p.y);
    bytes::put_f32(out, p.z);
    bytes::put_f32(out, p.intensity);
  }
  bytes::write_file(path, out);
}

}  // namespace coplot
