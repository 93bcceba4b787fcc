#include "coplot/serialization.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace coplot {

GridFrame GridFrame::from_config(const TokenizerConfig& config) {
  config.validate();
  GridFrame f;
  f.origin = cell_of(config.range_min, config.grid_interval);
  const Cell3 last = cell_of(config.range_max, config.grid_interval);
  f.dims = {static_cast<std::uint64_t>(last[0] - f.origin[0] + 1),
            static_cast<std::uint64_t>(last[1] - f.origin[1] + 1),
            static_cast<std::uint64_t>(last[2] - f.origin[2] + 1)};
  return f;
}

std::array<std::uint64_t, 3> GridFrame::local(const Cell3& cell) const {
  std::array<std::uint64_t, 3> out{};
  for (int a = 0; a < 3; ++a) {
    const std::int64_t v = static_cast<std::int64_t>(cell[a]) - origin[a];
    const std::int64_t hi = static_cast<std::int64_t>(a == 0 ? dims.width : a == 1 ? dims.height : dims.depth) - 1;
    out[a] = static_cast<std::uint64_t>(std::clamp<std::int64_t>(v, 0, hi));
  }
  return out;
}

std::uint64_t raster_key(const std::array<std::uint64_t, 3>& cell, const GridDims& dims) {
  if (cell[0] >= dims.width || cell[1] >= dims.height || cell[2] >= dims.depth) {
    throw InvalidInput("raster_key: cell outside grid dimensions");
  }
  return (cell[2] * dims.height + cell[1]) * dims.width + cell[0];
}

namespace {

std::uint64_t spread2(std::uint64_t v) {
  v &= 0xFFFFFFFFULL;
  v = (v | (v << 16)) & 0x0000FFFF0000FFFFULL;
  v = (v | (v << 8)) & 0x00FF00FF00FF00FFULL;
  v = (v | (v << 4)) & 0x0F0F0F0F0F0F0F0FULL;
  v = (v | (v << 2)) & 0x3333333333333333ULL;
  v = (v | (v << 1)) & 0x5555555555555555ULL;
  return v;
}

std::uint64_t spread3(std::uint64_t v) {
  v &= 0x1FFFFFULL;
  v = (v | (v << 32)) & 0x1F00000000FFFFULL;
  v = (v | (v << 16)) & 0x1F0000FF0000FFULL;
  v = (v | (v << 8)) & 0x100F00F00F00F00FULL;
  v = (v | (v << 4)) & 0x10C30C30C30C30C3ULL;
  v = (v | (v << 2)) & 0x1249249249249249ULL;
  return v;
}

}  // namespace

std::uint64_t zorder_key(std::uint64_t x, std::uint64_t y) {
  constexpr std::uint64_t limit = std::uint64_t{1} << 31;
  if (x >= limit || y >= limit) throw InvalidInput("zorder_key: coordinate exceeds 31 bits");
  return spread2(x) | (spread2(y) << 1);
}

std::uint64_t zorder_key(std::uint64_t x, std::uint64_t y, std::uint64_t z) {
  constexpr std::uint64_t limit = std::uint64_t{1} << 21;
  if (x >= limit || y >= limit || z >= limit) {
    throw InvalidInput("zorder_key: coordinate exceeds 21 bits");
  }
  return spread3(x) | (spread3(y) << 1) | (spread3(z) << 2);
}

std::uint64_t hilbert_key(std::uint64_t x, std::uint64_t y, unsigned order) {
  if (order == 0 || order > 31) throw InvalidInput("hilbert_key: order must be in [1, 31]");
  const std::uint64_t n = std::uint64_t{1} << order;
  if (x >= n || y >= n) throw InvalidInput("hilbert_key: coordinate exceeds 2^order");
  std::uint64_t d = 0;
  for (std::uint64_t s = n / 2; s > 0; s /= 2) {
    const std::uint64_t rx = (x & s) > 0 ? 1 : 0;
    const std::uint64_t ry = (y & s) > 0 ? 1 : 0;
    d += s * s * ((3 * rx) ^ ry);
    // rotate the quadrant so the sub-curve has canonical orientation
    if (ry == 0) {
      if (rx == 1) {
        x = s - 1 - (x & (s - 1));
        y = s - 1 - (y & (s - 1));
      }
      std::swap(x, y);
    }
    x &= s - 1;
    y &= s - 1;
  }
  return d;
}

std::array<std::uint64_t, 2> hilbert_cell(std::uint64_t key, unsigned order) {
  if (order == 0 || order > 31) throw InvalidInput("hilbert_cell: order must be in [1, 31]");
  const std::uint64_t n = std::uint64_t{1} << order;
  if (key >= n * n) throw InvalidInput("hilbert_cell: key exceeds curve length");
  std::uint64_t x = 0, y = 0, t = key;
  for (std::uint64_t s = 1; s < n; s *= 2) {
    const std::uint64_t rx = 1 & (t / 2);
    const std::uint64_t ry = 1 & (t ^ rx);
    if (ry == 0) {
      if (rx == 1) {
        x = s - 1 - x;
        y = s - 1 - y;
      }
      std::swap(x, y);
    }
    x += s * rx;
    y += s * ry;
    t /= 4;
  }
  return {x, y};
}

Vector prompt_from_factors(const Matrix& specific, const Matrix& shared) {
  if (specific.cols() != shared.rows()) {
    throw InvalidInput("scene prompt: rank of scene-specific and scene-shared factors differ");
  }
  if (specific.rows() == 0) return Vector::Zero(shared.cols());
  const Matrix product = specific * shared;
  return product.colwise().mean().transpose();
}

Matrix adaptive_average_pool(const FeatureMap2D& map, int rows, int cols) {
  if (rows <= 0 || cols <= 0) throw InvalidInput("adaptive pool: output size must be positive");
  const int c = map.channels();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(rows) * cols, c);
  for (int i = 0; i < rows; ++i) {
    const int y0 = (i * map.height()) / rows;
    const int y1 = ((i + 1) * map.height() + rows - 1) / rows;
    for (int j = 0; j < cols; ++j) {
      const int x0 = (j * map.width()) / cols;
      const int x1 = ((j + 1) * map.width() + cols - 1) / cols;
      const Eigen::Index r = static_cast<Eigen::Index>(i) * cols + j;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
          const double* px = map.pixel(y, x);
          for (int ch = 0; ch < c; ++ch) out(r, ch) += px[ch];
        }
      const double n = static_cast<double>(y1 - y0) * (x1 - x0);
      if (n > 0) out.row(r) /= n;
    }
  }
  return out;
}

ScenePrompt scene_dynamic_prompt(const FeatureMap2D& scene, const ScenePromptWeights& weights) {
  const FeatureMap2D refined = conv_refine(scene, weights.refine);
  const Matrix pooled = adaptive_average_pool(refined, weights.pooled_rows, weights.pooled_cols);
  ScenePrompt out;
  out.specific = weights.specific.forward(pooled);
  if (weights.shared.rows() > std::min(out.specific.rows(), weights.shared.cols())) {
    throw InvalidInput("scene prompt: rank exceeds min(d_sp, d)");
  }
  out.prompt = prompt_from_factors(out.specific, weights.shared);
  return out;
}

GroupAssignment assign_groups(const Matrix& features, const GroupWeights& weights) {
  const Matrix logits = weights.logits.forward(weights.project.forward(features));
  GroupAssignment out;
  out.probs.resize(logits.rows(), logits.cols());
  out.group_index.resize(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      out.probs(r, c) = std::exp(logits(r, c) - mx);
      sum += out.probs(r, c);
    }
    out.probs.row(r) /= sum;
    int best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (out.probs(r, c) > out.probs(r, best)) best = static_cast<int>(c);
    }
    out.group_index[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

namespace {

std::uint64_t signed_zorder(const Cell3& c) {
  return zorder_key(static_cast<std::uint64_t>(c[0] + kSignedCellBias),
                    static_cast<std::uint64_t>(c[1] + kSignedCellBias));
}

template <typename Key>
Permutation sort_by_key(std::size_t n, Key key) {
  using K = decltype(key(std::size_t{0}));
  std::vector<K> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = key(i);
  Permutation perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::stable_sort(perm.begin(), perm.end(),
                   [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  return perm;
}

}  // namespace

Permutation semantic_reorder(std::span<const Cell3> cells, const GroupAssignment& groups) {
  if (groups.group_index.size() != cells.size()) {
    throw InvalidInput("semantic_reorder: group assignment does not cover all tokens");
  }
  return sort_by_key(cells.size(), [&](std::size_t i) {
    return std::tuple{groups.group_index[i], signed_zorder(cells[i]), cells[i][2]};
  });
}

Matrix apply_group_prompts(const Matrix& features, std::span<const int> groups,
                           const Matrix& prompts) {
  if (static_cast<std::size_t>(features.rows()) != groups.size()) {
    throw InvalidInput("apply_group_prompts: group count does not match tokens");
  }
  if (prompts.cols() != features.cols()) {
    throw InvalidInput("apply_group_prompts: prompt width does not match features");
  }
  Matrix out = features;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const int g = groups[static_cast<std::size_t>(r)];
    if (g < 0 || g >= prompts.rows()) throw InvalidInput("apply_group_prompts: bad group index");
    out.row(r) += prompts.row(g);
  }
  return out;
}

ImportanceOutput importance_head(const Matrix& features, const Linear& weights) {
  if (weights.out_dim() != 1) throw InvalidInput("importance_head: head must output one logit");
  const Matrix logits = weights.forward(features);
  ImportanceOutput out;
  out.scores.resize(static_cast<std::size_t>(features.rows()));
  out.modulated = features;
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    const double s = sigmoid(logits(r, 0));
    out.scores[static_cast<std::size_t>(r)] = s;
    out.modulated.row(r) *= s;
  }
  return out;
}

Ordering parse_ordering(const std::string& name) {
  if (name == "raster") return Ordering::kRaster;
  if (name == "zorder") return Ordering::kZOrder;
  if (name == "hilbert") return Ordering::kHilbert;
  if (name == "random") return Ordering::kRandom;
  if (name == "semantic") return Ordering::kSemantic;
  throw InvalidInput("unknown ordering '" + name + "'");
}

std::string to_string(Ordering ordering) {
  switch (ordering) {
    case Ordering::kRaster: return "raster";
    case Ordering::kZOrder: return "zorder";
    case Ordering::kHilbert: return "hilbert";
    case Ordering::kRandom: return "random";
    case Ordering::kSemantic: return "semantic";
  }
  return "unknown";
}

Permutation ordering_permutation(Ordering ordering, std::span<const Cell3> cells,
                                 const GridFrame& frame, std::uint64_t seed,
                                 const GroupAssignment* groups) {
  const std::size_t n = cells.size();
  switch (ordering) {
    case Ordering::kRaster:
      return sort_by_key(n, [&](std::size_t i) { return raster_key(frame.local(cells[i]), frame.dims); });
    case Ordering::kZOrder:
      return sort_by_key(n, [&](std::size_t i) {
        const auto l = frame.local(cells[i]);
        return zorder_key(l[0], l[1], l[2]);
      });
    case Ordering::kHilbert: {
      unsigned order = 1;
      while ((std::uint64_t{1} << order) < std::max(frame.dims.width, frame.dims.height)) ++order;
      return sort_by_key(n, [&](std::size_t i) {
        const auto l = frame.local(cells[i]);
        return std::pair{hilbert_key(l[0], l[1], order), l[2]};
      });
    }
    case Ordering::kRandom: {
      CounterRng rng(seed, 0x5EED0A0DULL);
      Permutation perm(n);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(perm[i - 1], perm[j]);
      }
      return perm;
    }
    case Ordering::kSemantic:
      if (groups == nullptr) throw InvalidInput("semantic ordering needs a group assignment");
      return semantic_reorder(cells, *groups);
  }
  throw InvalidInput("unknown ordering");
}

Permutation invert(const Permutation& perm) {
  Permutation inv(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) inv[perm[k]] = k;
  return inv;
}

bool is_permutation(const Permutation& perm, std::size_t n) {
  if (perm.size() != n) return false;
  std::vector<bool> seen(n, false);
  for (auto i : perm) {
    if (i >= n || seen[i]) return false;
    seen[i] = true;
  }
  return true;
}

Matrix gather_rows(const Matrix& m, const Permutation& perm) {
  Matrix out(static_cast<Eigen::Index>(perm.size()), m.cols());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(perm[k]));
  }
  return out;
}

double locality_gap(std::span<const Cell3> cells, const Permutation& perm, int k_nearest) {
  const std::size_t n = cells.size();
  if (!is_permutation(perm, n)) throw InvalidInput("locality_gap: invalid permutation");
  if (n < 2 || k_nearest <= 0) return 0.0;
  const Permutation position = invert(perm);
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(k_nearest), n - 1);
  double total = 0.0;
  std::vector<std::pair<std::int64_t, std::size_t>> dist;
  dist.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    dist.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const std::int64_t dx = cells[i][0] - cells[j][0];
      const std::int64_t dy = cells[i][1] - cells[j][1];
      dist.emplace_back(dx * dx + dy * dy, j);
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    double gap = 0.0;
    for (std::size_t m = 0; m < k; ++m) {
      const auto a = static_cast<double>(position[i]);
      const auto b = static_cast<double>(position[dist[m].second]);
      gap += std::abs(a - b);
    }
    total += gap / static_cast<double>(k);
  }
  return total / static_cast<double>(n);
}

}  // namespace coplot
