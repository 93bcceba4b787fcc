#include "coplot/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace coplot {

void EncoderConfig::validate() const {
  if (num_blocks < 0) throw InvalidInput("encoder: num_blocks must be >= 0");
  if (d <= 0 || num_groups <= 0 || n_state <= 0 || local_window <= 0 || context_width <= 0 ||
      scene_channels <= 0 || prompt_rank <= 0 || prompt_rows <= 0 || prompt_cols <= 0) {
    throw InvalidInput("encoder: dimensions must be positive");
  }
  if (prompt_rank > std::min(prompt_rows * prompt_cols, d)) {
    throw InvalidInput("encoder: prompt rank exceeds min(d_sp, d)");
  }
  freq.validate();
}

StageContext build_stage_context(const Matrix& features, std::span<const Vec3> coords,
                                 const BevGrid& grid, const TokenizerConfig& tokenizer,
                                 const StageWeights& weights, const FreqConfig& freq) {
  StageContext ctx;
  ctx.grid = grid;
  ctx.frame = GridFrame::from_config(tokenizer);
  ctx.grid_interval = tokenizer.grid_interval;
  ctx.scene = extract_scene_context(features, coords, grid, weights.context);
  ctx.coarse = downsample_scene(ctx.scene, weights.downsample, freq);
  ctx.freq = frequency_descriptors(coords, ctx.coarse, grid, freq);
  ctx.cells.reserve(coords.size());
  for (const auto& p : coords) ctx.cells.push_back(cell_of(p, tokenizer.grid_interval));
  return ctx;
}

BlockOutput sdssb_forward(const Matrix& features, const StageContext& context,
                          const BlockWeights& weights, const EncoderConfig& config) {
  const Eigen::Index len = features.rows();
  if (static_cast<std::size_t>(len) != context.cells.size() ||
      context.freq.descriptors.rows() != len) {
    throw InvalidInput("sdssb_forward: stage context was built for a different token count");
  }

  const ScenePrompt prompt = scene_dynamic_prompt(context.scene, weights.prompt);
  if (prompt.prompt.size() != features.cols()) {
    throw InvalidInput("sdssb_forward: scene prompt width differs from token width");
  }
  Matrix prompted = features;
  prompted.rowwise() += prompt.prompt.transpose();

  BlockOutput out;
  out.groups = assign_groups(prompted, weights.groups);
  out.permutation = ordering_permutation(config.ordering, context.cells, context.frame,
                                         config.ordering_seed, &out.groups);

  std::vector<int> ordered_groups(static_cast<std::size_t>(len));
  for (std::size_t k = 0; k < ordered_groups.size(); ++k) {
    ordered_groups[k] = out.groups.group_index[out.permutation[k]];
  }
  const Matrix reordered = apply_group_prompts(gather_rows(prompted, out.permutation),
                                               ordered_groups, weights.groups.prompts);
  const ImportanceOutput importance = importance_head(reordered, weights.importance);

  const Matrix q = gather_rows(q_freq(context.freq, weights.freq_projection), out.permutation);
  const Matrix& scan_in = importance.modulated;
  const DualScopeOutput scanned =
      dual_scope_scan(scan_in, make_params(scan_in, weights.global_scan),
                      make_params(scan_in, weights.local_scan), q, config.local_window);

  // Residual around the scan, then back to the original token order.
  const Matrix residual = scan_in + scanned.y;
  Matrix restored(len, features.cols());
  out.scores.resize(static_cast<std::size_t>(len));
  for (std::size_t k = 0; k < out.permutation.size(); ++k) {
    restored.row(static_cast<Eigen::Index>(out.permutation[k])) =
        residual.row(static_cast<Eigen::Index>(k));
    out.scores[out.permutation[k]] = importance.scores[k];
  }
  out.features = standardize_columns(restored);
  return out;
}

EncodeOutput run_blocks(const Matrix& features, const StageContext& context,
                        const StageWeights& weights, const EncoderConfig& config) {
  if (weights.blocks.size() != static_cast<std::size_t>(config.num_blocks)) {
    throw InvalidInput("encoder: weight set has " + std::to_string(weights.blocks.size()) +
                       " blocks, config asks for " + std::to_string(config.num_blocks));
  }
  EncodeOutput out;
  out.features = features;
  out.scores.assign(static_cast<std::size_t>(features.rows()), 0.5);
  out.dft_count = context.freq.dft_count;
  out.unique_cells = context.freq.unique_cells;
  for (const auto& block : weights.blocks) {
    BlockOutput b = sdssb_forward(out.features, context, block, config);
    out.features = std::move(b.features);
    out.scores = std::move(b.scores);
  }
  return out;
}

EncodeOutput encode(const TokenSequence& tokens, const EncoderConfig& config,
                    const StageWeights& weights, const BevGrid& grid,
                    const TokenizerConfig& tokenizer) {
  config.validate();
  if (tokens.empty()) {
    EncodeOutput out;
    out.features.resize(0, tokens.embed_dim());
    return out;
  }
  if (config.num_blocks == 0) {
    EncodeOutput out;
    out.features = tokens.features;
    out.scores.assign(tokens.size(), 0.5);
    return out;
  }
  const auto coords = tokens.coords();
  const StageContext ctx =
      build_stage_context(tokens.features, coords, grid, tokenizer, weights, config.freq);
  return run_blocks(tokens.features, ctx, weights, config);
}

bool OrientedBox::contains(const Vec3& p, double margin) const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const Vec3 d = p - center;
  const double lx = c * d.x() + s * d.y();
  const double ly = -s * d.x() + c * d.y();
  return std::abs(lx) <= 0.5 * size.x() + margin && std::abs(ly) <= 0.5 * size.y() + margin &&
         std::abs(d.z()) <= 0.5 * size.z() + margin;
}

std::vector<std::uint8_t> label_importance(std::span<const Vec3> coords,
                                           std::span<const OrientedBox> boxes, double margin) {
  for (const auto& b : boxes) {
    if (!(b.size.x() > 0.0 && b.size.y() > 0.0 && b.size.z() > 0.0)) {
      throw InvalidInput("label_importance: box with non-positive size");
    }
  }
  std::vector<std::uint8_t> labels(coords.size(), 0);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    for (const auto& b : boxes) {
      if (b.contains(coords[i], margin)) {
        labels[i] = 1;
        break;
      }
    }
  }
  return labels;
}

double focal_loss(std::span<const double> scores, std::span<const std::uint8_t> labels,
                  double alpha, double gamma) {
  if (scores.size() != labels.size()) throw InvalidInput("focal_loss: length mismatch");
  if (scores.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = std::clamp(scores[i], 1e-7, 1.0 - 1e-7);
    const bool positive = labels[i] != 0;
    const double pt = positive ? s : 1.0 - s;
    const double at = positive ? alpha : 1.0 - alpha;
    total += -at * std::pow(1.0 - pt, gamma) * std::log(pt);
  }
  return total / static_cast<double>(scores.size());
}

FilterResult importance_filter(const Matrix& features, std::span<const Vec3> coords,
                               std::span<const double> scores, std::size_t k) {
  const std::size_t n = scores.size();
  if (static_cast<std::size_t>(features.rows()) != n || coords.size() != n) {
    throw InvalidInput("importance_filter: features, coords and scores differ in length");
  }
  k = std::min(k, n);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());

  FilterResult out;
  out.indices = idx;
  out.features.resize(static_cast<Eigen::Index>(k), features.cols());
  out.coords.reserve(k);
  for (std::size_t r = 0; r < k; ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(idx[r]));
    out.coords.push_back(coords[idx[r]]);
  }
  return out;
}

}  // namespace coplot
