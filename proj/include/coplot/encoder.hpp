#pragma once

// Semantic-guided dynamic state-space blocks, the stacked encoder, importance
// supervision (box labels, focal loss) and top-k token filtering.

#include "coplot/frequency.hpp"
#include "coplot/scene_context.hpp"
#include "coplot/serialization.hpp"
#include "coplot/ssm.hpp"
#include "coplot/tokenizer.hpp"

#include <cstdint>
#include <vector>

namespace coplot {

struct EncoderConfig {
  int num_blocks = 2;
  int d = 64;
  int num_groups = 48;
  int n_state = 16;
  Eigen::Index local_window = 128;
  int context_width = 8;   // token features are narrowed to this before BEV pooling
  int scene_channels = 16;
  int prompt_rank = 8;
  int prompt_rows = 8;     // pooled positions: prompt_rows * prompt_cols = d_sp
  int prompt_cols = 8;
  FreqConfig freq;
  Ordering ordering = Ordering::kSemantic;
  std::uint64_t ordering_seed = 0;

  void validate() const;
};

struct BlockWeights {
  ScenePromptWeights prompt;
  GroupWeights groups;
  Linear importance;        // d -> 1
  Linear freq_projection;   // 4 * scene_channels -> n_state
  SelectiveWeights global_scan;
  SelectiveWeights local_scan;
};

struct StageWeights {
  SceneContextWeights context;
  Conv3x3 downsample;
  std::vector<BlockWeights> blocks;
};

/// Scene context shared by every block of one stage.
struct StageContext {
  BevGrid grid;
  GridFrame frame;
  double grid_interval = 0.4;
  FeatureMap2D scene;    // F_sc
  FeatureMap2D coarse;   // X_sc
  FreqFeatures freq;
  std::vector<Cell3> cells;
};

StageContext build_stage_context(const Matrix& features, std::span<const Vec3> coords,
                                 const BevGrid& grid, const TokenizerConfig& tokenizer,
                                 const StageWeights& weights, const FreqConfig& freq);

struct BlockOutput {
  Matrix features;            // original token order
  std::vector<double> scores; // original token order
  Permutation permutation;    // position -> original index
  GroupAssignment groups;     // original token order
};

/// prompt -> groups -> reorder -> group prompts -> importance -> dual-scope
/// FSSM -> inverse permutation -> residual -> standardization.
BlockOutput sdssb_forward(const Matrix& features, const StageContext& context,
                          const BlockWeights& weights, const EncoderConfig& config);

struct EncodeOutput {
  Matrix features;
  std::vector<double> scores;
  std::size_t dft_count = 0;
  std::size_t unique_cells = 0;
};

EncodeOutput run_blocks(const Matrix& features, const StageContext& context,
                        const StageWeights& weights, const EncoderConfig& config);

/// Builds the stage context from the embedded tokens and runs every block.
EncodeOutput encode(const TokenSequence& tokens, const EncoderConfig& config,
                    const StageWeights& weights, const BevGrid& grid,
                    const TokenizerConfig& tokenizer);

struct OrientedBox {
  Vec3 center = Vec3::Zero();
  Vec3 size{4.5, 2.0, 1.6};  // length (x), width (y), height (z) in the box frame
  double yaw = 0.0;

  /// Boundary-inclusive, with the half-extents grown by margin.
  bool contains(const Vec3& p, double margin = 0.0) const;
};

/// 1 where the coordinate lies inside any box (boundary-inclusive).
std::vector<std::uint8_t> label_importance(std::span<const Vec3> coords,
                                           std::span<const OrientedBox> boxes,
                                           double margin = 0.0);

/// Mean focal term; scores are clamped to [1e-7, 1 - 1e-7].
double focal_loss(std::span<const double> scores, std::span<const std::uint8_t> labels,
                  double alpha = 0.25, double gamma = 2.0);

struct FilterResult {
  Matrix features;
  std::vector<Vec3> coords;
  std::vector<std::size_t> indices;  // strictly increasing
};

/// Top-k by score, ties toward the lower index; k is clamped to the token count.
FilterResult importance_filter(const Matrix& features, std::span<const Vec3> coords,
                               std::span<const double> scores, std::size_t k);

}  // namespace coplot
