#pragma once

// 3D-to-1D token ordering: space-filling-curve keys, seeded baselines and the
// semantic-aware reordering (group assignment, scene prompt, group prompts and
// importance modulation).

#include "coplot/common.hpp"
#include "coplot/scene_context.hpp"
#include "coplot/tokenizer.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace coplot {

using Permutation = std::vector<std::size_t>;

struct GridDims {
  std::uint64_t width = 0;   // x
  std::uint64_t height = 0;  // y
  std::uint64_t depth = 0;   // z
};

/// Shifts signed cells into a non-negative frame covering the tokenizer range.
struct GridFrame {
  Cell3 origin{};
  GridDims dims;

  static GridFrame from_config(const TokenizerConfig& config);
  /// Cells outside the frame are clamped to its border.
  std::array<std::uint64_t, 3> local(const Cell3& cell) const;
};

std::uint64_t raster_key(const std::array<std::uint64_t, 3>& cell, const GridDims& dims);
/// x bits at even positions, y bits at odd positions. Coordinates < 2^31.
std::uint64_t zorder_key(std::uint64_t x, std::uint64_t y);
/// x at bit 3k, y at 3k+1, z at 3k+2. Coordinates < 2^21.
std::uint64_t zorder_key(std::uint64_t x, std::uint64_t y, std::uint64_t z);
/// Index along the order-b Hilbert curve over the 2^b x 2^b grid.
std::uint64_t hilbert_key(std::uint64_t x, std::uint64_t y, unsigned order);
/// Inverse of hilbert_key.
std::array<std::uint64_t, 2> hilbert_cell(std::uint64_t key, unsigned order);

/// Offset applied to signed xy cells before 2D curve keys, keeping them non-negative.
inline constexpr std::int64_t kSignedCellBias = std::int64_t{1} << 30;

struct GroupAssignment {
  std::vector<int> group_index;
  Matrix probs;  // l x d_g
  int num_groups() const { return static_cast<int>(probs.cols()); }
};

struct GroupWeights {
  Linear project;  // d -> d_g
  Linear logits;   // d_g -> d_g
  Matrix prompts;  // d_g x d
};

struct ScenePromptWeights {
  ConvStack refine;
  Linear specific;  // d_sc -> r, applied per pooled position
  Matrix shared;    // r x d (scene-shared factor)
  int pooled_rows = 8;
  int pooled_cols = 8;
};

struct ScenePrompt {
  Matrix specific;  // d_sp x r
  Vector prompt;    // d
};

/// Column mean of specific * shared.
Vector prompt_from_factors(const Matrix& specific, const Matrix& shared);

/// Adaptive average pooling to rows x cols positions, flattened row-major into
/// a (rows * cols) x channels matrix.
Matrix adaptive_average_pool(const FeatureMap2D& map, int rows, int cols);

ScenePrompt scene_dynamic_prompt(const FeatureMap2D& scene, const ScenePromptWeights& weights);

/// Softmax over two stacked linear maps; argmax ties go to the lower index.
GroupAssignment assign_groups(const Matrix& features, const GroupWeights& weights);

/// Stable sort by (group, xy Z-order key, z cell).
Permutation semantic_reorder(std::span<const Cell3> cells, const GroupAssignment& groups);

Matrix apply_group_prompts(const Matrix& features, std::span<const int> groups,
                           const Matrix& prompts);

struct ImportanceOutput {
  std::vector<double> scores;
  Matrix modulated;
};

/// scores = sigmoid(linear(token)); each token is scaled by its score.
ImportanceOutput importance_head(const Matrix& features, const Linear& weights);

enum class Ordering { kRaster, kZOrder, kHilbert, kRandom, kSemantic };

Ordering parse_ordering(const std::string& name);
std::string to_string(Ordering ordering);

/// Fixed-curve orderings; kSemantic requires a group assignment.
Permutation ordering_permutation(Ordering ordering, std::span<const Cell3> cells,
                                 const GridFrame& frame, std::uint64_t seed,
                                 const GroupAssignment* groups = nullptr);

Permutation invert(const Permutation& perm);
bool is_permutation(const Permutation& perm, std::size_t n);
Matrix gather_rows(const Matrix& m, const Permutation& perm);

/// Mean over tokens of the sequence-position gap to their k nearest spatial
/// neighbours (xy Euclidean, ties by index).
double locality_gap(std::span<const Cell3> cells, const Permutation& perm, int k_nearest);

}  // namespace coplot
