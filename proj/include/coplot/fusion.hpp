#pragma once

// Multi-agent aggregation into the ego frame, the neighbor-to-ego alignment
// loop (misalignment prompt, offset proposal, per-agent statistics,
// compensation) and the fused-sequence refinement.

#include "coplot/comms.hpp"
#include "coplot/encoder.hpp"
#include "coplot/geometry.hpp"

#include <map>
#include <string>
#include <vector>

namespace coplot {

struct FusedSequence {
  Matrix features;
  std::vector<Vec3> coords;
  std::vector<std::uint32_t> agent_ids;
  std::vector<std::uint32_t> agents;  // ego first, then neighbors by ascending id
  std::vector<std::size_t> counts;    // tokens contributed per entry of `agents`

  std::size_t size() const { return coords.size(); }
  std::uint32_t ego() const { return agents.front(); }
};

/// Mapped neighbor coordinates are rounded to this grid (2^-30 m). Adding an
/// offset on the 2^-20 grid to such a coordinate is then exact for |p| < 2^22 m.
inline constexpr double kCoordResolution = 1.0 / 1073741824.0;

/// Ego tokens first, then neighbors by ascending agent_id with their coords
/// mapped into the ego frame; row s of slot_embeddings is added to the tokens
/// of the s-th agent in that order.
FusedSequence aggregate(const MessagePacket& ego, std::span<const MessagePacket> neighbors,
                        std::span<const RigidTransform> transforms,
                        const Matrix& slot_embeddings);

struct MisalignmentWeights {
  ConvStack refine;  // input: [fused, ego, neighbor] channels
  Linear prompt;     // refined channels -> d
};

Vector misalignment_prompt(const FeatureMap2D& fused, const FeatureMap2D& ego,
                           const FeatureMap2D& neighbor, const MisalignmentWeights& weights);

/// Offsets are rounded to this grid (2^-20 m) so coordinate updates are exact
/// in double precision.
inline constexpr double kOffsetResolution = 1.0 / 1048576.0;
double quantize_offset(double v);

struct ProposalWeights {
  Linear hidden;  // d -> h
  Linear output;  // h -> 3
  double max_offset = 2.0;
};

/// max_offset * tanh(output(relu(hidden(F)))), one row per token.
Matrix propose_offsets(const Matrix& features, const ProposalWeights& weights);

struct OffsetStats {
  Vec3 mean = Vec3::Zero();
  Vec3 stddev = Vec3::Zero();  // population
  std::size_t count = 0;
};

struct OffsetStatistics {
  std::map<std::uint32_t, OffsetStats> per_agent;
  std::vector<std::string> warnings;
};

/// Component-wise mean and population standard deviation of each listed
/// agent's proposals; agents without tokens are skipped with a warning.
OffsetStatistics offset_statistics(const Matrix& proposals,
                                   std::span<const std::uint32_t> token_agents,
                                   std::span<const std::uint32_t> agents);

struct CompensateWeights {
  Linear map;  // [F, delta_p, mu, s] (d + 9) -> 3
  double max_offset = 2.0;
  /// When false the linear output is used directly.
  bool bounded = true;
};

/// Per-token compensation from the token, its proposal and its agent's statistics.
Matrix compensate(const Matrix& features, const Matrix& proposals, const Matrix& agent_mean,
                  const Matrix& agent_std, const CompensateWeights& weights);

/// P + (proposal + compensation), component-wise.
std::vector<Vec3> apply_offsets(std::span<const Vec3> coords, const Matrix& proposals,
                                const Matrix& compensation);

struct AgentPoses {
  std::map<std::uint32_t, Pose> poses;
  const Pose& at(std::uint32_t agent) const;
};

/// Per-token displacement between the true and noisy neighbor-to-ego mappings
/// of each token's source point; zero for ego tokens.
Matrix gt_offset(const AgentPoses& true_poses, const AgentPoses& noisy_poses,
                 std::span<const Vec3> coords, std::span<const std::uint32_t> token_agents,
                 std::uint32_t ego);

/// Mean squared error over every offset component.
double offset_loss(const Matrix& proposals, const Matrix& compensation, const Matrix& target);

struct AlignmentWeights {
  Matrix slot_embeddings;  // max agents x d
  MisalignmentWeights misalignment;
  ProposalWeights proposal;
  CompensateWeights compensate;
};

struct FusionWeights {
  AlignmentWeights alignment;
  StageWeights stage;
};

struct FuseOutput {
  Matrix features;  // H
  std::vector<Vec3> aligned_coords;
  Matrix proposals;
  Matrix compensation;
  OffsetStatistics stats;
  std::map<std::uint32_t, Vector> prompts;
  std::size_t dft_count = 0;
  std::size_t unique_cells = 0;
};

/// Alignment (prompt injection, proposals, statistics, compensation, offsets)
/// followed by the block stack on the aligned sequence.
FuseOutput fuse(const FusedSequence& fused, const FusionWeights& weights,
                const EncoderConfig& config, const BevGrid& grid,
                const TokenizerConfig& tokenizer);

}  // namespace coplot
