#pragma once

// End-to-end collaborative run: tokenize, embed, encode, filter, transmit,
// aggregate, align and fuse, with per-run accounting.

#include "coplot/comms.hpp"
#include "coplot/flops.hpp"
#include "coplot/fusion.hpp"
#include "coplot/scene.hpp"

#include <array>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace coplot {

struct AgentReport {
  std::uint32_t agent_id = 0;
  std::uint64_t points = 0;
  std::uint64_t tokens = 0;
  std::uint64_t foreground = 0;
  std::uint64_t selected = 0;
  std::uint64_t retained_foreground = 0;
  std::uint64_t token_bytes = 0;
  std::uint64_t payload_bytes = 0;
  std::uint64_t total_bytes = 0;

  bool operator==(const AgentReport&) const = default;
};

struct AlignmentReport {
  std::uint32_t agent_id = 0;
  std::uint64_t tokens = 0;
  std::array<double, 3> mean{};
  std::array<double, 3> stddev{};

  bool operator==(const AlignmentReport&) const = default;
};

struct RunReport {
  std::uint64_t seed = 0;
  std::string ordering;
  std::string score_mode;
  std::uint64_t top_k = 0;
  double noise_pos_std = 0.0;
  double noise_rot_std = 0.0;

  std::vector<AgentReport> agents;
  std::uint64_t fused_tokens = 0;
  std::uint64_t neighbor_tokens = 0;
  std::uint64_t neighbor_payload_bytes = 0;
  std::uint64_t neighbor_total_bytes = 0;
  double neighbor_log2_bytes = 0.0;

  FlopBreakdown flops;
  std::uint64_t flops_total = 0;
  std::uint64_t flops_fusion = 0;

  /// Share of ground-truth foreground tokens still present after filtering and fusion.
  double fg_recall = 0.0;
  /// Share of retained neighbor foreground tokens whose aligned coordinate
  /// falls in a true box grown by one grid interval.
  double aligned_fg_hit_rate = 0.0;
  double offset_loss = 0.0;
  double mean_gt_offset = 0.0;
  std::vector<AlignmentReport> alignment;

  /// Mean sequence gap to spatial nearest neighbours, per ordering (ego tokens).
  std::map<std::string, double> locality;
  /// Filled only when timings are requested.
  std::map<std::string, double> wall_seconds;
  std::vector<std::string> warnings;

  bool operator==(const RunReport&) const = default;
};

/// Encoded tokens of one agent, kept so sweeps can re-run filtering and fusion.
struct EncodedAgent {
  std::uint32_t agent_id = 0;
  std::uint64_t points = 0;
  TokenSequence tokens;
  EncodeOutput encoded;
  std::vector<Vec3> coords;
  std::vector<std::uint8_t> labels;
  std::vector<double> filter_scores;
  FlopBreakdown flops;
  double seconds = 0.0;
};

struct PreparedRun {
  ScenarioConfig config;
  Scene scene;
  ModelWeights weights;
  std::vector<EncodedAgent> agents;
};

/// Scene generation, model initialization and per-agent encoding.
PreparedRun prepare_run(const ScenarioConfig& config);

/// Filtering, transmission, aggregation, alignment and fusion at one top-k
/// and noise setting on an already encoded run.
RunReport finish_run(const PreparedRun& prepared, std::size_t top_k, const NoiseSpec& noise);

RunReport run_pipeline(const ScenarioConfig& config);

/// One report per k, computed concurrently on config.threads workers.
std::vector<RunReport> sweep_k(const ScenarioConfig& config, std::span<const std::size_t> ks);

struct NoisePoint {
  double pos_std = 0.0;
  double rot_std = 0.0;
};

std::vector<RunReport> sweep_noise(const ScenarioConfig& config,
                                   std::span<const NoisePoint> points);

struct OrderingBenchRow {
  std::string ordering;
  double locality = 0.0;
  std::uint64_t tokens = 0;
};

/// Locality of every ordering on the ego agent's tokens.
std::vector<OrderingBenchRow> ordering_bench(const ScenarioConfig& config, int k_nearest = 8);

struct ScanBenchRow {
  std::uint64_t tokens = 0;
  std::uint64_t flops = 0;
  double seconds = 0.0;
};

/// Fastest-of-repeats wall time of a single selective scan per sequence length.
std::vector<ScanBenchRow> scan_bench(std::span<const std::size_t> lengths, int d, int n_state,
                                     int repeats, std::uint64_t seed);

/// Analytic FLOPs of one stage (context, frequency features and blocks) on
/// `tokens` tokens with `cells` distinct coarse cells.
FlopBreakdown stage_flops(const std::string& prefix, std::uint64_t tokens, std::uint64_t cells,
                          const EncoderConfig& config, const BevGrid& grid);

/// Default BEV grid covering the tokenizer range.
BevGrid scene_grid(const TokenizerConfig& tokenizer);

/// Runs fn(i) for i in [0, n) on up to `threads` workers; the first exception
/// is rethrown after all workers finish.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace coplot
