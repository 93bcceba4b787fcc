#pragma once

// Deterministic synthetic multi-agent driving scenes: oriented vehicle boxes
// surface-sampled from each agent's viewpoint plus sparse ground clutter.

#include "coplot/encoder.hpp"
#include "coplot/geometry.hpp"
#include "coplot/serialization.hpp"
#include "coplot/tokenizer.hpp"
#include "coplot/weights.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace coplot {

enum class ScoreMode { kOracle, kLearned };

ScoreMode parse_score_mode(const std::string& name);
std::string to_string(ScoreMode mode);

struct ScenarioConfig {
  std::uint32_t num_agents = 2;
  /// One pose per agent in the world frame; empty selects the built-in layout.
  std::vector<Pose> agent_poses;
  int num_vehicles = 15;
  Vec3 vehicle_size{4.5, 2.0, 1.6};
  double size_jitter = 0.05;        // relative, uniform per dimension
  double yaw_jitter = 0.05;         // radians, uniform
  double surface_density = 300.0;   // points per square metre of visible face
  double clutter_density = 0.2;     // ground points per square metre
  double ground_z = -1.8;           // ground height in the world frame
  double lane_extent = 70.0;        // vehicles are placed with |x| <= lane_extent
  TokenizerConfig tokenizer;
  ModelConfig model;
  std::size_t top_k = 1300;
  NoiseSpec noise;
  ScoreMode score_mode = ScoreMode::kOracle;
  std::uint64_t seed = 0;
  int threads = 1;
  bool timings = false;  // include wall times in reports

  void validate() const;
  /// Pose of every agent, from agent_poses or the built-in layout.
  std::vector<Pose> poses() const;
};

struct Scene {
  std::vector<RawPointCloud> clouds;  // per agent, agent-local frame
  std::vector<OrientedBox> boxes;     // world frame
  std::vector<Pose> poses;            // true poses, world frame
};

Scene generate_scene(const ScenarioConfig& config);

/// Pose with every component rounded to the nearest f32, as carried on the wire.
Pose round_to_f32(const Pose& pose);

/// Boxes expressed in the frame of an agent at `pose`.
std::vector<OrientedBox> boxes_in_frame(std::span<const OrientedBox> boxes, const Pose& pose);

/// JSON document to config; fields absent from the document keep their defaults.
ScenarioConfig load_scenario(const std::string& path);
ScenarioConfig parse_scenario(const std::string& json_text);
std::string scenario_to_json(const ScenarioConfig& config);

}  // namespace coplot
