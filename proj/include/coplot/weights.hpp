#pragma once

// Model parameter layout, seeded initialization and weight files.
//
// A weight file is a flat little-endian f32 blob plus a JSON manifest
// ("<path>.json") listing every tensor's name, shape and element offset.

#include "coplot/encoder.hpp"
#include "coplot/fusion.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace coplot {

struct ModelConfig {
  EncoderConfig encoder;
  int fusion_blocks = 2;
  int max_agents = 8;
  int proposal_hidden = 32;
  double max_offset = 2.0;

  void validate() const;
  /// Encoder settings with the fusion block count.
  EncoderConfig fusion_encoder() const;
};

struct ModelWeights {
  Linear embed;  // raw statistics -> d
  StageWeights encoder;
  FusionWeights fusion;
};

enum class Init {
  kZero,
  kOne,
  kFanUniform,   // U(-1/sqrt(fan_in), 1/sqrt(fan_in))
  kSmallNormal,  // N(0, 0.02^2)
  kStateDecay,   // log(1..n)
  kStepBias,     // inverse softplus of a log-uniform step in [1e-3, 1e-1]
  kGain,         // constant 0.1
};

struct TensorSlot {
  std::string name;
  std::vector<std::int64_t> shape;
  double* data = nullptr;
  std::size_t size = 0;
  Init init = Init::kZero;
  double fan_in = 1.0;
};

/// Zero-filled weights with every tensor sized for the configuration.
ModelWeights allocate_model(const ModelConfig& config);

/// Every parameter tensor of the model in a fixed order.
std::vector<TensorSlot> tensor_slots(ModelWeights& weights);

/// Fills every tensor from its own RNG stream derived from (seed, name).
void initialize(ModelWeights& weights, std::uint64_t seed);
ModelWeights random_model(const ModelConfig& config, std::uint64_t seed);

std::size_t parameter_count(ModelWeights& weights);

void save_weights(const std::string& path, ModelWeights& weights);
/// Reads a file written by save_weights; every tensor must be present with the
/// configured shape.
ModelWeights load_weights(const std::string& path, const ModelConfig& config);

}  // namespace coplot
