#include "coplot/weights.hpp"

#include "coplot/bytes.hpp"

#include <json.hpp>

#include <cmath>
#include <map>

namespace coplot {

void ModelConfig::validate() const {
  encoder.validate();
  if (fusion_blocks < 0) throw InvalidInput("model: fusion_blocks must be >= 0");
  if (max_agents < 1) throw InvalidInput("model: max_agents must be >= 1");
  if (proposal_hidden < 1) throw InvalidInput("model: proposal_hidden must be >= 1");
  if (!(max_offset > 0.0)) throw InvalidInput("model: max_offset must be > 0");
}

EncoderConfig ModelConfig::fusion_encoder() const {
  EncoderConfig c = encoder;
  c.num_blocks = fusion_blocks;
  return c;
}

namespace {

SelectiveWeights make_selective(int d, int n) {
  SelectiveWeights s;
  s.delta = Linear(d, 1);
  s.b = Linear(d, n);
  s.c = Linear(d, n);
  s.a_log = Vector::Zero(n);
  s.d_skip = Vector::Zero(d);
  return s;
}

ConvStack make_stack(int in, int out) {
  return ConvStack{Conv3x3(in, out), Conv3x3(out, out), true};
}

StageWeights make_stage(const EncoderConfig& c, int blocks) {
  StageWeights st;
  st.context.reduce = Linear(c.d, c.context_width);
  st.context.refine = make_stack(2 * c.context_width, c.scene_channels);
  st.downsample = Conv3x3(c.scene_channels, c.scene_channels);
  st.downsample.stride_y = c.freq.stride_y;
  st.downsample.stride_x = c.freq.stride_x;
  for (int b = 0; b < blocks; ++b) {
    BlockWeights bw;
    bw.prompt.refine = make_stack(c.scene_channels, c.scene_channels);
    bw.prompt.specific = Linear(c.scene_channels, c.prompt_rank);
    bw.prompt.shared = Matrix::Zero(c.prompt_rank, c.d);
    bw.prompt.pooled_rows = c.prompt_rows;
    bw.prompt.pooled_cols = c.prompt_cols;
    bw.groups.project = Linear(c.d, c.num_groups);
    bw.groups.logits = Linear(c.num_groups, c.num_groups);
    bw.groups.prompts = Matrix::Zero(c.num_groups, c.d);
    bw.importance = Linear(c.d, 1);
    bw.freq_projection = Linear(4 * c.scene_channels, c.n_state);
    bw.global_scan = make_selective(c.d, c.n_state);
    bw.local_scan = make_selective(c.d, c.n_state);
    st.blocks.push_back(std::move(bw));
  }
  return st;
}

struct SlotList {
  std::vector<TensorSlot> slots;

  void add(std::string name, std::vector<std::int64_t> shape, double* data, Init init,
           double fan_in = 1.0) {
    std::size_t size = 1;
    for (auto s : shape) size *= static_cast<std::size_t>(s);
    slots.push_back(TensorSlot{std::move(name), std::move(shape), data, size, init, fan_in});
  }
  void linear(const std::string& name, Linear& l) {
    const auto fan = static_cast<double>(l.in_dim());
    add(name + ".weight", {l.out_dim(), l.in_dim()}, l.weight.data(), Init::kFanUniform, fan);
    add(name + ".bias", {l.out_dim()}, l.bias.data(), Init::kFanUniform, fan);
  }
  void conv(const std::string& name, Conv3x3& c) {
    add(name + ".weight", {c.out_channels, c.in_channels, 3, 3}, c.weight.data(),
        Init::kFanUniform, 9.0 * c.in_channels);
    // Zero bias keeps empty BEV cells at exactly zero through the stack.
    add(name + ".bias", {c.out_channels}, c.bias.data(), Init::kZero);
  }
  void stack(const std::string& name, ConvStack& s) {
    conv(name + ".conv1", s.first);
    conv(name + ".conv2", s.second);
  }
  void selective(const std::string& name, SelectiveWeights& s) {
    add(name + ".delta.weight", {s.delta.out_dim(), s.delta.in_dim()}, s.delta.weight.data(),
        Init::kFanUniform, static_cast<double>(s.delta.in_dim()));
    add(name + ".delta.bias", {s.delta.out_dim()}, s.delta.bias.data(), Init::kStepBias);
    linear(name + ".b", s.b);
    linear(name + ".c", s.c);
    add(name + ".a_log", {s.a_log.size()}, s.a_log.data(), Init::kStateDecay);
    add(name + ".d_skip", {s.d_skip.size()}, s.d_skip.data(), Init::kOne);
    add(name + ".gamma", {1}, &s.gamma, Init::kGain);
  }
  void stage(const std::string& name, StageWeights& st) {
    linear(name + ".context.reduce", st.context.reduce);
    stack(name + ".context.refine", st.context.refine);
    conv(name + ".downsample", st.downsample);
    for (std::size_t b = 0; b < st.blocks.size(); ++b) {
      auto& bw = st.blocks[b];
      const std::string p = name + ".block" + std::to_string(b);
      stack(p + ".prompt.refine", bw.prompt.refine);
      linear(p + ".prompt.specific", bw.prompt.specific);
      add(p + ".prompt.shared", {bw.prompt.shared.rows(), bw.prompt.shared.cols()},
          bw.prompt.shared.data(), Init::kSmallNormal);
      linear(p + ".groups.project", bw.groups.project);
      linear(p + ".groups.logits", bw.groups.logits);
      add(p + ".groups.prompts", {bw.groups.prompts.rows(), bw.groups.prompts.cols()},
          bw.groups.prompts.data(), Init::kSmallNormal);
      linear(p + ".importance", bw.importance);
      linear(p + ".freq_projection", bw.freq_projection);
      selective(p + ".global_scan", bw.global_scan);
      selective(p + ".local_scan", bw.local_scan);
    }
  }
};

double init_value(const TensorSlot& slot, std::size_t i, CounterRng& rng) {
  switch (slot.init) {
    case Init::kZero:
      return 0.0;
    case Init::kOne:
      return 1.0;
    case Init::kFanUniform: {
      const double bound = 1.0 / std::sqrt(slot.fan_in);
      return rng.uniform(-bound, bound);
    }
    case Init::kSmallNormal:
      return rng.normal(0.0, 0.02);
    case Init::kStateDecay:
      return std::log(static_cast<double>(i + 1));
    case Init::kStepBias: {
      const double step = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
      return step + std::log(-std::expm1(-step));
    }
    case Init::kGain:
      return 0.1;
  }
  return 0.0;
}

}  // namespace

ModelWeights allocate_model(const ModelConfig& config) {
  config.validate();
  const auto& c = config.encoder;
  ModelWeights m;
  m.embed = Linear(kNumStats, c.d);
  m.encoder = make_stage(c, c.num_blocks);
  auto& a = m.fusion.alignment;
  a.slot_embeddings = Matrix::Zero(config.max_agents, c.d);
  a.misalignment.refine = make_stack(3 * c.scene_channels, c.scene_channels);
  a.misalignment.prompt = Linear(c.scene_channels, c.d);
  a.proposal.hidden = Linear(c.d, config.proposal_hidden);
  a.proposal.output = Linear(config.proposal_hidden, 3);
  a.proposal.max_offset = config.max_offset;
  a.compensate.map = Linear(c.d + 9, 3);
  a.compensate.max_offset = config.max_offset;
  m.fusion.stage = make_stage(c, config.fusion_blocks);
  return m;
}

std::vector<TensorSlot> tensor_slots(ModelWeights& m) {
  SlotList list;
  list.linear("embed", m.embed);
  list.stage("encoder", m.encoder);
  auto& a = m.fusion.alignment;
  list.add("fusion.slot_embeddings", {a.slot_embeddings.rows(), a.slot_embeddings.cols()},
           a.slot_embeddings.data(), Init::kSmallNormal);
  list.stack("fusion.misalignment.refine", a.misalignment.refine);
  list.linear("fusion.misalignment.prompt", a.misalignment.prompt);
  list.linear("fusion.proposal.hidden", a.proposal.hidden);
  list.linear("fusion.proposal.output", a.proposal.output);
  list.linear("fusion.compensate", a.compensate.map);
  list.stage("fusion.stage", m.fusion.stage);
  return std::move(list.slots);
}

void initialize(ModelWeights& weights, std::uint64_t seed) {
  for (auto& slot : tensor_slots(weights)) {
    CounterRng rng(seed, hash_name(slot.name));
    for (std::size_t i = 0; i < slot.size; ++i) slot.data[i] = init_value(slot, i, rng);
  }
}

ModelWeights random_model(const ModelConfig& config, std::uint64_t seed) {
  ModelWeights m = allocate_model(config);
  initialize(m, seed);
  return m;
}

std::size_t parameter_count(ModelWeights& weights) {
  std::size_t n = 0;
  for (const auto& s : tensor_slots(weights)) n += s.size;
  return n;
}

void save_weights(const std::string& path, ModelWeights& weights) {
  std::vector<std::uint8_t> blob;
  nlohmann::ordered_json manifest;
  manifest["format"] = "coplot-weights";
  manifest["dtype"] = "f32";
  auto& tensors = manifest["tensors"] = nlohmann::ordered_json::array();
  std::size_t offset = 0;
  for (const auto& slot : tensor_slots(weights)) {
    tensors.push_back({{"name", slot.name}, {"shape", slot.shape}, {"offset", offset}});
    for (std::size_t i = 0; i < slot.size; ++i) {
      bytes::put<float>(blob, static_cast<float>(slot.data[i]));
    }
    offset += slot.size;
  }
  bytes::write_file(path, blob);
  const std::string text = manifest.dump(2) + "\n";
  bytes::write_file(path + ".json", std::vector<std::uint8_t>(text.begin(), text.end()));
}

ModelWeights load_weights(const std::string& path, const ModelConfig& config) {
  const auto blob = bytes::read_file(path);
  const auto text = bytes::read_file(path + ".json");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    throw IoError("weights manifest " + path + ".json: " + e.what());
  }
  std::map<std::string, nlohmann::json> by_name;
  for (const auto& t : manifest.at("tensors")) by_name[t.at("name").get<std::string>()] = t;

  ModelWeights m = allocate_model(config);
  for (auto& slot : tensor_slots(m)) {
    const auto it = by_name.find(slot.name);
    if (it == by_name.end()) throw InvalidInput("weights: missing tensor " + slot.name);
    if (it->second.at("shape").get<std::vector<std::int64_t>>() != slot.shape) {
      throw InvalidInput("weights: shape mismatch for " + slot.name);
    }
    const auto offset = it->second.at("offset").get<std::size_t>();
    if ((offset + slot.size) * 4 > blob.size()) {
      throw InvalidInput("weights: tensor " + slot.name + " runs past the end of " + path);
    }
    for (std::size_t i = 0; i < slot.size; ++i) {
      slot.data[i] = bytes::get<float>(blob, 4 * (offset + i));
    }
  }
  return m;
}

}  // namespace coplot
