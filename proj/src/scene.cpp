#include "coplot/scene.hpp"

#include "coplot/bytes.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <numbers>

namespace coplot {

ScoreMode parse_score_mode(const std::string& name) {
  if (name == "oracle") return ScoreMode::kOracle;
  if (name == "learned") return ScoreMode::kLearned;
  throw InvalidInput("unknown score mode '" + name + "' (expected oracle or learned)");
}

std::string to_string(ScoreMode mode) {
  return mode == ScoreMode::kOracle ? "oracle" : "learned";
}

namespace {

constexpr std::array<std::array<double, 4>, 8> kLayout{{
    {0.0, 0.0, 0.0, 0.0},
    {20.0, 3.5, 0.0, 0.0},
    {-25.0, -3.5, 0.0, 0.0},
    {45.0, -7.0, 0.0, std::numbers::pi},
    {-50.0, 7.0, 0.0, 0.0},
    {60.0, 3.5, 0.0, 0.0},
    {-65.0, -7.0, 0.0, std::numbers::pi},
    {0.0, 10.5, 0.0, std::numbers::pi},
}};

constexpr std::array<double, 7> kLanes{-10.5, -7.0, -3.5, 0.0, 3.5, 7.0, 10.5};

std::uint64_t stream_of(std::string_view tag, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(hash_name(tag) ^ splitmix64(a * 0x100000001B3ull + b));
}

struct Face {
  Vec3 center;
  Vec3 normal;
  Vec3 u_axis;  // unit, spans the face horizontally
  double u_len;
  double height;
};

std::array<Face, 4> lateral_faces(const OrientedBox& box) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const Vec3 ex{c, s, 0.0}, ey{-s, c, 0.0};
  const double hl = box.size.x() / 2, hw = box.size.y() / 2;
  return {{
      {box.center + hl * ex, ex, ey, box.size.y(), box.size.z()},
      {box.center - hl * ex, -ex, ey, box.size.y(), box.size.z()},
      {box.center + hw * ey, ey, ex, box.size.x(), box.size.z()},
      {box.center - hw * ey, -ey, ex, box.size.x(), box.size.z()},
  }};
}

std::vector<OrientedBox> place_vehicles(const ScenarioConfig& cfg, std::span<const Pose> poses) {
  std::vector<OrientedBox> boxes;
  CounterRng rng(cfg.seed, stream_of("layout", 0));
  int attempts = 0;
  while (static_cast<int>(boxes.size()) < cfg.num_vehicles) {
    if (++attempts > 100000) {
      throw InvalidInput("generate_scene: cannot place " + std::to_string(cfg.num_vehicles) +
                         " vehicles without overlap");
    }
    OrientedBox b;
    for (int a = 0; a < 3; ++a) {
      b.size[a] = cfg.vehicle_size[a] * (1.0 + rng.uniform(-cfg.size_jitter, cfg.size_jitter));
    }
    const auto lane = static_cast<std::size_t>(rng.uniform() * kLanes.size());
    const double x = rng.uniform(-cfg.lane_extent, cfg.lane_extent);
    const double y = kLanes[std::min(lane, kLanes.size() - 1)] + rng.uniform(-0.3, 0.3);
    const double heading = y < 0.0 ? std::numbers::pi : 0.0;
    b.yaw = normalize_angle(heading + rng.uniform(-cfg.yaw_jitter, cfg.yaw_jitter));
    b.center = Vec3{x, y, cfg.ground_z + b.size.z() / 2};

    bool clear = true;
    for (const auto& o : boxes) {
      const double reach = (b.size.x() + o.size.x()) / 2 + 2.0;
      if (std::abs(o.center.x() - x) < reach && std::abs(o.center.y() - y) < 2.5) clear = false;
    }
    for (const auto& p : poses) {
      if (std::hypot(p.position.x() - x, p.position.y() - y) < 8.0) clear = false;
    }
    if (clear) boxes.push_back(b);
  }
  return boxes;
}

}  // namespace

// Poses travel as f32 on the wire; keeping them f32-exact makes the noisy pose
// an agent transmits identical to the one the harness scores against.
Pose round_to_f32(const Pose& p) {
  auto f = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  return Pose{Vec3{f(p.position.x()), f(p.position.y()), f(p.position.z())}, f(p.yaw),
              f(p.pitch), f(p.roll)};
}

void ScenarioConfig::validate() const {
  if (num_agents < 1) throw InvalidInput("scenario: num_agents must be >= 1");
  if (static_cast<int>(num_agents) > model.max_agents) {
    throw InvalidInput("scenario: num_agents exceeds model.max_agents");
  }
  if (!agent_poses.empty() && agent_poses.size() != num_agents) {
    throw InvalidInput("scenario: agent_poses must list one pose per agent");
  }
  if (agent_poses.empty() && num_agents > kLayout.size()) {
    throw InvalidInput("scenario: more than " + std::to_string(kLayout.size()) +
                       " agents need explicit agent_poses");
  }
  for (const auto& p : agent_poses) {
    if (!p.is_finite()) throw InvalidInput("scenario: non-finite agent pose");
  }
  if (num_vehicles < 0) throw InvalidInput("scenario: num_vehicles must be >= 0");
  if (!(vehicle_size.minCoeff() > 0.0)) throw InvalidInput("scenario: vehicle size must be > 0");
  if (!(size_jitter >= 0.0 && size_jitter < 1.0)) {
    throw InvalidInput("scenario: size_jitter must be in [0, 1)");
  }
  if (!(yaw_jitter >= 0.0)) throw InvalidInput("scenario: yaw_jitter must be >= 0");
  if (!(surface_density >= 0.0) || !(clutter_density >= 0.0)) {
    throw InvalidInput("scenario: densities must be >= 0");
  }
  if (!(lane_extent > 0.0)) throw InvalidInput("scenario: lane_extent must be > 0");
  if (!(noise.pos_std >= 0.0) || !(noise.rot_std >= 0.0)) {
    throw InvalidInput("scenario: noise standard deviations must be >= 0");
  }
  if (threads < 1) throw InvalidInput("scenario: threads must be >= 1");
  tokenizer.validate();
  model.validate();
}

std::vector<Pose> ScenarioConfig::poses() const {
  std::vector<Pose> out;
  for (std::uint32_t a = 0; a < num_agents; ++a) {
    if (!agent_poses.empty()) {
      out.push_back(round_to_f32(agent_poses[a]));
    } else {
      const auto& l = kLayout[a];
      out.push_back(round_to_f32(Pose{Vec3{l[0], l[1], l[2]}, l[3], 0.0, 0.0}));
    }
  }
  return out;
}

std::vector<OrientedBox> boxes_in_frame(std::span<const OrientedBox> boxes, const Pose& pose) {
  const RigidTransform to_local = RigidTransform::from_pose(pose).inverse();
  std::vector<OrientedBox> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes) {
    OrientedBox l = b;
    l.center = to_local(b.center);
    l.yaw = normalize_angle(b.yaw - pose.yaw);
    out.push_back(l);
  }
  return out;
}

Scene generate_scene(const ScenarioConfig& cfg) {
  cfg.validate();
  Scene scene;
  scene.poses = cfg.poses();
  scene.boxes = place_vehicles(cfg, scene.poses);

  for (std::uint32_t a = 0; a < cfg.num_agents; ++a) {
    const Pose& pose = scene.poses[a];
    const RigidTransform to_world = RigidTransform::from_pose(pose);
    const RigidTransform to_local = to_world.inverse();
    RawPointCloud cloud;

    // Lateral faces turned toward the sensor.
    for (std::size_t v = 0; v < scene.boxes.size(); ++v) {
      const auto faces = lateral_faces(scene.boxes[v]);
      for (std::size_t f = 0; f < faces.size(); ++f) {
        const Face& face = faces[f];
        if (face.normal.dot(pose.position - face.center) <= 0.0) continue;
        CounterRng rng(cfg.seed, stream_of("surface", a, v * 4 + f));
        const auto count = static_cast<std::size_t>(
            std::llround(cfg.surface_density * face.u_len * face.height));
        for (std::size_t i = 0; i < count; ++i) {
          const double u = rng.uniform(-0.5, 0.5) * face.u_len;
          const double h = rng.uniform(-0.5, 0.5) * face.height;
          const Vec3 world = face.center + u * face.u_axis + Vec3{0.0, 0.0, h};
          const Vec3 p = to_local(world);
          cloud.points.push_back({p.x(), p.y(), p.z(), rng.uniform(0.4, 0.9)});
        }
      }
    }

    // Ground clutter over the agent's perception range, kept off the vehicles.
    CounterRng rng(cfg.seed, stream_of("ground", a));
    const Vec3 lo = cfg.tokenizer.range_min, hi = cfg.tokenizer.range_max;
    const auto clutter = static_cast<std::size_t>(
        std::llround(cfg.clutter_density * (hi.x() - lo.x()) * (hi.y() - lo.y())));
    for (std::size_t i = 0; i < clutter; ++i) {
      const double lx = rng.uniform(lo.x(), hi.x());
      const double ly = rng.uniform(lo.y(), hi.y());
      const double dz = rng.uniform(-0.05, 0.05);
      const double intensity = rng.uniform(0.02, 0.25);
      Vec3 world = to_world(Vec3{lx, ly, 0.0});
      world.z() = cfg.ground_z + dz;
      bool on_vehicle = false;
      for (const auto& b : scene.boxes) {
        OrientedBox footprint = b;
        footprint.size.z() = 1e9;
        if (footprint.contains(world, 0.5)) on_vehicle = true;
      }
      if (on_vehicle) continue;
      const Vec3 p = to_local(world);
      cloud.points.push_back({p.x(), p.y(), p.z(), intensity});
    }
    scene.clouds.push_back(std::move(cloud));
  }
  return scene;
}

namespace {

using nlohmann::json;

Vec3 vec3_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw InvalidInput("scenario: expected a 3-element array");
  return {v[0], v[1], v[2]};
}

json vec3_to(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
  if (const auto it = obj.find(key); it != obj.end()) out = it->template get<T>();
}

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  if (!obj.is_object()) throw InvalidInput("scenario: " + where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw InvalidInput("scenario: unknown field '" + key + "' in " + where);
    }
  }
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("scenario: malformed JSON: ") + e.what());
  }
  ScenarioConfig c;
  try {
    check_keys(doc,
               {"num_agents", "agent_poses", "num_vehicles", "vehicle_size", "size_jitter",
                "yaw_jitter", "surface_density", "clutter_density", "ground_z", "lane_extent",
                "tokenizer", "model", "top_k", "noise", "score_mode", "seed", "threads",
                "timings"},
               "document");
    read_field(doc, "num_agents", c.num_agents);
    if (const auto it = doc.find("agent_poses"); it != doc.end()) {
      for (const auto& p : *it) {
        check_keys(p, {"position", "yaw", "pitch", "roll"}, "agent_poses");
        Pose pose;
        if (p.contains("position")) pose.position = vec3_from(p.at("position"));
        read_field(p, "yaw", pose.yaw);
        read_field(p, "pitch", pose.pitch);
        read_field(p, "roll", pose.roll);
        c.agent_poses.push_back(pose);
      }
    }
    read_field(doc, "num_vehicles", c.num_vehicles);
    if (doc.contains("vehicle_size")) c.vehicle_size = vec3_from(doc.at("vehicle_size"));
    read_field(doc, "size_jitter", c.size_jitter);
    read_field(doc, "yaw_jitter", c.yaw_jitter);
    read_field(doc, "surface_density", c.surface_density);
    read_field(doc, "clutter_density", c.clutter_density);
    read_field(doc, "ground_z", c.ground_z);
    read_field(doc, "lane_extent", c.lane_extent);
    read_field(doc, "top_k", c.top_k);
    read_field(doc, "seed", c.seed);
    read_field(doc, "threads", c.threads);
    read_field(doc, "timings", c.timings);
    if (doc.contains("score_mode")) {
      c.score_mode = parse_score_mode(doc.at("score_mode").get<std::string>());
    }
    if (const auto it = doc.find("tokenizer"); it != doc.end()) {
      check_keys(*it, {"grid_interval", "min_points", "range_min", "range_max"}, "tokenizer");
      read_field(*it, "grid_interval", c.tokenizer.grid_interval);
      read_field(*it, "min_points", c.tokenizer.min_points);
      if (it->contains("range_min")) c.tokenizer.range_min = vec3_from(it->at("range_min"));
      if (it->contains("range_max")) c.tokenizer.range_max = vec3_from(it->at("range_max"));
    }
    if (const auto it = doc.find("noise"); it != doc.end()) {
      check_keys(*it, {"pos_std", "rot_std", "seed", "full_6dof"}, "noise");
      read_field(*it, "pos_std", c.noise.pos_std);
      read_field(*it, "rot_std", c.noise.rot_std);
      read_field(*it, "seed", c.noise.seed);
      read_field(*it, "full_6dof", c.noise.full_6dof);
    }
    if (const auto it = doc.find("model"); it != doc.end()) {
      check_keys(*it,
                 {"d", "encoder_blocks", "fusion_blocks", "num_groups", "n_state", "local_window",
                  "context_width", "scene_channels", "prompt_rank", "max_agents",
                  "proposal_hidden", "max_offset", "ordering", "ordering_seed", "freq"},
                 "model");
      auto& m = c.model;
      read_field(*it, "d", m.encoder.d);
      read_field(*it, "encoder_blocks", m.encoder.num_blocks);
      read_field(*it, "fusion_blocks", m.fusion_blocks);
      read_field(*it, "num_groups", m.encoder.num_groups);
      read_field(*it, "n_state", m.encoder.n_state);
      read_field(*it, "local_window", m.encoder.local_window);
      read_field(*it, "context_width", m.encoder.context_width);
      read_field(*it, "scene_channels", m.encoder.scene_channels);
      read_field(*it, "prompt_rank", m.encoder.prompt_rank);
      read_field(*it, "max_agents", m.max_agents);
      read_field(*it, "proposal_hidden", m.proposal_hidden);
      read_field(*it, "max_offset", m.max_offset);
      read_field(*it, "ordering_seed", m.encoder.ordering_seed);
      if (it->contains("ordering")) {
        m.encoder.ordering = parse_ordering(it->at("ordering").get<std::string>());
      }
      if (const auto f = it->find("freq"); f != it->end()) {
        check_keys(*f, {"window_h", "window_w", "alpha", "beta", "epsilon", "stride_x", "stride_y"},
                   "model.freq");
        auto& q = m.encoder.freq;
        read_field(*f, "window_h", q.window_h);
        read_field(*f, "window_w", q.window_w);
        read_field(*f, "alpha", q.alpha);
        read_field(*f, "beta", q.beta);
        read_field(*f, "epsilon", q.epsilon);
        read_field(*f, "stride_x", q.stride_x);
        read_field(*f, "stride_y", q.stride_y);
      }
    }
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("scenario: wrong field type: ") + e.what());
  }
  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::string& path) {
  const auto data = bytes::read_file(path);
  return parse_scenario(std::string(data.begin(), data.end()));
}

std::string scenario_to_json(const ScenarioConfig& c) {
  nlohmann::ordered_json doc;
  doc["num_agents"] = c.num_agents;
  if (!c.agent_poses.empty()) {
    auto& poses = doc["agent_poses"] = nlohmann::ordered_json::array();
    for (const auto& p : c.agent_poses) {
      poses.push_back({{"position", vec3_to(p.position)},
                       {"yaw", p.yaw},
                       {"pitch", p.pitch},
                       {"roll", p.roll}});
    }
  }
  doc["num_vehicles"] = c.num_vehicles;
  doc["vehicle_size"] = vec3_to(c.vehicle_size);
  doc["size_jitter"] = c.size_jitter;
  doc["yaw_jitter"] = c.yaw_jitter;
  doc["surface_density"] = c.surface_density;
  doc["clutter_density"] = c.clutter_density;
  doc["ground_z"] = c.ground_z;
  doc["lane_extent"] = c.lane_extent;
  doc["tokenizer"] = {{"grid_interval", c.tokenizer.grid_interval},
                      {"min_points", c.tokenizer.min_points},
                      {"range_min", vec3_to(c.tokenizer.range_min)},
                      {"range_max", vec3_to(c.tokenizer.range_max)}};
  const auto& m = c.model;
  const auto& q = m.encoder.freq;
  doc["model"] = {{"d", m.encoder.d},
                  {"encoder_blocks", m.encoder.num_blocks},
                  {"fusion_blocks", m.fusion_blocks},
                  {"num_groups", m.encoder.num_groups},
                  {"n_state", m.encoder.n_state},
                  {"local_window", m.encoder.local_window},
                  {"context_width", m.encoder.context_width},
                  {"scene_channels", m.encoder.scene_channels},
                  {"prompt_rank", m.encoder.prompt_rank},
                  {"max_agents", m.max_agents},
                  {"proposal_hidden", m.proposal_hidden},
                  {"max_offset", m.max_offset},
                  {"ordering", to_string(m.encoder.ordering)},
                  {"ordering_seed", m.encoder.ordering_seed},
                  {"freq",
                   {{"window_h", q.window_h},
                    {"window_w", q.window_w},
                    {"alpha", q.alpha},
                    {"beta", q.beta},
                    {"epsilon", q.epsilon},
                    {"stride_x", q.stride_x},
                    {"stride_y", q.stride_y}}}};
  doc["top_k"] = c.top_k;
  doc["noise"] = {{"pos_std", c.noise.pos_std},
                  {"rot_std", c.noise.rot_std},
                  {"seed", c.noise.seed},
                  {"full_6dof", c.noise.full_6dof}};
  doc["score_mode"] = to_string(c.score_mode);
  doc["seed"] = c.seed;
  doc["threads"] = c.threads;
  doc["timings"] = c.timings;
  return doc.dump(2) + "\n";
}

}  // namespace coplot
