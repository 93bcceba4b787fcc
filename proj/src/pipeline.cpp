#include "coplot/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <thread>

namespace coplot {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void add(FlopBreakdown& b, const std::string& key, std::uint64_t v) { b[key] += v; }

std::uint64_t linear_flops(std::uint64_t tokens, std::uint64_t in, std::uint64_t out) {
  return flop_estimate("linear", {.tokens = tokens, .in = in, .out = out});
}

std::uint64_t conv_flops(std::uint64_t in, std::uint64_t out, std::uint64_t h, std::uint64_t w) {
  return flop_estimate("conv3x3", {.in = in, .out = out, .out_height = h, .out_width = w});
}

// Mean-point of each token's points; foreground labels are taken here rather
// than at the cell centre, which can sit outside a thin box.
std::vector<Vec3> mean_points(const TokenSequence& tokens) {
  std::vector<Vec3> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens.tokens) {
    out.emplace_back(t.stats[kMeanX], t.stats[kMeanY], t.stats[kMeanZ]);
  }
  return out;
}

}  // namespace

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

BevGrid scene_grid(const TokenizerConfig& tokenizer) {
  return BevGrid::from_range(tokenizer.range_min, tokenizer.range_max, tokenizer.grid_interval);
}

FlopBreakdown stage_flops(const std::string& prefix, std::uint64_t n, std::uint64_t cells,
                          const EncoderConfig& c, const BevGrid& grid) {
  FlopBreakdown b;
  if (c.num_blocks == 0) return b;
  const std::uint64_t h = static_cast<std::uint64_t>(grid.height);
  const std::uint64_t w = static_cast<std::uint64_t>(grid.width);
  const std::uint64_t d = static_cast<std::uint64_t>(c.d);
  const std::uint64_t cw = static_cast<std::uint64_t>(c.context_width);
  const std::uint64_t sc = static_cast<std::uint64_t>(c.scene_channels);
  const std::uint64_t ns = static_cast<std::uint64_t>(c.n_state);
  const std::uint64_t dg = static_cast<std::uint64_t>(c.num_groups);
  const std::uint64_t r = static_cast<std::uint64_t>(c.prompt_rank);
  const std::uint64_t pos = static_cast<std::uint64_t>(c.prompt_rows * c.prompt_cols);
  const std::uint64_t ch = (h + c.freq.stride_y - 1) / c.freq.stride_y;
  const std::uint64_t cwid = (w + c.freq.stride_x - 1) / c.freq.stride_x;

  add(b, prefix + "context.reduce", linear_flops(n, d, cw));
  add(b, prefix + "context.bev_pool", flop_estimate("bev_pool", {.tokens = n, .channels = cw}));
  add(b, prefix + "context.refine", conv_flops(2 * cw, sc, h, w) + conv_flops(sc, sc, h, w));
  add(b, prefix + "freq.downsample", conv_flops(sc, sc, ch, cwid));
  add(b, prefix + "freq.dft",
      flop_estimate("dft", {.channels = sc,
                            .window_h = static_cast<std::uint64_t>(c.freq.window_h),
                            .window_w = static_cast<std::uint64_t>(c.freq.window_w),
                            .cells = cells}));
  const FlopShape scan{.tokens = n, .d = d, .n_state = ns};
  for (int blk = 0; blk < c.num_blocks; ++blk) {
    add(b, prefix + "blocks.prompt",
        2 * conv_flops(sc, sc, h, w) + h * w * sc + linear_flops(pos, sc, r) + 2 * pos * r * d +
            pos * d + n * d);
    add(b, prefix + "blocks.groups",
        linear_flops(n, d, dg) + linear_flops(n, dg, dg) +
            flop_estimate("softmax", {.tokens = n, .groups = dg}) + n * d);
    add(b, prefix + "blocks.importance", linear_flops(n, d, 1) + n * d);
    add(b, prefix + "blocks.freq_projection", linear_flops(n, 4 * sc, ns) + n * ns);
    add(b, prefix + "blocks.scan_params", 2 * (linear_flops(n, d, 1) + 2 * linear_flops(n, d, ns)));
    add(b, prefix + "blocks.scan",
        flop_estimate("dual_scan", scan) + n * d + flop_estimate("standardize", scan));
    add(b, prefix + "blocks.residual", n * d + flop_estimate("standardize", scan));
  }
  return b;
}

PreparedRun prepare_run(const ScenarioConfig& config) {
  config.validate();
  PreparedRun run;
  run.config = config;
  run.scene = generate_scene(config);
  run.weights = random_model(config.model, config.seed);
  const BevGrid grid = scene_grid(config.tokenizer);
  const auto& enc = config.model.encoder;

  run.agents.resize(config.num_agents);
  parallel_for(config.num_agents, config.threads, [&](std::size_t a) {
    const auto start = Clock::now();
    EncodedAgent& agent = run.agents[a];
    agent.agent_id = static_cast<std::uint32_t>(a);
    const RawPointCloud& cloud = run.scene.clouds[a];
    agent.points = cloud.points.size();
    agent.tokens = embed(tokenize(cloud, config.tokenizer, agent.agent_id), run.weights.embed);
    agent.coords = agent.tokens.coords();
    agent.encoded = encode(agent.tokens, enc, run.weights.encoder, grid, config.tokenizer);

    const auto boxes = boxes_in_frame(run.scene.boxes, run.scene.poses[a]);
    agent.labels = label_importance(mean_points(agent.tokens), boxes, 1e-6);
    const std::size_t n = agent.tokens.size();
    agent.filter_scores.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      agent.filter_scores[i] =
          config.score_mode == ScoreMode::kOracle
              ? agent.labels[i] + 1e-9 * static_cast<double>(n - i) / static_cast<double>(n)
              : agent.encoded.scores[i];
    }
    add(agent.flops, "encoder.embed", linear_flops(n, kNumStats, static_cast<std::uint64_t>(enc.d)));
    for (const auto& [k, v] : stage_flops("encoder.", n, agent.encoded.dft_count, enc, grid)) {
      add(agent.flops, k, v);
    }
    agent.seconds = seconds_since(start);
  });
  return run;
}

RunReport finish_run(const PreparedRun& run, std::size_t top_k, const NoiseSpec& noise) {
  const auto start = Clock::now();
  const ScenarioConfig& cfg = run.config;
  const BevGrid grid = scene_grid(cfg.tokenizer);
  const auto& enc = cfg.model.encoder;
  const std::uint64_t d = static_cast<std::uint64_t>(enc.d);

  RunReport rep;
  rep.seed = cfg.seed;
  rep.ordering = to_string(enc.ordering);
  rep.score_mode = to_string(cfg.score_mode);
  rep.top_k = top_k;
  rep.noise_pos_std = noise.pos_std;
  rep.noise_rot_std = noise.rot_std;

  // Localization: the ego keeps its true pose, neighbors report a noisy one.
  NoiseSpec seeded = noise;
  seeded.seed = splitmix64(cfg.seed) ^ noise.seed;
  AgentPoses true_poses, noisy_poses;
  for (const auto& agent : run.agents) {
    const Pose& truth = run.scene.poses[agent.agent_id];
    true_poses.poses[agent.agent_id] = truth;
    noisy_poses.poses[agent.agent_id] =
        agent.agent_id == 0 ? truth
                            : round_to_f32(perturb_pose(truth, seeded, agent.agent_id));
  }

  // Selection and transmission.
  std::vector<MessagePacket> received;
  std::map<std::uint32_t, std::vector<std::uint8_t>> sent_labels;
  std::uint64_t fg_total = 0, fg_kept = 0;
  for (const auto& agent : run.agents) {
    AgentReport ar;
    ar.agent_id = agent.agent_id;
    ar.points = agent.points;
    ar.tokens = agent.tokens.size();
    ar.foreground = static_cast<std::uint64_t>(
        std::count(agent.labels.begin(), agent.labels.end(), std::uint8_t{1}));

    MessagePacket packet;
    std::vector<std::uint8_t> labels;
    if (agent.agent_id == 0) {
      packet = make_packet(agent.agent_id, agent.encoded.features, agent.coords,
                           noisy_poses.at(agent.agent_id));
      labels = agent.labels;
    } else {
      const FilterResult f = importance_filter(agent.encoded.features, agent.coords,
                                               agent.filter_scores, top_k);
      packet = make_packet(agent.agent_id, f.features, f.coords, noisy_poses.at(agent.agent_id));
      for (auto i : f.indices) labels.push_back(agent.labels[i]);
    }
    const auto wire = pack(packet);
    received.push_back(unpack(wire));
    ar.selected = packet.k;
    ar.retained_foreground = static_cast<std::uint64_t>(
        std::count(labels.begin(), labels.end(), std::uint8_t{1}));
    const CommReport comm = comm_volume(packet);
    if (comm.total_bytes != wire.size()) throw std::logic_error("packet size disagrees with layout");
    ar.token_bytes = comm.token_bytes;
    ar.payload_bytes = comm.payload_bytes;
    ar.total_bytes = comm.total_bytes;
    if (agent.agent_id != 0) {
      rep.neighbor_tokens += packet.k;
      rep.neighbor_payload_bytes += comm.payload_bytes;
      rep.neighbor_total_bytes += comm.total_bytes;
    }
    fg_total += ar.foreground;
    fg_kept += ar.retained_foreground;
    sent_labels[agent.agent_id] = std::move(labels);
    rep.agents.push_back(ar);
  }
  rep.neighbor_log2_bytes =
      rep.neighbor_total_bytes ? std::log2(static_cast<double>(rep.neighbor_total_bytes)) : 0.0;
  rep.fg_recall = fg_total ? static_cast<double>(fg_kept) / static_cast<double>(fg_total) : 1.0;

  // Aggregation in the ego frame from the poses carried by the packets.
  const MessagePacket& ego = received.front();
  const std::vector<MessagePacket> neighbors(received.begin() + 1, received.end());
  std::vector<RigidTransform> transforms;
  for (const auto& n : neighbors) {
    transforms.push_back(relative_transform(ego.to_pose(), n.to_pose()));
  }
  const FusedSequence fused =
      aggregate(ego, neighbors, transforms, run.weights.fusion.alignment.slot_embeddings);
  rep.fused_tokens = fused.size();

  const Matrix gt = gt_offset(true_poses, noisy_poses, fused.coords, fused.agent_ids, fused.ego());
  const EncoderConfig fusion_cfg = cfg.model.fusion_encoder();
  const FuseOutput out = fuse(fused, run.weights.fusion, fusion_cfg, grid, cfg.tokenizer);
  rep.offset_loss = offset_loss(out.proposals, out.compensation, gt);
  rep.warnings = out.stats.warnings;
  for (const auto& [agent, st] : out.stats.per_agent) {
    rep.alignment.push_back({agent, st.count, {st.mean.x(), st.mean.y(), st.mean.z()},
                             {st.stddev.x(), st.stddev.y(), st.stddev.z()}});
  }

  // Foreground tokens of neighbors: do their aligned coordinates land on a vehicle?
  const auto ego_boxes = boxes_in_frame(run.scene.boxes, run.scene.poses[fused.ego()]);
  std::map<std::uint32_t, std::size_t> cursor;
  std::uint64_t nb_fg = 0, nb_hit = 0, nb_tokens = 0;
  double gt_norm = 0.0;
  for (std::size_t t = 0; t < fused.size(); ++t) {
    const auto agent = fused.agent_ids[t];
    const std::uint8_t label = sent_labels.at(agent)[cursor[agent]++];
    if (agent == fused.ego()) continue;
    ++nb_tokens;
    gt_norm += gt.row(static_cast<Eigen::Index>(t)).norm();
    if (!label) continue;
    ++nb_fg;
    for (const auto& box : ego_boxes) {
      if (box.contains(out.aligned_coords[t], cfg.tokenizer.grid_interval)) {
        ++nb_hit;
        break;
      }
    }
  }
  rep.aligned_fg_hit_rate = nb_fg ? static_cast<double>(nb_hit) / static_cast<double>(nb_fg) : 0.0;
  rep.mean_gt_offset = nb_tokens ? gt_norm / static_cast<double>(nb_tokens) : 0.0;

  // Analytic FLOPs.
  for (const auto& agent : run.agents) {
    for (const auto& [k, v] : agent.flops) add(rep.flops, k, v);
  }
  const std::uint64_t n = fused.size();
  const std::uint64_t agents = fused.agents.size();
  const std::uint64_t sc = static_cast<std::uint64_t>(enc.scene_channels);
  const std::uint64_t cw = static_cast<std::uint64_t>(enc.context_width);
  const std::uint64_t h = static_cast<std::uint64_t>(grid.height);
  const std::uint64_t w = static_cast<std::uint64_t>(grid.width);
  const std::uint64_t hid = static_cast<std::uint64_t>(cfg.model.proposal_hidden);
  FlopBreakdown fusion;
  add(fusion, "fusion.aggregate", n * d + 18 * rep.neighbor_tokens);
  if (agents > 1) {
    add(fusion, "fusion.align.context",
        linear_flops(n, d, cw) + 2 * flop_estimate("bev_pool", {.tokens = n, .channels = cw}) +
            (agents + 1) * (conv_flops(2 * cw, sc, h, w) + conv_flops(sc, sc, h, w)));
    add(fusion, "fusion.align.misalignment",
        (agents - 1) * (conv_flops(3 * sc, sc, h, w) + conv_flops(sc, sc, h, w) + h * w * sc +
                        linear_flops(1, sc, d)) +
            rep.neighbor_tokens * d);
  }
  add(fusion, "fusion.align.proposal", linear_flops(n, d, hid) + linear_flops(n, hid, 3) + 3 * n);
  add(fusion, "fusion.align.stats", 12 * n);
  add(fusion, "fusion.align.compensate", linear_flops(n, d + 9, 3) + 3 * n);
  add(fusion, "fusion.align.apply", 6 * n);
  for (const auto& [k, v] : stage_flops("fusion.", n, out.dft_count, fusion_cfg, grid)) {
    add(fusion, k, v);
  }
  rep.flops_fusion = flop_total(fusion);
  for (const auto& [k, v] : fusion) add(rep.flops, k, v);
  rep.flops_total = flop_total(rep.flops);

  if (cfg.timings) {
    for (const auto& agent : run.agents) {
      rep.wall_seconds["encode.agent" + std::to_string(agent.agent_id)] = agent.seconds;
    }
    rep.wall_seconds["transmit_align_fuse"] = seconds_since(start);
  }
  return rep;
}

namespace {

std::vector<OrderingBenchRow> locality_rows(const PreparedRun& run, int k_nearest) {
  std::vector<OrderingBenchRow> rows;
  const EncodedAgent& ego = run.agents.front();
  if (ego.tokens.empty()) return rows;
  std::vector<Cell3> cells;
  for (const auto& t : ego.tokens.tokens) cells.push_back(t.cell);
  const GridFrame frame = GridFrame::from_config(run.config.tokenizer);
  std::optional<GroupAssignment> groups;
  if (!run.weights.encoder.blocks.empty()) {
    groups = assign_groups(ego.tokens.features, run.weights.encoder.blocks.front().groups);
  }
  for (auto o : {Ordering::kRaster, Ordering::kZOrder, Ordering::kHilbert, Ordering::kRandom,
                 Ordering::kSemantic}) {
    if (o == Ordering::kSemantic && !groups) continue;
    const Permutation perm = ordering_permutation(o, cells, frame,
                                                  run.config.model.encoder.ordering_seed,
                                                  groups ? &*groups : nullptr);
    rows.push_back({to_string(o), locality_gap(cells, perm, k_nearest), cells.size()});
  }
  return rows;
}

}  // namespace

RunReport run_pipeline(const ScenarioConfig& config) {
  const PreparedRun run = prepare_run(config);
  RunReport rep = finish_run(run, config.top_k, config.noise);
  for (const auto& row : locality_rows(run, 8)) rep.locality[row.ordering] = row.locality;
  return rep;
}

std::vector<RunReport> sweep_k(const ScenarioConfig& config, std::span<const std::size_t> ks) {
  const PreparedRun run = prepare_run(config);
  std::vector<RunReport> out(ks.size());
  parallel_for(ks.size(), config.threads,
               [&](std::size_t i) { out[i] = finish_run(run, ks[i], config.noise); });
  return out;
}

std::vector<RunReport> sweep_noise(const ScenarioConfig& config,
                                   std::span<const NoisePoint> points) {
  const PreparedRun run = prepare_run(config);
  std::vector<RunReport> out(points.size());
  parallel_for(points.size(), config.threads, [&](std::size_t i) {
    NoiseSpec noise = config.noise;
    noise.pos_std = points[i].pos_std;
    noise.rot_std = points[i].rot_std;
    out[i] = finish_run(run, config.top_k, noise);
  });
  return out;
}

std::vector<OrderingBenchRow> ordering_bench(const ScenarioConfig& config, int k_nearest) {
  return locality_rows(prepare_run(config), k_nearest);
}

std::vector<ScanBenchRow> scan_bench(std::span<const std::size_t> lengths, int d, int n_state,
                                     int repeats, std::uint64_t seed) {
  if (d < 1 || n_state < 1 || repeats < 1) {
    throw InvalidInput("scan_bench: d, n_state and repeats must be positive");
  }
  std::vector<ScanBenchRow> rows;
  for (std::size_t len : lengths) {
    const auto n = static_cast<Eigen::Index>(len);
    CounterRng rng(seed, len);
    Matrix x(n, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    SSMParams p;
    p.a = Vector(n_state);
    for (int s = 0; s < n_state; ++s) p.a[s] = -static_cast<double>(s + 1);
    p.delta = Vector(n);
    for (Eigen::Index i = 0; i < n; ++i) p.delta[i] = rng.uniform(1e-3, 1e-1);
    p.b = Matrix(n, n_state);
    p.c = Matrix(n, n_state);
    for (Eigen::Index i = 0; i < p.b.size(); ++i) p.b.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < p.c.size(); ++i) p.c.data()[i] = rng.normal();
    p.d = Vector::Ones(d);

    std::vector<double> times;
    double sink = 0.0;
    for (int r = 0; r < repeats; ++r) {
      const auto start = Clock::now();
      const Matrix y = fssm_scan(x, p);
      times.push_back(seconds_since(start));
      sink += y(n - 1, 0);
    }
    if (!std::isfinite(sink)) throw std::runtime_error("scan_bench: non-finite scan output");
    rows.push_back({len,
                    flop_estimate("scan", {.tokens = len,
                                           .d = static_cast<std::uint64_t>(d),
                                           .n_state = static_cast<std::uint64_t>(n_state)}),
                    *std::min_element(times.begin(), times.end())});
  }
  return rows;
}

}  // namespace coplot
