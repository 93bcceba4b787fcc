#include "coplot/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace coplot {

FusedSequence aggregate(const MessagePacket& ego, std::span<const MessagePacket> neighbors,
                        std::span<const RigidTransform> transforms,
                        const Matrix& slot_embeddings) {
  if (neighbors.size() != transforms.size()) {
    throw InvalidInput("aggregate: " + std::to_string(neighbors.size()) + " neighbors but " +
                       std::to_string(transforms.size()) + " transforms");
  }
  if (slot_embeddings.rows() < static_cast<Eigen::Index>(neighbors.size() + 1)) {
    throw InvalidInput("aggregate: more agents than agent-origin embeddings");
  }
  if (slot_embeddings.cols() != ego.d) {
    throw InvalidInput("aggregate: embedding width differs from packet width");
  }
  std::vector<std::size_t> order(neighbors.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return neighbors[a].agent_id < neighbors[b].agent_id;
  });

  std::size_t total = ego.k;
  for (const auto& n : neighbors) {
    if (n.d != ego.d) throw InvalidInput("aggregate: neighbor packet width differs from ego");
    total += n.k;
  }
  FusedSequence out;
  out.features.resize(static_cast<Eigen::Index>(total), ego.d);
  out.coords.reserve(total);
  out.agent_ids.reserve(total);

  Eigen::Index row = 0;
  auto append = [&](const MessagePacket& p, const RigidTransform* t, Eigen::Index slot) {
    p.validate();
    for (std::uint32_t i = 0; i < p.k; ++i, ++row) {
      for (std::uint32_t c = 0; c < p.d; ++c) {
        out.features(row, c) = static_cast<double>(p.features[static_cast<std::size_t>(i) * p.d + c]) +
                               slot_embeddings(slot, c);
      }
      const Vec3 local{p.coords[3 * i], p.coords[3 * i + 1], p.coords[3 * i + 2]};
      if (t) {
        Vec3 mapped = (*t)(local);
        for (int a = 0; a < 3; ++a) {
          mapped[a] = std::nearbyint(mapped[a] / kCoordResolution) * kCoordResolution;
        }
        out.coords.push_back(mapped);
      } else {
        out.coords.push_back(local);
      }
      out.agent_ids.push_back(p.agent_id);
    }
    out.agents.push_back(p.agent_id);
    out.counts.push_back(p.k);
  };
  append(ego, nullptr, 0);
  for (std::size_t s = 0; s < order.size(); ++s) {
    const auto& t = transforms[order[s]];
    if (!t.is_valid(1e-8)) throw InvalidInput("aggregate: invalid neighbor transform");
    append(neighbors[order[s]], &t, static_cast<Eigen::Index>(s + 1));
  }
  return out;
}

Vector misalignment_prompt(const FeatureMap2D& fused, const FeatureMap2D& ego,
                           const FeatureMap2D& neighbor, const MisalignmentWeights& weights) {
  if (!fused.same_shape(ego) || !fused.same_shape(neighbor)) {
    throw InvalidInput("misalignment_prompt: maps do not share one grid");
  }
  const int c = fused.channels();
  FeatureMap2D stacked(3 * c, fused.height(), fused.width());
  for (int y = 0; y < fused.height(); ++y)
    for (int x = 0; x < fused.width(); ++x) {
      double* out = stacked.pixel(y, x);
      std::copy_n(fused.pixel(y, x), c, out);
      std::copy_n(ego.pixel(y, x), c, out + c);
      std::copy_n(neighbor.pixel(y, x), c, out + 2 * c);
    }
  const FeatureMap2D refined = conv_refine(stacked, weights.refine);
  Vector pooled = Vector::Zero(refined.channels());
  for (int y = 0; y < refined.height(); ++y)
    for (int x = 0; x < refined.width(); ++x) {
      pooled += Eigen::Map<const Eigen::VectorXd>(refined.pixel(y, x), refined.channels());
    }
  pooled /= static_cast<double>(refined.pixels());
  return weights.prompt.apply(pooled);
}

double quantize_offset(double v) {
  return std::nearbyint(v / kOffsetResolution) * kOffsetResolution;
}

Matrix propose_offsets(const Matrix& features, const ProposalWeights& weights) {
  if (weights.output.out_dim() != 3) throw InvalidInput("propose_offsets: output must be 3-wide");
  Matrix hidden = weights.hidden.forward(features);
  hidden = hidden.cwiseMax(0.0);
  const Matrix raw = weights.output.forward(hidden);
  return (weights.max_offset * raw.array().tanh()).matrix();
}

OffsetStatistics offset_statistics(const Matrix& proposals,
                                   std::span<const std::uint32_t> token_agents,
                                   std::span<const std::uint32_t> agents) {
  if (static_cast<std::size_t>(proposals.rows()) != token_agents.size() || proposals.cols() != 3) {
    throw InvalidInput("offset_statistics: proposals must be tokens x 3");
  }
  OffsetStatistics out;
  for (auto a : agents) {
    OffsetStats st;
    for (std::size_t t = 0; t < token_agents.size(); ++t) {
      if (token_agents[t] != a) continue;
      st.mean += proposals.row(static_cast<Eigen::Index>(t)).transpose();
      ++st.count;
    }
    if (st.count == 0) {
      out.warnings.push_back("offset_statistics: agent " + std::to_string(a) +
                             " has no tokens; skipped");
      continue;
    }
    st.mean /= static_cast<double>(st.count);
    Vec3 var = Vec3::Zero();
    for (std::size_t t = 0; t < token_agents.size(); ++t) {
      if (token_agents[t] != a) continue;
      const Vec3 dv = proposals.row(static_cast<Eigen::Index>(t)).transpose() - st.mean;
      var += dv.cwiseProduct(dv);
    }
    st.stddev = (var / static_cast<double>(st.count)).cwiseSqrt();
    out.per_agent.emplace(a, st);
  }
  return out;
}

Matrix compensate(const Matrix& features, const Matrix& proposals, const Matrix& agent_mean,
                  const Matrix& agent_std, const CompensateWeights& weights) {
  const Eigen::Index n = features.rows();
  if (proposals.rows() != n || agent_mean.rows() != n || agent_std.rows() != n ||
      proposals.cols() != 3 || agent_mean.cols() != 3 || agent_std.cols() != 3) {
    throw InvalidInput("compensate: inputs must share the token count and be 3-wide");
  }
  Matrix joined(n, features.cols() + 9);
  joined << features, proposals, agent_mean, agent_std;
  const Matrix raw = weights.map.forward(joined);
  if (raw.cols() != 3) throw InvalidInput("compensate: output must be 3-wide");
  if (!weights.bounded) return raw;
  return (weights.max_offset * (raw / weights.max_offset).array().tanh()).matrix();
}

std::vector<Vec3> apply_offsets(std::span<const Vec3> coords, const Matrix& proposals,
                                const Matrix& compensation) {
  const auto n = static_cast<Eigen::Index>(coords.size());
  if (proposals.rows() != n || compensation.rows() != n || proposals.cols() != 3 ||
      compensation.cols() != 3) {
    throw InvalidInput("apply_offsets: offsets must be tokens x 3");
  }
  std::vector<Vec3> out;
  out.reserve(coords.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec3 p = coords[static_cast<std::size_t>(i)];
    for (int a = 0; a < 3; ++a) p[a] += proposals(i, a) + compensation(i, a);
    out.push_back(p);
  }
  return out;
}

const Pose& AgentPoses::at(std::uint32_t agent) const {
  const auto it = poses.find(agent);
  if (it == poses.end()) throw InvalidInput("missing pose for agent " + std::to_string(agent));
  return it->second;
}

namespace {

bool same_pose(const Pose& a, const Pose& b) {
  return a.position == b.position && a.yaw == b.yaw && a.pitch == b.pitch && a.roll == b.roll;
}

}  // namespace

Matrix gt_offset(const AgentPoses& true_poses, const AgentPoses& noisy_poses,
                 std::span<const Vec3> coords, std::span<const std::uint32_t> token_agents,
                 std::uint32_t ego) {
  if (coords.size() != token_agents.size()) {
    throw InvalidInput("gt_offset: coordinates and agent tags differ in length");
  }
  const Pose& ego_true = true_poses.at(ego);
  const Pose& ego_noisy = noisy_poses.at(ego);
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(coords.size()), 3);
  std::map<std::uint32_t, std::pair<RigidTransform, bool>> correction;
  for (std::size_t t = 0; t < coords.size(); ++t) {
    const auto agent = token_agents[t];
    if (agent == ego) continue;
    auto it = correction.find(agent);
    if (it == correction.end()) {
      const Pose& jt = true_poses.at(agent);
      const Pose& jn = noisy_poses.at(agent);
      const bool exact = same_pose(ego_true, ego_noisy) && same_pose(jt, jn);
      const RigidTransform c = relative_transform(ego_true, jt) *
                               relative_transform(ego_noisy, jn).inverse();
      it = correction.emplace(agent, std::pair{c, exact}).first;
    }
    if (it->second.second) continue;
    const Vec3 off = it->second.first(coords[t]) - coords[t];
    out.row(static_cast<Eigen::Index>(t)) = off.transpose();
  }
  return out;
}

double offset_loss(const Matrix& proposals, const Matrix& compensation, const Matrix& target) {
  if (proposals.rows() != target.rows() || compensation.rows() != target.rows() ||
      proposals.cols() != target.cols() || compensation.cols() != target.cols()) {
    throw InvalidInput("offset_loss: shape mismatch");
  }
  if (target.size() == 0) return 0.0;
  return (proposals + compensation - target).squaredNorm() / static_cast<double>(target.size());
}

FuseOutput fuse(const FusedSequence& fused, const FusionWeights& weights,
                const EncoderConfig& config, const BevGrid& grid,
                const TokenizerConfig& tokenizer) {
  config.validate();
  if (fused.size() == 0) throw InvalidInput("fuse: empty fused sequence");
  const auto n = static_cast<Eigen::Index>(fused.size());
  const auto& align = weights.alignment;
  const std::uint32_t ego = fused.ego();

  FuseOutput out;
  Matrix prompted = fused.features;

  // Misalignment prompts from the fused, ego and per-neighbor scene maps.
  if (fused.agents.size() > 1) {
    const Matrix reduced = weights.stage.context.reduce.forward(fused.features);
    const AgentContext pooled =
        per_agent_context(reduced, fused.coords, fused.agent_ids, fused.agents, grid);
    const auto& refine = weights.stage.context.refine;
    const FeatureMap2D fused_map = conv_refine(pooled.fused, refine);
    const FeatureMap2D ego_map = conv_refine(pooled.per_agent.at(ego), refine);
    for (std::size_t s = 1; s < fused.agents.size(); ++s) {
      const auto agent = fused.agents[s];
      const FeatureMap2D agent_map = conv_refine(pooled.per_agent.at(agent), refine);
      Vector p = misalignment_prompt(fused_map, ego_map, agent_map, align.misalignment);
      for (Eigen::Index t = 0; t < n; ++t) {
        if (fused.agent_ids[static_cast<std::size_t>(t)] == agent) prompted.row(t) += p.transpose();
      }
      out.prompts.emplace(agent, std::move(p));
    }
  }

  // Offsets: neighbors only; ego rows stay zero.
  out.proposals = propose_offsets(prompted, align.proposal);
  for (Eigen::Index t = 0; t < n; ++t) {
    const bool is_ego = fused.agent_ids[static_cast<std::size_t>(t)] == ego;
    for (int a = 0; a < 3; ++a) {
      out.proposals(t, a) = is_ego ? 0.0 : quantize_offset(out.proposals(t, a));
    }
  }
  const std::vector<std::uint32_t> neighbors(fused.agents.begin() + 1, fused.agents.end());
  out.stats = offset_statistics(out.proposals, fused.agent_ids, neighbors);

  Matrix mean = Matrix::Zero(n, 3), stddev = Matrix::Zero(n, 3);
  for (Eigen::Index t = 0; t < n; ++t) {
    const auto it = out.stats.per_agent.find(fused.agent_ids[static_cast<std::size_t>(t)]);
    if (it == out.stats.per_agent.end()) continue;
    mean.row(t) = it->second.mean.transpose();
    stddev.row(t) = it->second.stddev.transpose();
  }
  out.compensation = compensate(prompted, out.proposals, mean, stddev, align.compensate);
  for (Eigen::Index t = 0; t < n; ++t) {
    const bool is_ego = fused.agent_ids[static_cast<std::size_t>(t)] == ego;
    for (int a = 0; a < 3; ++a) {
      out.compensation(t, a) = is_ego ? 0.0 : quantize_offset(out.compensation(t, a));
    }
  }
  out.aligned_coords = apply_offsets(fused.coords, out.proposals, out.compensation);

  if (config.num_blocks == 0) {
    out.features = prompted;
    return out;
  }
  const StageContext ctx = build_stage_context(prompted, out.aligned_coords, grid, tokenizer,
                                               weights.stage, config.freq);
  EncodeOutput refined = run_blocks(prompted, ctx, weights.stage, config);
  out.features = std::move(refined.features);
  out.dft_count = refined.dft_count;
  out.unique_cells = refined.unique_cells;
  return out;
}

}  // namespace coplot
