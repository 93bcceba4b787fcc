#include "coplot/report.hpp"

#include "coplot/bytes.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>

namespace coplot {

using ojson = nlohmann::ordered_json;

std::string format_number(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

ojson to_json(const RunReport& r) {
  ojson j;
  j["seed"] = r.seed;
  j["ordering"] = r.ordering;
  j["score_mode"] = r.score_mode;
  j["top_k"] = r.top_k;
  j["noise_pos_std"] = r.noise_pos_std;
  j["noise_rot_std"] = r.noise_rot_std;
  auto& agents = j["agents"] = ojson::array();
  for (const auto& a : r.agents) {
    agents.push_back({{"agent_id", a.agent_id},
                      {"points", a.points},
                      {"tokens", a.tokens},
                      {"foreground", a.foreground},
                      {"selected", a.selected},
                      {"retained_foreground", a.retained_foreground},
                      {"token_bytes", a.token_bytes},
                      {"payload_bytes", a.payload_bytes},
                      {"total_bytes", a.total_bytes}});
  }
  j["fused_tokens"] = r.fused_tokens;
  j["neighbor_tokens"] = r.neighbor_tokens;
  j["neighbor_payload_bytes"] = r.neighbor_payload_bytes;
  j["neighbor_total_bytes"] = r.neighbor_total_bytes;
  j["neighbor_log2_bytes"] = r.neighbor_log2_bytes;
  j["flops"] = ojson::object();
  for (const auto& [k, v] : r.flops) j["flops"][k] = v;
  j["flops_total"] = r.flops_total;
  j["flops_fusion"] = r.flops_fusion;
  j["fg_recall"] = r.fg_recall;
  j["aligned_fg_hit_rate"] = r.aligned_fg_hit_rate;
  j["offset_loss"] = r.offset_loss;
  j["mean_gt_offset"] = r.mean_gt_offset;
  auto& align = j["alignment"] = ojson::array();
  for (const auto& a : r.alignment) {
    align.push_back({{"agent_id", a.agent_id},
                     {"tokens", a.tokens},
                     {"mean", a.mean},
                     {"stddev", a.stddev}});
  }
  j["locality"] = ojson::object();
  for (const auto& [k, v] : r.locality) j["locality"][k] = v;
  if (!r.wall_seconds.empty()) {
    j["wall_seconds"] = ojson::object();
    for (const auto& [k, v] : r.wall_seconds) j["wall_seconds"][k] = v;
  }
  j["warnings"] = r.warnings;
  return j;
}

RunReport from_json(const nlohmann::json& j) {
  RunReport r;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.ordering = j.at("ordering").get<std::string>();
  r.score_mode = j.at("score_mode").get<std::string>();
  r.top_k = j.at("top_k").get<std::uint64_t>();
  r.noise_pos_std = j.at("noise_pos_std").get<double>();
  r.noise_rot_std = j.at("noise_rot_std").get<double>();
  for (const auto& a : j.at("agents")) {
    AgentReport ar;
    ar.agent_id = a.at("agent_id").get<std::uint32_t>();
    ar.points = a.at("points").get<std::uint64_t>();
    ar.tokens = a.at("tokens").get<std::uint64_t>();
    ar.foreground = a.at("foreground").get<std::uint64_t>();
    ar.selected = a.at("selected").get<std::uint64_t>();
    ar.retained_foreground = a.at("retained_foreground").get<std::uint64_t>();
    ar.token_bytes = a.at("token_bytes").get<std::uint64_t>();
    ar.payload_bytes = a.at("payload_bytes").get<std::uint64_t>();
    ar.total_bytes = a.at("total_bytes").get<std::uint64_t>();
    r.agents.push_back(ar);
  }
  r.fused_tokens = j.at("fused_tokens").get<std::uint64_t>();
  r.neighbor_tokens = j.at("neighbor_tokens").get<std::uint64_t>();
  r.neighbor_payload_bytes = j.at("neighbor_payload_bytes").get<std::uint64_t>();
  r.neighbor_total_bytes = j.at("neighbor_total_bytes").get<std::uint64_t>();
  r.neighbor_log2_bytes = j.at("neighbor_log2_bytes").get<double>();
  r.flops = j.at("flops").get<FlopBreakdown>();
  r.flops_total = j.at("flops_total").get<std::uint64_t>();
  r.flops_fusion = j.at("flops_fusion").get<std::uint64_t>();
  r.fg_recall = j.at("fg_recall").get<double>();
  r.aligned_fg_hit_rate = j.at("aligned_fg_hit_rate").get<double>();
  r.offset_loss = j.at("offset_loss").get<double>();
  r.mean_gt_offset = j.at("mean_gt_offset").get<double>();
  for (const auto& a : j.at("alignment")) {
    AlignmentReport al;
    al.agent_id = a.at("agent_id").get<std::uint32_t>();
    al.tokens = a.at("tokens").get<std::uint64_t>();
    al.mean = a.at("mean").get<std::array<double, 3>>();
    al.stddev = a.at("stddev").get<std::array<double, 3>>();
    r.alignment.push_back(al);
  }
  r.locality = j.at("locality").get<std::map<std::string, double>>();
  if (j.contains("wall_seconds")) {
    r.wall_seconds = j.at("wall_seconds").get<std::map<std::string, double>>();
  }
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

}  // namespace

std::string report_to_json(const RunReport& report) { return to_json(report).dump(2) + "\n"; }

RunReport report_from_json(const std::string& text) {
  try {
    return from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("report: ") + e.what());
  }
}

std::string sweep_csv(std::span<const RunReport> reports) {
  std::string out =
      "seed,ordering,score_mode,top_k,noise_pos_std,noise_rot_std,neighbor_tokens,"
      "neighbor_payload_bytes,neighbor_total_bytes,neighbor_log2_bytes,fused_tokens,"
      "flops_total,flops_fusion,fg_recall,aligned_fg_hit_rate,offset_loss,mean_gt_offset\n";
  for (const auto& r : reports) {
    out += std::to_string(r.seed) + ',' + r.ordering + ',' + r.score_mode + ',' +
           std::to_string(r.top_k) + ',' + format_number(r.noise_pos_std) + ',' +
           format_number(r.noise_rot_std) + ',' + std::to_string(r.neighbor_tokens) + ',' +
           std::to_string(r.neighbor_payload_bytes) + ',' +
           std::to_string(r.neighbor_total_bytes) + ',' + format_number(r.neighbor_log2_bytes) +
           ',' + std::to_string(r.fused_tokens) + ',' + std::to_string(r.flops_total) + ',' +
           std::to_string(r.flops_fusion) + ',' + format_number(r.fg_recall) + ',' +
           format_number(r.aligned_fg_hit_rate) + ',' + format_number(r.offset_loss) + ',' +
           format_number(r.mean_gt_offset) + '\n';
  }
  return out;
}

std::string sweep_json(std::span<const RunReport> reports) {
  ojson arr = ojson::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  return arr.dump(2) + "\n";
}

std::string ordering_csv(std::span<const OrderingBenchRow> rows) {
  std::string out = "ordering,tokens,locality_gap\n";
  for (const auto& r : rows) {
    out += r.ordering + ',' + std::to_string(r.tokens) + ',' + format_number(r.locality) + '\n';
  }
  return out;
}

std::string scan_csv(std::span<const ScanBenchRow> rows) {
  std::string out = "tokens,flops,seconds\n";
  for (const auto& r : rows) {
    out += std::to_string(r.tokens) + ',' + std::to_string(r.flops) + ',' +
           format_number(r.seconds) + '\n';
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  bytes::write_file(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const std::string& path) {
  const auto data = bytes::read_file(path);
  return std::string(data.begin(), data.end());
}

}  // namespace coplot
