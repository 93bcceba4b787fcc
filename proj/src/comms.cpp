#include "coplot/comms.hpp"

#include "coplot/bytes.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

namespace coplot {

namespace {
constexpr char kMagic[4] = {'C', 'P', 'L', 'T'};
}

void MessagePacket::validate() const {
  if (features.size() != static_cast<std::size_t>(k) * d) {
    throw InvalidInput("packet: feature count does not match k x d");
  }
  if (coords.size() != static_cast<std::size_t>(k) * 3) {
    throw InvalidInput("packet: coordinate count does not match k x 3");
  }
  auto finite = [](float v) { return std::isfinite(v); };
  if (!std::all_of(features.begin(), features.end(), finite) ||
      !std::all_of(coords.begin(), coords.end(), finite) ||
      !std::all_of(pose.begin(), pose.end(), finite)) {
    throw InvalidInput("packet: non-finite value");
  }
}

Pose MessagePacket::to_pose() const {
  return Pose{Vec3{pose[0], pose[1], pose[2]}, pose[3], pose[4], pose[5]};
}

MessagePacket make_packet(std::uint32_t agent_id, const Matrix& features,
                          std::span<const Vec3> coords, const Pose& pose) {
  if (static_cast<std::size_t>(features.rows()) != coords.size()) {
    throw InvalidInput("make_packet: feature rows do not match coordinate count");
  }
  MessagePacket p;
  p.agent_id = agent_id;
  p.k = static_cast<std::uint32_t>(coords.size());
  p.d = static_cast<std::uint32_t>(features.cols());
  p.features.reserve(static_cast<std::size_t>(features.size()));
  for (Eigen::Index r = 0; r < features.rows(); ++r)
    for (Eigen::Index c = 0; c < features.cols(); ++c)
      p.features.push_back(static_cast<float>(features(r, c)));
  p.coords.reserve(coords.size() * 3);
  for (const auto& c : coords)
    for (int a = 0; a < 3; ++a) p.coords.push_back(static_cast<float>(c[a]));
  p.pose = {static_cast<float>(pose.position.x()), static_cast<float>(pose.position.y()),
            static_cast<float>(pose.position.z()), static_cast<float>(pose.yaw),
            static_cast<float>(pose.pitch), static_cast<float>(pose.roll)};
  p.validate();
  return p;
}

bool bitwise_equal(const MessagePacket& a, const MessagePacket& b) {
  auto same = [](const auto& x, const auto& y) {
    return x.size() == y.size() &&
           (x.empty() || std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) == 0);
  };
  return a.agent_id == b.agent_id && a.k == b.k && a.d == b.d && same(a.features, b.features) &&
         same(a.coords, b.coords) && std::memcmp(a.pose.data(), b.pose.data(), sizeof(a.pose)) == 0;
}

std::vector<std::uint8_t> pack(const MessagePacket& packet) {
  packet.validate();
  std::vector<std::uint8_t> out;
  out.reserve(comm_volume(packet).total_bytes);
  out.insert(out.end(), kMagic, kMagic + 4);
  bytes::put<std::uint16_t>(out, kPacketVersion);
  bytes::put<std::uint32_t>(out, packet.agent_id);
  bytes::put<std::uint32_t>(out, packet.k);
  bytes::put<std::uint32_t>(out, packet.d);
  for (float v : packet.pose) bytes::put<float>(out, v);
  for (float v : packet.coords) bytes::put<float>(out, v);
  for (float v : packet.features) bytes::put<float>(out, v);
  return out;
}

MessagePacket unpack_prefix(std::span<const std::uint8_t> in, std::size_t& consumed) {
  if (in.size() < 4 || std::memcmp(in.data(), kMagic, 4) != 0) {
    throw DecodeError(DecodeError::Kind::kBadMagic, "packet: magic check failed (expected \"CPLT\")");
  }
  if (in.size() < kPacketHeaderBytes) {
    throw DecodeError(DecodeError::Kind::kLength,
                      "packet: truncated header, expected " + std::to_string(kPacketHeaderBytes) +
                          " bytes, got " + std::to_string(in.size()));
  }
  const auto version = bytes::get<std::uint16_t>(in, 4);
  if (version != kPacketVersion) {
    throw DecodeError(DecodeError::Kind::kVersionMismatch,
                      "packet: version " + std::to_string(version) + " unsupported, expected " +
                          std::to_string(kPacketVersion));
  }
  MessagePacket p;
  p.agent_id = bytes::get<std::uint32_t>(in, 6);
  p.k = bytes::get<std::uint32_t>(in, 10);
  p.d = bytes::get<std::uint32_t>(in, 14);
  const std::uint64_t expected = comm_volume(p.k, p.d).total_bytes;
  if (in.size() < expected) {
    throw DecodeError(DecodeError::Kind::kLength,
                      "packet: truncated body, expected " + std::to_string(expected) +
                          " bytes, got " + std::to_string(in.size()));
  }
  std::size_t o = kPacketHeaderBytes;
  for (auto& v : p.pose) {
    v = bytes::get<float>(in, o);
    o += 4;
  }
  p.coords.resize(static_cast<std::size_t>(p.k) * 3);
  for (auto& v : p.coords) {
    v = bytes::get<float>(in, o);
    o += 4;
  }
  p.features.resize(static_cast<std::size_t>(p.k) * p.d);
  for (auto& v : p.features) {
    v = bytes::get<float>(in, o);
    o += 4;
  }
  consumed = o;
  return p;
}

MessagePacket unpack(std::span<const std::uint8_t> in) {
  std::size_t consumed = 0;
  MessagePacket p = unpack_prefix(in, consumed);
  if (consumed != in.size()) {
    throw DecodeError(DecodeError::Kind::kLength,
                      "packet: length mismatch, expected " + std::to_string(consumed) +
                          " bytes, got " + std::to_string(in.size()));
  }
  return p;
}

CommReport comm_volume(std::uint64_t k, std::uint64_t d) {
  CommReport r;
  r.token_bytes = 4 * k * (d + 3);
  r.payload_bytes = r.token_bytes + 4 * 6;
  r.total_bytes = r.payload_bytes + kPacketHeaderBytes;
  r.log2_bytes = std::log2(static_cast<double>(r.total_bytes));
  return r;
}

void write_packets(const std::string& path, std::span<const MessagePacket> packets) {
  std::vector<std::uint8_t> out;
  for (const auto& p : packets) {
    const auto b = pack(p);
    out.insert(out.end(), b.begin(), b.end());
  }
  bytes::write_file(path, out);
}

std::vector<MessagePacket> read_packets(const std::string& path) {
  const auto data = bytes::read_file(path);
  std::span<const std::uint8_t> rest(data);
  std::vector<MessagePacket> out;
  while (!rest.empty()) {
    std::size_t consumed = 0;
    out.push_back(unpack_prefix(rest, consumed));
    rest = rest.subspan(consumed);
  }
  return out;
}

}  // namespace coplot
