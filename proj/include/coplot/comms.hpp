#pragma once

// Message packet codec and communication-volume accounting.
//
// Wire layout, all little-endian:
//   "CPLT" | version u16 | agent_id u32 | k u32 | d u32      (18-byte header)
//   pose 6 x f32 (x, y, z, yaw, pitch, roll)
//   coords k x 3 x f32
//   features k x d x f32

#include "coplot/common.hpp"
#include "coplot/geometry.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace coplot {

inline constexpr std::uint16_t kPacketVersion = 1;
inline constexpr std::size_t kPacketHeaderBytes = 18;

struct MessagePacket {
  std::uint32_t agent_id = 0;
  std::uint32_t k = 0;
  std::uint32_t d = 0;
  std::vector<float> features;  // k x d, row-major
  std::vector<float> coords;    // k x 3, row-major
  std::array<float, 6> pose{};

  void validate() const;
  Pose to_pose() const;
  bool operator==(const MessagePacket&) const = default;
};

MessagePacket make_packet(std::uint32_t agent_id, const Matrix& features,
                          std::span<const Vec3> coords, const Pose& pose);

/// Bit-exact equality (distinguishes -0.0 from 0.0 and compares NaN payloads).
bool bitwise_equal(const MessagePacket& a, const MessagePacket& b);

class DecodeError : public std::runtime_error {
 public:
  enum class Kind { kBadMagic, kVersionMismatch, kLength };
  DecodeError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::vector<std::uint8_t> pack(const MessagePacket& packet);
/// Exact inverse of pack; the buffer must hold exactly one packet.
MessagePacket unpack(std::span<const std::uint8_t> bytes);
/// Decodes one packet from the front of a stream and reports its length.
MessagePacket unpack_prefix(std::span<const std::uint8_t> bytes, std::size_t& consumed);

struct CommReport {
  std::uint64_t token_bytes = 0;  // features + coords only: 4 * k * (d + 3)
  std::uint64_t payload_bytes = 0;
  std::uint64_t total_bytes = 0;
  double log2_bytes = 0.0;
};

/// payload = 4 * (k * (d + 3) + 6); total adds the header.
CommReport comm_volume(std::uint64_t k, std::uint64_t d);
inline CommReport comm_volume(const MessagePacket& packet) {
  return comm_volume(packet.k, packet.d);
}

/// Replay file: packets concatenated back to back.
void write_packets(const std::string& path, std::span<const MessagePacket> packets);
std::vector<MessagePacket> read_packets(const std::string& path);

}  // namespace coplot
