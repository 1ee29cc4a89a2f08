#pragma once

// Bare PPP frames as carried inside L2TP (no HDLC flags, FCS or 0xFF03
// address/control bytes) and the code/id/length packet layout shared by
// LCP, IPCP, IPV6CP and CHAP.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "swforge/bytes.hpp"

namespace swforge::ppp {

namespace proto {
inline constexpr std::uint16_t kIpv4 = 0x0021;
inline constexpr std::uint16_t kIpv6 = 0x0057;
inline constexpr std::uint16_t kIpcp = 0x8021;
inline constexpr std::uint16_t kIpv6cp = 0x8057;
inline constexpr std::uint16_t kLcp = 0xC021;
inline constexpr std::uint16_t kChap = 0xC223;
}  // namespace proto

bool is_known_protocol(std::uint16_t protocol) noexcept;
std::string_view protocol_name(std::uint16_t protocol) noexcept;

struct Frame {
  std::uint16_t protocol = 0;
  Bytes payload;

  bool operator==(const Frame&) const = default;
};

inline constexpr std::size_t kProtocolFieldSize = 2;

Bytes encode_frame(const Frame& f);
Frame decode_frame(ByteView wire);

// Control protocol codes.
namespace code {
inline constexpr std::uint8_t kConfigureRequest = 1;
inline constexpr std::uint8_t kConfigureAck = 2;
inline constexpr std::uint8_t kConfigureNak = 3;
inline constexpr std::uint8_t kConfigureReject = 4;
inline constexpr std::uint8_t kTerminateRequest = 5;
inline constexpr std::uint8_t kTerminateAck = 6;
inline constexpr std::uint8_t kCodeReject = 7;
inline constexpr std::uint8_t kProtocolReject = 8;
inline constexpr std::uint8_t kEchoRequest = 9;
inline constexpr std::uint8_t kEchoReply = 10;
inline constexpr std::uint8_t kDiscardRequest = 11;
}  // namespace code

namespace chap_code {
inline constexpr std::uint8_t kChallenge = 1;
inline constexpr std::uint8_t kResponse = 2;
inline constexpr std::uint8_t kSuccess = 3;
inline constexpr std::uint8_t kFailure = 4;
}  // namespace chap_code

struct CpPacket {
  std::uint8_t code = 0;
  std::uint8_t id = 0;
  Bytes data;

  bool operator==(const CpPacket&) const = default;
};

Bytes encode_cp(const CpPacket& p);
CpPacket decode_cp(ByteView wire);

struct CpOption {
  std::uint8_t type = 0;
  Bytes data;

  bool operator==(const CpOption&) const = default;
};

using Options = std::vector<CpOption>;

Bytes encode_options(const Options& opts);
Options decode_options(ByteView wire);

// CHAP Challenge/Response body: value-size, value, name.
struct ChapValue {
  Bytes value;
  std::string name;

  bool operator==(const ChapValue&) const = default;
};

Bytes encode_chap_value(const ChapValue& v);
ChapValue decode_chap_value(ByteView wire);

}  // namespace swforge::ppp
