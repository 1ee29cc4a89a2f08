#pragma once

// L2TPv2 header, AVP and control-message codec, plus the
// per-message AVP relevance table used by the softwire profile.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "swforge/bytes.hpp"

namespace swforge::l2tp {

inline constexpr std::uint16_t kUdpPort = 1701;
inline constexpr std::uint8_t kVersion = 2;
inline constexpr std::size_t kAvpHeaderSize = 6;
inline constexpr std::size_t kMaxAvpLength = 1023;
inline constexpr std::size_t kMaxAvpValue = kMaxAvpLength - kAvpHeaderSize;

struct Header {
  bool is_control = false;
  bool has_length = false;
  bool has_sequence = false;
  bool has_offset = false;
  bool priority = false;
  std::uint8_t version = kVersion;
  std::optional<std::uint16_t> length;
  std::uint16_t tunnel_id = 0;
  std::uint16_t session_id = 0;
  std::optional<std::uint16_t> ns;
  std::optional<std::uint16_t> nr;
  std::uint16_t offset_size = 0;  // only meaningful with has_offset

  /// Size in bytes this header occupies on the wire.
  std::size_t wire_size() const;
  bool operator==(const Header&) const = default;
};

struct DecodedHeader {
  Header header;
  std::size_t size = 0;  // bytes consumed, including offset padding
};

Bytes encode_header(const Header& h);
void encode_header(const Header& h, ByteWriter& w);
DecodedHeader decode_header(ByteView wire);

enum class MessageType : std::uint16_t {
  ZLB = 0,  // no Message Type AVP on the wire
  SCCRQ = 1,
  SCCRP = 2,
  SCCCN = 3,
  StopCCN = 4,
  HELLO = 6,
  OCRQ = 7,
  OCRP = 8,
  OCCN = 9,
  ICRQ = 10,
  ICRP = 11,
  ICCN = 12,
  CDN = 14,
  WEN = 15,
  SLI = 16,
};

std::string_view to_string(MessageType t) noexcept;
std::optional<MessageType> message_type_from_wire(std::uint16_t v) noexcept;

enum class AvpType : std::uint16_t {
  MessageType = 0,
  ResultCode = 1,
  ProtocolVersion = 2,
  FramingCapabilities = 3,
  BearerCapabilities = 4,
  TieBreaker = 5,
  FirmwareRevision = 6,
  HostName = 7,
  VendorName = 8,
  AssignedTunnelId = 9,
  ReceiveWindowSize = 10,
  Challenge = 11,
  Q931CauseCode = 12,
  ChallengeResponse = 13,
  AssignedSessionId = 14,
  CallSerialNumber = 15,
  MinimumBps = 16,
  MaximumBps = 17,
  BearerType = 18,
  FramingType = 19,
  CalledNumber = 21,
  CallingNumber = 22,
  SubAddress = 23,
  TxConnectSpeed = 24,
  PhysicalChannelId = 25,
  InitialReceivedLcpConfReq = 26,
  LastSentLcpConfReq = 27,
  LastReceivedLcpConfReq = 28,
  ProxyAuthenType = 29,
  ProxyAuthenName = 30,
  ProxyAuthenChallenge = 31,
  ProxyAuthenId = 32,
  ProxyAuthenResponse = 33,
  CallErrors = 34,
  Accm = 35,
  RandomVector = 36,
  PrivateGroupId = 37,
  RxConnectSpeed = 38,
  SequencingRequired = 39,
};

/// Name for IETF attribute types; "vendor:<id>/<type>" or "attr:<n>" otherwise.
std::string avp_name(std::uint16_t vendor_id, std::uint16_t attribute_type);
/// True for IETF attribute types defined by base L2TPv2.
bool is_known_avp(std::uint16_t vendor_id, std::uint16_t attribute_type) noexcept;

// Framing Capabilities / Framing Type bits.
inline constexpr std::uint32_t kFramingSync = 0x1;
inline constexpr std::uint32_t kFramingAsync = 0x2;

struct Avp {
  bool mandatory = true;
  bool hidden = false;
  std::uint16_t vendor_id = 0;
  std::uint16_t attribute_type = 0;
  Bytes value;

  static Avp u16(AvpType t, std::uint16_t v, bool mandatory = true);
  static Avp u32(AvpType t, std::uint32_t v, bool mandatory = true);
  static Avp text(AvpType t, std::string_view s, bool mandatory = true);
  static Avp raw(AvpType t, Bytes v, bool mandatory = true);

  bool is(AvpType t) const { return vendor_id == 0 && attribute_type == static_cast<std::uint16_t>(t); }
  std::uint16_t as_u16() const;
  std::uint32_t as_u32() const;
  std::string as_text() const;

  bool operator==(const Avp&) const = default;
};

Bytes encode_avp(const Avp& a);
void encode_avp(const Avp& a, ByteWriter& w);

struct DecodedAvp {
  Avp avp;
  std::size_t size = 0;
};
DecodedAvp decode_avp(ByteView wire);

struct ControlMessage {
  Header header;
  MessageType type = MessageType::ZLB;
  std::vector<Avp> avps;  // avps[0] is Message Type unless ZLB

  /// Builds a message whose first AVP is the mandatory Message Type AVP.
  static ControlMessage make(MessageType type, std::uint16_t tunnel_id, std::uint16_t session_id,
                             std::vector<Avp> body = {});
  static ControlMessage zlb(std::uint16_t tunnel_id);

  const Avp* find(AvpType t) const;
  bool operator==(const ControlMessage&) const = default;
};

/// Encodes with canonical control header flags (T, L, S set) and computed length.
/// Header ns/nr default to 0 when unset.
Bytes encode_message(const ControlMessage& m);
ControlMessage decode_message(ByteView wire);

enum class Relevance : std::uint8_t { Required, Optional, NotRelevant };
std::string_view to_string(Relevance r) noexcept;

/// Softwire-profile classification of an IETF attribute type on a message.
Relevance classify_avp(MessageType msg, AvpType attr) noexcept;
Relevance classify_avp(MessageType msg, const Avp& avp) noexcept;
std::vector<AvpType> required_avps(MessageType msg);

/// Unknown or not-relevant AVPs are retained by the decoder but carry no meaning.
bool is_ignorable(MessageType msg, const Avp& avp) noexcept;

/// StopCCN result codes.
namespace result {
inline constexpr std::uint16_t kClearConnection = 1;
inline constexpr std::uint16_t kGeneralError = 2;
inline constexpr std::uint16_t kAlreadyExists = 3;
inline constexpr std::uint16_t kNotAuthorized = 4;
inline constexpr std::uint16_t kBadProtocolVersion = 5;
inline constexpr std::uint16_t kShuttingDown = 6;
inline constexpr std::uint16_t kFsmError = 7;
}  // namespace result

/// General error codes carried after the result code.
namespace error_code {
inline constexpr std::uint16_t kNone = 0;
inline constexpr std::uint16_t kNoControlConnection = 1;
inline constexpr std::uint16_t kBadLength = 2;
inline constexpr std::uint16_t kOutOfRange = 3;
inline constexpr std::uint16_t kInsufficientResources = 4;
inline constexpr std::uint16_t kInvalidSessionId = 5;
inline constexpr std::uint16_t kVendorError = 6;
inline constexpr std::uint16_t kTryAnother = 7;
inline constexpr std::uint16_t kUnknownMandatoryAvp = 8;
}  // namespace error_code

}  // namespace swforge::l2tp
