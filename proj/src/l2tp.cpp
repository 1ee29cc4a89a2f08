#include "swforge/l2tp.hpp"

#include <algorithm>
#include <array>

namespace swforge::l2tp {

namespace {

constexpr std::uint16_t kFlagT = 0x8000;
constexpr std::uint16_t kFlagL = 0x4000;
constexpr std::uint16_t kFlagS = 0x0800;
constexpr std::uint16_t kFlagO = 0x0200;
constexpr std::uint16_t kFlagP = 0x0100;
constexpr std::uint16_t kVersionMask = 0x000f;

constexpr std::uint16_t kAvpFlagM = 0x8000;
constexpr std::uint16_t kAvpFlagH = 0x4000;
constexpr std::uint16_t kAvpLengthMask = 0x03ff;

void check_header(const Header& h) {
  if (h.version != kVersion) {
    throw Error(Errc::InvalidHeader, "version " + std::to_string(h.version) + " is not 2");
  }
  if (h.has_length != h.length.has_value()) {
    throw Error(Errc::InvalidHeader, "length flag and length field disagree");
  }
  if (h.has_sequence != (h.ns.has_value() && h.nr.has_value())) {
    throw Error(Errc::InvalidHeader, "sequence flag and Ns/Nr fields disagree");
  }
  if (h.is_control && (!h.has_length || !h.has_sequence || h.has_offset || h.priority)) {
    throw Error(Errc::InvalidHeader, "control header requires L=1 S=1 O=0 P=0");
  }
}

struct AvpRule {
  AvpType type;
  Relevance relevance;
};

struct MessageRules {
  MessageType message;
  std::vector<AvpRule> rules;
};

// Required lists follow the softwire profile's establishment tables;
// StopCCN, HELLO and CDN use the base L2TPv2 mandatory sets.
const std::vector<MessageRules>& relevance_table() {
  using enum AvpType;
  constexpr auto R = Relevance::Required;
  constexpr auto O = Relevance::Optional;
  static const std::vector<MessageRules> table = {
      {MessageType::SCCRQ,
       {{MessageType, R}, {ProtocolVersion, R}, {HostName, R}, {FramingCapabilities, R},
        {AssignedTunnelId, R}, {ReceiveWindowSize, O}, {Challenge, O}, {FirmwareRevision, O},
        {VendorName, O}}},
      {MessageType::SCCRP,
       {{MessageType, R}, {ProtocolVersion, R}, {FramingCapabilities, R}, {HostName, R},
        {AssignedTunnelId, R}, {FirmwareRevision, O}, {VendorName, O}, {ReceiveWindowSize, O},
        {Challenge, O}, {ChallengeResponse, O}}},
      {MessageType::SCCCN, {{MessageType, R}, {ChallengeResponse, O}}},
      {MessageType::StopCCN, {{MessageType, R}, {AssignedTunnelId, R}, {ResultCode, R}}},
      {MessageType::HELLO, {{MessageType, R}}},
      {MessageType::ICRQ, {{MessageType, R}, {AssignedSessionId, R}, {CallSerialNumber, R}}},
      {MessageType::ICRP, {{MessageType, R}, {AssignedSessionId, R}}},
      {MessageType::ICCN, {{MessageType, R}, {TxConnectSpeed, R}, {FramingType, R}}},
      {MessageType::CDN, {{MessageType, R}, {ResultCode, R}, {AssignedSessionId, R}}},
      // Outgoing-call and ISDN messages are never part of a softwire; only the
      // Message Type AVP is needed to recognise and reject them.
      {MessageType::OCRQ, {{MessageType, R}}},
      {MessageType::OCRP, {{MessageType, R}}},
      {MessageType::OCCN, {{MessageType, R}}},
      {MessageType::WEN, {{MessageType, R}}},
      {MessageType::SLI, {{MessageType, R}}},
  };
  return table;
}

}  // namespace

std::size_t Header::wire_size() const {
  std::size_t n = 6;
  if (has_length) n += 2;
  if (has_sequence) n += 4;
  if (has_offset) n += 2 + offset_size;
  return n;
}

void encode_header(const Header& h, ByteWriter& w) {
  check_header(h);
  std::uint16_t flags = h.version;
  if (h.is_control) flags |= kFlagT;
  if (h.has_length) flags |= kFlagL;
  if (h.has_sequence) flags |= kFlagS;
  if (h.has_offset) flags |= kFlagO;
  if (h.priority) flags |= kFlagP;
  w.u16(flags);
  if (h.has_length) w.u16(*h.length);
  w.u16(h.tunnel_id);
  w.u16(h.session_id);
  if (h.has_sequence) {
    w.u16(*h.ns);
    w.u16(*h.nr);
  }
  if (h.has_offset) {
    w.u16(h.offset_size);
    for (std::uint16_t i = 0; i < h.offset_size; ++i) w.u8(0);
  }
}

Bytes encode_header(const Header& h) {
  ByteWriter w;
  encode_header(h, w);
  return w.take();
}

DecodedHeader decode_header(ByteView wire) {
  ByteReader r(wire);
  const auto flags = r.u16();
  Header h;
  h.version = static_cast<std::uint8_t>(flags & kVersionMask);
  if (h.version != kVersion) {
    throw Error(Errc::BadVersion, "version " + std::to_string(h.version));
  }
  h.is_control = flags & kFlagT;
  h.has_length = flags & kFlagL;
  h.has_sequence = flags & kFlagS;
  h.has_offset = flags & kFlagO;
  h.priority = flags & kFlagP;
  if (h.is_control && (!h.has_length || !h.has_sequence || h.has_offset || h.priority)) {
    throw Error(Errc::InvalidHeader, "control header requires L=1 S=1 O=0 P=0");
  }
  if (h.has_length) h.length = r.u16();
  h.tunnel_id = r.u16();
  h.session_id = r.u16();
  if (h.has_sequence) {
    h.ns = r.u16();
    h.nr = r.u16();
  }
  if (h.has_offset) {
    h.offset_size = r.u16();
    r.skip(h.offset_size);
  }
  return {h, r.pos()};
}

std::string_view to_string(MessageType t) noexcept {
  switch (t) {
    case MessageType::ZLB: return "ZLB";
    case MessageType::SCCRQ: return "SCCRQ";
    case MessageType::SCCRP: return "SCCRP";
    case MessageType::SCCCN: return "SCCCN";
    case MessageType::StopCCN: return "StopCCN";
    case MessageType::HELLO: return "HELLO";
    case MessageType::OCRQ: return "OCRQ";
    case MessageType::OCRP: return "OCRP";
    case MessageType::OCCN: return "OCCN";
    case MessageType::ICRQ: return "ICRQ";
    case MessageType::ICRP: return "ICRP";
    case MessageType::ICCN: return "ICCN";
    case MessageType::CDN: return "CDN";
    case MessageType::WEN: return "WEN";
    case MessageType::SLI: return "SLI";
  }
  return "?";
}

std::optional<MessageType> message_type_from_wire(std::uint16_t v) noexcept {
  switch (v) {
    case 1: case 2: case 3: case 4: case 6: case 7: case 8: case 9:
    case 10: case 11: case 12: case 14: case 15: case 16:
      return static_cast<MessageType>(v);
    default:
      return std::nullopt;
  }
}

bool is_known_avp(std::uint16_t vendor_id, std::uint16_t attribute_type) noexcept {
  return vendor_id == 0 && attribute_type <= 39 && attribute_type != 20;
}

std::string avp_name(std::uint16_t vendor_id, std::uint16_t attribute_type) {
  static constexpr std::array<const char*, 40> kNames = {
      "Message Type", "Result Code", "Protocol Version", "Framing Capabilities",
      "Bearer Capabilities", "Tie Breaker", "Firmware Revision", "Host Name", "Vendor Name",
      "Assigned Tunnel ID", "Receive Window Size", "Challenge", "Q.931 Cause Code",
      "Challenge Response", "Assigned Session ID", "Call Serial Number", "Minimum BPS",
      "Maximum BPS", "Bearer Type", "Framing Type", nullptr, "Called Number", "Calling Number",
      "Sub-Address", "Tx Connect Speed", "Physical Channel ID", "Initial Received LCP CONFREQ",
      "Last Sent LCP CONFREQ", "Last Received LCP CONFREQ", "Proxy Authen Type",
      "Proxy Authen Name", "Proxy Authen Challenge", "Proxy Authen ID", "Proxy Authen Response",
      "Call Errors", "ACCM", "Random Vector", "Private Group ID", "Rx Connect Speed",
      "Sequencing Required"};
  if (is_known_avp(vendor_id, attribute_type)) return kNames[attribute_type];
  if (vendor_id != 0) {
    return "vendor:" + std::to_string(vendor_id) + "/" + std::to_string(attribute_type);
  }
  return "attr:" + std::to_string(attribute_type);
}

Avp Avp::u16(AvpType t, std::uint16_t v, bool mandatory) {
  ByteWriter w;
  w.u16(v);
  return raw(t, w.take(), mandatory);
}

Avp Avp::u32(AvpType t, std::uint32_t v, bool mandatory) {
  ByteWriter w;
  w.u32(v);
  return raw(t, w.take(), mandatory);
}

Avp Avp::text(AvpType t, std::string_view s, bool mandatory) {
  return raw(t, Bytes(s.begin(), s.end()), mandatory);
}

Avp Avp::raw(AvpType t, Bytes v, bool mandatory) {
  Avp a;
  a.mandatory = mandatory;
  a.attribute_type = static_cast<std::uint16_t>(t);
  a.value = std::move(v);
  return a;
}

std::uint16_t Avp::as_u16() const {
  if (value.size() != 2) throw Error(Errc::MalformedMessage, avp_name(vendor_id, attribute_type) + " is not 16-bit");
  return ByteReader(value).u16();
}

std::uint32_t Avp::as_u32() const {
  if (value.size() != 4) throw Error(Errc::MalformedMessage, avp_name(vendor_id, attribute_type) + " is not 32-bit");
  return ByteReader(value).u32();
}

std::string Avp::as_text() const { return std::string(value.begin(), value.end()); }

void encode_avp(const Avp& a, ByteWriter& w) {
  if (a.value.size() > kMaxAvpValue) {
    throw Error(Errc::ValueTooLong, std::to_string(a.value.size()) + " value bytes");
  }
  std::uint16_t word = static_cast<std::uint16_t>(kAvpHeaderSize + a.value.size());
  if (a.mandatory) word |= kAvpFlagM;
  if (a.hidden) word |= kAvpFlagH;
  w.u16(word);
  w.u16(a.vendor_id);
  w.u16(a.attribute_type);
  w.bytes(a.value);
}

Bytes encode_avp(const Avp& a) {
  ByteWriter w;
  encode_avp(a, w);
  return w.take();
}

DecodedAvp decode_avp(ByteView wire) {
  ByteReader r(wire);
  const auto word = r.u16();
  const std::size_t length = word & kAvpLengthMask;
  if (length < kAvpHeaderSize) {
    throw Error(Errc::MalformedMessage, "AVP length " + std::to_string(length) + " below header size");
  }
  Avp a;
  a.mandatory = word & kAvpFlagM;
  a.hidden = word & kAvpFlagH;
  a.vendor_id = r.u16();
  a.attribute_type = r.u16();
  auto v = r.take(length - kAvpHeaderSize);
  a.value.assign(v.begin(), v.end());
  return {std::move(a), length};
}

ControlMessage ControlMessage::make(MessageType type, std::uint16_t tunnel_id,
                                    std::uint16_t session_id, std::vector<Avp> body) {
  ControlMessage m;
  m.type = type;
  m.header.is_control = true;
  m.header.has_length = true;
  m.header.has_sequence = true;
  m.header.tunnel_id = tunnel_id;
  m.header.session_id = session_id;
  m.header.ns = 0;
  m.header.nr = 0;
  if (type != MessageType::ZLB) {
    m.avps.push_back(Avp::u16(AvpType::MessageType, static_cast<std::uint16_t>(type)));
  }
  for (auto& a : body) m.avps.push_back(std::move(a));
  return m;
}

ControlMessage ControlMessage::zlb(std::uint16_t tunnel_id) {
  return make(MessageType::ZLB, tunnel_id, 0);
}

const Avp* ControlMessage::find(AvpType t) const {
  auto it = std::find_if(avps.begin(), avps.end(), [t](const Avp& a) { return a.is(t); });
  return it == avps.end() ? nullptr : &*it;
}

Bytes encode_message(const ControlMessage& m) {
  if (m.type == MessageType::ZLB) {
    if (!m.avps.empty()) throw Error(Errc::MalformedMessage, "ZLB carries AVPs");
  } else if (m.avps.empty() || !m.avps.front().is(AvpType::MessageType) ||
             m.avps.front().as_u16() != static_cast<std::uint16_t>(m.type)) {
    throw Error(Errc::MalformedMessage, "first AVP must be the matching Message Type");
  }
  Header h = m.header;
  h.is_control = true;
  h.has_length = true;
  h.has_sequence = true;
  h.has_offset = false;
  h.priority = false;
  h.version = kVersion;
  h.length = 0;
  if (!h.ns) h.ns = 0;
  if (!h.nr) h.nr = 0;

  ByteWriter w;
  encode_header(h, w);
  for (const auto& a : m.avps) encode_avp(a, w);
  if (w.size() > 0xffff) throw Error(Errc::ValueTooLong, "control message exceeds 65535 bytes");
  Bytes out = w.take();
  ByteWriter patch(out);
  patch.patch_u16(2, static_cast<std::uint16_t>(out.size()));
  return out;
}

ControlMessage decode_message(ByteView wire) {
  auto [h, header_size] = decode_header(wire);
  if (!h.is_control) throw Error(Errc::InvalidHeader, "not a control message");
  if (*h.length < header_size) throw Error(Errc::MalformedMessage, "length shorter than header");
  if (*h.length > wire.size()) {
    throw Error(Errc::Truncated, "declared length " + std::to_string(*h.length) + " exceeds " +
                                     std::to_string(wire.size()) + " bytes");
  }
  ControlMessage m;
  m.header = h;
  auto body = wire.subspan(header_size, *h.length - header_size);
  while (!body.empty()) {
    auto [avp, size] = decode_avp(body);
    if (avp.hidden) {
      throw Error(Errc::HiddenAvpRejected, avp_name(avp.vendor_id, avp.attribute_type));
    }
    m.avps.push_back(std::move(avp));
    body = body.subspan(size);
  }
  if (m.avps.empty()) {
    m.type = MessageType::ZLB;
    return m;
  }
  const auto& first = m.avps.front();
  if (!first.is(AvpType::MessageType)) {
    throw Error(Errc::MalformedMessage, "first AVP is not Message Type");
  }
  auto type = message_type_from_wire(first.as_u16());
  if (!type) throw Error(Errc::UnknownMessageType, std::to_string(first.as_u16()));
  m.type = *type;
  for (const auto& a : m.avps) {
    if (a.mandatory && !is_known_avp(a.vendor_id, a.attribute_type)) {
      throw Error(Errc::MandatoryUnknownAvp, avp_name(a.vendor_id, a.attribute_type));
    }
  }
  return m;
}

std::string_view to_string(Relevance r) noexcept {
  switch (r) {
    case Relevance::Required: return "Required";
    case Relevance::Optional: return "Optional";
    case Relevance::NotRelevant: return "NotRelevant";
  }
  return "?";
}

Relevance classify_avp(MessageType msg, AvpType attr) noexcept {
  for (const auto& entry : relevance_table()) {
    if (entry.message != msg) continue;
    for (const auto& rule : entry.rules) {
      if (rule.type == attr) return rule.relevance;
    }
    break;
  }
  return Relevance::NotRelevant;
}

Relevance classify_avp(MessageType msg, const Avp& avp) noexcept {
  if (!is_known_avp(avp.vendor_id, avp.attribute_type)) return Relevance::NotRelevant;
  return classify_avp(msg, static_cast<AvpType>(avp.attribute_type));
}

std::vector<AvpType> required_avps(MessageType msg) {
  std::vector<AvpType> out;
  for (const auto& entry : relevance_table()) {
    if (entry.message != msg) continue;
    for (const auto& rule : entry.rules) {
      if (rule.relevance == Relevance::Required) out.push_back(rule.type);
    }
  }
  return out;
}

bool is_ignorable(MessageType msg, const Avp& avp) noexcept {
  return classify_avp(msg, avp) == Relevance::NotRelevant;
}

}  // namespace swforge::l2tp
