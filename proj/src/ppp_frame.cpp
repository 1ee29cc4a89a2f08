#include "swforge/ppp_frame.hpp"

namespace swforge::ppp {

bool is_known_protocol(std::uint16_t protocol) noexcept {
  switch (protocol) {
    case proto::kIpv4:
    case proto::kIpv6:
    case proto::kIpcp:
    case proto::kIpv6cp:
    case proto::kLcp:
    case proto::kChap:
      return true;
    default:
      return false;
  }
}

std::string_view protocol_name(std::uint16_t protocol) noexcept {
  switch (protocol) {
    case proto::kIpv4: return "IPv4";
    case proto::kIpv6: return "IPv6";
    case proto::kIpcp: return "IPCP";
    case proto::kIpv6cp: return "IPV6CP";
    case proto::kLcp: return "LCP";
    case proto::kChap: return "CHAP";
    default: return "unknown";
  }
}

Bytes encode_frame(const Frame& f) {
  if (!is_known_protocol(f.protocol)) {
    throw Error(Errc::UnknownProtocol, "protocol " + std::to_string(f.protocol));
  }
  ByteWriter w;
  w.u16(f.protocol);
  w.bytes(f.payload);
  return w.take();
}

Frame decode_frame(ByteView wire) {
  ByteReader r(wire);
  Frame f;
  f.protocol = r.u16();
  if (!is_known_protocol(f.protocol)) {
    throw Error(Errc::UnknownProtocol, "protocol " + std::to_string(f.protocol));
  }
  auto rest = r.rest();
  f.payload.assign(rest.begin(), rest.end());
  return f;
}

Bytes encode_cp(const CpPacket& p) {
  if (p.data.size() + 4 > 0xffff) throw Error(Errc::ValueTooLong, "control packet too long");
  ByteWriter w;
  w.u8(p.code);
  w.u8(p.id);
  w.u16(static_cast<std::uint16_t>(p.data.size() + 4));
  w.bytes(p.data);
  return w.take();
}

CpPacket decode_cp(ByteView wire) {
  ByteReader r(wire);
  CpPacket p;
  p.code = r.u8();
  p.id = r.u8();
  auto len = r.u16();
  if (len < 4) throw Error(Errc::MalformedMessage, "control packet length below 4");
  auto body = r.take(len - 4u);  // trailing padding beyond length is ignored
  p.data.assign(body.begin(), body.end());
  return p;
}

Bytes encode_options(const Options& opts) {
  ByteWriter w;
  for (const auto& o : opts) {
    if (o.data.size() + 2 > 0xff) throw Error(Errc::ValueTooLong, "option too long");
    w.u8(o.type);
    w.u8(static_cast<std::uint8_t>(o.data.size() + 2));
    w.bytes(o.data);
  }
  return w.take();
}

Options decode_options(ByteView wire) {
  ByteReader r(wire);
  Options out;
  while (!r.empty()) {
    CpOption o;
    o.type = r.u8();
    auto len = r.u8();
    if (len < 2) throw Error(Errc::MalformedMessage, "option length below 2");
    auto body = r.take(len - 2u);
    o.data.assign(body.begin(), body.end());
    out.push_back(std::move(o));
  }
  return out;
}

Bytes encode_chap_value(const ChapValue& v) {
  if (v.value.size() > 0xff) throw Error(Errc::ValueTooLong, "CHAP value");
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(v.value.size()));
  w.bytes(v.value);
  w.str(v.name);
  return w.take();
}

ChapValue decode_chap_value(ByteView wire) {
  ByteReader r(wire);
  ChapValue v;
  auto size = r.u8();
  auto value = r.take(size);
  v.value.assign(value.begin(), value.end());
  auto name = r.rest();
  v.name.assign(name.begin(), name.end());
  return v;
}

}  // namespace swforge::ppp
