#include "swforge/inet.hpp"

#include <arpa/inet.h>

#include <charconv>

namespace swforge {

namespace {

int parse_len(std::string_view s, int max) {
  int len = -1;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), len);
  if (ec != std::errc{} || ptr != s.data() + s.size() || len < 0 || len > max) {
    throw Error(Errc::ParseError, "bad prefix length '" + std::string(s) + "'");
  }
  return len;
}

std::pair<std::string_view, std::string_view> split_prefix(std::string_view s) {
  auto slash = s.find('/');
  if (slash == std::string_view::npos) {
    throw Error(Errc::ParseError, "missing '/' in prefix '" + std::string(s) + "'");
  }
  return {s.substr(0, slash), s.substr(slash + 1)};
}

std::uint32_t mask4(int len) { return len == 0 ? 0 : ~std::uint32_t{0} << (32 - len); }

std::uint16_t checksum(ByteView data) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i + 1 < data.size(); i += 2) sum += (data[i] << 8) | data[i + 1];
  if (data.size() % 2) sum += data.back() << 8;
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

}  // namespace

std::string_view to_string(Af af) noexcept { return af == Af::V4 ? "IPv4" : "IPv6"; }

Af parse_af(std::string_view s) {
  if (s == "v4" || s == "ipv4" || s == "IPv4") return Af::V4;
  if (s == "v6" || s == "ipv6" || s == "IPv6") return Af::V6;
  throw Error(Errc::ParseError, "unknown address family '" + std::string(s) + "'");
}

Ipv4Addr Ipv4Addr::parse(std::string_view s) {
  std::string tmp(s);
  in_addr a{};
  if (inet_pton(AF_INET, tmp.c_str(), &a) != 1) {
    throw Error(Errc::ParseError, "bad IPv4 address '" + tmp + "'");
  }
  return Ipv4Addr{ntohl(a.s_addr)};
}

std::string Ipv4Addr::str() const {
  in_addr a{htonl(value)};
  char buf[INET_ADDRSTRLEN];
  inet_ntop(AF_INET, &a, buf, sizeof buf);
  return buf;
}

Ipv6Addr Ipv6Addr::parse(std::string_view s) {
  std::string tmp(s);
  Ipv6Addr out;
  if (inet_pton(AF_INET6, tmp.c_str(), out.bytes.data()) != 1) {
    throw Error(Errc::ParseError, "bad IPv6 address '" + tmp + "'");
  }
  return out;
}

Ipv6Addr Ipv6Addr::from_parts(const Ipv6Addr& prefix, std::uint64_t iid) {
  Ipv6Addr out = prefix;
  for (int i = 0; i < 8; ++i) out.bytes[15 - i] = static_cast<std::uint8_t>(iid >> (8 * i));
  return out;
}

Ipv6Addr Ipv6Addr::link_local(std::uint64_t iid) {
  Ipv6Addr ll;
  ll.bytes[0] = 0xfe;
  ll.bytes[1] = 0x80;
  return from_parts(ll, iid);
}

std::uint64_t Ipv6Addr::upper() const {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | bytes[i];
  return v;
}

std::uint64_t Ipv6Addr::iid() const {
  std::uint64_t v = 0;
  for (int i = 8; i < 16; ++i) v = (v << 8) | bytes[i];
  return v;
}

std::string Ipv6Addr::str() const {
  char buf[INET6_ADDRSTRLEN];
  inet_ntop(AF_INET6, bytes.data(), buf, sizeof buf);
  return buf;
}

Af family(const IpAddr& a) noexcept {
  return std::holds_alternative<Ipv4Addr>(a) ? Af::V4 : Af::V6;
}

std::string to_string(const IpAddr& a) {
  return std::visit([](const auto& x) { return x.str(); }, a);
}

IpAddr parse_ip(std::string_view s) {
  if (s.find(':') != std::string_view::npos) return Ipv6Addr::parse(s);
  return Ipv4Addr::parse(s);
}

Prefix4 make_prefix(Ipv4Addr a, int len) {
  if (len < 0 || len > 32) throw Error(Errc::ParseError, "IPv4 prefix length out of range");
  return Prefix4{Ipv4Addr{a.value & mask4(len)}, static_cast<std::uint8_t>(len)};
}

Prefix6 make_prefix(const Ipv6Addr& a, int len) {
  if (len < 0 || len > 128) throw Error(Errc::ParseError, "IPv6 prefix length out of range");
  Prefix6 p{a, static_cast<std::uint8_t>(len)};
  for (int bit = len; bit < 128; ++bit) {
    p.addr.bytes[bit / 8] &= static_cast<std::uint8_t>(~(0x80 >> (bit % 8)));
  }
  return p;
}

Prefix4 parse_prefix4(std::string_view s) {
  auto [a, l] = split_prefix(s);
  auto addr = Ipv4Addr::parse(a);
  auto p = make_prefix(addr, parse_len(l, 32));
  if (p.addr != addr) throw Error(Errc::ParseError, "host bits set in '" + std::string(s) + "'");
  return p;
}

Prefix6 parse_prefix6(std::string_view s) {
  auto [a, l] = split_prefix(s);
  auto addr = Ipv6Addr::parse(a);
  auto p = make_prefix(addr, parse_len(l, 128));
  if (p.addr != addr) throw Error(Errc::ParseError, "host bits set in '" + std::string(s) + "'");
  return p;
}

std::string to_string(const Prefix4& p) { return p.addr.str() + "/" + std::to_string(p.len); }
std::string to_string(const Prefix6& p) { return p.addr.str() + "/" + std::to_string(p.len); }

std::string to_string(const Prefix& p) {
  return std::visit([](const auto& x) { return to_string(x); }, p);
}

bool contains(const Prefix4& p, Ipv4Addr a) {
  return (a.value & mask4(p.len)) == p.addr.value;
}

bool contains(const Prefix6& p, const Ipv6Addr& a) { return make_prefix(a, p.len).addr == p.addr; }

bool overlaps(const Prefix4& a, const Prefix4& b) {
  return a.len <= b.len ? contains(a, b.addr) : contains(b, a.addr);
}

bool overlaps(const Prefix6& a, const Prefix6& b) {
  return a.len <= b.len ? contains(a, b.addr) : contains(b, a.addr);
}

bool overlaps(const Prefix& a, const Prefix& b) {
  if (a.index() != b.index()) return false;
  if (auto* a4 = std::get_if<Prefix4>(&a)) return overlaps(*a4, std::get<Prefix4>(b));
  return overlaps(std::get<Prefix6>(a), std::get<Prefix6>(b));
}

std::optional<int> netmask_length(Ipv4Addr mask) {
  for (int len = 0; len <= 32; ++len) {
    if (mask4(len) == mask.value) return len;
  }
  return std::nullopt;
}

Ipv6Scope scope_of(const Ipv6Addr& a) noexcept {
  if (a.bytes[0] == 0xfe && (a.bytes[1] & 0xc0) == 0x80) return Ipv6Scope::LinkLocal;
  if ((a.bytes[0] & 0xfe) == 0xfc) return Ipv6Scope::Ula;
  return Ipv6Scope::Global;
}

Ipv4Scope scope_of(Ipv4Addr a) noexcept {
  const auto v = a.value;
  if ((v >> 24) == 10) return Ipv4Scope::Private;
  if ((v >> 20) == ((172u << 4) | 1u)) return Ipv4Scope::Private;  // 172.16/12
  if ((v >> 16) == ((192u << 8) | 168u)) return Ipv4Scope::Private;
  return Ipv4Scope::Public;
}

std::string_view to_string(Ipv6Scope s) noexcept {
  switch (s) {
    case Ipv6Scope::LinkLocal: return "link-local";
    case Ipv6Scope::Ula: return "ula";
    case Ipv6Scope::Global: return "global";
  }
  return "?";
}

std::string_view to_string(Ipv4Scope s) noexcept {
  return s == Ipv4Scope::Private ? "private" : "public";
}

std::string Endpoint::str() const {
  if (family(addr) == Af::V6) return "[" + to_string(addr) + "]:" + std::to_string(port);
  return to_string(addr) + ":" + std::to_string(port);
}

std::optional<Af> ip_version(ByteView wire) noexcept {
  if (wire.empty()) return std::nullopt;
  switch (wire[0] >> 4) {
    case 4: return Af::V4;
    case 6: return Af::V6;
    default: return std::nullopt;
  }
}

Bytes IpPacket::encode() const {
  if (src.index() != dst.index()) {
    throw Error(Errc::WrongAddressFamily, "source and destination families differ");
  }
  ByteWriter w;
  if (auto* s4 = std::get_if<Ipv4Addr>(&src)) {
    const auto total = kIpv4HeaderSize + payload.size();
    if (total > 0xffff) throw Error(Errc::PacketTooBig, "IPv4 total length");
    w.u8(0x45);
    w.u8(0);
    w.u16(static_cast<std::uint16_t>(total));
    w.u32(0);  // id, flags, fragment offset
    w.u8(64);
    w.u8(protocol);
    w.u16(0);
    w.u32(s4->value);
    w.u32(std::get<Ipv4Addr>(dst).value);
    Bytes out = w.take();
    auto sum = checksum(ByteView(out).first(kIpv4HeaderSize));
    out[10] = static_cast<std::uint8_t>(sum >> 8);
    out[11] = static_cast<std::uint8_t>(sum);
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
  }
  if (payload.size() > 0xffff) throw Error(Errc::PacketTooBig, "IPv6 payload length");
  w.u32(0x60000000);
  w.u16(static_cast<std::uint16_t>(payload.size()));
  w.u8(protocol);
  w.u8(64);
  w.bytes(std::get<Ipv6Addr>(src).bytes);
  w.bytes(std::get<Ipv6Addr>(dst).bytes);
  w.bytes(payload);
  return w.take();
}

IpPacket IpPacket::decode(ByteView wire) {
  auto version = ip_version(wire);
  if (!version) throw Error(Errc::MalformedMessage, "not an IP packet");
  ByteReader r(wire);
  IpPacket p;
  if (*version == Af::V4) {
    if ((wire[0] & 0x0f) != 5) throw Error(Errc::MalformedMessage, "IPv4 options unsupported");
    r.u8();
    r.u8();
    auto total = r.u16();
    r.u32();
    r.u8();
    p.protocol = r.u8();
    r.u16();
    p.src = Ipv4Addr{r.u32()};
    p.dst = Ipv4Addr{r.u32()};
    if (total < kIpv4HeaderSize) throw Error(Errc::MalformedMessage, "IPv4 total length");
    auto body = r.take(total - kIpv4HeaderSize);
    p.payload.assign(body.begin(), body.end());
    return p;
  }
  r.u32();
  auto len = r.u16();
  p.protocol = r.u8();
  r.u8();
  Ipv6Addr s, d;
  auto sb = r.take(16);
  std::copy(sb.begin(), sb.end(), s.bytes.begin());
  auto db = r.take(16);
  std::copy(db.begin(), db.end(), d.bytes.begin());
  p.src = s;
  p.dst = d;
  auto body = r.take(len);
  p.payload.assign(body.begin(), body.end());
  return p;
}

}  // namespace swforge
