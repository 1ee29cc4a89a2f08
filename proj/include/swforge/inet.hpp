#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "swforge/bytes.hpp"

namespace swforge {

enum class Af : std::uint8_t { V4, V6 };

std::string_view to_string(Af af) noexcept;
/// Accepts "v4", "ipv4", "IPv4" and the IPv6 equivalents.
Af parse_af(std::string_view s);

struct Ipv4Addr {
  std::uint32_t value = 0;

  static Ipv4Addr parse(std::string_view s);
  std::string str() const;
  bool is_zero() const { return value == 0; }
  auto operator<=>(const Ipv4Addr&) const = default;
};

struct Ipv6Addr {
  std::array<std::uint8_t, 16> bytes{};

  static Ipv6Addr parse(std::string_view s);
  /// Upper 64 bits from `prefix`, lower 64 bits from `iid`.
  static Ipv6Addr from_parts(const Ipv6Addr& prefix, std::uint64_t iid);
  static Ipv6Addr link_local(std::uint64_t iid);

  std::uint64_t upper() const;
  std::uint64_t iid() const;
  std::string str() const;
  auto operator<=>(const Ipv6Addr&) const = default;
};

using IpAddr = std::variant<Ipv4Addr, Ipv6Addr>;

Af family(const IpAddr& a) noexcept;
std::string to_string(const IpAddr& a);
IpAddr parse_ip(std::string_view s);

template <typename Addr>
struct BasicPrefix {
  Addr addr{};
  std::uint8_t len = 0;

  auto operator<=>(const BasicPrefix&) const = default;
};

using Prefix4 = BasicPrefix<Ipv4Addr>;
using Prefix6 = BasicPrefix<Ipv6Addr>;

/// Parses "a.b.c.d/n" or "x::/n"; host bits must be zero.
Prefix4 parse_prefix4(std::string_view s);
Prefix6 parse_prefix6(std::string_view s);
Prefix4 make_prefix(Ipv4Addr a, int len);  // masks host bits
Prefix6 make_prefix(const Ipv6Addr& a, int len);
std::string to_string(const Prefix4& p);
std::string to_string(const Prefix6& p);

bool contains(const Prefix4& p, Ipv4Addr a);
bool contains(const Prefix6& p, const Ipv6Addr& a);
bool overlaps(const Prefix4& a, const Prefix4& b);
bool overlaps(const Prefix6& a, const Prefix6& b);

/// Number of leading one bits; nullopt for a non-contiguous mask.
std::optional<int> netmask_length(Ipv4Addr mask);

using Prefix = std::variant<Prefix4, Prefix6>;
std::string to_string(const Prefix& p);
bool overlaps(const Prefix& a, const Prefix& b);

enum class Ipv6Scope : std::uint8_t { LinkLocal, Ula, Global };
enum class Ipv4Scope : std::uint8_t { Private, Public };

Ipv6Scope scope_of(const Ipv6Addr& a) noexcept;
Ipv4Scope scope_of(Ipv4Addr a) noexcept;
std::string_view to_string(Ipv6Scope s) noexcept;
std::string_view to_string(Ipv4Scope s) noexcept;

struct Endpoint {
  IpAddr addr;
  std::uint16_t port = 0;

  std::string str() const;
  auto operator<=>(const Endpoint&) const = default;
};

namespace ipproto {
inline constexpr std::uint8_t kUdp = 17;
/// Carries the simulator's compact provisioning records (an experimental protocol number).
inline constexpr std::uint8_t kProvisioning = 253;
}  // namespace ipproto

/// Minimal IPv4/IPv6 packet: fixed header without options or extension headers.
struct IpPacket {
  IpAddr src;
  IpAddr dst;
  std::uint8_t protocol = ipproto::kUdp;
  Bytes payload;

  Af af() const { return family(src); }
  Bytes encode() const;
  static IpPacket decode(ByteView wire);
  bool operator==(const IpPacket&) const = default;
};

inline constexpr std::size_t kIpv4HeaderSize = 20;
inline constexpr std::size_t kIpv6HeaderSize = 40;

/// Version nibble of a raw IP packet, or nullopt when empty.
std::optional<Af> ip_version(ByteView wire) noexcept;

}  // namespace swforge
