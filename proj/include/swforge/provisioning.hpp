#pragma once

// Address and prefix bookkeeping after the PPP link is up: scope
// combination verdicts, prefix pools, the route table, the stable
// assignment store and the provisioning messages exchanged over the
// softwire.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "swforge/clock.hpp"
#include "swforge/error.hpp"
#include "swforge/inet.hpp"

namespace swforge::prov {

// ---- Scope combinations ------------------------------------------------

enum class Verdict : std::uint8_t { Possible, PossibleNotRecommended };

struct ComboVerdict {
  Verdict verdict;
  std::string note;  // the table cell text

  bool operator==(const ComboVerdict&) const = default;
};

std::string_view to_string(Verdict v) noexcept;

ComboVerdict validate_combo(Ipv6Scope endpoint, Ipv6Scope delegated);
ComboVerdict validate_combo(Ipv4Scope endpoint, Ipv4Scope delegated);
/// String form used by the CLI: af "v4"/"v6"; scopes "link-local", "ula",
/// "global", "private", "public". Throws InvalidConfig on unknown or
/// mismatched scopes (link-local is not a delegated-prefix scope).
ComboVerdict validate_combo(std::string_view af, std::string_view endpoint, std::string_view delegated);

// ---- Delegation length bounds -------------------------------------------

inline constexpr int kMinDelegatedV6 = 48;
inline constexpr int kMaxDelegatedV6 = 64;
inline constexpr int kMinDelegatedV4 = 8;
inline constexpr int kMaxDelegatedV4 = 30;

/// Throws LengthOutOfRange unless len is a permitted delegated length.
void check_delegated_length(Af af, int len);

// ---- Prefix pools ------------------------------------------------------

/// Carves fixed- or variable-length child prefixes out of a base prefix,
/// always handing out the lowest free aligned block.
template <typename Addr>
class PrefixPool {
 public:
  using PrefixT = BasicPrefix<Addr>;

  PrefixPool() = default;
  explicit PrefixPool(PrefixT base) : base_(base) {}

  const PrefixT& base() const { return base_; }
  /// Lowest free child of length `len`; nullopt when none is left.
  std::optional<PrefixT> allocate(int len);
  /// Reserves exactly `p` if it lies inside the pool and is free.
  bool reserve(const PrefixT& p);
  void release(const PrefixT& p);
  bool is_free(const PrefixT& p) const;
  const std::vector<PrefixT>& allocated() const { return allocated_; }

 private:
  PrefixT base_{};
  std::vector<PrefixT> allocated_;
};

using PrefixPool4 = PrefixPool<Ipv4Addr>;
using PrefixPool6 = PrefixPool<Ipv6Addr>;

/// IPv4 host addresses for IPCP, ascending; network and broadcast
/// addresses of pools shorter than /31 are never handed out.
class AddressPool4 {
 public:
  AddressPool4() = default;
  explicit AddressPool4(Prefix4 base) : base_(base) {}

  std::optional<Ipv4Addr> allocate();
  bool reserve(Ipv4Addr a);
  void release(Ipv4Addr a);
  const Prefix4& base() const { return base_; }

 private:
  bool usable(Ipv4Addr a) const;

  Prefix4 base_{};
  std::vector<Ipv4Addr> allocated_;
};

// ---- Routing -------------------------------------------------------------

enum class RouteOrigin : std::uint8_t { Default, Delegated };
std::string_view to_string(RouteOrigin o) noexcept;

struct RibEntry {
  Prefix prefix;
  std::uint32_t softwire = 0;  // next hop
  RouteOrigin origin = RouteOrigin::Delegated;

  bool operator==(const RibEntry&) const = default;
};

class Rib {
 public:
  /// Adds a route. Re-adding an identical route is a no-op; a delegated
  /// prefix overlapping one routed to another softwire throws Conflict.
  void inject(const Prefix& prefix, std::uint32_t softwire, RouteOrigin origin);
  void remove(const Prefix& prefix);
  /// Drops every route via `softwire`; returns how many were removed.
  std::size_t remove_softwire(std::uint32_t softwire);
  /// Longest-prefix match.
  std::optional<RibEntry> lookup(const IpAddr& addr) const;
  const std::vector<RibEntry>& entries() const { return entries_; }
  std::vector<RibEntry> entries_via(std::uint32_t softwire) const;
  nlohmann::json to_json() const;

 private:
  std::vector<RibEntry> entries_;
};

// ---- Stable assignments --------------------------------------------------

struct Assignment {
  std::optional<Prefix6> onlink_v6;
  std::optional<Prefix6> delegated_v6;
  std::optional<Ipv4Addr> address_v4;
  std::optional<Prefix4> delegated_v4;

  bool operator==(const Assignment&) const = default;
  bool empty() const { return !onlink_v6 && !delegated_v6 && !address_v4 && !delegated_v4; }
};

nlohmann::json to_json(const Assignment& a);
Assignment assignment_from_json(const nlohmann::json& j);

enum class StablePolicy : std::uint8_t {
  Stable,     // same SC, same user: same assignment
  Temporary,  // never reuse (roaming users)
  CrossSc,    // reuse across concentrators
};

std::string_view to_string(StablePolicy p) noexcept;
StablePolicy parse_stable_policy(std::string_view s);

/// Last assignment per (user, SC). Optionally persisted as JSON lines of
/// {user, sc_id, assignment, timestamp}; an expired record is written as a
/// line with a null assignment.
class StableStore {
 public:
  explicit StableStore(StablePolicy policy = StablePolicy::Stable) : policy_(policy) {}
  /// Replays an existing file, then appends to it.
  StableStore(StablePolicy policy, std::filesystem::path file);

  std::optional<Assignment> lookup(const std::string& user, const std::string& sc_id) const;
  void commit(const std::string& user, const std::string& sc_id, const Assignment& a, SimTime now);
  void expire(const std::string& user, const std::string& sc_id, SimTime now);
  StablePolicy policy() const { return policy_; }
  std::size_t size() const { return records_.size(); }

 private:
  void append(const nlohmann::json& line);

  struct Record {
    Assignment assignment;
    SimTime at{};
    std::uint64_t seq = 0;
  };
  StablePolicy policy_;
  std::map<std::pair<std::string, std::string>, Record> records_;
  std::optional<std::filesystem::path> file_;
  std::uint64_t seq_ = 0;
};

// ---- Provisioning messages -------------------------------------------------

struct RouterSolicitation {
  bool operator==(const RouterSolicitation&) const = default;
};

struct RouterAdvertisement {
  Prefix6 prefix{};
  bool managed = false;  // M: addresses via DHCPv6
  bool other = false;    // O: other configuration via DHCPv6
  std::optional<Errc> error;
  std::string detail;

  bool operator==(const RouterAdvertisement&) const = default;
};

struct NeighborSolicitation {
  Ipv6Addr target;
  bool operator==(const NeighborSolicitation&) const = default;
};

struct NeighborAdvertisement {
  Ipv6Addr target;
  bool operator==(const NeighborAdvertisement&) const = default;
};

enum class Dhcp6Type : std::uint8_t {
  Solicit = 1,
  Advertise = 2,
  Request = 3,
  Reply = 7,
  InformationRequest = 11,
};
std::string_view to_string(Dhcp6Type t) noexcept;

struct Dhcp6Message {
  Dhcp6Type type = Dhcp6Type::Solicit;
  std::uint32_t xid = 0;
  Bytes client_duid;
  bool ia_pd = false;
  bool ia_na = false;
  bool oro_dns = false;
  std::optional<Prefix6> prefix;    // IA_PD contents
  std::optional<Ipv6Addr> address;  // IA_NA contents
  std::vector<Ipv6Addr> dns;
  std::optional<Errc> error;
  std::string detail;

  bool operator==(const Dhcp6Message&) const = default;
};

enum class Dhcp4Type : std::uint8_t { Discover = 1, Offer = 2, Request = 3, Ack = 5, Nak = 6 };
std::string_view to_string(Dhcp4Type t) noexcept;

/// Subnet-Request suboption.
struct SubnetRequest {
  bool h = true;  // the requester is a router
  bool i = false; // a Subnet-Information suboption accompanies the request
  std::uint8_t prefix_len = 0;

  bool operator==(const SubnetRequest&) const = default;
};

/// Subnet-Information suboption.
struct SubnetInformation {
  Prefix4 prefix{};
  bool c = false;
  bool s = false;

  bool operator==(const SubnetInformation&) const = default;
};

struct Dhcp4Message {
  Dhcp4Type type = Dhcp4Type::Discover;
  std::uint32_t xid = 0;
  std::string client_id;
  std::optional<SubnetRequest> subnet_request;
  std::optional<SubnetInformation> subnet_info;
  std::optional<Errc> error;
  std::string detail;

  bool operator==(const Dhcp4Message&) const = default;
};

using Message = std::variant<RouterSolicitation, RouterAdvertisement, NeighborSolicitation,
                             NeighborAdvertisement, Dhcp6Message, Dhcp4Message>;

std::string message_name(const Message& m);
/// CBOR encoding of a JSON rendering of the record.
Bytes encode(const Message& m);
Message decode(ByteView wire);
nlohmann::json to_json(const Message& m);

/// Subnet-Request for a router SI: i=1 with the prior prefix on renewal,
/// prefix_len 0 on a first request unless the SI only supports prefixes of
/// `longest_supported` length or shorter.
std::pair<SubnetRequest, std::optional<SubnetInformation>> build_subnet_request(
    const std::optional<Prefix4>& prior, std::optional<std::uint8_t> longest_supported);

}  // namespace swforge::prov
