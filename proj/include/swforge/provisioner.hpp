#pragma once

// The two provisioning agents that run once the PPP link is up: the SI-side
// client (RS, SLAAC with DAD, DHCPv6, DHCPv4 subnet allocation) and the
// SC-side server that answers them, owns the pools and injects routes.
// Both exchange prov::Message records; the host carries them over the
// softwire.

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "swforge/provisioning.hpp"

namespace swforge::prov {

using namespace std::chrono_literals;

/// Per-user provisioning instructions derived from AAA attributes.
struct Directives {
  std::optional<std::uint64_t> interface_id;  // Framed-Interface-Id
  std::optional<Prefix6> onlink_v6;           // Framed-IPv6-Prefix
  std::optional<std::string> v6_pool;         // Framed-IPv6-Pool
  std::optional<Prefix6> delegated_v6;        // Delegated-IPv6-Prefix
  std::optional<Ipv4Addr> address_v4;         // Framed-IP-Address without netmask
  std::optional<Prefix4> delegated_v4;        // Framed-IP-Address with netmask

  bool operator==(const Directives&) const = default;
};

struct Endpoint6 {
  Ipv6Addr address;
  Ipv6Scope scope;
};

struct Endpoint4 {
  Ipv4Addr address;
  Ipv4Scope scope;
};

/// What the SC handed to one softwire.
struct ProvisioningRecord {
  std::string user;
  std::optional<Endpoint6> endpoint_v6;
  std::optional<Endpoint4> endpoint_v4;
  std::optional<Prefix6> onlink_v6;
  std::optional<Prefix6> delegated_v6;
  std::optional<Prefix4> delegated_v4;
  std::optional<Bytes> duid;
  std::vector<RibEntry> routes;
};

struct ServerConfig {
  std::string sc_id = "sc1";
  std::optional<Prefix6> onlink_pool;          // local source of /64s
  std::map<std::string, Prefix6> v6_pools;     // named pools for Framed-IPv6-Pool
  std::optional<Prefix6> delegation_pool_v6;
  int delegation_len_v6 = 48;
  std::vector<Ipv6Addr> dns_v6;
  bool dhcpv6_address_mode = false;  // RA M flag
  bool stateless_info = true;        // RA O flag
  std::optional<Prefix4> address_pool_v4;
  std::optional<Prefix4> delegation_pool_v4;
  int delegation_len_v4 = 28;
};

class ProvisioningServer {
 public:
  /// Throws LengthOutOfRange when a default delegation length is outside
  /// the permitted bounds.
  explicit ProvisioningServer(ServerConfig config, StableStore* store = nullptr);

  /// Registers an authenticated softwire before any provisioning message.
  void attach(std::uint32_t softwire, std::string user, Directives directives, SimTime now);
  /// Interface-ids negotiated by IPV6CP; the SC's is used to answer DAD probes.
  void set_iids(std::uint32_t softwire, std::uint64_t sc_iid, std::uint64_t si_iid);
  /// Endpoint address for IPCP: AAA, then the stable store, then the pool.
  std::optional<Ipv4Addr> assign_ipv4(std::uint32_t softwire, SimTime now);
  /// Answers one client message; errors travel inside the reply.
  std::vector<Message> handle(std::uint32_t softwire, const Message& msg, SimTime now);
  /// Frees pool space, routes and the DUID association of a softwire.
  void release(std::uint32_t softwire);

  bool attached(std::uint32_t softwire) const { return bindings_.contains(softwire); }
  ProvisioningRecord record(std::uint32_t softwire) const;
  const Rib& rib() const { return rib_; }
  Rib& rib() { return rib_; }
  const ServerConfig& config() const { return config_; }
  std::optional<Errc> last_error(std::uint32_t softwire) const;

 private:
  struct Binding {
    std::string user;
    Directives directives;
    Assignment assignment;
    std::uint64_t sc_iid = 0;
    std::uint64_t si_iid = 0;
    std::optional<Bytes> duid;
    std::optional<Ipv6Addr> dhcp_address;
    std::optional<Errc> last_error;
  };

  RouterAdvertisement on_rs(std::uint32_t sw, Binding& b, SimTime now);
  std::optional<NeighborAdvertisement> on_ns(Binding& b, const NeighborSolicitation& ns);
  Dhcp6Message on_dhcp6(std::uint32_t sw, Binding& b, const Dhcp6Message& m, SimTime now);
  Dhcp4Message on_dhcp4(std::uint32_t sw, Binding& b, const Dhcp4Message& m, SimTime now);
  Prefix6 choose_onlink(Binding& b);
  Prefix6 choose_delegated_v6(Binding& b);
  Prefix4 choose_delegated_v4(Binding& b, const Dhcp4Message& m);
  void commit(const Binding& b, SimTime now);
  std::optional<Assignment> stable(const Binding& b) const;

  ServerConfig config_;
  StableStore* store_;
  Rib rib_;
  std::optional<PrefixPool6> onlink_pool_;
  std::map<std::string, PrefixPool6> named_pools_;
  std::optional<PrefixPool6> delegation_pool_v6_;
  std::optional<AddressPool4> address_pool_v4_;
  std::optional<PrefixPool4> delegation_pool_v4_;
  std::map<std::uint32_t, Binding> bindings_;
  std::map<Bytes, std::uint32_t> duids_;  // DUID -> softwire
};

enum class SiRole : std::uint8_t { Host, Router };
enum class Dhcp6Mode : std::uint8_t { Stateful, Stateless };

std::string_view to_string(SiRole r) noexcept;
SiRole parse_si_role(std::string_view s);

struct ClientConfig {
  Af payload_af = Af::V6;
  SiRole role = SiRole::Host;
  Dhcp6Mode dhcpv6_mode = Dhcp6Mode::Stateful;
  bool request_dns = true;
  Bytes duid;
  std::string client_id = "si";
  std::optional<Prefix4> prior_v4;
  std::optional<std::uint8_t> longest_v4_len;
  Duration retransmit = 1s;
  int max_attempts = 5;
  Duration dad_wait = 1s;
  std::uint64_t seed = 1;  // transaction ids
};

enum class ClientState : std::uint8_t {
  Idle,
  Soliciting,      // RS sent
  Dad,             // NS probe outstanding
  Dhcp6Soliciting,
  Dhcp6Requesting,
  Dhcp6Informing,
  Dhcp4Discovering,
  Dhcp4Requesting,
  Done,
  Failed,
};

std::string_view to_string(ClientState s) noexcept;

struct ClientOutput {
  std::vector<Message> send;
  bool done = false;
  std::optional<Errc> failed;
  std::string detail;
};

class ProvisioningClient {
 public:
  explicit ProvisioningClient(ClientConfig config);

  /// The PPP link is up; `local_iid` comes from IPV6CP.
  ClientOutput start(SimTime now, std::uint64_t local_iid = 0);
  ClientOutput receive(const Message& msg, SimTime now);
  ClientOutput on_timer(SimTime now);
  std::optional<SimTime> next_deadline() const;

  ClientState state() const { return state_; }
  const ClientConfig& config() const { return config_; }
  const std::optional<RouterAdvertisement>& ra() const { return ra_; }
  /// SLAAC address, usable once DAD completed.
  std::optional<Ipv6Addr> address() const { return address_; }
  bool address_usable() const { return address_usable_; }
  std::optional<Ipv6Addr> dhcp_address() const { return dhcp_address_; }
  std::optional<Prefix6> delegated_v6() const { return delegated_v6_; }
  const std::vector<Ipv6Addr>& dns_v6() const { return dns_v6_; }
  std::optional<Prefix4> delegated_v4() const { return delegated_v4_; }
  const std::optional<Dhcp4Message>& last_discover() const { return last_discover_; }

 private:
  ClientOutput send(Message m, ClientState next, SimTime now);
  ClientOutput fail(Errc code, std::string detail);
  ClientOutput finish();
  ClientOutput start_dhcp6(SimTime now);

  ClientConfig config_;
  std::mt19937 rng_;
  ClientState state_ = ClientState::Idle;
  std::uint64_t iid_ = 0;
  std::optional<Message> last_sent_;
  int attempts_ = 0;
  SimTime deadline_ = kNever;
  std::uint32_t xid_ = 0;

  std::optional<RouterAdvertisement> ra_;
  std::optional<Ipv6Addr> address_;
  bool address_usable_ = false;
  std::optional<Ipv6Addr> dhcp_address_;
  std::optional<Prefix6> delegated_v6_;
  std::vector<Ipv6Addr> dns_v6_;
  std::optional<Prefix4> delegated_v4_;
  std::optional<Dhcp4Message> last_discover_;
};

}  // namespace swforge::prov
