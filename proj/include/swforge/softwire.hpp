#pragma once

// Softwire nodes for the simulator. The Initiator drives one tunnel, its
// PPP link and the provisioning client; the Concentrator accepts any number
// of initiators and ties each one to AAA, the provisioning server and
// accounting. Every protocol step is recorded in the network trace.

#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>

#include "swforge/aaa.hpp"
#include "swforge/netsim.hpp"
#include "swforge/ppp.hpp"
#include "swforge/provisioner.hpp"
#include "swforge/tunnel.hpp"

namespace swforge::sw {

struct Failure {
  std::string step;  // "l2tp", "ppp", "provisioning"
  Errc code = Errc::ProtocolViolation;
  std::string detail;
};

struct InitiatorConfig {
  std::string name = "si";
  Endpoint local;
  Endpoint concentrator;
  tunnel::TunnelConfig tunnel;
  ppp::PppConfig ppp;
  prov::ClientConfig client;
};

class Initiator : public net::Node {
 public:
  Initiator(net::Network& net, InitiatorConfig config);

  void start(SimTime now);
  void teardown(SimTime now, tunnel::DownReason reason = tunnel::DownReason::Admin);
  /// Sends an IP packet into the softwire; returns the rejection code when
  /// the tunnel refuses it.
  std::optional<Errc> send_payload(const IpPacket& packet, SimTime now);
  /// Drops all input and stops all timers, as if the host vanished.
  void set_silent(bool silent) { silent_ = silent; }

  void on_datagram(const net::Datagram& d, SimTime now) override;
  void on_timer(SimTime now) override;
  std::optional<SimTime> next_deadline() const override;

  const std::string& name() const { return config_.name; }
  const InitiatorConfig& config() const { return config_; }
  const tunnel::TunnelEndpoint& tunnel() const { return tunnel_; }
  const ppp::PppLink* ppp() const { return ppp_ ? &*ppp_ : nullptr; }
  const prov::ProvisioningClient* client() const { return client_ ? &*client_ : nullptr; }
  const prov::Rib& rib() const { return rib_; }
  const Endpoint& peer() const { return peer_; }
  bool provisioned() const { return provisioned_; }
  bool down() const { return tunnel_.is_down(); }
  const std::optional<Failure>& failure() const { return failure_; }
  /// Payload source address once provisioning completed.
  std::optional<IpAddr> address() const;
  /// Establishment step in progress: "l2tp", "ppp" or "provisioning".
  std::string step() const;

 private:
  void apply(tunnel::Actions actions, SimTime now);
  void apply(ppp::Output out, SimTime now);
  void apply(prov::ClientOutput out, SimTime now);
  void on_frame(const ppp::Frame& frame, SimTime now);
  std::optional<Errc> send_ip(const IpPacket& packet, SimTime now);
  void fail(std::string step, Errc code, std::string detail);

  net::Network& net_;
  InitiatorConfig config_;
  tunnel::TunnelEndpoint tunnel_;
  std::optional<ppp::PppLink> ppp_;
  std::optional<prov::ProvisioningClient> client_;
  prov::Rib rib_;
  Endpoint peer_;
  bool provisioned_ = false;
  bool silent_ = false;
  std::optional<Failure> failure_;
};

struct ConcentratorConfig {
  std::string name = "sc";
  Endpoint listen;
  /// Test-only: answer from this endpoint instead of the one the SI used.
  std::optional<Endpoint> reply_from;
  tunnel::TunnelConfig tunnel;
  ppp::PppConfig ppp;
  prov::ServerConfig provisioning;
  /// Answer every forwarded payload packet with one of equal size.
  bool echo_payload = false;
};

class Concentrator : public net::Node {
 public:
  struct Softwire {
    std::uint32_t id = 0;
    Endpoint peer;
    Endpoint local;
    tunnel::TunnelEndpoint tunnel;
    std::optional<ppp::PppLink> ppp;
    std::string user;
    std::vector<prov::RibEntry> routes;  // routes already traced
  };

  Concentrator(net::Network& net, ConcentratorConfig config, aaa::UserDirectory& directory,
               aaa::Accountant& accountant, prov::StableStore* store = nullptr);

  /// Routes an IP packet towards the softwire owning its destination.
  std::optional<Errc> send_payload(const IpPacket& packet, SimTime now);
  /// Sends on a given softwire, bypassing the routing table.
  std::optional<Errc> send_on(std::uint32_t softwire, const IpPacket& packet, SimTime now);
  void send_hello(SimTime now);
  void teardown_all(SimTime now, tunnel::DownReason reason = tunnel::DownReason::Admin);
  void set_silent(bool silent) { silent_ = silent; }

  void on_datagram(const net::Datagram& d, SimTime now) override;
  void on_timer(SimTime now) override;
  std::optional<SimTime> next_deadline() const override;

  const std::string& name() const { return config_.name; }
  const ConcentratorConfig& config() const { return config_; }
  const std::map<std::uint32_t, std::unique_ptr<Softwire>>& softwires() const { return softwires_; }
  const Softwire* softwire(std::uint32_t id) const;
  const prov::ProvisioningServer& provisioning() const { return server_; }
  std::uint64_t forwarded() const { return forwarded_; }

 private:
  Softwire* by_tunnel(std::uint16_t tunnel_id);
  Softwire& create(const Endpoint& peer, const Endpoint& local);
  void apply(Softwire& sw, tunnel::Actions actions, SimTime now);
  void apply(Softwire& sw, ppp::Output out, SimTime now);
  void on_frame(Softwire& sw, const ppp::Frame& frame, SimTime now);
  std::optional<Errc> send_ip(Softwire& sw, const IpPacket& packet, SimTime now);
  void sync_routes(Softwire& sw, SimTime now);
  ppp::AuthDecision authorize(Softwire& sw, const ppp::AuthRequest& req);
  void closed(Softwire& sw, SimTime now);

  net::Network& net_;
  ConcentratorConfig config_;
  aaa::UserDirectory& directory_;
  aaa::Accountant& accountant_;
  prov::ProvisioningServer server_;
  std::map<std::uint32_t, std::unique_ptr<Softwire>> softwires_;
  std::uint32_t next_id_ = 1;
  std::mt19937_64 rng_;
  std::uint64_t forwarded_ = 0;
  bool silent_ = false;
};

}  // namespace swforge::sw
