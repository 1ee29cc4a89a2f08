#pragma once

// Deterministic discrete-event datagram network: hosts, one shared link
// model (delay and Bernoulli loss), and NAT boxes with endpoint-independent
// mapping and configurable filtering.

#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "swforge/bytes.hpp"
#include "swforge/clock.hpp"
#include "swforge/inet.hpp"
#include "swforge/trace.hpp"

namespace swforge::net {

using namespace std::chrono_literals;

struct Datagram {
  Endpoint src;
  Endpoint dst;
  Bytes payload;
  std::string summary;  // shown in the trace
};

enum class Filtering : std::uint8_t { EndpointIndependent, AddressDependent, AddressAndPortDependent };

std::string_view to_string(Filtering f) noexcept;
/// "eif", "adf" or "apdf".
Filtering parse_filtering(std::string_view s);

struct NatConfig {
  IpAddr external;
  Filtering filtering = Filtering::EndpointIndependent;
  Duration binding_ttl = 120s;
  std::uint16_t first_port = 40000;
};

struct Binding {
  Endpoint internal;
  Endpoint external;
  SimTime last_activity{};
  std::set<Endpoint> contacted;  // remotes this binding has sent to
};

class NatBox {
 public:
  NatBox(std::string name, NatConfig config);

  /// Translates an outbound source, creating or refreshing its binding.
  Endpoint outbound(const Endpoint& internal, const Endpoint& remote, SimTime now, bool* created = nullptr);
  /// Internal endpoint for an inbound datagram, or nullopt when filtered.
  /// Inbound traffic never refreshes a binding.
  std::optional<Endpoint> inbound(const Endpoint& external, const Endpoint& remote, SimTime now) const;
  /// Drops bindings idle for longer than the ttl; returns them.
  std::vector<Binding> purge(SimTime now);

  const std::string& name() const { return name_; }
  const NatConfig& config() const { return config_; }
  const std::map<Endpoint, Binding>& bindings() const { return by_internal_; }

 private:
  bool live(const Binding& b, SimTime now) const { return now - b.last_activity <= config_.binding_ttl; }

  std::string name_;
  NatConfig config_;
  std::uint16_t next_port_;
  std::map<Endpoint, Binding> by_internal_;
  std::map<std::uint16_t, Endpoint> by_port_;  // external port -> internal
};

class Node {
 public:
  virtual ~Node() = default;
  virtual void on_datagram(const Datagram& d, SimTime now) = 0;
  virtual void on_timer(SimTime) {}
  virtual std::optional<SimTime> next_deadline() const { return std::nullopt; }
};

struct LinkConfig {
  Duration delay = 10ms;
  double loss = 0.0;
};

class Network {
 public:
  explicit Network(std::uint64_t seed = 1, LinkConfig link = {});

  /// `path` lists the NAT boxes between the host and the core, innermost
  /// first. `extra_delay` models additional forwarding hops on the host's
  /// side and applies in both directions.
  void add_host(std::string name, IpAddr addr, Node* node, std::vector<NatBox*> path = {},
                Duration extra_delay = Duration::zero());
  /// Extra address owned by an existing host.
  void add_address(const std::string& host, IpAddr addr);
  NatBox& add_nat(std::string name, NatConfig config);

  /// Sends from `host` now; translation and filtering happen at send time,
  /// delivery after the link delay.
  void send(const std::string& host, Datagram d);
  /// Processes every event up to and including `until`, then sets the clock
  /// to `until`.
  void advance(SimTime until);
  /// Runs until nothing is pending or `limit` is reached; returns true when
  /// the network went idle first.
  bool run_until_idle(SimTime limit);
  std::optional<SimTime> next_event() const;

  SimTime now() const { return now_; }
  Trace& trace() { return trace_; }
  const Trace& trace() const { return trace_; }
  LinkConfig& link() { return link_; }
  NatBox* nat(const std::string& name);
  std::optional<std::string> owner(const IpAddr& addr) const;

 private:
  struct Host {
    std::string name;
    Node* node;
    std::vector<NatBox*> path;
    Duration extra_delay{};
  };
  struct Event {
    SimTime at;
    std::uint64_t seq;
    std::string from;
    std::string to;
    Datagram datagram;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };

  void purge_nats(SimTime now);
  void step_to(SimTime t);

  std::mt19937_64 rng_;
  LinkConfig link_;
  SimTime now_{};
  std::uint64_t seq_ = 0;
  std::uint64_t stalled_ = 0;
  std::vector<Host> hosts_;
  std::map<IpAddr, std::size_t> addr_owner_;
  std::vector<std::unique_ptr<NatBox>> nats_;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  Trace trace_;
};

}  // namespace swforge::net
