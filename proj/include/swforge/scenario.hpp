#pragma once

// Deployment scenarios: a declarative config, a simulation that wires one
// initiator and one concentrator over the simulated network, and a runner
// that executes establishment, verification, traffic and teardown.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "swforge/aaa.hpp"
#include "swforge/netsim.hpp"
#include "swforge/softwire.hpp"

namespace swforge::scenario {

using namespace std::chrono_literals;

/// The eight named deployment scenarios.
const std::vector<std::string>& named_ids();

struct NatSpec {
  net::Filtering filtering = net::Filtering::EndpointIndependent;
  Duration binding_ttl = 120s;
};

struct TrafficSpec {
  int packets = 10;
  std::size_t size = 100;      // IP payload bytes (after the IP header)
  std::size_t size_max = 100;  // sizes are drawn from [size, size_max]
  Duration interval = 100ms;
  bool echo = true;            // the concentrator answers each packet
};

struct ScenarioConfig {
  std::string id = "custom";
  std::string description;
  std::uint64_t seed = 1;
  Af transport_af = Af::V4;
  Af payload_af = Af::V6;
  prov::SiRole si_role = prov::SiRole::Host;
  bool behind_cpe = false;
  std::optional<NatSpec> nat;
  /// Test-only: the concentrator answers from another address and port.
  bool respond_from_different_port = false;

  std::size_t link_mtu = 1500;
  Duration link_delay = 10ms;
  double loss = 0.0;
  tunnel::KeepaliveConfig keepalive;

  bool chap = true;
  std::string user = "alice";
  std::string secret = "wonderland";
  std::string si_secret;  // what the initiator presents; empty means `secret`
  std::optional<std::string> tunnel_secret;
  nlohmann::json aaa;     // user directory; empty means one user without attributes
  std::optional<std::uint64_t> si_iid;

  prov::Dhcp6Mode dhcpv6_mode = prov::Dhcp6Mode::Stateful;
  bool dhcpv6_address_mode = false;
  bool request_dns = true;

  TrafficSpec traffic;
  Duration hold = 0s;
  Duration establish_limit = 300s;

  /// Built-in definition of a named scenario; throws InvalidConfig for an
  /// unknown id.
  static ScenarioConfig named(std::string_view id);
  /// Fields absent from `j` keep the defaults of the named scenario `j.id`
  /// (or of a custom scenario). "seed" is mandatory.
  static ScenarioConfig from_json(const nlohmann::json& j);
  static ScenarioConfig load(const std::filesystem::path& file);
  nlohmann::json to_json() const;
  void validate() const;
};

struct ExitReport {
  int exit_code = 0;
  std::string step;    // failing step, empty on success
  std::string detail;
  std::vector<std::string> completed;
  nlohmann::json stats = nlohmann::json::object();
  std::optional<std::filesystem::path> trace_path;

  bool ok() const { return exit_code == 0; }
  std::string str() const;
};

class Simulation {
 public:
  explicit Simulation(ScenarioConfig config);
  ~Simulation();

  /// Step 1-3: L2TP, PPP and provisioning. Nullopt on success.
  std::optional<sw::Failure> establish();
  /// Scenario postconditions: addresses, delegations, routes.
  std::optional<sw::Failure> verify();
  /// Transport-family packets must be refused at both ends.
  std::optional<sw::Failure> wrong_af_check();
  std::optional<sw::Failure> traffic();
  /// Keeps the softwire idle for `d`; fails if it goes down.
  std::optional<sw::Failure> hold(Duration d);
  std::optional<sw::Failure> teardown();
  /// Stop-record octets against the trace.
  std::optional<sw::Failure> check_accounting();

  /// Runs every step in order.
  ExitReport run();

  void advance(Duration d) { net_->advance(net_->now() + d); }
  net::Network& network() { return *net_; }
  sw::Initiator& si() { return *si_; }
  sw::Concentrator& sc() { return *sc_; }
  aaa::Accountant& accountant() { return accountant_; }
  aaa::UserDirectory& directory() { return directory_; }
  const ScenarioConfig& config() const { return config_; }
  /// The concentrator's single softwire, once created.
  const sw::Concentrator::Softwire* softwire() const;
  nlohmann::json stats() const;

 private:
  template <typename Pred>
  bool run_until(Pred done, SimTime limit);
  IpAddr internet_host() const;

  ScenarioConfig config_;
  std::unique_ptr<net::Network> net_;
  aaa::UserDirectory directory_;
  aaa::Accountant accountant_;
  std::unique_ptr<sw::Initiator> si_;
  std::unique_ptr<sw::Concentrator> sc_;
};

/// Runs a scenario and optionally writes its trace.
ExitReport run(const ScenarioConfig& config, const std::optional<std::filesystem::path>& trace_path = {});

/// Directory holding the shipped scenario files.
std::filesystem::path scenario_dir();
/// A named id resolves to its shipped file when present, else the built-in
/// definition; anything else is read as a file path.
ScenarioConfig resolve(const std::string& name_or_file);

/// Trace post-processing used by the stats and routes subcommands. Routes
/// are listed with the times they were added and removed (null while
/// still installed).
nlohmann::json trace_stats(const std::vector<nlohmann::json>& lines);
nlohmann::json trace_routes(const std::vector<nlohmann::json>& lines);

}  // namespace swforge::scenario
