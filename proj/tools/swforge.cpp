// swforge: runs softwire deployment scenarios and inspects their traces.
//
// Exit codes: 0 success, 1 protocol failure, 2 usage error.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "swforge/provisioning.hpp"
#include "swforge/scenario.hpp"
#include "swforge/trace.hpp"

using namespace swforge;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kProtocolFailure = 1;
constexpr int kUsage = 2;

void print_establishment(const Trace& trace) {
  for (const auto& l : trace.lines()) {
    const std::string ev = l["event"];
    if (ev == "Control" && l["message"] != "ZLB") {
      std::printf("%10.6f  %-3s %-8s ns=%-3d nr=%-3d%s\n", l["time"].get<double>(), l["from"].get<std::string>().c_str(),
                  l["message"].get<std::string>().c_str(), l["ns"].get<int>(), l["nr"].get<int>(),
                  l["retransmission"].get<bool>() ? "  (retransmission)" : "");
    } else if (ev == "PppUp" || ev == "Provisioned" || ev == "TunnelDown" || ev == "PppFailed" ||
               ev == "ProvisioningFailed" || ev == "NatFiltered" || ev == "PeerMoved") {
      std::printf("%10.6f  %-3s %s: %s\n", l["time"].get<double>(), l["from"].get<std::string>().c_str(), ev.c_str(),
                  l["summary"].get<std::string>().c_str());
    }
  }
}

int cmd_run(const std::string& target, std::optional<std::uint64_t> seed, const std::string& nat,
            const std::string& trace_path, bool different_port, std::optional<double> hold, bool as_json) {
  scenario::ScenarioConfig config;
  try {
    config = scenario::resolve(target);
    if (seed) config.seed = *seed;
    if (!nat.empty()) config.nat = scenario::NatSpec{net::parse_filtering(nat), std::chrono::seconds(120)};
    if (different_port) config.respond_from_different_port = true;
    if (hold) config.hold = Duration(static_cast<std::int64_t>(*hold * 1e6));
    config.validate();
  } catch (const Error& e) {
    std::cerr << "swforge: " << e.what() << '\n';
    return kUsage;
  }

  scenario::Simulation sim(config);
  auto report = sim.run();
  if (!trace_path.empty()) {
    try {
      sim.network().trace().write(trace_path);
    } catch (const Error& e) {
      std::cerr << "swforge: " << e.what() << '\n';
      return kUsage;
    }
  }
  if (as_json) {
    json j = {{"exit_code", report.exit_code}, {"step", report.step}, {"detail", report.detail},
              {"completed", report.completed}, {"stats", report.stats}};
    if (!trace_path.empty()) j["trace"] = trace_path;
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << "scenario " << config.id << " (seed " << config.seed << ")";
    if (!config.description.empty()) std::cout << ": " << config.description;
    std::cout << '\n';
    print_establishment(sim.network().trace());
    const auto& si = report.stats["si"];
    if (si.contains("address")) std::cout << "address:   " << si["address"].get<std::string>() << '\n';
    if (si.contains("delegated_v6")) std::cout << "delegated: " << si["delegated_v6"].get<std::string>() << '\n';
    if (si.contains("delegated_v4")) std::cout << "delegated: " << si["delegated_v4"].get<std::string>() << '\n';
    if (si.contains("mtu")) std::cout << "mtu:       " << si["mtu"] << '\n';
    std::cout << "result:    " << report.str() << '\n';
  }
  return report.ok() ? kOk : kProtocolFailure;
}

int cmd_validate(const std::string& af, const std::string& endpoint, const std::string& delegated) {
  try {
    auto v = prov::validate_combo(af, endpoint, delegated);
    std::cout << v.note << '\n';
    return kOk;
  } catch (const Error& e) {
    std::cerr << "swforge: " << e.what() << '\n';
    return kUsage;
  }
}

std::optional<std::vector<json>> read_trace(const std::string& path) {
  try {
    return Trace::read(path);
  } catch (const Error& e) {
    std::cerr << "swforge: " << e.what() << '\n';
    return std::nullopt;
  }
}

int cmd_stats(const std::string& path, bool as_json) {
  auto lines = read_trace(path);
  if (!lines) return kUsage;
  auto s = scenario::trace_stats(*lines);
  if (as_json) {
    std::cout << s.dump(2) << '\n';
    return kOk;
  }
  for (const auto& e : s["tunnel_events"]) {
    std::printf("%10.6f  %-3s tunnel %s", e["time"].get<double>(), e["node"].get<std::string>().c_str(),
                e["event"].get<std::string>().c_str());
    if (e.contains("reason")) std::printf(" (%s)", e["reason"].get<std::string>().c_str());
    std::printf("\n");
  }
  for (const auto& [node, afs] : s["payload"].items())
    for (const auto& [af, c] : afs.items())
      std::printf("%-3s %s_octets_in=%llu %s_octets_out=%llu %s_packets_in=%llu %s_packets_out=%llu\n", node.c_str(),
                  af.c_str(), static_cast<unsigned long long>(c["octets_in"].get<std::uint64_t>()), af.c_str(),
                  static_cast<unsigned long long>(c["octets_out"].get<std::uint64_t>()), af.c_str(),
                  static_cast<unsigned long long>(c["packets_in"].get<std::uint64_t>()), af.c_str(),
                  static_cast<unsigned long long>(c["packets_out"].get<std::uint64_t>()));
  for (const auto& r : s["accounting"]) std::cout << "accounting " << r.dump() << '\n';
  return kOk;
}

int cmd_routes(const std::string& path, bool as_json) {
  auto lines = read_trace(path);
  if (!lines) return kUsage;
  auto r = scenario::trace_routes(*lines);
  if (as_json) {
    std::cout << r.dump(2) << '\n';
    return kOk;
  }
  for (const char* node : {"si", "sc"}) {
    std::cout << node << ":\n";
    if (!r.contains(node) || r[node].empty()) {
      std::cout << "  (empty)\n";
      continue;
    }
    for (const auto& e : r[node]) {
      std::printf("  %-22s via softwire %u (%s) added %.6f", e["prefix"].get<std::string>().c_str(),
                  e["softwire"].get<unsigned>(), e["origin"].get<std::string>().c_str(), e["added"].get<double>());
      if (!e["removed"].is_null()) std::printf(" removed %.6f", e["removed"].get<double>());
      std::printf("\n");
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Softwire scenario runner"};
  app.require_subcommand(1);

  std::string target, nat, trace_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> hold;
  bool different_port = false, run_json = false;
  auto* run = app.add_subcommand("run", "Run a named scenario or a scenario file");
  run->add_option("scenario", target, "Scenario id (3.1.1 ... 3.2.4) or JSON file")->required();
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--nat", nat, "Insert a NAT in front of the initiator")->check(CLI::IsMember({"eif", "adf", "apdf"}));
  run->add_option("--trace", trace_path, "Write the JSON-lines trace here");
  run->add_option("--hold", hold, "Seconds to keep the softwire up after traffic");
  run->add_flag("--respond-from-different-port", different_port,
                "Test only: the concentrator answers from another address and port");
  run->add_flag("--json", run_json, "Print a machine-readable report");

  std::string af, endpoint, delegated;
  auto* validate = app.add_subcommand("validate", "Classify an endpoint/delegated scope combination");
  validate->add_option("af", af, "v4 or v6")->required();
  validate->add_option("endpoint", endpoint, "Endpoint scope")->required();
  validate->add_option("delegated", delegated, "Delegated prefix scope")->required();

  std::string stats_trace, routes_trace;
  bool stats_json = false, routes_json = false;
  auto* stats = app.add_subcommand("stats", "Tunnel events and per-family octets from a trace");
  stats->add_option("--trace", stats_trace, "Trace file")->required();
  stats->add_flag("--json", stats_json, "Print JSON");
  auto* routes = app.add_subcommand("routes", "Routing tables reconstructed from a trace");
  routes->add_option("--trace", routes_trace, "Trace file")->required();
  routes->add_flag("--json", routes_json, "Print JSON");

  std::string show_target;
  auto* show = app.add_subcommand("show", "Print the resolved configuration of a scenario");
  show->add_option("scenario", show_target, "Scenario id or JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  if (*run) return cmd_run(target, seed, nat, trace_path, different_port, hold, run_json);
  if (*validate) return cmd_validate(af, endpoint, delegated);
  if (*stats) return cmd_stats(stats_trace, stats_json);
  if (*routes) return cmd_routes(routes_trace, routes_json);
  if (*show) {
    try {
      std::cout << scenario::resolve(show_target).to_json().dump(2) << '\n';
      return kOk;
    } catch (const Error& e) {
      std::cerr << "swforge: " << e.what() << '\n';
      return kUsage;
    }
  }
  return kUsage;
}
