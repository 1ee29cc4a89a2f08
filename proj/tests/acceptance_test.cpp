// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "scenario_support.hpp"
#include "swforge/ppp.hpp"
#include "swforge/provisioning.hpp"
#include "swforge/scenario.hpp"
#include "test_support.hpp"

using namespace swforge;
using namespace swforge::scenario;
using namespace std::chrono_literals;
using nlohmann::json;
using swforge::testing::events;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool cond, const std::string& what) {
    if (cond) return;
    pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

json aaa_user(json attributes) {
  return {{"users", json::array({{{"user", "alice"}, {"secret", "wonderland"}, {"attributes", attributes}}})}};
}

Outcome dead_peer() {
  Outcome o;
  auto wall = std::chrono::steady_clock::now();
  for (const auto& id : named_ids()) {
    Simulation sim(ScenarioConfig::named(id));
    if (sim.establish()) {
      o.check(false, id + " did not establish");
      continue;
    }
    sim.sc().set_silent(true);
    sim.advance(300s);
    double last = -1, down = -1;
    for (const auto& l : sim.network().trace().lines()) {
      if (l["event"] == "Deliver" && l["to"] == "si" && down < 0) last = l["time"];
      if (l["event"] == "TunnelDown" && l["from"] == "si" && down < 0) down = l["time"];
    }
    std::ostringstream d;
    d << id << " detected after " << (down - last) << " s";
    o.check(down > 0 && std::abs(down - last - 83.0) < 1e-9, d.str());
  }
  auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall).count();
  o.check(elapsed < 1.0, "wall clock " + std::to_string(elapsed) + " s");
  if (o.pass) o.detail = "83 s in all 8 scenarios, " + std::to_string(elapsed).substr(0, 5) + " s wall clock";
  return o;
}

Outcome mtu() {
  Outcome o;
  auto v4 = ppp::compute_ppp_mtu(1500, Af::V4, false);
  auto v6 = ppp::compute_ppp_mtu(1500, Af::V6, false);
  // outer IP + UDP + L2TP data header with length + PPP address/control/protocol
  const std::size_t ledger_v6 = 1500 - (40 + 8 + 8 + 4);
  o.check(v4 == 1460, "IPv4 transport " + std::to_string(v4));
  o.check(v6 == ledger_v6, "IPv6 transport " + std::to_string(v6));
  Simulation sim(ScenarioConfig::named("3.1.1"));
  o.check(!sim.establish() && sim.si().ppp()->mtu() == 1460, "negotiated MTU in 3.1.1");
  if (o.pass) o.detail = "IPv4 1460, IPv6 " + std::to_string(v6);
  return o;
}

Outcome establishment() {
  Outcome o;
  for (const auto& id : named_ids()) {
    Simulation sim(ScenarioConfig::named(id));
    auto r = sim.run();
    o.check(r.ok(), id + " exit " + std::to_string(r.exit_code));
    auto err = swforge::testing::check_establishment(sim.network().trace().lines());
    o.check(err.empty(), id + ": " + err);
  }
  if (o.pass) o.detail = "8/8 scenarios";
  return o;
}

Outcome nat_matrix() {
  Outcome o;
  std::string table;
  for (auto f : {net::Filtering::EndpointIndependent, net::Filtering::AddressDependent,
                 net::Filtering::AddressAndPortDependent}) {
    table += std::string(net::to_string(f)) + ":";
    for (bool different : {false, true}) {
      auto c = ScenarioConfig::named("3.1.1");
      c.nat = NatSpec{f, 120s};
      c.respond_from_different_port = different;
      bool ok = run(c).ok();
      bool expect = !different || f == net::Filtering::EndpointIndependent;
      o.check(ok == expect, std::string(net::to_string(f)) + (different ? " different port" : " same port"));
      table += ok ? " ok" : " fail";
    }
    table += " ";
  }
  o.detail = o.pass ? table : o.detail + " [" + table + "]";
  return o;
}

Outcome binding_refresh() {
  Outcome o;
  {
    auto c = ScenarioConfig::named("3.1.1");
    c.nat = NatSpec{net::Filtering::AddressAndPortDependent, 120s};
    c.keepalive.hello_interval = 60s;
    Simulation sim(c);
    o.check(!sim.establish(), "establish with hello 60");
    o.check(!sim.hold(3600s), "softwire lost within the hour");
    auto t = sim.network().trace().lines();
    o.check(events(t, "NatFiltered").empty() && events(t, "NatExpired").empty(), "binding lapsed");
  }
  {
    auto c = ScenarioConfig::named("3.1.1");
    c.nat = NatSpec{net::Filtering::AddressAndPortDependent, 120s};
    c.keepalive.hello_interval = 0s;
    Simulation sim(c);
    o.check(!sim.establish(), "establish without keepalive");
    auto mark = sim.network().trace().lines().size();
    sim.advance(121s);
    sim.sc().send_hello(sim.network().now());
    sim.advance(1s);
    auto t = sim.network().trace().lines();
    std::string first;
    for (std::size_t i = mark; i < t.size(); ++i) {
      const auto& l = t[i];
      if ((l["event"] == "Deliver" && l["to"] == "si") || l["event"] == "NatFiltered") {
        first = l["event"];
        break;
      }
    }
    o.check(first == "NatFiltered", "first inbound after 121 s was " + (first.empty() ? "nothing" : first));
  }
  if (o.pass) o.detail = "1 h survival with hello 60; NatFiltered after 121 s idle";
  return o;
}

Outcome scope_tables() {
  Outcome o;
  using prov::Verdict;
  struct V6Cell {
    Ipv6Scope endpoint, delegated;
    Verdict verdict;
  };
  const V6Cell v6[] = {
      {Ipv6Scope::LinkLocal, Ipv6Scope::Global, Verdict::Possible},
      {Ipv6Scope::LinkLocal, Ipv6Scope::Ula, Verdict::Possible},
      {Ipv6Scope::Ula, Ipv6Scope::Global, Verdict::Possible},
      {Ipv6Scope::Ula, Ipv6Scope::Ula, Verdict::Possible},
      {Ipv6Scope::Global, Ipv6Scope::Global, Verdict::Possible},
      {Ipv6Scope::Global, Ipv6Scope::Ula, Verdict::PossibleNotRecommended},
  };
  struct V4Cell {
    Ipv4Scope endpoint, delegated;
    Verdict verdict;
    const char* note;
  };
  const V4Cell v4[] = {
      {Ipv4Scope::Private, Ipv4Scope::Public, Verdict::Possible, "Possible"},
      {Ipv4Scope::Private, Ipv4Scope::Private, Verdict::PossibleNotRecommended,
       "Possible, but Not Recommended when using NAT"},
      {Ipv4Scope::Public, Ipv4Scope::Public, Verdict::Possible, "Possible"},
      {Ipv4Scope::Public, Ipv4Scope::Private, Verdict::Possible, "Possible, but NAT usage is recommended"},
  };
  int cells = 0;
  for (const auto& c : v6) {
    auto v = prov::validate_combo(c.endpoint, c.delegated);
    o.check(v.verdict == c.verdict, "IPv6 cell " + std::to_string(cells));
    ++cells;
  }
  for (const auto& c : v4) {
    auto v = prov::validate_combo(c.endpoint, c.delegated);
    o.check(v.verdict == c.verdict && v.note == c.note, "IPv4 cell " + std::to_string(cells));
    ++cells;
  }

  std::mt19937_64 rng(606);
  int out_of_bounds = 0, rejected = 0;
  for (int i = 0; i < 5000; ++i) {
    prov::ServerConfig cfg;
    cfg.delegation_len_v6 = static_cast<int>(rng() % 129);
    cfg.delegation_len_v4 = static_cast<int>(rng() % 33);
    bool bad = cfg.delegation_len_v6 < 48 || cfg.delegation_len_v6 > 64 || cfg.delegation_len_v4 < 8 ||
               cfg.delegation_len_v4 > 30;
    out_of_bounds += bad;
    try {
      prov::ProvisioningServer s(cfg);
      o.check(!bad, "accepted out-of-range lengths");
    } catch (const Error& e) {
      rejected += bad && e.code() == Errc::LengthOutOfRange;
      o.check(bad, "rejected in-range lengths");
    }
  }
  o.check(rejected == out_of_bounds, "rejected " + std::to_string(rejected) + "/" + std::to_string(out_of_bounds));
  if (o.pass)
    o.detail = std::to_string(cells) + "/10 cells; " + std::to_string(rejected) + "/" +
               std::to_string(out_of_bounds) + " out-of-range pool configs rejected";
  return o;
}

Outcome aaa_mappings() {
  Outcome o;
  {
    auto c = ScenarioConfig::named("3.1.1");
    c.aaa = aaa_user({{"Framed-Interface-Id", "0:0:0:1234"}});
    Simulation sim(c);
    bool ok = !sim.establish() && !sim.verify();
    o.check(ok && sim.si().ppp()->remote_iid() == 0x1234, "Framed-Interface-Id not seen in IPV6CP");
  }
  {
    auto c = ScenarioConfig::named("3.2.1");
    c.aaa = aaa_user({{"Framed-IP-Address", "192.0.2.77"}});
    Simulation sim(c);
    bool ok = !sim.establish() && !sim.verify();
    o.check(ok && sim.si().ppp()->local_ipv4() == Ipv4Addr::parse("192.0.2.77"),
            "Framed-IP-Address not the IPCP address");
  }
  {
    auto c = ScenarioConfig::named("3.2.2");
    c.aaa = aaa_user({{"Framed-IP-Address", "198.18.4.0"}, {"Framed-IP-Netmask", "255.255.255.0"}});
    Simulation sim(c);
    bool ok = !sim.establish() && !sim.verify();
    auto route = sim.sc().provisioning().rib().lookup(Ipv4Addr::parse("198.18.4.9"));
    o.check(ok && sim.si().client()->delegated_v4() == parse_prefix4("198.18.4.0/24") && route &&
                route->softwire == sim.softwire()->id,
            "Framed-IP-Netmask did not delegate with a route");
  }
  {
    auto c = ScenarioConfig::named("3.1.2");
    c.aaa = aaa_user({{"Delegated-IPv6-Prefix", "2001:db8:abcd::/48"}});
    Simulation sim(c);
    bool ok = !sim.establish() && !sim.verify();
    auto rec = sim.sc().provisioning().record(sim.softwire()->id);
    o.check(ok && sim.si().client()->delegated_v6() == parse_prefix6("2001:db8:abcd::/48") && rec.duid &&
                *rec.duid == sim.si().config().client.duid,
            "Delegated-IPv6-Prefix not delegated with DUID association");
  }
  if (o.pass) o.detail = "Framed-Interface-Id, Framed-IP-Address(+Netmask), Delegated-IPv6-Prefix";
  return o;
}

Outcome codec() {
  Outcome o;
  std::mt19937_64 rng(8);
  int mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    auto m = swforge::testing::random_control_message(rng);
    try {
      if (!swforge::testing::same_message(m, l2tp::decode_message(l2tp::encode_message(m)))) ++mismatches;
    } catch (const Error&) {
      ++mismatches;
    }
  }
  o.check(mismatches == 0, std::to_string(mismatches) + " round-trip mismatches");
  try {
    l2tp::decode_message(swforge::testing::load_fixture("sccrq_hidden_avp.hex"));
    o.check(false, "hidden AVP accepted");
  } catch (const Error& e) {
    o.check(e.code() == Errc::HiddenAvpRejected, std::string("hidden AVP: ") + e.what());
  }
  for (const char* f : {"sccrq_minimal.hex", "iccn.hex", "zlb.hex"}) {
    auto wire = swforge::testing::load_fixture(f);
    auto a = l2tp::decode_message(wire);
    auto b = l2tp::decode_message(wire);
    o.check(swforge::testing::same_message(a, b) && l2tp::encode_message(a) == wire, std::string("golden ") + f);
  }
  if (o.pass) o.detail = "10000 round trips, hidden AVP rejected, 3 golden fixtures stable";
  return o;
}

Outcome accounting() {
  Outcome o;
  std::mt19937_64 rng(909);
  int runs = 0;
  for (int i = 0; i < 24; ++i) {
    auto c = ScenarioConfig::named(named_ids()[i % named_ids().size()]);
    c.seed = rng() % 1000000;
    c.traffic.packets = 1 + static_cast<int>(rng() % 50);
    c.traffic.size = rng() % 300;
    c.traffic.size_max = c.traffic.size + rng() % 1100;
    c.traffic.echo = rng() % 3 != 0;
    c.loss = (rng() % 2) ? 0.02 : 0.0;
    Simulation sim(c);
    auto r = sim.run();
    if (!r.ok()) {
      o.check(false, c.id + " seed " + std::to_string(c.seed) + ": " + r.str());
      continue;
    }
    const auto& rec = sim.accountant().records();
    if (rec.size() != 2) {
      o.check(false, "expected Start and Stop");
      continue;
    }
    std::uint64_t sum[2][2] = {};
    for (const auto& l : sim.network().trace().lines()) {
      if (l["event"] != "Payload" || l["from"] != "sc") continue;
      sum[l["af"] == "IPv6"][l["dir"] == "tx"] += l["bytes"].get<std::uint64_t>();
    }
    const auto& stop = rec.back();
    o.check(stop.v4.octets_in == sum[0][0] && stop.v4.octets_out == sum[0][1] && stop.v6.octets_in == sum[1][0] &&
                stop.v6.octets_out == sum[1][1],
            c.id + " seed " + std::to_string(c.seed) + " octets differ");
    ++runs;
  }
  if (o.pass) o.detail = std::to_string(runs) + " randomized runs, exact equality";
  return o;
}

Outcome determinism() {
  Outcome o;
  auto dir = std::filesystem::temp_directory_path() / "swforge_acceptance";
  std::filesystem::create_directories(dir);
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  for (const auto& id : named_ids()) {
    auto c = ScenarioConfig::named(id);
    c.loss = 0.02;
    c.nat = NatSpec{net::Filtering::AddressDependent, 120s};
    run(c, dir / "a.jsonl");
    run(c, dir / "b.jsonl");
    auto a = slurp(dir / "a.jsonl"), b = slurp(dir / "b.jsonl");
    o.check(!a.empty() && a == b, id + " traces differ");
  }
  std::filesystem::remove_all(dir);
  if (o.pass) o.detail = "8/8 scenarios byte-identical";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"dead-peer detection", dead_peer},     {"MTU", mtu},
      {"establishment conformance", establishment}, {"NAT matrix", nat_matrix},
      {"binding refresh", binding_refresh},   {"provisioning tables", scope_tables},
      {"AAA semantics", aaa_mappings},        {"codec", codec},
      {"accounting conservation", accounting}, {"determinism", determinism},
  };
  int failed = 0, n = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", ++n, name.c_str(), o.detail.c_str());
  }
  std::printf("%d/%d criteria passed\n", n - failed, n);
  return failed == 0 ? 0 : 1;
}
