#include "swforge/scenario.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#ifndef SWFORGE_SCENARIO_DIR
#define SWFORGE_SCENARIO_DIR "scenarios"
#endif

namespace swforge::scenario {

using nlohmann::json;

namespace {

struct NamedDef {
  const char* id;
  Af transport;
  prov::SiRole role;
  bool behind_cpe;
  const char* description;
};

constexpr NamedDef kNamed[] = {
    {"3.1.1", Af::V4, prov::SiRole::Host, false, "IPv6 over IPv4, dual-stack host as initiator"},
    {"3.1.2", Af::V4, prov::SiRole::Router, false, "IPv6 over IPv4, router CPE with prefix delegation"},
    {"3.1.3", Af::V4, prov::SiRole::Host, true, "IPv6 over IPv4, host behind an IPv4-only CPE"},
    {"3.1.4", Af::V4, prov::SiRole::Router, true, "IPv6 over IPv4, router behind an IPv4-only CPE"},
    {"3.2.1", Af::V6, prov::SiRole::Host, false, "IPv4 over IPv6, dual-stack host as initiator"},
    {"3.2.2", Af::V6, prov::SiRole::Router, false, "IPv4 over IPv6, router CPE with subnet allocation"},
    {"3.2.3", Af::V6, prov::SiRole::Host, true, "IPv4 over IPv6, host behind an IPv6-only CPE"},
    {"3.2.4", Af::V6, prov::SiRole::Router, true, "IPv4 over IPv6, router behind an IPv6-only CPE"},
};

constexpr Duration kCpeHop = 2ms;
constexpr std::uint16_t kAltPort = 1702;

Duration seconds(double s) { return Duration(std::llround(s * 1e6)); }
double secs(Duration d) { return to_seconds(d); }

Af other(Af af) { return af == Af::V4 ? Af::V6 : Af::V4; }

json stats_json(const tunnel::Stats& s) {
  auto af = [](const tunnel::AfCounters& c) {
    return json{{"octets_in", c.octets_in}, {"octets_out", c.octets_out},
                {"packets_in", c.packets_in}, {"packets_out", c.packets_out}};
  };
  return {{"control_tx", s.control_tx}, {"control_rx", s.control_rx}, {"retransmits", s.retransmits},
          {"zlb_tx", s.zlb_tx},         {"data_tx", s.data_tx},       {"data_rx", s.data_rx},
          {"wrong_af_rejected", s.wrong_af_rejected}, {"v4", af(s.v4)}, {"v6", af(s.v6)}};
}

json rib_json(const prov::Rib& rib) {
  json out = json::array();
  for (const auto& e : rib.entries())
    out.push_back({{"prefix", to_string(e.prefix)}, {"softwire", e.softwire}, {"origin", prov::to_string(e.origin)}});
  return out;
}

sw::Failure failure(std::string step, Errc code, std::string detail) {
  return sw::Failure{std::move(step), code, std::move(detail)};
}

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j[key].is_null()) out = j[key].get<T>();
}

void take_duration(const json& j, const char* key, Duration& out) {
  if (j.contains(key) && !j[key].is_null()) out = seconds(j[key].get<double>());
}

}  // namespace

const std::vector<std::string>& named_ids() {
  static const std::vector<std::string> ids = [] {
    std::vector<std::string> v;
    for (const auto& n : kNamed) v.emplace_back(n.id);
    return v;
  }();
  return ids;
}

// ---- config ---------------------------------------------------------------------

ScenarioConfig ScenarioConfig::named(std::string_view id) {
  for (std::size_t i = 0; i < std::size(kNamed); ++i) {
    const auto& n = kNamed[i];
    if (id != n.id) continue;
    ScenarioConfig c;
    c.id = n.id;
    c.description = n.description;
    c.seed = 1000 + i;
    c.transport_af = n.transport;
    c.payload_af = other(n.transport);
    c.si_role = n.role;
    c.behind_cpe = n.behind_cpe;
    c.dhcpv6_mode = n.role == prov::SiRole::Host ? prov::Dhcp6Mode::Stateless : prov::Dhcp6Mode::Stateful;
    return c;
  }
  throw Error(Errc::InvalidConfig, "unknown scenario '" + std::string(id) + "'");
}

ScenarioConfig ScenarioConfig::from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "scenario must be a JSON object");
  if (!j.contains("seed") || !j["seed"].is_number_integer() || j["seed"].get<std::int64_t>() < 0)
    throw Error(Errc::InvalidConfig, "scenario needs an unsigned integer seed");
  ScenarioConfig c;
  std::string id = j.value("id", std::string("custom"));
  bool named_id = std::find(named_ids().begin(), named_ids().end(), id) != named_ids().end();
  if (named_id) c = named(id);
  c.id = id;
  try {
    take(j, "description", c.description);
    c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("transport_af")) c.transport_af = parse_af(j["transport_af"].get<std::string>());
    if (j.contains("payload_af")) c.payload_af = parse_af(j["payload_af"].get<std::string>());
    if (j.contains("si_role")) c.si_role = prov::parse_si_role(j["si_role"].get<std::string>());
    take(j, "behind_cpe", c.behind_cpe);
    if (j.contains("nat")) {
      if (j["nat"].is_null()) {
        c.nat.reset();
      } else {
        NatSpec n;
        if (j["nat"].contains("filtering")) n.filtering = net::parse_filtering(j["nat"]["filtering"].get<std::string>());
        take_duration(j["nat"], "binding_ttl", n.binding_ttl);
        c.nat = n;
      }
    }
    take(j, "respond_from_different_port", c.respond_from_different_port);
    if (j.contains("link")) {
      const auto& l = j["link"];
      take(l, "mtu", c.link_mtu);
      if (l.contains("delay_ms")) c.link_delay = seconds(l["delay_ms"].get<double>() / 1000.0);
      take(l, "loss", c.loss);
    }
    if (j.contains("keepalive")) {
      const auto& k = j["keepalive"];
      take_duration(k, "hello_interval", c.keepalive.hello_interval);
      take_duration(k, "retransmit_base", c.keepalive.retransmit_base);
      take_duration(k, "retransmit_max", c.keepalive.retransmit_max);
      take(k, "max_retransmits", c.keepalive.max_retransmits);
      take(k, "lcp_echo", c.keepalive.lcp_echo_enabled);
      take_duration(k, "lcp_echo_interval", c.keepalive.lcp_echo_interval);
    }
    if (j.contains("auth")) {
      const auto& a = j["auth"];
      take(a, "chap", c.chap);
      take(a, "user", c.user);
      take(a, "secret", c.secret);
      take(a, "si_secret", c.si_secret);
      if (a.contains("tunnel_secret")) {
        if (a["tunnel_secret"].is_null()) c.tunnel_secret.reset();
        else c.tunnel_secret = a["tunnel_secret"].get<std::string>();
      }
      if (a.contains("si_iid") && !a["si_iid"].is_null()) c.si_iid = a["si_iid"].get<std::uint64_t>();
    }
    if (j.contains("aaa")) c.aaa = j["aaa"];
    if (j.contains("provisioning")) {
      const auto& p = j["provisioning"];
      if (p.contains("dhcpv6_mode"))
        c.dhcpv6_mode = p["dhcpv6_mode"] == "stateless" ? prov::Dhcp6Mode::Stateless : prov::Dhcp6Mode::Stateful;
      take(p, "dhcpv6_address_mode", c.dhcpv6_address_mode);
      take(p, "request_dns", c.request_dns);
    }
    if (j.contains("traffic")) {
      const auto& t = j["traffic"];
      take(t, "packets", c.traffic.packets);
      take(t, "size", c.traffic.size);
      c.traffic.size_max = c.traffic.size;
      take(t, "size_max", c.traffic.size_max);
      if (t.contains("interval_ms")) c.traffic.interval = seconds(t["interval_ms"].get<double>() / 1000.0);
      take(t, "echo", c.traffic.echo);
    }
    take_duration(j, "hold", c.hold);
    take_duration(j, "establish_limit", c.establish_limit);
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("scenario: ") + e.what());
  }
  c.validate();
  return c;
}

ScenarioConfig ScenarioConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::InvalidConfig, "cannot read " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ParseError, file.string() + ": " + e.what());
  }
  return from_json(j);
}

json ScenarioConfig::to_json() const {
  json j = {
      {"id", id},
      {"description", description},
      {"seed", seed},
      {"transport_af", to_string(transport_af)},
      {"payload_af", to_string(payload_af)},
      {"si_role", prov::to_string(si_role)},
      {"behind_cpe", behind_cpe},
      {"nat", nullptr},
      {"respond_from_different_port", respond_from_different_port},
      {"link", {{"mtu", link_mtu}, {"delay_ms", secs(link_delay) * 1000.0}, {"loss", loss}}},
      {"keepalive",
       {{"hello_interval", secs(keepalive.hello_interval)},
        {"retransmit_base", secs(keepalive.retransmit_base)},
        {"retransmit_max", secs(keepalive.retransmit_max)},
        {"max_retransmits", keepalive.max_retransmits},
        {"lcp_echo", keepalive.lcp_echo_enabled},
        {"lcp_echo_interval", secs(keepalive.lcp_echo_interval)}}},
      {"auth",
       {{"chap", chap},
        {"user", user},
        {"secret", secret},
        {"si_secret", si_secret},
        {"tunnel_secret", tunnel_secret ? json(*tunnel_secret) : json(nullptr)},
        {"si_iid", si_iid ? json(*si_iid) : json(nullptr)}}},
      {"aaa", aaa},
      {"provisioning",
       {{"dhcpv6_mode", dhcpv6_mode == prov::Dhcp6Mode::Stateless ? "stateless" : "stateful"},
        {"dhcpv6_address_mode", dhcpv6_address_mode},
        {"request_dns", request_dns}}},
      {"traffic",
       {{"packets", traffic.packets},
        {"size", traffic.size},
        {"size_max", traffic.size_max},
        {"interval_ms", secs(traffic.interval) * 1000.0},
        {"echo", traffic.echo}}},
      {"hold", secs(hold)},
      {"establish_limit", secs(establish_limit)},
  };
  if (nat) j["nat"] = {{"filtering", net::to_string(nat->filtering)}, {"binding_ttl", secs(nat->binding_ttl)}};
  return j;
}

void ScenarioConfig::validate() const {
  bool named_id = std::find(named_ids().begin(), named_ids().end(), id) != named_ids().end();
  if (named_id && payload_af == transport_af)
    throw Error(Errc::InvalidConfig, "scenario " + id + " needs different payload and transport families");
  if (loss < 0.0 || loss > 1.0) throw Error(Errc::InvalidConfig, "loss must be in [0, 1]");
  if (traffic.packets < 0) throw Error(Errc::InvalidConfig, "negative packet count");
  if (traffic.size_max < traffic.size) throw Error(Errc::InvalidConfig, "traffic size_max below size");
  if (hold < Duration::zero() || establish_limit <= Duration::zero())
    throw Error(Errc::InvalidConfig, "negative duration");
  keepalive.validate();
}

std::string ExitReport::str() const {
  std::ostringstream out;
  if (exit_code == 0) {
    out << "ok";
  } else {
    out << "failed at step " << step;
    if (!detail.empty()) out << ": " << detail;
  }
  return out.str();
}

// ---- simulation -----------------------------------------------------------------

Simulation::Simulation(ScenarioConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  net_ = std::make_unique<net::Network>(c.seed, net::LinkConfig{c.link_delay, c.loss});

  if (c.aaa.is_null() || c.aaa.empty())
    directory_.add(aaa::UserProfile{c.user, c.secret, {}});
  else
    directory_ = aaa::UserDirectory::from_json(c.aaa);

  bool v4 = c.transport_af == Af::V4;
  IpAddr sc_addr = v4 ? IpAddr(Ipv4Addr::parse("198.51.100.1")) : IpAddr(Ipv6Addr::parse("2001:db8:ffff::1"));
  IpAddr sc_alt = v4 ? IpAddr(Ipv4Addr::parse("198.51.100.2")) : IpAddr(Ipv6Addr::parse("2001:db8:ffff::2"));
  IpAddr si_public = v4 ? IpAddr(Ipv4Addr::parse("198.51.100.10")) : IpAddr(Ipv6Addr::parse("2001:db8:aaaa::10"));
  IpAddr si_private = v4 ? IpAddr(Ipv4Addr::parse("192.168.1.10")) : IpAddr(Ipv6Addr::parse("fd00:1::10"));
  IpAddr nat_external = v4 ? IpAddr(Ipv4Addr::parse("198.51.100.100")) : IpAddr(Ipv6Addr::parse("2001:db8:aaaa::1"));

  tunnel::TunnelConfig tc;
  tc.keepalive = c.keepalive;
  tc.secret = c.tunnel_secret;
  tc.payload_af = c.payload_af;

  sw::ConcentratorConfig scc;
  scc.listen = Endpoint{sc_addr, l2tp::kUdpPort};
  if (c.respond_from_different_port) scc.reply_from = Endpoint{sc_alt, kAltPort};
  scc.tunnel = tc;
  scc.tunnel.host_name = "sc";
  scc.tunnel.seed = c.seed * 2 + 1;
  scc.ppp.payload_af = c.payload_af;
  scc.ppp.transport_af = c.transport_af;
  scc.ppp.link_mtu = c.link_mtu;
  scc.ppp.seed = c.seed * 3 + 1;
  scc.ppp.require_chap = c.chap;
  scc.ppp.host_name = "sc";
  scc.ppp.peer_hint = c.user;
  scc.ppp.echo_enabled = c.keepalive.lcp_echo_enabled;
  scc.ppp.echo_interval = c.keepalive.lcp_echo_interval;
  if (c.payload_af == Af::V4) {
    scc.ppp.local_ipv4 = Ipv4Addr::parse("192.0.2.254");
    scc.ppp.dns_servers = {Ipv4Addr::parse("192.0.2.253")};
  }
  auto& pc = scc.provisioning;
  pc.sc_id = "sc1";
  pc.onlink_pool = parse_prefix6("2001:db8:1::/48");
  pc.v6_pools["pool-a"] = parse_prefix6("2001:db8:2::/48");
  pc.delegation_pool_v6 = parse_prefix6("2001:db8:100::/40");
  pc.dns_v6 = {Ipv6Addr::parse("2001:db8::53")};
  pc.dhcpv6_address_mode = c.dhcpv6_address_mode;
  pc.stateless_info = c.request_dns;
  pc.address_pool_v4 = parse_prefix4("192.0.2.0/25");
  pc.delegation_pool_v4 = parse_prefix4("192.0.2.128/25");
  scc.echo_payload = c.traffic.echo;
  sc_ = std::make_unique<sw::Concentrator>(*net_, scc, directory_, accountant_);

  sw::InitiatorConfig sic;
  sic.local = Endpoint{c.nat ? si_private : si_public, l2tp::kUdpPort};
  sic.concentrator = scc.listen;
  sic.tunnel = tc;
  sic.tunnel.host_name = "si";
  sic.tunnel.seed = c.seed * 2;
  sic.ppp.payload_af = c.payload_af;
  sic.ppp.transport_af = c.transport_af;
  sic.ppp.link_mtu = c.link_mtu;
  sic.ppp.seed = c.seed * 3;
  sic.ppp.user_name = c.user;
  if (c.chap) sic.ppp.secret = c.si_secret.empty() ? c.secret : c.si_secret;
  sic.ppp.request_dns = c.request_dns;
  sic.ppp.iid = c.si_iid;
  sic.ppp.echo_enabled = c.keepalive.lcp_echo_enabled;
  sic.ppp.echo_interval = c.keepalive.lcp_echo_interval;
  sic.client.payload_af = c.payload_af;
  sic.client.role = c.si_role;
  sic.client.dhcpv6_mode = c.dhcpv6_mode;
  sic.client.request_dns = c.request_dns;
  sic.client.seed = c.seed;
  std::mt19937_64 duid_rng(c.seed);
  sic.client.duid = {0x00, 0x03, 0x00, 0x01};  // DUID-LL, Ethernet
  for (int i = 0; i < 6; ++i) sic.client.duid.push_back(static_cast<std::uint8_t>(duid_rng()));
  si_ = std::make_unique<sw::Initiator>(*net_, sic);

  std::vector<net::NatBox*> path;
  if (c.nat) path.push_back(&net_->add_nat("nat", net::NatConfig{nat_external, c.nat->filtering, c.nat->binding_ttl, 40000}));
  net_->add_host("si", sic.local.addr, si_.get(), path, c.behind_cpe ? kCpeHop : Duration::zero());
  net_->add_host("sc", sc_addr, sc_.get());
  if (c.respond_from_different_port) net_->add_address("sc", sc_alt);
}

Simulation::~Simulation() = default;

template <typename Pred>
bool Simulation::run_until(Pred done, SimTime limit) {
  while (!done()) {
    auto t = net_->next_event();
    if (!t || *t > limit) {
      if (net_->now() < limit) net_->advance(limit);
      return done();
    }
    net_->advance(std::max(*t, net_->now()));
  }
  return true;
}

const sw::Concentrator::Softwire* Simulation::softwire() const {
  const auto& all = sc_->softwires();
  return all.empty() ? nullptr : all.rbegin()->second.get();
}

IpAddr Simulation::internet_host() const {
  if (config_.payload_af == Af::V4) return Ipv4Addr::parse("203.0.113.80");
  return Ipv6Addr::parse("2001:db8:ffff:80::1");
}

std::optional<sw::Failure> Simulation::establish() {
  si_->start(net_->now());
  SimTime limit = net_->now() + config_.establish_limit;
  run_until([&] { return si_->provisioned() || si_->failure() || si_->down(); }, limit);
  if (si_->provisioned()) return std::nullopt;
  if (si_->failure()) return si_->failure();
  return failure(si_->step(), Errc::Timeout, "not established within " + std::to_string(secs(config_.establish_limit)) + " s");
}

std::optional<sw::Failure> Simulation::verify() {
  auto fail = [](std::string d) { return failure("verify", Errc::ProtocolViolation, std::move(d)); };
  const auto* sw = softwire();
  if (!sw) return fail("concentrator has no softwire");
  auto addr = si_->address();
  if (!addr) return fail("initiator has no payload address");
  if (family(*addr) != config_.payload_af) return fail("payload address has the wrong family");

  Prefix def = config_.payload_af == Af::V4 ? Prefix(Prefix4{}) : Prefix(Prefix6{});
  auto def_route = si_->rib().lookup(config_.payload_af == Af::V4 ? IpAddr(Ipv4Addr::parse("203.0.113.80"))
                                                                  : IpAddr(Ipv6Addr::parse("2001:db8:ffff:80::1")));
  if (!def_route || def_route->prefix != def || def_route->origin != prov::RouteOrigin::Default)
    return fail("initiator has no default route over the softwire");

  const auto* client = si_->client();
  auto routes = sc_->provisioning().rib().entries_via(sw->id);
  bool router = config_.si_role == prov::SiRole::Router;
  if (config_.payload_af == Af::V6) {
    if (scope_of(std::get<Ipv6Addr>(*addr)) == Ipv6Scope::LinkLocal) return fail("initiator only has a link-local address");
    if (router) {
      if (!client->delegated_v6()) return fail("no IPv6 prefix delegated");
      auto r = sc_->provisioning().rib().lookup(client->delegated_v6()->addr);
      if (!r || r->softwire != sw->id) return fail("no concentrator route for the delegated prefix");
    } else if (client->delegated_v6() || !routes.empty()) {
      return fail("host initiator received a delegation");
    }
    if (config_.request_dns && client->dns_v6().empty()) return fail("no DNS server learned");
  } else {
    if (router) {
      if (!client->delegated_v4()) return fail("no IPv4 prefix delegated");
      auto r = sc_->provisioning().rib().lookup(client->delegated_v4()->addr);
      if (!r || r->softwire != sw->id) return fail("no concentrator route for the delegated prefix");
    } else if (client->delegated_v4() || !routes.empty()) {
      return fail("host initiator received a delegation");
    }
    if (config_.request_dns && si_->ppp()->dns().empty()) return fail("no DNS server learned");
  }
  return std::nullopt;
}

std::optional<sw::Failure> Simulation::wrong_af_check() {
  const auto* sw = softwire();
  Af wrong = other(config_.payload_af);
  IpPacket p;
  if (wrong == Af::V4) {
    p.src = Ipv4Addr::parse("192.0.2.1");
    p.dst = Ipv4Addr::parse("203.0.113.80");
  } else {
    p.src = Ipv6Addr::parse("2001:db8:1::1");
    p.dst = Ipv6Addr::parse("2001:db8:ffff:80::1");
  }
  p.payload = Bytes(32, 0xAB);
  auto before_si = si_->tunnel().stats().wrong_af_rejected;
  auto before_sc = sw->tunnel.stats().wrong_af_rejected;
  auto r1 = si_->send_payload(p, net_->now());
  auto r2 = sc_->send_on(sw->id, IpPacket{p.dst, p.src, p.protocol, p.payload}, net_->now());
  if (r1 != Errc::WrongAddressFamily || r2 != Errc::WrongAddressFamily)
    return failure("wrong_af", Errc::ProtocolViolation, "transport-family packet was not refused");
  if (si_->tunnel().stats().wrong_af_rejected != before_si + 1 || sw->tunnel.stats().wrong_af_rejected != before_sc + 1)
    return failure("wrong_af", Errc::ProtocolViolation, "refused packet was not counted");
  return std::nullopt;
}

std::optional<sw::Failure> Simulation::traffic() {
  const auto& t = config_.traffic;
  std::mt19937_64 rng(config_.seed ^ 0x5eedULL);
  std::uniform_int_distribution<std::size_t> size(t.size, t.size_max);
  auto src = *si_->address();
  auto dst = internet_host();
  for (int i = 0; i < t.packets; ++i) {
    IpPacket p{src, dst, ipproto::kUdp, Bytes(size(rng), static_cast<std::uint8_t>(i))};
    if (auto e = si_->send_payload(p, net_->now()))
      return failure("traffic", *e, "packet " + std::to_string(i) + " refused");
    advance(t.interval);
  }
  if (config_.si_role == prov::SiRole::Router) {
    // One packet towards the delegated prefix must follow the injected route.
    const auto* client = si_->client();
    IpAddr inside = config_.payload_af == Af::V6 ? IpAddr(Ipv6Addr::from_parts(client->delegated_v6()->addr, 1))
                                                 : IpAddr(Ipv4Addr{client->delegated_v4()->addr.value + 1});
    if (auto e = sc_->send_payload(IpPacket{dst, inside, ipproto::kUdp, Bytes(64, 0x42)}, net_->now()))
      return failure("traffic", *e, "delegated prefix unreachable");
  }
  advance(1s);
  if (config_.loss == 0.0 && sc_->forwarded() < static_cast<std::uint64_t>(t.packets))
    return failure("traffic", Errc::ProtocolViolation,
                   std::to_string(sc_->forwarded()) + " of " + std::to_string(t.packets) + " packets forwarded");
  return std::nullopt;
}

std::optional<sw::Failure> Simulation::hold(Duration d) {
  SimTime until = net_->now() + d;
  run_until([&] { return si_->down(); }, until);
  if (si_->down()) return failure("hold", Errc::LinkDead, "softwire went down after " + std::to_string(secs(net_->now())) + " s");
  return std::nullopt;
}

std::optional<sw::Failure> Simulation::teardown() {
  const auto* sw = softwire();
  si_->teardown(net_->now());
  run_until([&] { return sw->tunnel.is_down() && !accountant_.open(sw->id); }, net_->now() + 120s);
  if (!sw->tunnel.is_down()) return failure("teardown", Errc::Timeout, "concentrator never saw the teardown");
  return std::nullopt;
}

std::optional<sw::Failure> Simulation::check_accounting() {
  const auto* sw = softwire();
  std::optional<aaa::AccountingRecord> stop;
  int starts = 0;
  for (const auto& r : accountant_.records()) {
    if (r.session.local_tunnel_id != sw->tunnel.local_tunnel_id()) continue;
    if (r.kind == aaa::AcctKind::Start) ++starts;
    else stop = r;
  }
  if (starts != 1 || !stop) return failure("accounting", Errc::ProtocolViolation, "expected one Start and one Stop");
  tunnel::AfCounters sum_v4, sum_v6;
  for (const auto& l : net_->trace().lines()) {
    if (l["event"] != "Payload" || l["from"] != sc_->name()) continue;
    auto& c = l["af"] == to_string(Af::V4) ? sum_v4 : sum_v6;
    std::uint64_t bytes = l["bytes"].get<std::uint64_t>();
    if (l["dir"] == "tx") {
      c.octets_out += bytes;
      ++c.packets_out;
    } else {
      c.octets_in += bytes;
      ++c.packets_in;
    }
  }
  if (sum_v4 != stop->v4 || sum_v6 != stop->v6)
    return failure("accounting", Errc::ProtocolViolation, "Stop record octets differ from the trace");
  return std::nullopt;
}

json Simulation::stats() const {
  json j;
  j["scenario"] = config_.id;
  j["seed"] = config_.seed;
  j["sim_time"] = secs(net_->now());
  j["si"] = {{"tunnel", stats_json(si_->tunnel().stats())}, {"rib", rib_json(si_->rib())}};
  if (auto a = si_->address()) j["si"]["address"] = to_string(*a);
  if (const auto* c = si_->client()) {
    if (c->delegated_v6()) j["si"]["delegated_v6"] = to_string(*c->delegated_v6());
    if (c->delegated_v4()) j["si"]["delegated_v4"] = to_string(*c->delegated_v4());
  }
  if (const auto* p = si_->ppp()) j["si"]["mtu"] = p->mtu();
  j["sc"] = {{"rib", rib_json(sc_->provisioning().rib())}, {"forwarded", sc_->forwarded()}};
  if (const auto* sw = softwire()) j["sc"]["tunnel"] = stats_json(sw->tunnel.stats());
  json acct = json::array();
  for (const auto& r : accountant_.records()) acct.push_back(aaa::to_json(r));
  j["accounting"] = acct;
  return j;
}

ExitReport Simulation::run() {
  ExitReport report;
  auto step = [&](const char* name, std::optional<sw::Failure> f) {
    if (report.exit_code != 0) return;
    if (f) {
      report.exit_code = 1;
      report.step = f->step;
      report.detail = std::string(swforge::to_string(f->code)) + ": " + f->detail;
    } else {
      report.completed.emplace_back(name);
    }
  };
  auto established = establish();
  if (established) {
    step("establish", established);
  } else {
    report.completed = {"l2tp", "ppp", "provisioning"};
  }
  if (report.ok()) step("verify", verify());
  if (report.ok()) step("wrong_af", wrong_af_check());
  if (report.ok()) step("traffic", traffic());
  if (report.ok() && config_.hold > Duration::zero()) step("hold", hold(config_.hold));
  if (report.ok()) step("teardown", teardown());
  if (report.ok()) step("accounting", check_accounting());
  report.stats = stats();
  net_->trace().emit(net_->now(), "Result", "runner", "", report.str(),
                     {{"exit_code", report.exit_code}, {"step", report.step}, {"scenario", config_.id}});
  return report;
}

ExitReport run(const ScenarioConfig& config, const std::optional<std::filesystem::path>& trace_path) {
  Simulation sim(config);
  ExitReport report = sim.run();
  if (trace_path) {
    sim.network().trace().write(*trace_path);
    report.trace_path = trace_path;
  }
  return report;
}

std::filesystem::path scenario_dir() {
  if (const char* env = std::getenv("SWFORGE_SCENARIO_DIR")) return env;
  return SWFORGE_SCENARIO_DIR;
}

ScenarioConfig resolve(const std::string& name_or_file) {
  if (std::find(named_ids().begin(), named_ids().end(), name_or_file) != named_ids().end()) {
    auto file = scenario_dir() / (name_or_file + ".json");
    if (std::filesystem::exists(file)) return ScenarioConfig::load(file);
    return ScenarioConfig::named(name_or_file);
  }
  if (std::filesystem::exists(name_or_file)) return ScenarioConfig::load(name_or_file);
  throw Error(Errc::InvalidConfig, "unknown scenario '" + name_or_file + "'");
}

// ---- trace post-processing ------------------------------------------------------

json trace_stats(const std::vector<json>& lines) {
  json events = json::array();
  std::map<std::string, std::map<std::string, tunnel::AfCounters>> payload;
  json accounting = json::array();
  for (const auto& l : lines) {
    const std::string ev = l.value("event", "");
    if (ev == "SessionUp" || ev == "TunnelDown") {
      json e = {{"time", l["time"]}, {"node", l["from"]}, {"event", ev == "SessionUp" ? "up" : "down"}};
      if (l.contains("reason")) e["reason"] = l["reason"];
      events.push_back(e);
    } else if (ev == "Payload") {
      auto& c = payload[l["from"].get<std::string>()][l["af"].get<std::string>()];
      auto bytes = l["bytes"].get<std::uint64_t>();
      if (l["dir"] == "tx") {
        c.octets_out += bytes;
        ++c.packets_out;
      } else {
        c.octets_in += bytes;
        ++c.packets_in;
      }
    } else if (ev == "Accounting") {
      accounting.push_back(l["record"]);
    }
  }
  json per_node = json::object();
  for (const auto& [node, afs] : payload)
    for (const auto& [af, c] : afs)
      per_node[node][af] = {{"octets_in", c.octets_in}, {"octets_out", c.octets_out},
                            {"packets_in", c.packets_in}, {"packets_out", c.packets_out}};
  return {{"tunnel_events", events}, {"payload", per_node}, {"accounting", accounting}};
}

json trace_routes(const std::vector<json>& lines) {
  std::map<std::string, std::vector<json>> ribs;
  for (const auto& l : lines) {
    if (l.value("event", "") != "Route") continue;
    auto& rib = ribs[l["from"].get<std::string>()];
    if (l["op"] == "add") {
      rib.push_back({{"prefix", l["prefix"]}, {"softwire", l["softwire"]}, {"origin", l["origin"]},
                     {"added", l["time"]}, {"removed", nullptr}});
      continue;
    }
    for (auto& e : rib)
      if (e["prefix"] == l["prefix"] && e["removed"].is_null()) e["removed"] = l["time"];
  }
  json out = json::object();
  for (auto& [node, rib] : ribs) out[node] = rib;
  return out;
}

}  // namespace swforge::scenario
