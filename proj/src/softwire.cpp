#include "swforge/softwire.hpp"

#include <algorithm>

namespace swforge::sw {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

using nlohmann::json;

json control_json(const tunnel::SendControl& s) {
  json avps = json::array();
  for (const auto& a : s.message.avps) avps.push_back(l2tp::avp_name(a.vendor_id, a.attribute_type));
  return {{"message", l2tp::to_string(s.message.type)},
          {"tunnel_id", s.message.header.tunnel_id},
          {"session_id", s.message.header.session_id},
          {"ns", s.message.header.ns.value_or(0)},
          {"nr", s.message.header.nr.value_or(0)},
          {"avps", std::move(avps)},
          {"retransmission", s.retransmission},
          {"bytes", s.wire.size()}};
}

Errc errc_for(tunnel::DownReason r) {
  using tunnel::DownReason;
  switch (r) {
    case DownReason::DeadPeer: return Errc::LinkDead;
    case DownReason::ProtocolViolation: return Errc::ProtocolViolation;
    case DownReason::AuthFailure: return Errc::AuthFailure;
    case DownReason::MalformedMessage: return Errc::MalformedMessage;
    case DownReason::PppFailure: return Errc::NegotiationDiverged;
    case DownReason::PppAuthFailed: return Errc::AuthFailed;
    case DownReason::Admin:
    case DownReason::PeerStop:
    case DownReason::SessionClosed: return Errc::PeerTerminated;
  }
  return Errc::PeerTerminated;
}

bool is_ip(std::uint16_t protocol) { return protocol == ppp::proto::kIpv4 || protocol == ppp::proto::kIpv6; }

Prefix default_route(Af af) {
  if (af == Af::V4) return Prefix4{};
  return Prefix6{};
}

json route_json(const prov::RibEntry& e, std::string_view op) {
  return {{"op", op}, {"prefix", to_string(e.prefix)}, {"softwire", e.softwire}, {"origin", prov::to_string(e.origin)}};
}

std::string ip_summary(const IpPacket& p) {
  if (p.protocol == ipproto::kProvisioning) return "provisioning";
  return std::string(p.af() == Af::V4 ? "IPv4" : "IPv6") + " payload";
}

json payload_json(std::string_view dir, const IpPacket& p, std::size_t bytes) {
  return {{"dir", dir},           {"af", to_string(p.af())},  {"bytes", bytes},
          {"protocol", p.protocol}, {"src", to_string(p.src)}, {"dst", to_string(p.dst)}};
}

}  // namespace

// ---- initiator ------------------------------------------------------------------

Initiator::Initiator(net::Network& net, InitiatorConfig config)
    : net_(net), config_(std::move(config)), tunnel_(tunnel::Role::SI, config_.tunnel), peer_(config_.concentrator) {}

void Initiator::start(SimTime now) { apply(tunnel_.si_start(now), now); }

void Initiator::teardown(SimTime now, tunnel::DownReason reason) {
  if (tunnel_.is_down()) return;
  apply(tunnel_.teardown(reason, now), now);
}

std::optional<IpAddr> Initiator::address() const {
  if (!provisioned_ || !ppp_) return std::nullopt;
  if (config_.client.payload_af == Af::V4) {
    if (auto a = ppp_->local_ipv4()) return *a;
    return std::nullopt;
  }
  if (client_ && client_->dhcp_address()) return *client_->dhcp_address();
  if (client_ && client_->address()) return *client_->address();
  return std::nullopt;
}

std::optional<Errc> Initiator::send_payload(const IpPacket& packet, SimTime now) { return send_ip(packet, now); }

std::optional<Errc> Initiator::send_ip(const IpPacket& packet, SimTime now) {
  Bytes ip = packet.encode();
  Bytes wire;
  try {
    wire = tunnel_.encapsulate(ip, packet.af(), now);
  } catch (const Error& e) {
    json extra = payload_json("tx", packet, ip.size());
    extra["code"] = to_string(e.code());
    net_.trace().emit(now, "PayloadRejected", name(), "", e.what(), extra);
    return e.code();
  }
  net_.trace().emit(now, "Payload", name(), "", ip_summary(packet), payload_json("tx", packet, ip.size()));
  net_.send(name(), net::Datagram{config_.local, peer_, std::move(wire), ip_summary(packet)});
  return std::nullopt;
}

void Initiator::fail(std::string step, Errc code, std::string detail) {
  if (failure_ || provisioned_) return;
  failure_ = Failure{std::move(step), code, std::move(detail)};
}

std::string Initiator::step() const {
  if (!ppp_) return "l2tp";
  if (!ppp_ || ppp_->phase() != ppp::Phase::Up) return "ppp";
  return "provisioning";
}

void Initiator::apply(tunnel::Actions actions, SimTime now) {
  auto& tr = net_.trace();
  for (auto& action : actions) {
    std::visit(overloaded{
                   [&](tunnel::SendControl& s) {
                     std::string type(l2tp::to_string(s.message.type));
                     tr.emit(now, "Control", name(), peer_.str(), type, control_json(s));
                     net_.send(name(), net::Datagram{config_.local, peer_, std::move(s.wire), type});
                   },
                   [&](tunnel::SendData& s) {
                     net_.send(name(), net::Datagram{config_.local, peer_, std::move(s.wire), "data"});
                   },
                   [&](tunnel::StartTimer&) {},
                   [&](tunnel::SessionUp&) {
                     tr.emit(now, "SessionUp", name(), "", "L2TP session established",
                             {{"tunnel_id", tunnel_.local_tunnel_id()}, {"session_id", tunnel_.local_session_id()}});
                     ppp_.emplace(tunnel::Role::SI, config_.ppp);
                     apply(ppp_->open(now), now);
                   },
                   [&](tunnel::TunnelDown& d) {
                     tr.emit(now, "TunnelDown", name(), "", d.detail,
                             {{"reason", tunnel::to_string(d.reason)}});
                     if (ppp_) ppp_->shutdown();
                     for (const auto& e : rib_.entries())
                       tr.emit(now, "Route", name(), "", "remove " + to_string(e.prefix), route_json(e, "remove"));
                     rib_.remove_softwire(1);
                     fail(step(), errc_for(d.reason), d.detail);
                   },
                   [&](tunnel::DeliverPayload& p) { on_frame(p.frame, now); },
               },
               action);
  }
}

void Initiator::apply(ppp::Output out, SimTime now) {
  auto& tr = net_.trace();
  for (const auto& f : out.frames) {
    if (tunnel_.is_down()) break;
    Bytes wire = tunnel_.encapsulate_frame(f, now);
    net_.send(name(), net::Datagram{config_.local, peer_, std::move(wire), "PPP " + std::string(ppp::protocol_name(f.protocol))});
  }
  for (const auto& ev : out.events) {
    if (auto* p = std::get_if<ppp::PhaseChanged>(&ev)) {
      tr.emit(now, "PppPhase", name(), "", std::string(ppp::to_string(p->phase)));
    } else if (std::holds_alternative<ppp::LinkUp>(ev)) {
      json extra = {{"mtu", ppp_->mtu()}, {"ncp", ppp::to_string(ppp_->ncp())}};
      if (ppp_->ncp() == ppp::Ncp::Ipv6cp) {
        extra["local_iid"] = ppp_->local_iid();
        extra["remote_iid"] = ppp_->remote_iid().value_or(0);
      } else if (ppp_->local_ipv4()) {
        extra["address"] = ppp_->local_ipv4()->str();
      }
      tr.emit(now, "PppUp", name(), "", "PPP link up", extra);
      tunnel_.set_ppp_mtu(ppp_->mtu());
      Prefix def = default_route(config_.ppp.payload_af);
      rib_.inject(def, 1, prov::RouteOrigin::Default);
      tr.emit(now, "Route", name(), "", "add " + to_string(def), route_json(prov::RibEntry{def, 1, prov::RouteOrigin::Default}, "add"));
      prov::ClientConfig cc = config_.client;
      cc.payload_af = config_.ppp.payload_af;
      client_.emplace(cc);
      apply(client_->start(now, ppp_->local_iid()), now);
    } else if (auto* f = std::get_if<ppp::LinkFailed>(&ev)) {
      tr.emit(now, "PppFailed", name(), "", f->detail, {{"code", to_string(f->code)}});
      fail("ppp", f->code, f->detail);
      if (!tunnel_.is_down())
        apply(tunnel_.teardown(f->code == Errc::AuthFailed ? tunnel::DownReason::PppAuthFailed
                                                            : tunnel::DownReason::PppFailure,
                               now),
              now);
    }
  }
}

void Initiator::apply(prov::ClientOutput out, SimTime now) {
  auto& tr = net_.trace();
  for (const auto& m : out.send) {
    IpPacket p;
    if (config_.ppp.payload_af == Af::V6) {
      p.src = Ipv6Addr::link_local(ppp_->local_iid());
      p.dst = Ipv6Addr::link_local(ppp_->remote_iid().value_or(0));
    } else {
      p.src = ppp_->local_ipv4().value_or(Ipv4Addr{});
      p.dst = Ipv4Addr{0xFFFFFFFFu};
    }
    p.protocol = ipproto::kProvisioning;
    p.payload = prov::encode(m);
    tr.emit(now, "Provision", name(), peer_.str(), prov::message_name(m), {{"dir", "tx"}, {"message", prov::to_json(m)}});
    send_ip(p, now);
  }
  if (out.done && !provisioned_) {
    provisioned_ = true;
    json extra = json::object();
    if (auto a = address()) extra["address"] = to_string(*a);
    if (client_->delegated_v6()) extra["delegated_v6"] = to_string(*client_->delegated_v6());
    if (client_->delegated_v4()) extra["delegated_v4"] = to_string(*client_->delegated_v4());
    json dns = json::array();
    for (const auto& d : client_->dns_v6()) dns.push_back(d.str());
    if (ppp_) for (const auto& d : ppp_->dns()) dns.push_back(d.str());
    extra["dns"] = dns;
    tr.emit(now, "Provisioned", name(), "", "provisioning complete", extra);
  }
  if (out.failed) {
    tr.emit(now, "ProvisioningFailed", name(), "", out.detail, {{"code", to_string(*out.failed)}});
    fail("provisioning", *out.failed, out.detail);
    teardown(now, tunnel::DownReason::SessionClosed);
  }
}

void Initiator::on_frame(const ppp::Frame& frame, SimTime now) {
  if (!is_ip(frame.protocol)) {
    if (ppp_) apply(ppp_->receive(frame, now), now);
    return;
  }
  IpPacket p;
  try {
    p = IpPacket::decode(frame.payload);
  } catch (const Error& e) {
    net_.trace().emit(now, "PayloadRejected", name(), "", e.what(), {{"dir", "rx"}, {"code", to_string(e.code())}});
    return;
  }
  net_.trace().emit(now, "Payload", name(), "", ip_summary(p), payload_json("rx", p, frame.payload.size()));
  if (p.protocol != ipproto::kProvisioning || !client_) return;
  prov::Message m;
  try {
    m = prov::decode(p.payload);
  } catch (const Error& e) {
    net_.trace().emit(now, "PayloadRejected", name(), "", e.what(), {{"dir", "rx"}, {"code", to_string(e.code())}});
    return;
  }
  net_.trace().emit(now, "Provision", name(), "", prov::message_name(m), {{"dir", "rx"}, {"message", prov::to_json(m)}});
  apply(client_->receive(m, now), now);
}

void Initiator::on_datagram(const net::Datagram& d, SimTime now) {
  if (silent_) return;
  auto& tr = net_.trace();
  l2tp::DecodedHeader h;
  try {
    h = l2tp::decode_header(d.payload);
  } catch (const Error& e) {
    tr.emit(now, "Malformed", d.src.str(), name(), e.what());
    return;
  }
  if (!h.header.is_control) {
    if (d.src != peer_) return;
    ppp::Frame frame;
    try {
      frame = tunnel_.decapsulate(d.payload, now);
    } catch (const Error& e) {
      tr.emit(now, "PayloadRejected", name(), "", e.what(), {{"dir", "rx"}, {"code", to_string(e.code())}});
      return;
    }
    on_frame(frame, now);
    return;
  }
  l2tp::ControlMessage msg;
  try {
    msg = l2tp::decode_message(d.payload);
  } catch (const Error& e) {
    tr.emit(now, "Malformed", d.src.str(), name(), e.what(), {{"code", to_string(e.code())}});
    if (d.src == peer_) apply(tunnel_.handle_decode_error(e, now), now);
    return;
  }
  if (d.src != peer_) {
    // A concentrator may answer the first request from another address.
    if (msg.type == l2tp::MessageType::SCCRP && tunnel_.cc_state() == tunnel::CcState::WaitCtlReply) {
      tr.emit(now, "PeerMoved", name(), d.src.str(), peer_.str() + " -> " + d.src.str());
      peer_ = d.src;
    } else {
      tr.emit(now, "Ignored", d.src.str(), name(), std::string(l2tp::to_string(msg.type)));
      return;
    }
  }
  apply(tunnel_.handle_control(msg, now), now);
}

void Initiator::on_timer(SimTime now) {
  if (silent_) return;
  if (auto t = tunnel_.next_deadline(); t && *t <= now) apply(tunnel_.on_timer(now), now);
  if (ppp_ && !tunnel_.is_down())
    if (auto t = ppp_->next_deadline(); t && *t <= now) apply(ppp_->on_timer(now), now);
  if (client_ && !tunnel_.is_down())
    if (auto t = client_->next_deadline(); t && *t <= now) apply(client_->on_timer(now), now);
}

std::optional<SimTime> Initiator::next_deadline() const {
  if (silent_) return std::nullopt;
  std::optional<SimTime> best = tunnel_.next_deadline();
  auto take = [&](std::optional<SimTime> t) {
    if (t && (!best || *t < *best)) best = t;
  };
  if (!tunnel_.is_down()) {
    if (ppp_) take(ppp_->next_deadline());
    if (client_) take(client_->next_deadline());
  }
  return best;
}

// ---- concentrator ----------------------------------------------------------------

Concentrator::Concentrator(net::Network& net, ConcentratorConfig config, aaa::UserDirectory& directory,
                           aaa::Accountant& accountant, prov::StableStore* store)
    : net_(net),
      config_(std::move(config)),
      directory_(directory),
      accountant_(accountant),
      server_(config_.provisioning, store),
      rng_(config_.tunnel.seed) {}

const Concentrator::Softwire* Concentrator::softwire(std::uint32_t id) const {
  auto it = softwires_.find(id);
  return it == softwires_.end() ? nullptr : it->second.get();
}

Concentrator::Softwire* Concentrator::by_tunnel(std::uint16_t tunnel_id) {
  for (auto& [id, sw] : softwires_)
    if (sw->tunnel.local_tunnel_id() == tunnel_id && sw->tunnel.cc_state() != tunnel::CcState::Dead) return sw.get();
  return nullptr;
}

Concentrator::Softwire& Concentrator::create(const Endpoint& peer, const Endpoint& local) {
  tunnel::TunnelConfig tc = config_.tunnel;
  std::uint32_t id = next_id_++;
  tc.seed = config_.tunnel.seed + id;
  std::uniform_int_distribution<std::uint16_t> draw(1, 0xFFFF);
  do {
    tc.local_tunnel_id = draw(rng_);
  } while (std::any_of(softwires_.begin(), softwires_.end(),
                       [&](const auto& kv) { return kv.second->tunnel.local_tunnel_id() == tc.local_tunnel_id; }));
  auto sw = std::make_unique<Softwire>(Softwire{id, peer, local, tunnel::TunnelEndpoint(tunnel::Role::SC, tc), {}, {}, {}});
  auto& ref = *sw;
  softwires_.emplace(id, std::move(sw));
  net_.trace().emit(net_.now(), "SoftwireCreated", name(), peer.str(), "softwire " + std::to_string(id),
                    {{"softwire", id}, {"tunnel_id", tc.local_tunnel_id}, {"reply_from", local.str()}});
  return ref;
}

std::optional<Errc> Concentrator::send_payload(const IpPacket& packet, SimTime now) {
  auto route = server_.rib().lookup(packet.dst);
  auto it = route ? softwires_.find(route->softwire) : softwires_.end();
  if (it == softwires_.end()) {
    net_.trace().emit(now, "NoRoute", name(), "", to_string(packet.dst));
    return Errc::NoPrefixAvailable;
  }
  return send_ip(*it->second, packet, now);
}

std::optional<Errc> Concentrator::send_on(std::uint32_t softwire, const IpPacket& packet, SimTime now) {
  auto it = softwires_.find(softwire);
  if (it == softwires_.end()) return Errc::SessionNotUp;
  return send_ip(*it->second, packet, now);
}

void Concentrator::send_hello(SimTime now) {
  for (auto& [id, sw] : softwires_)
    if (!sw->tunnel.is_down()) apply(*sw, sw->tunnel.send_hello(now), now);
}

void Concentrator::teardown_all(SimTime now, tunnel::DownReason reason) {
  for (auto& [id, sw] : softwires_)
    if (!sw->tunnel.is_down()) apply(*sw, sw->tunnel.teardown(reason, now), now);
}

std::optional<Errc> Concentrator::send_ip(Softwire& sw, const IpPacket& packet, SimTime now) {
  Bytes ip = packet.encode();
  Bytes wire;
  try {
    wire = sw.tunnel.encapsulate(ip, packet.af(), now);
  } catch (const Error& e) {
    json extra = payload_json("tx", packet, ip.size());
    extra["code"] = to_string(e.code());
    extra["softwire"] = sw.id;
    net_.trace().emit(now, "PayloadRejected", name(), "", e.what(), extra);
    return e.code();
  }
  json extra = payload_json("tx", packet, ip.size());
  extra["softwire"] = sw.id;
  net_.trace().emit(now, "Payload", name(), "", ip_summary(packet), extra);
  net_.send(name(), net::Datagram{sw.local, sw.peer, std::move(wire), ip_summary(packet)});
  return std::nullopt;
}

void Concentrator::sync_routes(Softwire& sw, SimTime now) {
  auto current = server_.rib().entries_via(sw.id);
  for (const auto& e : current)
    if (std::find(sw.routes.begin(), sw.routes.end(), e) == sw.routes.end())
      net_.trace().emit(now, "Route", name(), "", "add " + to_string(e.prefix), route_json(e, "add"));
  for (const auto& e : sw.routes)
    if (std::find(current.begin(), current.end(), e) == current.end())
      net_.trace().emit(now, "Route", name(), "", "remove " + to_string(e.prefix), route_json(e, "remove"));
  sw.routes = std::move(current);
}

ppp::AuthDecision Concentrator::authorize(Softwire& sw, const ppp::AuthRequest& req) {
  aaa::Hint hint{"L2TP", family(config_.listen.addr)};
  auto result = directory_.access_request(req, hint);
  json attrs = json::array();
  for (const auto& a : result.attributes) attrs.push_back(aaa::to_json(a));
  net_.trace().emit(net_.now(), "Aaa", name(), req.name, std::string(aaa::to_string(result.verdict)),
                    {{"user", req.name}, {"softwire", sw.id}, {"reason", result.reason}, {"attributes", attrs},
                     {"chap", req.chap.has_value()}});
  if (result.verdict != aaa::Verdict::Accept) return aaa::to_auth_decision(result);
  try {
    auto directives = aaa::apply_attributes(result);
    if (!server_.attached(sw.id)) server_.attach(sw.id, req.name, directives, net_.now());
  } catch (const Error& e) {
    net_.trace().emit(net_.now(), "AaaRejected", name(), req.name, e.what(), {{"code", to_string(e.code())}});
    return ppp::AuthDecision{false, e.what(), std::nullopt, std::nullopt};
  }
  sw.user = req.name;
  return aaa::to_auth_decision(result);
}

void Concentrator::closed(Softwire& sw, SimTime now) {
  if (sw.ppp) sw.ppp->shutdown();
  if (auto rec = accountant_.stop(sw.id, sw.tunnel.stats(), now))
    net_.trace().emit(now, "Accounting", name(), "", "Stop", {{"record", aaa::to_json(*rec)}});
  if (server_.attached(sw.id)) {
    server_.release(sw.id);
    sync_routes(sw, now);
  }
}

void Concentrator::apply(Softwire& sw, tunnel::Actions actions, SimTime now) {
  auto& tr = net_.trace();
  for (auto& action : actions) {
    std::visit(overloaded{
                   [&](tunnel::SendControl& s) {
                     std::string type(l2tp::to_string(s.message.type));
                     json extra = control_json(s);
                     extra["softwire"] = sw.id;
                     tr.emit(now, "Control", name(), sw.peer.str(), type, extra);
                     net_.send(name(), net::Datagram{sw.local, sw.peer, std::move(s.wire), type});
                   },
                   [&](tunnel::SendData& s) {
                     net_.send(name(), net::Datagram{sw.local, sw.peer, std::move(s.wire), "data"});
                   },
                   [&](tunnel::StartTimer&) {},
                   [&](tunnel::SessionUp&) {
                     tr.emit(now, "SessionUp", name(), "", "L2TP session established",
                             {{"softwire", sw.id},
                              {"tunnel_id", sw.tunnel.local_tunnel_id()},
                              {"session_id", sw.tunnel.local_session_id()}});
                     ppp::PppConfig pc = config_.ppp;
                     pc.seed = config_.ppp.seed + sw.id;
                     Softwire* self = &sw;
                     pc.authorize = [this, self](const ppp::AuthRequest& req) { return authorize(*self, req); };
                     pc.allocate_ipv4 = [this, self]() -> std::optional<Ipv4Addr> {
                       try {
                         return server_.assign_ipv4(self->id, net_.now());
                       } catch (const Error& e) {
                         net_.trace().emit(net_.now(), "AllocationFailed", name(), "", e.what(),
                                           {{"code", to_string(e.code())}});
                         return std::nullopt;
                       }
                     };
                     sw.ppp.emplace(tunnel::Role::SC, std::move(pc));
                     apply(sw, sw.ppp->open(now), now);
                   },
                   [&](tunnel::TunnelDown& d) {
                     tr.emit(now, "TunnelDown", name(), "", d.detail,
                             {{"reason", tunnel::to_string(d.reason)}, {"softwire", sw.id}});
                     closed(sw, now);
                   },
                   [&](tunnel::DeliverPayload& p) { on_frame(sw, p.frame, now); },
               },
               action);
  }
}

void Concentrator::apply(Softwire& sw, ppp::Output out, SimTime now) {
  auto& tr = net_.trace();
  for (const auto& f : out.frames) {
    if (sw.tunnel.is_down()) break;
    Bytes wire = sw.tunnel.encapsulate_frame(f, now);
    net_.send(name(), net::Datagram{sw.local, sw.peer, std::move(wire), "PPP " + std::string(ppp::protocol_name(f.protocol))});
  }
  for (const auto& ev : out.events) {
    if (auto* p = std::get_if<ppp::PhaseChanged>(&ev)) {
      tr.emit(now, "PppPhase", name(), "", std::string(ppp::to_string(p->phase)), {{"softwire", sw.id}});
    } else if (std::holds_alternative<ppp::LinkUp>(ev)) {
      json extra = {{"softwire", sw.id}, {"mtu", sw.ppp->mtu()}, {"ncp", ppp::to_string(sw.ppp->ncp())}};
      if (sw.ppp->ncp() == ppp::Ncp::Ipv6cp) {
        extra["local_iid"] = sw.ppp->local_iid();
        extra["remote_iid"] = sw.ppp->remote_iid().value_or(0);
        server_.set_iids(sw.id, sw.ppp->local_iid(), sw.ppp->remote_iid().value_or(0));
      } else if (sw.ppp->peer_ipv4()) {
        extra["peer_address"] = sw.ppp->peer_ipv4()->str();
      }
      tr.emit(now, "PppUp", name(), "", "PPP link up", extra);
      sw.tunnel.set_ppp_mtu(sw.ppp->mtu());
      aaa::SessionInfo info{sw.user.empty() ? sw.ppp->peer_name() : sw.user,
                            sw.tunnel.local_tunnel_id(),
                            sw.tunnel.remote_tunnel_id(),
                            sw.tunnel.local_session_id(),
                            sw.tunnel.remote_session_id(),
                            family(config_.listen.addr),
                            config_.ppp.payload_af};
      auto rec = accountant_.start(sw.id, info, now);
      tr.emit(now, "Accounting", name(), "", "Start", {{"record", aaa::to_json(rec)}});
    } else if (auto* f = std::get_if<ppp::LinkFailed>(&ev)) {
      tr.emit(now, "PppFailed", name(), "", f->detail, {{"code", to_string(f->code)}, {"softwire", sw.id}});
      if (!sw.tunnel.is_down())
        apply(sw,
              sw.tunnel.teardown(f->code == Errc::AuthFailed ? tunnel::DownReason::PppAuthFailed
                                                             : tunnel::DownReason::PppFailure,
                                 now),
              now);
    }
  }
}

void Concentrator::on_frame(Softwire& sw, const ppp::Frame& frame, SimTime now) {
  auto& tr = net_.trace();
  if (!is_ip(frame.protocol)) {
    if (sw.ppp) apply(sw, sw.ppp->receive(frame, now), now);
    return;
  }
  IpPacket p;
  try {
    p = IpPacket::decode(frame.payload);
  } catch (const Error& e) {
    tr.emit(now, "PayloadRejected", name(), "", e.what(), {{"dir", "rx"}, {"code", to_string(e.code())}});
    return;
  }
  json extra = payload_json("rx", p, frame.payload.size());
  extra["softwire"] = sw.id;
  tr.emit(now, "Payload", name(), "", ip_summary(p), extra);

  if (p.protocol != ipproto::kProvisioning) {
    ++forwarded_;
    tr.emit(now, "Forward", name(), to_string(p.dst), ip_summary(p), {{"softwire", sw.id}, {"bytes", frame.payload.size()}});
    if (config_.echo_payload) send_ip(sw, IpPacket{p.dst, p.src, p.protocol, p.payload}, now);
    return;
  }
  if (!server_.attached(sw.id)) return;
  prov::Message m;
  try {
    m = prov::decode(p.payload);
  } catch (const Error& e) {
    tr.emit(now, "PayloadRejected", name(), "", e.what(), {{"dir", "rx"}, {"code", to_string(e.code())}});
    return;
  }
  tr.emit(now, "Provision", name(), "", prov::message_name(m), {{"dir", "rx"}, {"message", prov::to_json(m)}, {"softwire", sw.id}});
  auto replies = server_.handle(sw.id, m, now);
  sync_routes(sw, now);
  IpAddr src = p.dst;
  if (auto* v4 = std::get_if<Ipv4Addr>(&p.dst); v4 && v4->value == 0xFFFFFFFFu)
    src = config_.ppp.local_ipv4.value_or(Ipv4Addr{});
  for (const auto& r : replies) {
    tr.emit(now, "Provision", name(), sw.peer.str(), prov::message_name(r),
            {{"dir", "tx"}, {"message", prov::to_json(r)}, {"softwire", sw.id}});
    send_ip(sw, IpPacket{src, p.src, ipproto::kProvisioning, prov::encode(r)}, now);
  }
}

void Concentrator::on_datagram(const net::Datagram& d, SimTime now) {
  if (silent_) return;
  auto& tr = net_.trace();
  l2tp::DecodedHeader h;
  try {
    h = l2tp::decode_header(d.payload);
  } catch (const Error& e) {
    tr.emit(now, "Malformed", d.src.str(), name(), e.what());
    return;
  }
  if (!h.header.is_control) {
    Softwire* sw = by_tunnel(h.header.tunnel_id);
    if (!sw || sw->peer != d.src) return;
    ppp::Frame frame;
    try {
      frame = sw->tunnel.decapsulate(d.payload, now);
    } catch (const Error& e) {
      tr.emit(now, "PayloadRejected", name(), "", e.what(),
              {{"dir", "rx"}, {"code", to_string(e.code())}, {"softwire", sw->id}});
      return;
    }
    on_frame(*sw, frame, now);
    return;
  }
  Softwire* sw = nullptr;
  l2tp::ControlMessage msg;
  try {
    msg = l2tp::decode_message(d.payload);
  } catch (const Error& e) {
    tr.emit(now, "Malformed", d.src.str(), name(), e.what(), {{"code", to_string(e.code())}});
    if (h.header.tunnel_id != 0) sw = by_tunnel(h.header.tunnel_id);
    if (sw && sw->peer == d.src) apply(*sw, sw->tunnel.handle_decode_error(e, now), now);
    return;
  }
  if (h.header.tunnel_id == 0) {
    if (msg.type != l2tp::MessageType::SCCRQ) {
      tr.emit(now, "Ignored", d.src.str(), name(), std::string(l2tp::to_string(msg.type)));
      return;
    }
    for (auto& [id, s] : softwires_)
      if (s->peer == d.src && s->tunnel.cc_state() == tunnel::CcState::WaitCtlConn) sw = s.get();
    if (!sw) sw = &create(d.src, config_.reply_from.value_or(d.dst));
  } else {
    sw = by_tunnel(h.header.tunnel_id);
    if (!sw || sw->peer != d.src) {
      tr.emit(now, "Ignored", d.src.str(), name(), std::string(l2tp::to_string(msg.type)));
      return;
    }
  }
  apply(*sw, sw->tunnel.handle_control(msg, now), now);
}

void Concentrator::on_timer(SimTime now) {
  if (silent_) return;
  for (auto& [id, sw] : softwires_) {
    if (auto t = sw->tunnel.next_deadline(); t && *t <= now) apply(*sw, sw->tunnel.on_timer(now), now);
    if (sw->ppp && !sw->tunnel.is_down())
      if (auto t = sw->ppp->next_deadline(); t && *t <= now) apply(*sw, sw->ppp->on_timer(now), now);
  }
}

std::optional<SimTime> Concentrator::next_deadline() const {
  if (silent_) return std::nullopt;
  std::optional<SimTime> best;
  auto take = [&](std::optional<SimTime> t) {
    if (t && (!best || *t < *best)) best = t;
  };
  for (const auto& [id, sw] : softwires_) {
    take(sw->tunnel.next_deadline());
    if (sw->ppp && !sw->tunnel.is_down()) take(sw->ppp->next_deadline());
  }
  return best;
}

}  // namespace swforge::sw
