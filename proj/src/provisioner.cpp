#include "swforge/provisioner.hpp"

#include <algorithm>

namespace swforge::prov {

namespace {

template <typename... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <typename... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

// ---- server -----------------------------------------------------------------

ProvisioningServer::ProvisioningServer(ServerConfig config, StableStore* store)
    : config_(std::move(config)), store_(store) {
  check_delegated_length(Af::V6, config_.delegation_len_v6);
  check_delegated_length(Af::V4, config_.delegation_len_v4);
  if (config_.onlink_pool) {
    if (config_.onlink_pool->len > 64)
      throw Error(Errc::InvalidConfig, "on-link pool longer than /64");
    onlink_pool_.emplace(*config_.onlink_pool);
  }
  for (const auto& [name, p] : config_.v6_pools) {
    if (p.len > 64) throw Error(Errc::InvalidConfig, "pool " + name + " longer than /64");
    named_pools_.emplace(name, PrefixPool6(p));
  }
  if (config_.delegation_pool_v6) {
    if (config_.delegation_pool_v6->len > config_.delegation_len_v6)
      throw Error(Errc::InvalidConfig, "delegation pool v6 shorter than its prefixes");
    delegation_pool_v6_.emplace(*config_.delegation_pool_v6);
  }
  if (config_.address_pool_v4) address_pool_v4_.emplace(*config_.address_pool_v4);
  if (config_.delegation_pool_v4) {
    if (config_.delegation_pool_v4->len > config_.delegation_len_v4)
      throw Error(Errc::InvalidConfig, "delegation pool v4 shorter than its prefixes");
    delegation_pool_v4_.emplace(*config_.delegation_pool_v4);
  }
}

void ProvisioningServer::attach(std::uint32_t softwire, std::string user, Directives directives,
                                SimTime) {
  if (directives.delegated_v6) check_delegated_length(Af::V6, directives.delegated_v6->len);
  if (directives.delegated_v4) check_delegated_length(Af::V4, directives.delegated_v4->len);
  Binding b;
  b.user = std::move(user);
  b.directives = std::move(directives);
  bindings_[softwire] = std::move(b);
}

void ProvisioningServer::set_iids(std::uint32_t softwire, std::uint64_t sc_iid,
                                  std::uint64_t si_iid) {
  auto it = bindings_.find(softwire);
  if (it == bindings_.end()) throw Error(Errc::ProtocolViolation, "softwire not attached");
  it->second.sc_iid = sc_iid;
  it->second.si_iid = si_iid;
}

std::optional<Assignment> ProvisioningServer::stable(const Binding& b) const {
  if (!store_ || b.user.empty()) return std::nullopt;
  return store_->lookup(b.user, config_.sc_id);
}

void ProvisioningServer::commit(const Binding& b, SimTime now) {
  if (store_ && !b.user.empty()) store_->commit(b.user, config_.sc_id, b.assignment, now);
}

std::optional<Ipv4Addr> ProvisioningServer::assign_ipv4(std::uint32_t softwire, SimTime now) {
  auto it = bindings_.find(softwire);
  if (it == bindings_.end()) throw Error(Errc::ProtocolViolation, "softwire not attached");
  Binding& b = it->second;
  if (b.assignment.address_v4) return b.assignment.address_v4;
  if (b.directives.address_v4) {
    if (address_pool_v4_) address_pool_v4_->reserve(*b.directives.address_v4);
    b.assignment.address_v4 = b.directives.address_v4;
  } else if (address_pool_v4_) {
    auto prev = stable(b);
    if (prev && prev->address_v4 && address_pool_v4_->reserve(*prev->address_v4))
      b.assignment.address_v4 = prev->address_v4;
    else
      b.assignment.address_v4 = address_pool_v4_->allocate();
  }
  if (b.assignment.address_v4) commit(b, now);
  return b.assignment.address_v4;
}

Prefix6 ProvisioningServer::choose_onlink(Binding& b) {
  if (b.assignment.onlink_v6) return *b.assignment.onlink_v6;
  auto prev = stable(b);
  auto from_pool = [&](PrefixPool6& pool) -> Prefix6 {
    if (prev && prev->onlink_v6 && pool.reserve(*prev->onlink_v6)) return *prev->onlink_v6;
    auto p = pool.allocate(64);
    if (!p) throw Error(Errc::NoPrefixAvailable, "on-link pool exhausted");
    return *p;
  };
  Prefix6 chosen;
  if (b.directives.onlink_v6) {
    chosen = *b.directives.onlink_v6;
    if (onlink_pool_) onlink_pool_->reserve(chosen);
  } else if (b.directives.v6_pool) {
    auto it = named_pools_.find(*b.directives.v6_pool);
    if (it == named_pools_.end())
      throw Error(Errc::NoPrefixAvailable, "unknown pool " + *b.directives.v6_pool);
    chosen = from_pool(it->second);
  } else if (onlink_pool_) {
    chosen = from_pool(*onlink_pool_);
  } else {
    throw Error(Errc::NoPrefixAvailable, "no on-link prefix source");
  }
  b.assignment.onlink_v6 = chosen;
  return chosen;
}

Prefix6 ProvisioningServer::choose_delegated_v6(Binding& b) {
  if (b.assignment.delegated_v6) return *b.assignment.delegated_v6;
  Prefix6 chosen;
  if (b.directives.delegated_v6) {
    chosen = *b.directives.delegated_v6;
    check_delegated_length(Af::V6, chosen.len);
    if (delegation_pool_v6_) delegation_pool_v6_->reserve(chosen);
  } else if (delegation_pool_v6_) {
    auto prev = stable(b);
    if (prev && prev->delegated_v6 && delegation_pool_v6_->reserve(*prev->delegated_v6)) {
      chosen = *prev->delegated_v6;
    } else {
      auto p = delegation_pool_v6_->allocate(config_.delegation_len_v6);
      if (!p) throw Error(Errc::NoPrefixAvailable, "delegation pool v6 exhausted");
      chosen = *p;
    }
  } else {
    throw Error(Errc::NoPrefixAvailable, "no delegated v6 prefix source");
  }
  b.assignment.delegated_v6 = chosen;
  return chosen;
}

Prefix4 ProvisioningServer::choose_delegated_v4(Binding& b, const Dhcp4Message& m) {
  if (b.assignment.delegated_v4) return *b.assignment.delegated_v4;
  const auto& req = m.subnet_request;
  if (req && req->prefix_len != 0 &&
      (req->prefix_len < kMinDelegatedV4 || req->prefix_len > kMaxDelegatedV4))
    throw Error(Errc::UnsupportedLength, "/" + std::to_string(req->prefix_len));
  Prefix4 chosen;
  if (b.directives.delegated_v4) {
    chosen = *b.directives.delegated_v4;
    check_delegated_length(Af::V4, chosen.len);
    if (delegation_pool_v4_) delegation_pool_v4_->reserve(chosen);
  } else if (delegation_pool_v4_) {
    auto prev = stable(b);
    bool done = false;
    if (req && req->i && m.subnet_info) {
      const Prefix4& prior = m.subnet_info->prefix;
      if (prior.len >= kMinDelegatedV4 && prior.len <= kMaxDelegatedV4 &&
          delegation_pool_v4_->reserve(prior)) {
        chosen = prior;
        done = true;
      }
    }
    if (!done && prev && prev->delegated_v4 && delegation_pool_v4_->reserve(*prev->delegated_v4)) {
      chosen = *prev->delegated_v4;
      done = true;
    }
    if (!done) {
      int len = req && req->prefix_len ? req->prefix_len : config_.delegation_len_v4;
      auto p = delegation_pool_v4_->allocate(len);
      if (!p) throw Error(Errc::NoPrefixAvailable, "delegation pool v4 exhausted");
      chosen = *p;
    }
  } else {
    throw Error(Errc::NoPrefixAvailable, "no delegated v4 prefix source");
  }
  b.assignment.delegated_v4 = chosen;
  return chosen;
}

RouterAdvertisement ProvisioningServer::on_rs(std::uint32_t, Binding& b, SimTime now) {
  RouterAdvertisement ra;
  ra.prefix = choose_onlink(b);
  ra.managed = config_.dhcpv6_address_mode;
  ra.other = config_.stateless_info;
  commit(b, now);
  return ra;
}

std::optional<NeighborAdvertisement> ProvisioningServer::on_ns(Binding& b,
                                                               const NeighborSolicitation& ns) {
  if (!b.assignment.onlink_v6) return std::nullopt;
  if (ns.target == Ipv6Addr::from_parts(b.assignment.onlink_v6->addr, b.sc_iid))
    return NeighborAdvertisement{ns.target};
  return std::nullopt;
}

Dhcp6Message ProvisioningServer::on_dhcp6(std::uint32_t sw, Binding& b, const Dhcp6Message& m,
                                          SimTime now) {
  if (auto it = duids_.find(m.client_duid); it != duids_.end() && it->second != sw)
    throw Error(Errc::DuidMismatch, "DUID bound to another softwire");
  if (b.duid && *b.duid != m.client_duid)
    throw Error(Errc::DuidMismatch, "DUID differs from the one seen on this softwire");
  b.duid = m.client_duid;
  duids_[m.client_duid] = sw;

  Dhcp6Message r;
  r.xid = m.xid;
  r.client_duid = m.client_duid;
  switch (m.type) {
    case Dhcp6Type::Solicit:
    case Dhcp6Type::Request: {
      r.type = m.type == Dhcp6Type::Solicit ? Dhcp6Type::Advertise : Dhcp6Type::Reply;
      if (m.ia_pd) {
        r.ia_pd = true;
        r.prefix = choose_delegated_v6(b);
      }
      if (m.ia_na && config_.dhcpv6_address_mode) {
        r.ia_na = true;
        Prefix6 onlink = choose_onlink(b);
        std::uint64_t iid = b.si_iid ? b.si_iid : 0x1000 + sw;
        b.dhcp_address = Ipv6Addr::from_parts(onlink.addr, iid);
        r.address = b.dhcp_address;
      }
      if (m.oro_dns) {
        r.oro_dns = true;
        r.dns = config_.dns_v6;
      }
      if (m.type == Dhcp6Type::Request) {
        if (r.prefix) rib_.inject(Prefix{*r.prefix}, sw, RouteOrigin::Delegated);
        commit(b, now);
      }
      break;
    }
    case Dhcp6Type::InformationRequest:
      r.type = Dhcp6Type::Reply;
      if (m.oro_dns) {
        r.oro_dns = true;
        r.dns = config_.dns_v6;
      }
      break;
    default:
      throw Error(Errc::ProtocolViolation,
                  std::string("server-only DHCPv6 message ") + std::string(to_string(m.type)));
  }
  return r;
}

Dhcp4Message ProvisioningServer::on_dhcp4(std::uint32_t sw, Binding& b, const Dhcp4Message& m,
                                          SimTime now) {
  Dhcp4Message r;
  r.xid = m.xid;
  r.client_id = m.client_id;
  switch (m.type) {
    case Dhcp4Type::Discover:
      r.type = Dhcp4Type::Offer;
      if (m.subnet_request) r.subnet_info = SubnetInformation{choose_delegated_v4(b, m), false, false};
      break;
    case Dhcp4Type::Request:
      r.type = Dhcp4Type::Ack;
      if (m.subnet_request || m.subnet_info) {
        Prefix4 p = choose_delegated_v4(b, m);
        r.subnet_info = SubnetInformation{p, false, false};
        rib_.inject(Prefix{p}, sw, RouteOrigin::Delegated);
        commit(b, now);
      }
      break;
    default:
      throw Error(Errc::ProtocolViolation,
                  std::string("server-only DHCPv4 message ") + std::string(to_string(m.type)));
  }
  return r;
}

std::vector<Message> ProvisioningServer::handle(std::uint32_t softwire, const Message& msg,
                                                SimTime now) {
  auto it = bindings_.find(softwire);
  if (it == bindings_.end()) return {};
  Binding& b = it->second;
  std::vector<Message> out;
  std::visit(
      Overloaded{
          [&](const RouterSolicitation&) {
            try {
              out.emplace_back(on_rs(softwire, b, now));
            } catch (const Error& e) {
              b.last_error = e.code();
              RouterAdvertisement ra;
              ra.error = e.code();
              ra.detail = e.what();
              out.emplace_back(ra);
            }
          },
          [&](const NeighborSolicitation& ns) {
            if (auto na = on_ns(b, ns)) out.emplace_back(*na);
          },
          [&](const Dhcp6Message& m) {
            try {
              out.emplace_back(on_dhcp6(softwire, b, m, now));
            } catch (const Error& e) {
              b.last_error = e.code();
              Dhcp6Message r;
              r.type = m.type == Dhcp6Type::Solicit ? Dhcp6Type::Advertise : Dhcp6Type::Reply;
              r.xid = m.xid;
              r.client_duid = m.client_duid;
              r.error = e.code();
              r.detail = e.what();
              out.emplace_back(r);
            }
          },
          [&](const Dhcp4Message& m) {
            try {
              out.emplace_back(on_dhcp4(softwire, b, m, now));
            } catch (const Error& e) {
              b.last_error = e.code();
              Dhcp4Message r;
              r.type = Dhcp4Type::Nak;
              r.xid = m.xid;
              r.client_id = m.client_id;
              r.error = e.code();
              r.detail = e.what();
              out.emplace_back(r);
            }
          },
          [&](const auto&) {},
      },
      msg);
  return out;
}

void ProvisioningServer::release(std::uint32_t softwire) {
  auto it = bindings_.find(softwire);
  if (it == bindings_.end()) return;
  Binding& b = it->second;
  const Assignment& a = b.assignment;
  if (a.onlink_v6) {
    if (onlink_pool_) onlink_pool_->release(*a.onlink_v6);
    for (auto& [name, pool] : named_pools_) pool.release(*a.onlink_v6);
  }
  if (a.delegated_v6 && delegation_pool_v6_) delegation_pool_v6_->release(*a.delegated_v6);
  if (a.address_v4 && address_pool_v4_) address_pool_v4_->release(*a.address_v4);
  if (a.delegated_v4 && delegation_pool_v4_) delegation_pool_v4_->release(*a.delegated_v4);
  rib_.remove_softwire(softwire);
  if (b.duid) duids_.erase(*b.duid);
  bindings_.erase(it);
}

ProvisioningRecord ProvisioningServer::record(std::uint32_t softwire) const {
  ProvisioningRecord r;
  auto it = bindings_.find(softwire);
  if (it == bindings_.end()) return r;
  const Binding& b = it->second;
  r.user = b.user;
  r.onlink_v6 = b.assignment.onlink_v6;
  r.delegated_v6 = b.assignment.delegated_v6;
  r.delegated_v4 = b.assignment.delegated_v4;
  r.duid = b.duid;
  if (b.dhcp_address) {
    r.endpoint_v6 = Endpoint6{*b.dhcp_address, scope_of(*b.dhcp_address)};
  } else if (b.assignment.onlink_v6 && b.si_iid) {
    auto a = Ipv6Addr::from_parts(b.assignment.onlink_v6->addr, b.si_iid);
    r.endpoint_v6 = Endpoint6{a, scope_of(a)};
  }
  if (b.assignment.address_v4)
    r.endpoint_v4 = Endpoint4{*b.assignment.address_v4, scope_of(*b.assignment.address_v4)};
  r.routes = rib_.entries_via(softwire);
  return r;
}

std::optional<Errc> ProvisioningServer::last_error(std::uint32_t softwire) const {
  auto it = bindings_.find(softwire);
  if (it == bindings_.end()) return std::nullopt;
  return it->second.last_error;
}

// ---- client -----------------------------------------------------------------

std::string_view to_string(SiRole r) noexcept {
  return r == SiRole::Router ? "router" : "host";
}

SiRole parse_si_role(std::string_view s) {
  if (s == "host") return SiRole::Host;
  if (s == "router") return SiRole::Router;
  throw Error(Errc::InvalidConfig, "unknown SI role " + std::string(s));
}

std::string_view to_string(ClientState s) noexcept {
  switch (s) {
    case ClientState::Idle: return "Idle";
    case ClientState::Soliciting: return "Soliciting";
    case ClientState::Dad: return "Dad";
    case ClientState::Dhcp6Soliciting: return "Dhcp6Soliciting";
    case ClientState::Dhcp6Requesting: return "Dhcp6Requesting";
    case ClientState::Dhcp6Informing: return "Dhcp6Informing";
    case ClientState::Dhcp4Discovering: return "Dhcp4Discovering";
    case ClientState::Dhcp4Requesting: return "Dhcp4Requesting";
    case ClientState::Done: return "Done";
    case ClientState::Failed: return "Failed";
  }
  return "?";
}

ProvisioningClient::ProvisioningClient(ClientConfig config)
    : config_(std::move(config)), rng_(static_cast<std::mt19937::result_type>(config_.seed)) {
  if (config_.max_attempts < 1) throw Error(Errc::InvalidConfig, "max_attempts must be >= 1");
}

ClientOutput ProvisioningClient::send(Message m, ClientState next, SimTime now) {
  last_sent_ = m;
  attempts_ = 1;
  state_ = next;
  deadline_ = now + (next == ClientState::Dad ? config_.dad_wait : config_.retransmit);
  ClientOutput out;
  out.send.push_back(std::move(m));
  return out;
}

ClientOutput ProvisioningClient::fail(Errc code, std::string detail) {
  state_ = ClientState::Failed;
  deadline_ = kNever;
  ClientOutput out;
  out.failed = code;
  out.detail = std::move(detail);
  return out;
}

ClientOutput ProvisioningClient::finish() {
  state_ = ClientState::Done;
  deadline_ = kNever;
  ClientOutput out;
  out.done = true;
  return out;
}

ClientOutput ProvisioningClient::start(SimTime now, std::uint64_t local_iid) {
  iid_ = local_iid;
  if (config_.payload_af == Af::V6) return send(RouterSolicitation{}, ClientState::Soliciting, now);
  if (config_.role == SiRole::Host) return finish();
  Dhcp4Message d;
  d.type = Dhcp4Type::Discover;
  d.xid = xid_ = static_cast<std::uint32_t>(rng_());
  d.client_id = config_.client_id;
  auto [req, info] = build_subnet_request(config_.prior_v4, config_.longest_v4_len);
  d.subnet_request = req;
  d.subnet_info = info;
  last_discover_ = d;
  return send(d, ClientState::Dhcp4Discovering, now);
}

ClientOutput ProvisioningClient::start_dhcp6(SimTime now) {
  bool managed = ra_ && ra_->managed;
  Dhcp6Message m;
  m.xid = xid_ = static_cast<std::uint32_t>(rng_() & 0xFFFFFF);
  m.client_duid = config_.duid;
  m.oro_dns = config_.request_dns;
  if (config_.role == SiRole::Router) {
    m.type = Dhcp6Type::Solicit;
    m.ia_pd = true;
    m.ia_na = managed;
    return send(m, ClientState::Dhcp6Soliciting, now);
  }
  if (config_.dhcpv6_mode == Dhcp6Mode::Stateless && !managed) {
    if (!config_.request_dns) return finish();
    m.type = Dhcp6Type::InformationRequest;
    return send(m, ClientState::Dhcp6Informing, now);
  }
  if (managed || config_.request_dns) {
    m.type = Dhcp6Type::Solicit;
    m.ia_na = managed;
    return send(m, ClientState::Dhcp6Soliciting, now);
  }
  return finish();
}

ClientOutput ProvisioningClient::receive(const Message& msg, SimTime now) {
  if (const auto* ra = std::get_if<RouterAdvertisement>(&msg)) {
    if (state_ != ClientState::Soliciting) return {};
    if (ra->error) return fail(*ra->error, ra->detail);
    ra_ = *ra;
    address_ = Ipv6Addr::from_parts(ra->prefix.addr, iid_);
    return send(NeighborSolicitation{*address_}, ClientState::Dad, now);
  }
  if (const auto* na = std::get_if<NeighborAdvertisement>(&msg)) {
    if (state_ == ClientState::Dad && address_ && na->target == *address_)
      return fail(Errc::DadFailed, "duplicate address " + address_->str());
    return {};
  }
  if (const auto* m = std::get_if<Dhcp6Message>(&msg)) {
    if (m->xid != xid_) return {};
    if (state_ == ClientState::Dhcp6Soliciting && m->type == Dhcp6Type::Advertise) {
      if (m->error) return fail(*m->error, m->detail);
      Dhcp6Message req = std::get<Dhcp6Message>(*last_sent_);
      req.type = Dhcp6Type::Request;
      req.prefix = m->prefix;
      req.address = m->address;
      return send(req, ClientState::Dhcp6Requesting, now);
    }
    if ((state_ == ClientState::Dhcp6Requesting || state_ == ClientState::Dhcp6Informing) &&
        m->type == Dhcp6Type::Reply) {
      if (m->error) return fail(*m->error, m->detail);
      if (state_ == ClientState::Dhcp6Requesting) {
        delegated_v6_ = m->prefix;
        dhcp_address_ = m->address;
      }
      dns_v6_ = m->dns;
      return finish();
    }
    return {};
  }
  if (const auto* m = std::get_if<Dhcp4Message>(&msg)) {
    if (m->xid != xid_) return {};
    if (m->type == Dhcp4Type::Nak &&
        (state_ == ClientState::Dhcp4Discovering || state_ == ClientState::Dhcp4Requesting))
      return fail(m->error.value_or(Errc::NoPrefixAvailable), m->detail);
    if (state_ == ClientState::Dhcp4Discovering && m->type == Dhcp4Type::Offer) {
      Dhcp4Message req = std::get<Dhcp4Message>(*last_sent_);
      req.type = Dhcp4Type::Request;
      if (m->subnet_info) req.subnet_info = m->subnet_info;
      return send(req, ClientState::Dhcp4Requesting, now);
    }
    if (state_ == ClientState::Dhcp4Requesting && m->type == Dhcp4Type::Ack) {
      if (m->subnet_info) delegated_v4_ = m->subnet_info->prefix;
      return finish();
    }
  }
  return {};
}

ClientOutput ProvisioningClient::on_timer(SimTime now) {
  if (deadline_ == kNever || now < deadline_) return {};
  if (state_ == ClientState::Dad) {
    address_usable_ = true;
    return start_dhcp6(now);
  }
  if (attempts_ >= config_.max_attempts)
    return fail(Errc::Timeout, std::string("no answer in state ") + std::string(to_string(state_)));
  ++attempts_;
  deadline_ = now + config_.retransmit;
  ClientOutput out;
  out.send.push_back(*last_sent_);
  return out;
}

std::optional<SimTime> ProvisioningClient::next_deadline() const {
  if (deadline_ == kNever) return std::nullopt;
  return deadline_;
}

}  // namespace swforge::prov
