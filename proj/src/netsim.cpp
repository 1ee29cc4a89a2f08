#include "swforge/netsim.hpp"

#include "swforge/error.hpp"

namespace swforge::net {

std::string_view to_string(Filtering f) noexcept {
  switch (f) {
    case Filtering::EndpointIndependent: return "eif";
    case Filtering::AddressDependent: return "adf";
    case Filtering::AddressAndPortDependent: return "apdf";
  }
  return "?";
}

Filtering parse_filtering(std::string_view s) {
  if (s == "eif") return Filtering::EndpointIndependent;
  if (s == "adf") return Filtering::AddressDependent;
  if (s == "apdf") return Filtering::AddressAndPortDependent;
  throw Error(Errc::InvalidConfig, "unknown filtering '" + std::string(s) + "'");
}

// ---- NAT ----------------------------------------------------------------------

NatBox::NatBox(std::string name, NatConfig config)
    : name_(std::move(name)), config_(std::move(config)), next_port_(config_.first_port) {
  if (config_.binding_ttl <= Duration::zero()) throw Error(Errc::InvalidConfig, "binding ttl must be positive");
}

Endpoint NatBox::outbound(const Endpoint& internal, const Endpoint& remote, SimTime now, bool* created) {
  if (created) *created = false;
  auto it = by_internal_.find(internal);
  if (it != by_internal_.end() && !live(it->second, now)) {
    by_port_.erase(it->second.external.port);
    by_internal_.erase(it);
    it = by_internal_.end();
  }
  if (it == by_internal_.end()) {
    std::uint16_t port = 0;
    for (int tries = 0; tries < 65536; ++tries) {
      std::uint16_t p = next_port_++;
      if (next_port_ == 0) next_port_ = config_.first_port;
      if (p != 0 && !by_port_.contains(p)) {
        port = p;
        break;
      }
    }
    if (port == 0) throw Error(Errc::PoolExhausted, name_ + ": no free external port");
    Binding b;
    b.internal = internal;
    b.external = Endpoint{config_.external, port};
    it = by_internal_.emplace(internal, std::move(b)).first;
    by_port_[port] = internal;
    if (created) *created = true;
  }
  it->second.last_activity = now;
  it->second.contacted.insert(remote);
  return it->second.external;
}

std::optional<Endpoint> NatBox::inbound(const Endpoint& external, const Endpoint& remote, SimTime now) const {
  if (external.addr != config_.external) return std::nullopt;
  auto p = by_port_.find(external.port);
  if (p == by_port_.end()) return std::nullopt;
  const Binding& b = by_internal_.at(p->second);
  if (!live(b, now)) return std::nullopt;
  switch (config_.filtering) {
    case Filtering::EndpointIndependent:
      return b.internal;
    case Filtering::AddressDependent:
      for (const auto& c : b.contacted)
        if (c.addr == remote.addr) return b.internal;
      return std::nullopt;
    case Filtering::AddressAndPortDependent:
      if (b.contacted.contains(remote)) return b.internal;
      return std::nullopt;
  }
  return std::nullopt;
}

std::vector<Binding> NatBox::purge(SimTime now) {
  std::vector<Binding> gone;
  for (auto it = by_internal_.begin(); it != by_internal_.end();) {
    if (live(it->second, now)) {
      ++it;
      continue;
    }
    by_port_.erase(it->second.external.port);
    gone.push_back(std::move(it->second));
    it = by_internal_.erase(it);
  }
  return gone;
}

// ---- network ---------------------------------------------------------------------

Network::Network(std::uint64_t seed, LinkConfig link) : rng_(seed), link_(link) {
  if (link_.loss < 0.0 || link_.loss > 1.0) throw Error(Errc::InvalidConfig, "loss must be in [0, 1]");
  if (link_.delay < Duration::zero()) throw Error(Errc::InvalidConfig, "negative link delay");
}

void Network::add_host(std::string name, IpAddr addr, Node* node, std::vector<NatBox*> path,
                       Duration extra_delay) {
  for (const auto& h : hosts_)
    if (h.name == name) throw Error(Errc::InvalidConfig, "duplicate host " + name);
  if (addr_owner_.contains(addr)) throw Error(Errc::InvalidConfig, "address in use " + to_string(addr));
  addr_owner_[addr] = hosts_.size();
  hosts_.push_back(Host{std::move(name), node, std::move(path), extra_delay});
}

void Network::add_address(const std::string& host, IpAddr addr) {
  for (std::size_t i = 0; i < hosts_.size(); ++i) {
    if (hosts_[i].name != host) continue;
    if (addr_owner_.contains(addr)) throw Error(Errc::InvalidConfig, "address in use " + to_string(addr));
    addr_owner_[addr] = i;
    return;
  }
  throw Error(Errc::InvalidConfig, "unknown host " + host);
}

NatBox& Network::add_nat(std::string name, NatConfig config) {
  nats_.push_back(std::make_unique<NatBox>(std::move(name), std::move(config)));
  return *nats_.back();
}

NatBox* Network::nat(const std::string& name) {
  for (auto& n : nats_)
    if (n->name() == name) return n.get();
  return nullptr;
}

std::optional<std::string> Network::owner(const IpAddr& addr) const {
  auto it = addr_owner_.find(addr);
  if (it == addr_owner_.end()) return std::nullopt;
  return hosts_[it->second].name;
}

void Network::send(const std::string& host, Datagram d) {
  const Host* from = nullptr;
  for (const auto& h : hosts_)
    if (h.name == host) from = &h;
  if (!from) throw Error(Errc::InvalidConfig, "unknown host " + host);

  for (NatBox* nat : from->path) {
    bool created = false;
    Endpoint ext = nat->outbound(d.src, d.dst, now_, &created);
    if (created)
      trace_.emit(now_, "NatBinding", nat->name(), "", d.src.str() + " -> " + ext.str(),
                  {{"internal", d.src.str()}, {"external", ext.str()}});
    d.src = ext;
  }

  // Walk inbound through any NAT whose external address is the destination.
  for (int depth = 0; depth < 16; ++depth) {
    NatBox* box = nullptr;
    for (auto& n : nats_)
      if (n->config().external == d.dst.addr) box = n.get();
    if (!box) break;
    auto internal = box->inbound(d.dst, d.src, now_);
    if (!internal) {
      trace_.emit(now_, "NatFiltered", host, box->name(), d.summary,
                  {{"src", d.src.str()}, {"dst", d.dst.str()}, {"filtering", to_string(box->config().filtering)}});
      return;
    }
    d.dst = *internal;
  }

  auto it = addr_owner_.find(d.dst.addr);
  if (it == addr_owner_.end()) {
    trace_.emit(now_, "Unroutable", host, "", d.summary, {{"src", d.src.str()}, {"dst", d.dst.str()}});
    return;
  }
  const Host& dest = hosts_[it->second];
  const std::string& to = dest.name;
  if (link_.loss > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < link_.loss) {
    trace_.emit(now_, "Loss", host, to, d.summary, {{"src", d.src.str()}, {"dst", d.dst.str()}});
    return;
  }
  queue_.push(Event{now_ + link_.delay + from->extra_delay + dest.extra_delay, seq_++, host, to, std::move(d)});
}

std::optional<SimTime> Network::next_event() const {
  std::optional<SimTime> t;
  if (!queue_.empty()) t = queue_.top().at;
  for (const auto& h : hosts_) {
    if (!h.node) continue;
    if (auto d = h.node->next_deadline(); d && (!t || *d < *t)) t = d;
  }
  return t;
}

void Network::purge_nats(SimTime now) {
  for (auto& n : nats_)
    for (const auto& b : n->purge(now))
      trace_.emit(now, "NatExpired", n->name(), "", b.internal.str() + " -> " + b.external.str(),
                  {{"internal", b.internal.str()}, {"external", b.external.str()}});
}

void Network::step_to(SimTime t) {
  if (t == now_ && ++stalled_ > 100000) throw Error(Errc::ProtocolViolation, "timer never advances");
  if (t != now_) stalled_ = 0;
  now_ = t;
  purge_nats(t);
  while (!queue_.empty() && queue_.top().at == t) {
    Event ev = queue_.top();
    queue_.pop();
    std::size_t idx = 0;
    for (; idx < hosts_.size(); ++idx)
      if (hosts_[idx].name == ev.to) break;
    Host& h = hosts_[idx];
    trace_.emit(t, "Deliver", ev.from, h.name,
                ev.datagram.summary,
                {{"src", ev.datagram.src.str()}, {"dst", ev.datagram.dst.str()}, {"bytes", ev.datagram.payload.size()}});
    if (h.node) h.node->on_datagram(ev.datagram, t);
  }
  for (auto& h : hosts_) {
    if (!h.node) continue;
    if (auto d = h.node->next_deadline(); d && *d <= t) h.node->on_timer(t);
  }
}

void Network::advance(SimTime until) {
  if (until < now_) throw Error(Errc::InvalidConfig, "cannot move the clock backwards");
  while (auto t = next_event()) {
    if (*t > until) break;
    step_to(std::max(*t, now_));
  }
  now_ = until;
  purge_nats(until);
}

bool Network::run_until_idle(SimTime limit) {
  while (auto t = next_event()) {
    if (*t > limit) {
      now_ = limit;
      purge_nats(limit);
      return false;
    }
    step_to(std::max(*t, now_));
  }
  return true;
}

}  // namespace swforge::net
