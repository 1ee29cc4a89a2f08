#include "swforge/ppp.hpp"

#include <algorithm>

#include "swforge/digest.hpp"

namespace swforge::ppp {

namespace {

constexpr std::size_t kUdpHeaderSize = 8;
constexpr std::size_t kL2tpDataHeaderSize = 8;  // with the length field
constexpr std::size_t kPppOverhead = 4;         // address, control, protocol
constexpr std::size_t kAcfcSaving = 2;
constexpr std::size_t kChallengeSize = 16;
constexpr int kMaxIidNaks = 3;

Bytes u16_bytes(std::uint16_t v) {
  ByteWriter w;
  w.u16(v);
  return w.take();
}

Bytes u32_bytes(std::uint32_t v) {
  ByteWriter w;
  w.u32(v);
  return w.take();
}

Bytes u64_bytes(std::uint64_t v) {
  ByteWriter w;
  w.u64(v);
  return w.take();
}

Bytes text_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

std::uint64_t read_u64(const Bytes& b) { return ByteReader(b).u64(); }
std::uint32_t read_u32(const Bytes& b) { return ByteReader(b).u32(); }
std::uint16_t read_u16(const Bytes& b) { return ByteReader(b).u16(); }

const CpOption* find_option(const Options& opts, std::uint8_t type) {
  for (auto& o : opts) {
    if (o.type == type) return &o;
  }
  return nullptr;
}

Frame cp_frame(std::uint16_t protocol, std::uint8_t code, std::uint8_t id, Bytes data) {
  return Frame{protocol, encode_cp(CpPacket{code, id, std::move(data)})};
}

}  // namespace

std::string_view to_string(Phase p) noexcept {
  switch (p) {
    case Phase::Dead: return "Dead";
    case Phase::LcpNegotiating: return "LcpNegotiating";
    case Phase::Authenticating: return "Authenticating";
    case Phase::NcpNegotiating: return "NcpNegotiating";
    case Phase::Up: return "Up";
  }
  return "?";
}

std::string_view to_string(Ncp n) noexcept { return n == Ncp::Ipv6cp ? "IPV6CP" : "IPCP"; }

std::size_t compute_ppp_mtu(std::size_t link_mtu, Af transport_af, bool acfc_accepted) {
  if (link_mtu < kMinLinkMtu) {
    throw Error(Errc::MtuTooSmall, "link MTU " + std::to_string(link_mtu) + " below 576");
  }
  const std::size_t ip = transport_af == Af::V4 ? kIpv4HeaderSize : kIpv6HeaderSize;
  const std::size_t ppp = acfc_accepted ? kPppOverhead - kAcfcSaving : kPppOverhead;
  const std::size_t overhead = ip + kUdpHeaderSize + kL2tpDataHeaderSize + ppp;
  if (link_mtu < overhead + kMinPppMtu) {
    throw Error(Errc::MtuTooSmall, "PPP MTU would fall below 68");
  }
  return link_mtu - overhead;
}

void Output::append(Output&& other) {
  frames.insert(frames.end(), std::make_move_iterator(other.frames.begin()),
                std::make_move_iterator(other.frames.end()));
  events.insert(events.end(), std::make_move_iterator(other.events.begin()),
                std::make_move_iterator(other.events.end()));
}

bool Output::failed() const {
  return std::any_of(events.begin(), events.end(),
                     [](const Event& e) { return std::holds_alternative<LinkFailed>(e); });
}

// Option handling for one control protocol. check() fills `reply` with the
// Nak or Reject option list when the verdict is not Ack.
class Policy {
 public:
  enum class Verdict { Ack, Nak, Reject };

  virtual ~Policy() = default;
  virtual Options request(PppLink& link) = 0;
  virtual Verdict check(PppLink& link, const Options& in, Options& reply, Output& out) = 0;
  virtual void on_peer_acked(PppLink& link, const Options& in) = 0;
  virtual void on_ack(PppLink& link, const Options& sent) = 0;
  virtual void on_nak(PppLink& link, const Options& in, Output& out) = 0;
  virtual void on_reject(PppLink& link, const Options& in, Output& out) = 0;
};

// Generic Configure-Request/Ack/Nak/Reject exchange with a restart timer.
class ControlProtocol {
 public:
  ControlProtocol(std::uint16_t protocol, std::unique_ptr<Policy> policy)
      : protocol_(protocol), policy_(std::move(policy)) {}

  std::uint16_t protocol() const { return protocol_; }
  bool opened() const { return opened_; }
  int requests_sent() const { return requests_sent_; }
  SimTime deadline() const { return opened_ || ack_rcvd_ ? kNever : restart_deadline_; }

  void open(PppLink& link, SimTime now, Output& out) { send_request(link, now, out); }

  void on_timer(PppLink& link, SimTime now, Output& out) {
    if (deadline() <= now) send_request(link, now, out);
  }

  void stop() {
    restart_deadline_ = kNever;
    opened_ = false;
  }

  // Returns true when this packet opened the protocol.
  bool receive(PppLink& link, const CpPacket& p, SimTime now, Output& out);

 private:
  void send_request(PppLink& link, SimTime now, Output& out);

  std::uint16_t protocol_;
  std::unique_ptr<Policy> policy_;
  std::uint8_t last_id_ = 0;
  Options last_request_;
  int requests_sent_ = 0;
  bool ack_rcvd_ = false;
  bool ack_sent_ = false;
  bool opened_ = false;
  SimTime restart_deadline_ = kNever;

  friend class PppLink;
};

void ControlProtocol::send_request(PppLink& link, SimTime now, Output& out) {
  if (requests_sent_ >= link.config().max_configure) {
    link.fail(Errc::NegotiationDiverged,
              std::string(protocol_name(protocol_)) + " did not converge after " +
                  std::to_string(requests_sent_) + " Configure-Requests",
              out);
    return;
  }
  ++requests_sent_;
  last_id_ = link.next_id();
  last_request_ = policy_->request(link);
  ack_rcvd_ = false;
  restart_deadline_ = now + link.config().restart_interval;
  out.frames.push_back(cp_frame(protocol_, code::kConfigureRequest, last_id_, encode_options(last_request_)));
}

bool ControlProtocol::receive(PppLink& link, const CpPacket& p, SimTime now, Output& out) {
  const bool was_open = opened_;
  switch (p.code) {
    case code::kConfigureRequest: {
      Options in = decode_options(p.data);
      Options reply;
      auto verdict = policy_->check(link, in, reply, out);
      if (out.failed()) return false;
      if (verdict == Policy::Verdict::Ack) {
        policy_->on_peer_acked(link, in);
        ack_sent_ = true;
        out.frames.push_back(cp_frame(protocol_, code::kConfigureAck, p.id, p.data));
      } else {
        ack_sent_ = false;
        auto c = verdict == Policy::Verdict::Nak ? code::kConfigureNak : code::kConfigureReject;
        out.frames.push_back(cp_frame(protocol_, c, p.id, encode_options(reply)));
      }
      break;
    }
    case code::kConfigureAck:
      if (p.id != last_id_ || ack_rcvd_) return false;
      ack_rcvd_ = true;
      restart_deadline_ = kNever;
      policy_->on_ack(link, last_request_);
      break;
    case code::kConfigureNak:
    case code::kConfigureReject: {
      if (p.id != last_id_ || ack_rcvd_) return false;
      Options in = decode_options(p.data);
      if (p.code == code::kConfigureNak) {
        policy_->on_nak(link, in, out);
      } else {
        policy_->on_reject(link, in, out);
      }
      if (out.failed()) return false;
      send_request(link, now, out);
      break;
    }
    case code::kTerminateRequest:
      out.frames.push_back(cp_frame(protocol_, code::kTerminateAck, p.id, {}));
      link.fail(Errc::PeerTerminated, std::string(protocol_name(protocol_)) + " Terminate-Request", out);
      return false;
    case code::kTerminateAck:
    case code::kCodeReject:
      break;
    case code::kProtocolReject:
      link.fail(Errc::NegotiationDiverged, "peer sent Protocol-Reject", out);
      return false;
    default: {
      ByteWriter w;
      w.bytes(encode_cp(p));
      out.frames.push_back(cp_frame(protocol_, code::kCodeReject, link.next_id(), w.take()));
      break;
    }
  }
  opened_ = ack_rcvd_ && ack_sent_;
  return opened_ && !was_open;
}

class LcpPolicy : public Policy {
 public:
  Options request(PppLink& link) override {
    Options o;
    if (send_mru_) o.push_back({lcp_opt::kMru, u16_bytes(mru_)});
    if (link.role_ == Role::SC && link.config_.require_chap) {
      Bytes auth = u16_bytes(proto::kChap);
      auth.push_back(kChapMd5);
      o.push_back({lcp_opt::kAuthProtocol, auth});
    }
    if (send_magic_) o.push_back({lcp_opt::kMagic, u32_bytes(link.magic_)});
    if (send_acfc_) o.push_back({lcp_opt::kAcfc, {}});
    return o;
  }

  void init(PppLink& link) {
    mru_ = static_cast<std::uint16_t>(
        compute_ppp_mtu(link.config_.link_mtu, link.config_.transport_af, false));
    send_acfc_ = link.config_.request_acfc;
  }

  Verdict check(PppLink& link, const Options& in, Options& reply, Output&) override {
    Options naks, rejects;
    for (auto& o : in) {
      switch (o.type) {
        case lcp_opt::kMru:
          if (o.data.size() != 2) {
            rejects.push_back(o);
          } else if (read_u16(o.data) < kMinPppMtu) {
            naks.push_back({lcp_opt::kMru, u16_bytes(mru_)});
          }
          break;
        case lcp_opt::kAuthProtocol: {
          Bytes chap = u16_bytes(proto::kChap);
          chap.push_back(kChapMd5);
          if (link.role_ == Role::SC || !link.config_.secret) {
            rejects.push_back(o);
          } else if (o.data != chap) {
            naks.push_back({lcp_opt::kAuthProtocol, chap});
          }
          break;
        }
        case lcp_opt::kMagic:
          if (o.data.size() != 4) {
            rejects.push_back(o);
          } else if (read_u32(o.data) == link.magic_ && link.magic_ != 0) {
            naks.push_back({lcp_opt::kMagic, u32_bytes(static_cast<std::uint32_t>(link.rng_()) | 1)});
          }
          break;
        case lcp_opt::kAcfc:
          if (!link.config_.accept_acfc) rejects.push_back(o);
          break;
        default:
          rejects.push_back(o);
      }
    }
    if (!rejects.empty()) {
      reply = std::move(rejects);
      return Verdict::Reject;
    }
    if (!naks.empty()) {
      reply = std::move(naks);
      return Verdict::Nak;
    }
    return Verdict::Ack;
  }

  void on_peer_acked(PppLink& link, const Options& in) override {
    if (auto* m = find_option(in, lcp_opt::kMru)) link.peer_mru_ = read_u16(m->data);
    link.acfc_peer_ = find_option(in, lcp_opt::kAcfc) != nullptr;
    if (link.role_ == Role::SI) link.chap_selected_ = find_option(in, lcp_opt::kAuthProtocol) != nullptr;
  }

  void on_ack(PppLink& link, const Options& sent) override {
    link.acfc_local_ = find_option(sent, lcp_opt::kAcfc) != nullptr;
    if (link.role_ == Role::SC) link.chap_selected_ = find_option(sent, lcp_opt::kAuthProtocol) != nullptr;
  }

  void on_nak(PppLink& link, const Options& in, Output& out) override {
    for (auto& o : in) {
      switch (o.type) {
        case lcp_opt::kMru:
          if (o.data.size() == 2 && read_u16(o.data) >= kMinPppMtu) mru_ = read_u16(o.data);
          break;
        case lcp_opt::kMagic:
          link.magic_ = static_cast<std::uint32_t>(link.rng_()) | 1;
          break;
        case lcp_opt::kAuthProtocol:
          link.fail(Errc::AuthFailed, "peer refuses CHAP-MD5", out);
          return;
        case lcp_opt::kAcfc:
          send_acfc_ = false;
          break;
        default:
          break;
      }
    }
  }

  void on_reject(PppLink& link, const Options& in, Output& out) override {
    for (auto& o : in) {
      switch (o.type) {
        case lcp_opt::kMru: send_mru_ = false; break;
        case lcp_opt::kMagic: send_magic_ = false; break;
        case lcp_opt::kAcfc: send_acfc_ = false; break;
        case lcp_opt::kAuthProtocol:
          link.fail(Errc::AuthFailed, "peer rejected authentication", out);
          return;
        default: break;
      }
    }
  }

 private:
  std::uint16_t mru_ = 1500;
  bool send_mru_ = true;
  bool send_magic_ = true;
  bool send_acfc_ = false;
};

class IpcpPolicy : public Policy {
 public:
  Options request(PppLink& link) override {
    Options o;
    if (link.role_ == Role::SI) {
      o.push_back({ipcp_opt::kAddress, u32_bytes(link.local_ipv4_.value_or(Ipv4Addr{}).value)});
      if (link.config_.request_dns) {
        for (std::size_t i = 0; i < 2; ++i) {
          if (dns_rejected_[i]) continue;
          o.push_back({dns_type(i), u32_bytes(dns_wanted_[i].value)});
        }
      }
    } else if (link.local_ipv4_ && send_address_) {
      o.push_back({ipcp_opt::kAddress, u32_bytes(link.local_ipv4_->value)});
    }
    return o;
  }

  Verdict check(PppLink& link, const Options& in, Options& reply, Output& out) override {
    Options naks, rejects;
    for (auto& o : in) {
      if (o.data.size() != 4) {
        rejects.push_back(o);
        continue;
      }
      const auto value = read_u32(o.data);
      if (o.type == ipcp_opt::kAddress) {
        if (link.role_ == Role::SI) continue;
        if (!assigned_) {
          if (link.authorization_ && link.authorization_->ipv4) {
            assigned_ = link.authorization_->ipv4;
          } else if (link.config_.allocate_ipv4) {
            assigned_ = link.config_.allocate_ipv4();
          }
          if (!assigned_) {
            link.fail(Errc::PoolExhausted, "no IPv4 address available for " + link.peer_name_, out);
            return Verdict::Reject;
          }
        }
        if (value != assigned_->value) naks.push_back({ipcp_opt::kAddress, u32_bytes(assigned_->value)});
      } else if (link.role_ == Role::SC &&
                 (o.type == ipcp_opt::kPrimaryDns || o.type == ipcp_opt::kSecondaryDns)) {
        const std::size_t idx = o.type == ipcp_opt::kPrimaryDns ? 0 : 1;
        if (idx >= link.config_.dns_servers.size()) {
          rejects.push_back(o);
        } else if (value != link.config_.dns_servers[idx].value) {
          naks.push_back({o.type, u32_bytes(link.config_.dns_servers[idx].value)});
        }
      } else {
        rejects.push_back(o);
      }
    }
    if (!rejects.empty()) {
      reply = std::move(rejects);
      return Verdict::Reject;
    }
    if (!naks.empty()) {
      reply = std::move(naks);
      return Verdict::Nak;
    }
    return Verdict::Ack;
  }

  void on_peer_acked(PppLink& link, const Options& in) override {
    if (auto* a = find_option(in, ipcp_opt::kAddress)) link.peer_ipv4_ = Ipv4Addr{read_u32(a->data)};
  }

  void on_ack(PppLink& link, const Options& sent) override {
    if (link.role_ != Role::SI) return;
    if (auto* a = find_option(sent, ipcp_opt::kAddress)) link.local_ipv4_ = Ipv4Addr{read_u32(a->data)};
    link.dns_.clear();
    for (std::size_t i = 0; i < 2; ++i) {
      if (auto* d = find_option(sent, dns_type(i)); d && read_u32(d->data) != 0) {
        link.dns_.push_back(Ipv4Addr{read_u32(d->data)});
      }
    }
  }

  void on_nak(PppLink& link, const Options& in, Output&) override {
    for (auto& o : in) {
      if (o.data.size() != 4) continue;
      const Ipv4Addr v{read_u32(o.data)};
      if (o.type == ipcp_opt::kAddress) {
        link.local_ipv4_ = v;
      } else if (o.type == ipcp_opt::kPrimaryDns) {
        dns_wanted_[0] = v;
      } else if (o.type == ipcp_opt::kSecondaryDns) {
        dns_wanted_[1] = v;
      }
    }
  }

  void on_reject(PppLink& link, const Options& in, Output& out) override {
    for (auto& o : in) {
      if (o.type == ipcp_opt::kAddress) {
        if (link.role_ == Role::SI) {
          link.fail(Errc::NegotiationDiverged, "peer rejected the IP-Address option", out);
          return;
        }
        send_address_ = false;
      } else if (o.type == ipcp_opt::kPrimaryDns) {
        dns_rejected_[0] = true;
      } else if (o.type == ipcp_opt::kSecondaryDns) {
        dns_rejected_[1] = true;
      }
    }
  }

 private:
  static std::uint8_t dns_type(std::size_t i) {
    return i == 0 ? ipcp_opt::kPrimaryDns : ipcp_opt::kSecondaryDns;
  }

  std::optional<Ipv4Addr> assigned_;
  bool send_address_ = true;
  Ipv4Addr dns_wanted_[2]{};
  bool dns_rejected_[2]{false, false};
};

class Ipv6cpPolicy : public Policy {
 public:
  Options request(PppLink& link) override {
    return {{ipv6cp_opt::kInterfaceId, u64_bytes(link.local_iid_)}};
  }

  Verdict check(PppLink& link, const Options& in, Options& reply, Output& out) override {
    Options naks, rejects;
    for (auto& o : in) {
      if (o.type != ipv6cp_opt::kInterfaceId || o.data.size() != 8) {
        rejects.push_back(o);
        continue;
      }
      const auto iid = read_u64(o.data);
      if (iid == 0 || iid == link.local_iid_) {
        if (++collision_naks_ > kMaxIidNaks) {
          link.fail(Errc::IidExhausted,
                    "interface-id still colliding after " + std::to_string(kMaxIidNaks) + " Naks", out);
          return Verdict::Reject;
        }
        naks.push_back({ipv6cp_opt::kInterfaceId, u64_bytes(alternative(iid, link.local_iid_))});
      }
    }
    if (!rejects.empty()) {
      reply = std::move(rejects);
      return Verdict::Reject;
    }
    if (!naks.empty()) {
      reply = std::move(naks);
      return Verdict::Nak;
    }
    return Verdict::Ack;
  }

  void on_peer_acked(PppLink& link, const Options& in) override {
    if (auto* o = find_option(in, ipv6cp_opt::kInterfaceId)) link.remote_iid_ = read_u64(o->data);
  }

  void on_ack(PppLink&, const Options&) override {}

  void on_nak(PppLink& link, const Options& in, Output&) override {
    if (link.role_ == Role::SC || link.config_.iid_fixed) return;
    if (auto* o = find_option(in, ipv6cp_opt::kInterfaceId); o && o->data.size() == 8) {
      if (const auto iid = read_u64(o->data); iid != 0) link.local_iid_ = iid;
    }
  }

  void on_reject(PppLink& link, const Options&, Output& out) override {
    link.fail(Errc::NegotiationDiverged, "peer rejected the Interface-Identifier option", out);
  }

  /// Deterministic replacement: the next value after `iid` that is neither
  /// zero nor our own identifier.
  static std::uint64_t alternative(std::uint64_t iid, std::uint64_t own) {
    std::uint64_t alt = iid + 1;
    while (alt == 0 || alt == own) ++alt;
    return alt;
  }

 private:
  int collision_naks_ = 0;
};

PppLink::PppLink(Role role, PppConfig config) : role_(role), config_(std::move(config)), rng_(config_.seed) {
  compute_ppp_mtu(config_.link_mtu, config_.transport_af, false);  // validates link_mtu
  if (config_.max_configure < 1) throw Error(Errc::InvalidConfig, "max_configure must be >= 1");
  if (config_.echo_enabled && config_.echo_interval < tunnel::kMinEchoInterval) {
    throw Error(Errc::InvalidConfig, "LCP echo interval below 10 s");
  }
  auto lcp = std::make_unique<LcpPolicy>();
  lcp->init(*this);
  lcp_ = std::make_unique<ControlProtocol>(proto::kLcp, std::move(lcp));
  if (config_.payload_af == Af::V6) {
    ncp_ = std::make_unique<ControlProtocol>(proto::kIpv6cp, std::make_unique<Ipv6cpPolicy>());
  } else {
    ncp_ = std::make_unique<ControlProtocol>(proto::kIpcp, std::make_unique<IpcpPolicy>());
  }
  magic_ = static_cast<std::uint32_t>(rng_()) | 1;
  local_ipv4_ = role_ == Role::SC ? config_.local_ipv4 : std::nullopt;
}

PppLink::~PppLink() = default;
PppLink::PppLink(PppLink&&) noexcept = default;
PppLink& PppLink::operator=(PppLink&&) noexcept = default;

std::size_t PppLink::mtu() const {
  auto m = compute_ppp_mtu(config_.link_mtu, config_.transport_af, acfc_accepted());
  if (peer_mru_) m = std::min<std::size_t>(m, *peer_mru_);
  return m;
}

int PppLink::configure_requests_sent() const { return lcp_->requests_sent() + ncp_->requests_sent(); }

void PppLink::set_phase(Phase p, Output& out) {
  if (phase_ == p) return;
  phase_ = p;
  out.events.push_back(PhaseChanged{p});
}

void PppLink::fail(Errc code, std::string detail, Output& out) {
  if (phase_ == Phase::Dead) return;
  shutdown();
  out.events.push_back(PhaseChanged{Phase::Dead});
  out.events.push_back(LinkFailed{code, std::move(detail)});
}

void PppLink::shutdown() {
  phase_ = Phase::Dead;
  lcp_->stop();
  ncp_->stop();
  chap_deadline_ = kNever;
  echo_deadline_ = kNever;
}

Output PppLink::open(SimTime now) {
  Output out;
  if (phase_ != Phase::Dead || lcp_->requests_sent() > 0) return out;
  set_phase(Phase::LcpNegotiating, out);
  lcp_->open(*this, now, out);
  return out;
}

Output PppLink::receive(const Frame& frame, SimTime now) {
  Output out;
  if (phase_ == Phase::Dead) return out;
  CpPacket p;
  try {
    p = decode_cp(frame.payload);
  } catch (const Error&) {
    return out;  // silently discarded, as for any malformed PPP packet
  }
  if (frame.protocol == proto::kLcp) {
    if (p.code == code::kEchoRequest || p.code == code::kEchoReply || p.code == code::kDiscardRequest) {
      receive_echo(p, now, out);
      return out;
    }
    if (lcp_->receive(*this, p, now, out)) on_lcp_opened(now, out);
  } else if (frame.protocol == proto::kChap) {
    receive_chap(p, now, out);
  } else if (frame.protocol == ncp_->protocol()) {
    if (phase_ != Phase::NcpNegotiating && phase_ != Phase::Up) return out;
    if (ncp_->receive(*this, p, now, out)) on_ncp_opened(now, out);
  } else {
    protocol_reject(frame, out);
  }
  return out;
}

void PppLink::protocol_reject(const Frame& frame, Output& out) {
  if (!lcp_->opened()) return;
  ByteWriter w;
  w.u16(frame.protocol);
  w.bytes(frame.payload);
  out.frames.push_back(cp_frame(proto::kLcp, code::kProtocolReject, next_id(), w.take()));
}

void PppLink::on_lcp_opened(SimTime now, Output& out) {
  if (chap_selected_) {
    set_phase(Phase::Authenticating, out);
    if (role_ == Role::SC) send_challenge(now, out);
    return;
  }
  if (role_ == Role::SC) {
    peer_name_ = config_.peer_hint;
    if (!run_authorization(AuthRequest{config_.peer_hint, std::nullopt}, out)) return;
  }
  start_ncp(now, out);
}

bool PppLink::run_authorization(const AuthRequest& req, Output& out) {
  if (!config_.authorize) {
    authorization_ = AuthDecision{true, "no authorizer", std::nullopt, std::nullopt};
    return true;
  }
  authorization_ = config_.authorize(req);
  if (!authorization_->accept) {
    fail(Errc::AuthFailed, "authorization rejected " + req.name + ": " + authorization_->message, out);
    return false;
  }
  return true;
}

void PppLink::send_challenge(SimTime now, Output& out) {
  if (chap_sent_ >= config_.max_configure) {
    fail(Errc::AuthFailed, "no CHAP response", out);
    return;
  }
  ++chap_sent_;
  if (chap_challenge_.empty()) {
    chap_challenge_.resize(kChallengeSize);
    for (auto& b : chap_challenge_) b = static_cast<std::uint8_t>(rng_());
    chap_id_ = next_id();
  }
  out.frames.push_back(cp_frame(proto::kChap, chap_code::kChallenge, chap_id_,
                                encode_chap_value({chap_challenge_, config_.host_name})));
  chap_deadline_ = now + config_.restart_interval;
}

void PppLink::receive_chap(const CpPacket& p, SimTime now, Output& out) {
  if (!chap_selected_) return;
  if (role_ == Role::SI) {
    if (p.code == chap_code::kChallenge) {
      if (phase_ == Phase::LcpNegotiating) set_phase(Phase::Authenticating, out);
      if (phase_ != Phase::Authenticating) return;
      auto challenge = decode_chap_value(p.data);
      peer_name_ = challenge.name;
      auto response = chap_md5(p.id, config_.secret.value_or(""), challenge.value);
      out.frames.push_back(cp_frame(proto::kChap, chap_code::kResponse, p.id,
                                    encode_chap_value({response, config_.user_name})));
    } else if (p.code == chap_code::kSuccess && phase_ == Phase::Authenticating) {
      start_ncp(now, out);
    } else if (p.code == chap_code::kFailure && phase_ == Phase::Authenticating) {
      fail(Errc::AuthFailed, "peer sent CHAP Failure", out);
    }
    return;
  }
  if (p.code != chap_code::kResponse || phase_ != Phase::Authenticating || p.id != chap_id_) return;
  auto response = decode_chap_value(p.data);
  peer_name_ = response.name;
  chap_deadline_ = kNever;
  AuthRequest req{response.name, AuthRequest::Chap{p.id, chap_challenge_, response.value}};
  bool accepted = true;
  if (!config_.authorize) {
    accepted = false;
    authorization_ = AuthDecision{false, "no authorizer configured", std::nullopt, std::nullopt};
  } else {
    authorization_ = config_.authorize(req);
    accepted = authorization_->accept;
  }
  if (!accepted) {
    out.frames.push_back(cp_frame(proto::kChap, chap_code::kFailure, p.id, text_bytes("denied")));
    fail(Errc::AuthFailed, "CHAP rejected " + response.name + ": " + authorization_->message, out);
    return;
  }
  out.frames.push_back(cp_frame(proto::kChap, chap_code::kSuccess, p.id, text_bytes("welcome")));
  start_ncp(now, out);
}

void PppLink::start_ncp(SimTime now, Output& out) {
  set_phase(Phase::NcpNegotiating, out);
  if (ncp() == Ncp::Ipv6cp) {
    if (role_ == Role::SC && authorization_ && authorization_->iid) {
      local_iid_ = *authorization_->iid;
    } else if (config_.iid) {
      local_iid_ = *config_.iid;
    } else {
      while (local_iid_ == 0) local_iid_ = rng_();
    }
  }
  ncp_->open(*this, now, out);
}

void PppLink::on_ncp_opened(SimTime now, Output& out) {
  set_phase(Phase::Up, out);
  out.events.push_back(LinkUp{});
  if (config_.echo_enabled) echo_deadline_ = now + config_.echo_interval;
}

void PppLink::receive_echo(const CpPacket& p, SimTime, Output& out) {
  if (!lcp_->opened()) return;
  if (p.code == code::kEchoRequest) {
    ByteWriter w;
    w.u32(magic_);
    if (p.data.size() > 4) w.bytes(ByteView(p.data).subspan(4));
    out.frames.push_back(cp_frame(proto::kLcp, code::kEchoReply, p.id, w.take()));
  } else if (p.code == code::kEchoReply) {
    echo_missed_ = 0;
  }
}

Output PppLink::on_timer(SimTime now) {
  Output out;
  if (phase_ == Phase::Dead) return out;
  lcp_->on_timer(*this, now, out);
  if (phase_ == Phase::Dead) return out;
  if (chap_deadline_ <= now) send_challenge(now, out);
  if (phase_ == Phase::Dead) return out;
  if (phase_ == Phase::NcpNegotiating || phase_ == Phase::Up) ncp_->on_timer(*this, now, out);
  if (phase_ == Phase::Up && echo_deadline_ <= now) {
    if (echo_missed_ >= config_.echo_max_missed) {
      fail(Errc::LinkDead, std::to_string(echo_missed_) + " LCP Echo-Requests unanswered", out);
      return out;
    }
    ++echo_missed_;
    out.frames.push_back(cp_frame(proto::kLcp, code::kEchoRequest, next_id(), u32_bytes(magic_)));
    echo_deadline_ = now + config_.echo_interval;
  }
  return out;
}

std::optional<SimTime> PppLink::next_deadline() const {
  if (phase_ == Phase::Dead) return std::nullopt;
  SimTime t = std::min({lcp_->deadline(), chap_deadline_, echo_deadline_});
  if (phase_ == Phase::NcpNegotiating || phase_ == Phase::Up) t = std::min(t, ncp_->deadline());
  if (t == kNever) return std::nullopt;
  return t;
}

}  // namespace swforge::ppp
