#include "swforge/tunnel.hpp"

#include <algorithm>

#include "swforge/digest.hpp"

namespace swforge::tunnel {

using l2tp::Avp;
using l2tp::AvpType;
using l2tp::ControlMessage;
using l2tp::MessageType;

namespace {

constexpr std::uint16_t kProtocolVersion = 0x0100;  // version 1, revision 0
constexpr std::size_t kChallengeSize = 16;
constexpr std::uint16_t kDefaultPeerWindow = 4;

// Modular 16-bit sequence comparison: negative when a precedes b.
int seq_diff(std::uint16_t a, std::uint16_t b) { return static_cast<std::int16_t>(a - b); }

bool has_control_send(const Actions& out) {
  return std::any_of(out.begin(), out.end(), [](const Action& a) {
    auto* s = std::get_if<SendControl>(&a);
    return s && s->message.type != MessageType::ZLB;
  });
}

}  // namespace

std::string_view to_string(Role r) noexcept { return r == Role::SI ? "SI" : "SC"; }

std::string_view to_string(CcState s) noexcept {
  switch (s) {
    case CcState::Idle: return "Idle";
    case CcState::WaitCtlReply: return "WaitCtlReply";
    case CcState::WaitCtlConn: return "WaitCtlConn";
    case CcState::Established: return "Established";
    case CcState::Stopping: return "Stopping";
    case CcState::Dead: return "Dead";
  }
  return "?";
}

std::string_view to_string(SessionState s) noexcept {
  switch (s) {
    case SessionState::None: return "None";
    case SessionState::WaitReply: return "WaitReply";
    case SessionState::WaitConnect: return "WaitConnect";
    case SessionState::Established: return "Established";
  }
  return "?";
}

std::string_view to_string(DownReason r) noexcept {
  switch (r) {
    case DownReason::Admin: return "Admin";
    case DownReason::DeadPeer: return "DeadPeer";
    case DownReason::PeerStop: return "PeerStop";
    case DownReason::ProtocolViolation: return "ProtocolViolation";
    case DownReason::AuthFailure: return "AuthFailure";
    case DownReason::MalformedMessage: return "MalformedMessage";
    case DownReason::PppFailure: return "PppFailure";
    case DownReason::PppAuthFailed: return "PppAuthFailed";
    case DownReason::SessionClosed: return "SessionClosed";
  }
  return "?";
}

void KeepaliveConfig::validate() const {
  if (hello_interval < Duration::zero()) throw Error(Errc::InvalidConfig, "negative HELLO interval");
  if (retransmit_base <= Duration::zero() || retransmit_max < retransmit_base) {
    throw Error(Errc::InvalidConfig, "retransmit timers must satisfy 0 < base <= max");
  }
  if (max_retransmits < 1) throw Error(Errc::InvalidConfig, "max_retransmits must be >= 1");
  if (!lcp_echo_enabled) return;
  if (lcp_echo_interval < kMinEchoInterval) {
    throw Error(Errc::InvalidConfig, "LCP echo interval below 10 s");
  }
  if (lcp_echo_interval > max_echo_interval()) {
    throw Error(Errc::InvalidConfig, "LCP echo interval above min(HELLO interval, 60 s)");
  }
}

Duration KeepaliveConfig::max_echo_interval() const {
  if (hello_interval == Duration::zero()) return kMaxEchoInterval;
  return std::min(hello_interval, Duration{kMaxEchoInterval});
}

Bytes compute_response(std::string_view secret, ByteView challenge, MessageType response_carrier) {
  return chap_md5(static_cast<std::uint8_t>(response_carrier), secret, challenge);
}

// Result Code AVP values on StopCCN. Local-only outcomes send nothing.
std::pair<std::uint16_t, std::uint16_t> result_code_for(DownReason r) noexcept {
  namespace rc = l2tp::result;
  namespace ec = l2tp::error_code;
  switch (r) {
    case DownReason::Admin: return {rc::kClearConnection, ec::kNone};
    case DownReason::ProtocolViolation: return {rc::kFsmError, ec::kNone};
    case DownReason::AuthFailure: return {rc::kNotAuthorized, ec::kNone};
    case DownReason::MalformedMessage: return {rc::kGeneralError, ec::kOutOfRange};
    case DownReason::PppFailure: return {rc::kClearConnection, ec::kNone};
    case DownReason::PppAuthFailed: return {rc::kNotAuthorized, ec::kNone};
    case DownReason::SessionClosed: return {rc::kClearConnection, ec::kNone};
    case DownReason::DeadPeer:
    case DownReason::PeerStop: return {0, 0};
  }
  return {rc::kGeneralError, ec::kNone};
}

TunnelEndpoint::TunnelEndpoint(Role role, TunnelConfig config)
    : role_(role), config_(std::move(config)), rng_(config_.seed) {
  config_.keepalive.validate();
  if (config_.receive_window == std::uint16_t{0}) throw Error(Errc::InvalidConfig, "receive window must be nonzero");
  local_tunnel_id_ = config_.local_tunnel_id ? config_.local_tunnel_id : draw_id();
  peer_window_ = kDefaultPeerWindow;
}

std::uint16_t TunnelEndpoint::draw_id() {
  std::uint16_t id = 0;
  while (id == 0) id = static_cast<std::uint16_t>(rng_());
  return id;
}

Bytes TunnelEndpoint::new_challenge() {
  Bytes c(kChallengeSize);
  for (auto& b : c) b = static_cast<std::uint8_t>(rng_());
  return c;
}

Actions TunnelEndpoint::si_start(SimTime now) {
  if (role_ != Role::SI) throw Error(Errc::ProtocolViolation, "only the SI initiates the tunnel");
  if (cc_state_ != CcState::Idle) throw Error(Errc::ProtocolViolation, "tunnel already started");
  std::vector<Avp> avps{
      Avp::u16(AvpType::ProtocolVersion, kProtocolVersion),
      Avp::text(AvpType::HostName, config_.host_name),
      Avp::u32(AvpType::FramingCapabilities, l2tp::kFramingSync | l2tp::kFramingAsync),
      Avp::u16(AvpType::AssignedTunnelId, local_tunnel_id_),
  };
  if (config_.receive_window) {
    avps.push_back(Avp::u16(AvpType::ReceiveWindowSize, *config_.receive_window));
  }
  if (config_.secret) {
    sent_challenge_ = new_challenge();
    avps.push_back(Avp::raw(AvpType::Challenge, sent_challenge_));
  }
  if (config_.firmware_revision) {
    avps.push_back(Avp::u16(AvpType::FirmwareRevision, *config_.firmware_revision, false));
  }
  if (!config_.vendor_name.empty()) {
    avps.push_back(Avp::text(AvpType::VendorName, config_.vendor_name, false));
  }
  Actions out;
  last_rx_ = now;
  cc_state_ = CcState::WaitCtlReply;
  queue_control(ControlMessage::make(MessageType::SCCRQ, 0, 0, std::move(avps)), now, out);
  return out;
}

void TunnelEndpoint::queue_control(ControlMessage msg, SimTime now, Actions& out) {
  pending_.push_back(std::move(msg));
  flush_window(now, out);
}

void TunnelEndpoint::flush_window(SimTime now, Actions& out) {
  while (!pending_.empty() && outstanding_.size() < peer_window_) {
    auto msg = std::move(pending_.front());
    pending_.pop_front();
    msg.header.ns = next_ns_++;
    const bool was_idle = outstanding_.empty();
    transmit(msg, false, out);
    outstanding_.push_back({std::move(msg)});
    if (was_idle) arm_retransmit(now, out);
  }
}

void TunnelEndpoint::transmit(ControlMessage& msg, bool retransmission, Actions& out) {
  msg.header.nr = expected_nr_;
  if (msg.type != MessageType::SCCRQ) msg.header.tunnel_id = remote_tunnel_id_;
  auto wire = l2tp::encode_message(msg);
  ++stats_.control_tx;
  if (retransmission) ++stats_.retransmits;
  out.push_back(SendControl{msg, std::move(wire), retransmission});
}

void TunnelEndpoint::arm_retransmit(SimTime now, Actions& out) {
  rtx_timeouts_ = 0;
  rtx_deadline_ = now + config_.keepalive.retransmit_base;
  out.push_back(StartTimer{TimerKind::Retransmit, rtx_deadline_});
}

void TunnelEndpoint::arm_hello(Actions& out) {
  const auto interval = config_.keepalive.hello_interval;
  SimTime deadline = kNever;
  if (cc_state_ == CcState::Established && interval > Duration::zero() && !hello_outstanding_) {
    deadline = last_rx_ + interval;
  }
  if (deadline != hello_deadline_) {
    hello_deadline_ = deadline;
    if (deadline != kNever) out.push_back(StartTimer{TimerKind::Hello, deadline});
  }
}

void TunnelEndpoint::send_zlb(Actions& out) {
  auto zlb = ControlMessage::zlb(remote_tunnel_id_);
  zlb.header.ns = next_ns_;
  zlb.header.nr = expected_nr_;
  auto wire = l2tp::encode_message(zlb);
  ++stats_.control_tx;
  ++stats_.zlb_tx;
  out.push_back(SendControl{std::move(zlb), std::move(wire), false});
}

void TunnelEndpoint::process_ack(std::uint16_t nr, SimTime now, Actions& out) {
  bool removed = false;
  while (!outstanding_.empty() && seq_diff(*outstanding_.front().message.header.ns, nr) < 0) {
    if (outstanding_.front().message.type == MessageType::HELLO) hello_outstanding_ = false;
    outstanding_.pop_front();
    removed = true;
  }
  if (!removed) return;
  if (outstanding_.empty()) {
    rtx_deadline_ = kNever;
    rtx_timeouts_ = 0;
  } else {
    arm_retransmit(now, out);
  }
  if (cc_state_ == CcState::Stopping && outstanding_.empty() && pending_.empty()) {
    cc_state_ = CcState::Dead;
    return;
  }
  flush_window(now, out);
}

Actions TunnelEndpoint::handle_control(const ControlMessage& msg, SimTime now) {
  Actions out;
  ++stats_.control_rx;
  last_rx_ = now;
  process_ack(msg.header.nr.value_or(0), now, out);

  if (msg.type != MessageType::ZLB) {
    const int diff = seq_diff(msg.header.ns.value_or(0), expected_nr_);
    if (diff < 0) {
      send_zlb(out);  // duplicate: our earlier acknowledgment was lost
    } else if (diff == 0) {
      ++expected_nr_;
      if (cc_state_ != CcState::Dead) dispatch(msg, now, out);
      if (!has_control_send(out)) send_zlb(out);
    }
    // diff > 0: out of order, dropped; the peer retransmits.
  }
  arm_hello(out);
  return out;
}

Actions TunnelEndpoint::handle_decode_error(const Error& err, SimTime now) {
  Actions out;
  if (is_down() || cc_state_ == CcState::Idle) return out;
  last_rx_ = now;
  std::optional<std::pair<std::uint16_t, std::uint16_t>> code;
  auto reason = DownReason::MalformedMessage;
  if (err.code() == Errc::UnknownMessageType) reason = DownReason::ProtocolViolation;
  if (err.code() == Errc::MandatoryUnknownAvp) {
    code = {l2tp::result::kGeneralError, l2tp::error_code::kUnknownMandatoryAvp};
  }
  if (err.code() == Errc::BadVersion) code = {l2tp::result::kBadProtocolVersion, 0};
  fail(reason, std::string(err.what()), now, out, code);
  return out;
}

void TunnelEndpoint::dispatch(const ControlMessage& msg, SimTime now, Actions& out) {
  if (cc_state_ == CcState::Stopping) {
    if (msg.type == MessageType::StopCCN) on_stopccn(msg, now, out);
    return;
  }
  const bool sc = role_ == Role::SC;
  const bool up = cc_state_ == CcState::Established;
  auto violation = [&] {
    fail(DownReason::ProtocolViolation,
         std::string(l2tp::to_string(msg.type)) + " not permitted in " +
             std::string(to_string(cc_state_)) + " on " + std::string(to_string(role_)),
         now, out);
  };
  switch (msg.type) {
    case MessageType::SCCRQ:
      return sc && cc_state_ == CcState::Idle ? on_sccrq(msg, now, out) : violation();
    case MessageType::SCCRP:
      return !sc && cc_state_ == CcState::WaitCtlReply ? on_sccrp(msg, now, out) : violation();
    case MessageType::SCCCN:
      return sc && cc_state_ == CcState::WaitCtlConn ? on_scccn(msg, now, out) : violation();
    case MessageType::StopCCN:
      return on_stopccn(msg, now, out);
    case MessageType::HELLO:
      return cc_state_ == CcState::Idle ? violation() : void();
    case MessageType::ICRQ:
      return sc && up ? on_icrq(msg, now, out) : violation();
    case MessageType::ICRP:
      return !sc && up && session_state_ == SessionState::WaitReply ? on_icrp(msg, now, out)
                                                                     : violation();
    case MessageType::ICCN:
      return sc && up && session_state_ == SessionState::WaitConnect ? on_iccn(msg, now, out)
                                                                     : violation();
    case MessageType::CDN:
      return up ? on_cdn(msg, now, out) : violation();
    case MessageType::OCRQ:
    case MessageType::OCRP:
    case MessageType::OCCN:
    case MessageType::WEN:
    case MessageType::SLI:
    case MessageType::ZLB:
      return violation();
  }
}

bool TunnelEndpoint::check_required(const ControlMessage& msg, SimTime now, Actions& out) {
  for (auto type : l2tp::required_avps(msg.type)) {
    if (!msg.find(type)) {
      fail(DownReason::ProtocolViolation,
           std::string(l2tp::to_string(msg.type)) + " lacks " +
               l2tp::avp_name(0, static_cast<std::uint16_t>(type)),
           now, out);
      return false;
    }
  }
  return true;
}

void TunnelEndpoint::note_peer_window(const ControlMessage& msg) {
  if (auto* rws = msg.find(AvpType::ReceiveWindowSize)) {
    peer_window_ = std::max<std::uint16_t>(1, rws->as_u16());
  }
}

bool TunnelEndpoint::verify_challenge_response(const ControlMessage& msg, SimTime now, Actions& out) {
  if (sent_challenge_.empty()) return true;
  auto* resp = msg.find(AvpType::ChallengeResponse);
  if (!resp || resp->value != compute_response(*config_.secret, sent_challenge_, msg.type)) {
    fail(DownReason::AuthFailure,
         resp ? "challenge response mismatch" : "missing challenge response", now, out);
    return false;
  }
  return true;
}

void TunnelEndpoint::on_sccrq(const ControlMessage& msg, SimTime now, Actions& out) {
  // The SCCRP needs the peer's tunnel id even to refuse.
  if (auto* id = msg.find(AvpType::AssignedTunnelId)) remote_tunnel_id_ = id->as_u16();
  if (!check_required(msg, now, out)) return;
  if (msg.find(AvpType::ProtocolVersion)->as_u16() != kProtocolVersion) {
    fail(DownReason::ProtocolViolation, "unsupported protocol version", now, out,
         std::pair<std::uint16_t, std::uint16_t>{l2tp::result::kBadProtocolVersion, 0});
    return;
  }
  peer_host_name_ = msg.find(AvpType::HostName)->as_text();
  note_peer_window(msg);

  std::vector<Avp> avps{
      Avp::u16(AvpType::ProtocolVersion, kProtocolVersion),
      Avp::u32(AvpType::FramingCapabilities, l2tp::kFramingSync | l2tp::kFramingAsync),
      Avp::text(AvpType::HostName, config_.host_name),
      Avp::u16(AvpType::AssignedTunnelId, local_tunnel_id_),
  };
  if (config_.receive_window) {
    avps.push_back(Avp::u16(AvpType::ReceiveWindowSize, *config_.receive_window));
  }
  if (auto* challenge = msg.find(AvpType::Challenge)) {
    if (!config_.secret) {
      fail(DownReason::AuthFailure, "challenged without a configured secret", now, out);
      return;
    }
    avps.push_back(Avp::raw(AvpType::ChallengeResponse,
                            compute_response(*config_.secret, challenge->value, MessageType::SCCRP)));
  }
  if (config_.secret) {
    sent_challenge_ = new_challenge();
    avps.push_back(Avp::raw(AvpType::Challenge, sent_challenge_));
  }
  if (config_.firmware_revision) {
    avps.push_back(Avp::u16(AvpType::FirmwareRevision, *config_.firmware_revision, false));
  }
  if (!config_.vendor_name.empty()) {
    avps.push_back(Avp::text(AvpType::VendorName, config_.vendor_name, false));
  }
  cc_state_ = CcState::WaitCtlConn;
  queue_control(ControlMessage::make(MessageType::SCCRP, remote_tunnel_id_, 0, std::move(avps)), now, out);
}

void TunnelEndpoint::on_sccrp(const ControlMessage& msg, SimTime now, Actions& out) {
  if (auto* id = msg.find(AvpType::AssignedTunnelId)) remote_tunnel_id_ = id->as_u16();
  if (!check_required(msg, now, out)) return;
  if (!verify_challenge_response(msg, now, out)) return;
  peer_host_name_ = msg.find(AvpType::HostName)->as_text();
  note_peer_window(msg);

  std::vector<Avp> scccn;
  if (auto* challenge = msg.find(AvpType::Challenge)) {
    if (!config_.secret) {
      fail(DownReason::AuthFailure, "challenged without a configured secret", now, out);
      return;
    }
    scccn.push_back(Avp::raw(AvpType::ChallengeResponse,
                             compute_response(*config_.secret, challenge->value, MessageType::SCCCN)));
  }
  cc_state_ = CcState::Established;
  queue_control(ControlMessage::make(MessageType::SCCCN, remote_tunnel_id_, 0, std::move(scccn)), now, out);

  local_session_id_ = draw_id();
  call_serial_ = 1;
  session_state_ = SessionState::WaitReply;
  queue_control(ControlMessage::make(MessageType::ICRQ, remote_tunnel_id_, 0,
                                     {Avp::u16(AvpType::AssignedSessionId, local_session_id_),
                                      Avp::u32(AvpType::CallSerialNumber, call_serial_)}),
                now, out);
}

void TunnelEndpoint::on_scccn(const ControlMessage& msg, SimTime now, Actions& out) {
  if (!verify_challenge_response(msg, now, out)) return;
  cc_state_ = CcState::Established;
}

void TunnelEndpoint::on_icrq(const ControlMessage& msg, SimTime now, Actions& out) {
  if (!check_required(msg, now, out)) return;
  const auto peer_session = msg.find(AvpType::AssignedSessionId)->as_u16();
  if (session_state_ != SessionState::None) {
    // One session per softwire: refuse the extra call, keep the tunnel.
    queue_control(ControlMessage::make(
                      MessageType::CDN, remote_tunnel_id_, peer_session,
                      {Avp::u32(AvpType::ResultCode,
                                (std::uint32_t{l2tp::result::kGeneralError} << 16) |
                                    l2tp::error_code::kInsufficientResources),
                       Avp::u16(AvpType::AssignedSessionId, 0)}),
                  now, out);
    return;
  }
  remote_session_id_ = peer_session;
  local_session_id_ = draw_id();
  session_state_ = SessionState::WaitConnect;
  queue_control(ControlMessage::make(MessageType::ICRP, remote_tunnel_id_, remote_session_id_,
                                     {Avp::u16(AvpType::AssignedSessionId, local_session_id_)}),
                now, out);
}

void TunnelEndpoint::on_icrp(const ControlMessage& msg, SimTime now, Actions& out) {
  if (!check_required(msg, now, out)) return;
  remote_session_id_ = msg.find(AvpType::AssignedSessionId)->as_u16();
  session_state_ = SessionState::Established;
  queue_control(ControlMessage::make(MessageType::ICCN, remote_tunnel_id_, remote_session_id_,
                                     {Avp::u32(AvpType::TxConnectSpeed, 0),
                                      Avp::u32(AvpType::FramingType, l2tp::kFramingSync)}),
                now, out);
  out.push_back(SessionUp{});
}

void TunnelEndpoint::on_iccn(const ControlMessage& msg, SimTime now, Actions& out) {
  // Connect speed and framing type are informational on a softwire.
  if (!check_required(msg, now, out)) return;
  session_state_ = SessionState::Established;
  out.push_back(SessionUp{});
}

void TunnelEndpoint::on_stopccn(const ControlMessage& msg, SimTime, Actions& out) {
  std::string detail = "peer sent StopCCN";
  if (auto* rc = msg.find(AvpType::ResultCode); rc && rc->value.size() >= 2) {
    detail += " result " + std::to_string((rc->value[0] << 8) | rc->value[1]);
  }
  go_dead(DownReason::PeerStop, std::move(detail), out);
}

void TunnelEndpoint::on_cdn(const ControlMessage&, SimTime now, Actions& out) {
  session_state_ = SessionState::None;
  fail(DownReason::SessionClosed, "peer disconnected the session", now, out);
}

void TunnelEndpoint::fail(DownReason reason, std::string detail, SimTime now, Actions& out,
                          std::optional<std::pair<std::uint16_t, std::uint16_t>> code) {
  if (is_down()) return;
  if (reason == DownReason::DeadPeer || reason == DownReason::PeerStop) {
    go_dead(reason, std::move(detail), out);
    return;
  }
  if (remote_tunnel_id_ == 0) {
    // Nothing addressable on the peer yet.
    go_dead(reason, std::move(detail), out);
    return;
  }
  auto [result, error] = code.value_or(result_code_for(reason));
  ByteWriter rc;
  rc.u16(result);
  rc.u16(error);
  rc.str(detail.substr(0, 64));
  pending_.clear();
  session_state_ = SessionState::None;
  cc_state_ = CcState::Stopping;
  hello_deadline_ = kNever;
  down_reason_ = reason;
  out.push_back(TunnelDown{reason, detail});
  queue_control(ControlMessage::make(MessageType::StopCCN, remote_tunnel_id_, 0,
                                     {Avp::u16(AvpType::AssignedTunnelId, local_tunnel_id_),
                                      Avp::raw(AvpType::ResultCode, rc.take())}),
                now, out);
}

void TunnelEndpoint::go_dead(DownReason reason, std::string detail, Actions& out) {
  const bool first = !down_reason_.has_value();
  cc_state_ = CcState::Dead;
  session_state_ = SessionState::None;
  pending_.clear();
  outstanding_.clear();
  rtx_deadline_ = kNever;
  hello_deadline_ = kNever;
  hello_outstanding_ = false;
  if (first) {
    down_reason_ = reason;
    out.push_back(TunnelDown{reason, std::move(detail)});
  }
}

Actions TunnelEndpoint::teardown(DownReason reason, SimTime now) {
  Actions out;
  if (cc_state_ == CcState::Idle || is_down()) return out;
  fail(reason, std::string(to_string(reason)), now, out);
  return out;
}

Actions TunnelEndpoint::send_hello(SimTime now) {
  Actions out;
  if (cc_state_ != CcState::Established) return out;
  hello_outstanding_ = true;
  hello_deadline_ = kNever;
  queue_control(ControlMessage::make(MessageType::HELLO, remote_tunnel_id_, 0), now, out);
  return out;
}

Actions TunnelEndpoint::on_timer(SimTime now) {
  Actions out;
  if (!outstanding_.empty() && rtx_deadline_ <= now) {
    ++rtx_timeouts_;
    if (rtx_timeouts_ >= config_.keepalive.max_retransmits) {
      go_dead(DownReason::DeadPeer,
              "no acknowledgment after " + std::to_string(rtx_timeouts_) + " timeouts", out);
      return out;
    }
    transmit(outstanding_.front().message, true, out);
    auto backoff = config_.keepalive.retransmit_base * (std::int64_t{1} << std::min(rtx_timeouts_, 30));
    rtx_deadline_ = now + std::min(backoff, config_.keepalive.retransmit_max);
    out.push_back(StartTimer{TimerKind::Retransmit, rtx_deadline_});
  }
  if (hello_deadline_ <= now && cc_state_ == CcState::Established) {
    auto hello = send_hello(now);
    out.insert(out.end(), hello.begin(), hello.end());
  }
  return out;
}

std::optional<SimTime> TunnelEndpoint::next_deadline() const {
  SimTime t = hello_deadline_;
  if (!outstanding_.empty()) t = std::min(t, rtx_deadline_);
  if (t == kNever) return std::nullopt;
  return t;
}

namespace {

Bytes wrap_data(std::uint16_t tunnel_id, std::uint16_t session_id, const ppp::Frame& frame) {
  l2tp::Header h;
  h.has_length = true;
  h.tunnel_id = tunnel_id;
  h.session_id = session_id;
  auto body = ppp::encode_frame(frame);
  h.length = static_cast<std::uint16_t>(h.wire_size() + body.size());
  ByteWriter w;
  l2tp::encode_header(h, w);
  w.bytes(body);
  return w.take();
}

}  // namespace

Bytes TunnelEndpoint::encapsulate(ByteView ip_packet, Af af, SimTime) {
  if (session_state_ != SessionState::Established || is_down()) {
    throw Error(Errc::SessionNotUp, "session is " + std::string(to_string(session_state_)));
  }
  if (af != config_.payload_af || ip_version(ip_packet) != af) {
    ++stats_.wrong_af_rejected;
    throw Error(Errc::WrongAddressFamily,
                std::string(to_string(af)) + " payload on a " +
                    std::string(to_string(config_.payload_af)) + " softwire");
  }
  if (ip_packet.size() > ppp_mtu_) {
    throw Error(Errc::PacketTooBig,
                std::to_string(ip_packet.size()) + " > PPP MTU " + std::to_string(ppp_mtu_));
  }
  ppp::Frame frame{af == Af::V4 ? ppp::proto::kIpv4 : ppp::proto::kIpv6,
                   Bytes(ip_packet.begin(), ip_packet.end())};
  auto wire = wrap_data(remote_tunnel_id_, remote_session_id_, frame);
  auto& c = stats_.af(af);
  ++c.packets_out;
  c.octets_out += ip_packet.size();
  ++stats_.data_tx;
  return wire;
}

Bytes TunnelEndpoint::encapsulate_frame(const ppp::Frame& frame, SimTime now) {
  if (frame.protocol == ppp::proto::kIpv4) return encapsulate(frame.payload, Af::V4, now);
  if (frame.protocol == ppp::proto::kIpv6) return encapsulate(frame.payload, Af::V6, now);
  if (session_state_ != SessionState::Established || is_down()) {
    throw Error(Errc::SessionNotUp, "session is " + std::string(to_string(session_state_)));
  }
  ++stats_.data_tx;
  return wrap_data(remote_tunnel_id_, remote_session_id_, frame);
}

ppp::Frame TunnelEndpoint::decapsulate(ByteView datagram, SimTime now) {
  auto [h, size] = l2tp::decode_header(datagram);
  if (h.is_control) throw Error(Errc::InvalidHeader, "control message on the data path");
  if (h.tunnel_id != local_tunnel_id_ || h.session_id != local_session_id_) {
    throw Error(Errc::ProtocolViolation, "data for unknown tunnel/session");
  }
  if (session_state_ != SessionState::Established || is_down()) {
    throw Error(Errc::SessionNotUp, "data before session establishment");
  }
  auto end = datagram.size();
  if (h.length) {
    if (*h.length > datagram.size() || *h.length < size) throw Error(Errc::Truncated, "data length");
    end = *h.length;
  }
  auto frame = ppp::decode_frame(datagram.subspan(size, end - size));
  last_rx_ = now;
  Actions ignored;
  arm_hello(ignored);
  ++stats_.data_rx;
  if (frame.protocol == ppp::proto::kIpv4 || frame.protocol == ppp::proto::kIpv6) {
    const Af af = frame.protocol == ppp::proto::kIpv4 ? Af::V4 : Af::V6;
    if (af != config_.payload_af) {
      ++stats_.wrong_af_rejected;
      throw Error(Errc::WrongAddressFamily, "received " + std::string(to_string(af)) + " payload");
    }
    auto& c = stats_.af(af);
    ++c.packets_in;
    c.octets_in += frame.payload.size();
  }
  return frame;
}

}  // namespace swforge::tunnel
