#pragma once

// L2TPv2 control connection endpoint for the softwire profile: one control
// channel, exactly one incoming-call session, reliable delivery with
// Ns/Nr, optional tunnel authentication, HELLO keepalive and the data-plane
// encapsulation of PPP frames.
//
// The endpoint performs no I/O. Every entry point returns inert Actions that
// the host executes (send bytes, arm timers, report session state).

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "swforge/clock.hpp"
#include "swforge/inet.hpp"
#include "swforge/l2tp.hpp"
#include "swforge/ppp_frame.hpp"

namespace swforge::tunnel {

using namespace std::chrono_literals;

enum class Role : std::uint8_t { SI, SC };
enum class CcState : std::uint8_t { Idle, WaitCtlReply, WaitCtlConn, Established, Stopping, Dead };
enum class SessionState : std::uint8_t { None, WaitReply, WaitConnect, Established };

std::string_view to_string(Role r) noexcept;
std::string_view to_string(CcState s) noexcept;
std::string_view to_string(SessionState s) noexcept;

struct KeepaliveConfig {
  Duration hello_interval = 60s;  // zero disables HELLO
  Duration retransmit_base = 1s;
  Duration retransmit_max = 8s;
  /// Unacknowledged timeouts of one message after which the peer is dead.
  /// Timeout k (1-based) waits min(base * 2^(k-1), max).
  int max_retransmits = 5;
  bool lcp_echo_enabled = false;
  Duration lcp_echo_interval = 30s;

  /// Throws InvalidConfig when the LCP echo interval lies outside
  /// [10 s, min(hello_interval, 60 s)] while echo is enabled.
  void validate() const;
  /// Longest permitted LCP echo interval for this HELLO configuration.
  Duration max_echo_interval() const;
};

inline constexpr Duration kMinEchoInterval = 10s;
inline constexpr Duration kMaxEchoInterval = 60s;

struct TunnelConfig {
  std::string host_name = "lcce";
  std::string vendor_name;                      // empty: AVP omitted
  std::optional<std::uint16_t> firmware_revision;
  std::optional<std::uint16_t> receive_window;  // advertised only when set
  std::optional<std::string> secret;            // tunnel authentication
  KeepaliveConfig keepalive;
  std::uint64_t seed = 1;
  std::uint16_t local_tunnel_id = 0;            // 0: drawn from the seeded RNG
  Af payload_af = Af::V6;
};

struct AfCounters {
  std::uint64_t packets_in = 0;
  std::uint64_t packets_out = 0;
  std::uint64_t octets_in = 0;
  std::uint64_t octets_out = 0;

  bool operator==(const AfCounters&) const = default;
};

struct Stats {
  std::uint64_t control_tx = 0;
  std::uint64_t control_rx = 0;
  std::uint64_t retransmits = 0;
  std::uint64_t zlb_tx = 0;
  std::uint64_t data_tx = 0;  // every data datagram, PPP control included
  std::uint64_t data_rx = 0;
  std::uint64_t wrong_af_rejected = 0;
  AfCounters v4;  // IP payload only
  AfCounters v6;

  const AfCounters& af(Af a) const { return a == Af::V4 ? v4 : v6; }
  AfCounters& af(Af a) { return a == Af::V4 ? v4 : v6; }
};

enum class DownReason : std::uint8_t {
  Admin,
  DeadPeer,
  PeerStop,
  ProtocolViolation,
  AuthFailure,
  MalformedMessage,
  PppFailure,
  PppAuthFailed,
  SessionClosed,
};

std::string_view to_string(DownReason r) noexcept;

enum class TimerKind : std::uint8_t { Retransmit, Hello };

struct SendControl {
  l2tp::ControlMessage message;
  Bytes wire;
  bool retransmission = false;
};
struct SendData {
  Bytes wire;
};
struct StartTimer {
  TimerKind kind;
  SimTime deadline;
};
struct SessionUp {};
struct TunnelDown {
  DownReason reason;
  std::string detail;
};
struct DeliverPayload {
  ppp::Frame frame;
};

using Action = std::variant<SendControl, SendData, StartTimer, SessionUp, TunnelDown, DeliverPayload>;
using Actions = std::vector<Action>;

/// MD5(message_type || secret || challenge) as used by the Challenge Response AVP.
Bytes compute_response(std::string_view secret, ByteView challenge, l2tp::MessageType response_carrier);

/// StopCCN Result Code value (result, error) for a teardown reason.
std::pair<std::uint16_t, std::uint16_t> result_code_for(DownReason r) noexcept;

class TunnelEndpoint {
 public:
  TunnelEndpoint(Role role, TunnelConfig config);

  /// SI only: emits SCCRQ and moves to WaitCtlReply.
  Actions si_start(SimTime now);
  Actions handle_control(const l2tp::ControlMessage& msg, SimTime now);
  /// A control datagram failed to decode; the peer is misbehaving.
  Actions handle_decode_error(const Error& err, SimTime now);
  Actions on_timer(SimTime now);
  Actions teardown(DownReason reason, SimTime now);
  /// Queues a HELLO immediately regardless of the idle timer.
  Actions send_hello(SimTime now);

  /// Wraps an IP packet as PPP/L2TP data. Throws SessionNotUp,
  /// WrongAddressFamily or PacketTooBig.
  Bytes encapsulate(ByteView ip_packet, Af af, SimTime now);
  /// Wraps a PPP control frame (LCP, CHAP, NCP) for the session.
  Bytes encapsulate_frame(const ppp::Frame& frame, SimTime now);
  /// Unwraps a data datagram. IP payloads of the wrong family throw
  /// WrongAddressFamily and are counted.
  ppp::Frame decapsulate(ByteView datagram, SimTime now);

  std::optional<SimTime> next_deadline() const;

  void set_ppp_mtu(std::size_t mtu) { ppp_mtu_ = mtu; }
  std::size_t ppp_mtu() const { return ppp_mtu_; }

  Role role() const { return role_; }
  CcState cc_state() const { return cc_state_; }
  SessionState session_state() const { return session_state_; }
  std::uint16_t local_tunnel_id() const { return local_tunnel_id_; }
  std::uint16_t remote_tunnel_id() const { return remote_tunnel_id_; }
  std::uint16_t local_session_id() const { return local_session_id_; }
  std::uint16_t remote_session_id() const { return remote_session_id_; }
  std::uint16_t next_ns() const { return next_ns_; }
  std::uint16_t expected_nr() const { return expected_nr_; }
  std::uint16_t peer_window() const { return peer_window_; }
  std::size_t outstanding() const { return outstanding_.size() + pending_.size(); }
  std::string peer_host_name() const { return peer_host_name_; }
  SimTime last_rx() const { return last_rx_; }
  const Stats& stats() const { return stats_; }
  const TunnelConfig& config() const { return config_; }
  Af payload_af() const { return config_.payload_af; }
  bool is_down() const { return cc_state_ == CcState::Stopping || cc_state_ == CcState::Dead; }

 private:
  struct Outstanding {
    l2tp::ControlMessage message;
  };

  void queue_control(l2tp::ControlMessage msg, SimTime now, Actions& out);
  void flush_window(SimTime now, Actions& out);
  void transmit(l2tp::ControlMessage& msg, bool retransmission, Actions& out);
  void process_ack(std::uint16_t nr, SimTime now, Actions& out);
  void arm_retransmit(SimTime now, Actions& out);
  void arm_hello(Actions& out);
  void send_zlb(Actions& out);
  void fail(DownReason reason, std::string detail, SimTime now, Actions& out,
            std::optional<std::pair<std::uint16_t, std::uint16_t>> code = {});
  void go_dead(DownReason reason, std::string detail, Actions& out);
  void dispatch(const l2tp::ControlMessage& msg, SimTime now, Actions& out);

  void on_sccrq(const l2tp::ControlMessage& msg, SimTime now, Actions& out);
  void on_sccrp(const l2tp::ControlMessage& msg, SimTime now, Actions& out);
  void on_scccn(const l2tp::ControlMessage& msg, SimTime now, Actions& out);
  void on_icrq(const l2tp::ControlMessage& msg, SimTime now, Actions& out);
  void on_icrp(const l2tp::ControlMessage& msg, SimTime now, Actions& out);
  void on_iccn(const l2tp::ControlMessage& msg, SimTime now, Actions& out);
  void on_stopccn(const l2tp::ControlMessage& msg, SimTime now, Actions& out);
  void on_cdn(const l2tp::ControlMessage& msg, SimTime now, Actions& out);

  bool check_required(const l2tp::ControlMessage& msg, SimTime now, Actions& out);
  bool verify_challenge_response(const l2tp::ControlMessage& msg, SimTime now, Actions& out);
  void note_peer_window(const l2tp::ControlMessage& msg);
  Bytes new_challenge();
  std::uint16_t draw_id();

  Role role_;
  TunnelConfig config_;
  std::mt19937_64 rng_;

  CcState cc_state_ = CcState::Idle;
  SessionState session_state_ = SessionState::None;
  std::uint16_t local_tunnel_id_ = 0;
  std::uint16_t remote_tunnel_id_ = 0;
  std::uint16_t local_session_id_ = 0;
  std::uint16_t remote_session_id_ = 0;
  std::uint32_t call_serial_ = 0;
  std::string peer_host_name_;

  std::uint16_t next_ns_ = 0;
  std::uint16_t expected_nr_ = 0;
  std::uint16_t peer_window_ = 4;
  std::deque<Outstanding> outstanding_;  // sent, unacknowledged
  std::deque<l2tp::ControlMessage> pending_;  // waiting for window space
  SimTime rtx_deadline_ = kNever;
  int rtx_timeouts_ = 0;

  SimTime last_rx_{0};
  bool hello_outstanding_ = false;
  SimTime hello_deadline_ = kNever;

  Bytes sent_challenge_;            // challenge we issued
  Bytes peer_challenge_;            // challenge we must answer
  std::optional<DownReason> down_reason_;

  std::size_t ppp_mtu_ = 1460;
  Stats stats_;
};

}  // namespace swforge::tunnel
