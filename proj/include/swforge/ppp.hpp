#pragma once

// PPP link over an L2TP session: LCP, optional CHAP-MD5, exactly one NCP
// (IPV6CP for an IPv6 softwire, IPCP for IPv4) and LCP echo keepalive.
//
// Like the tunnel endpoint this performs no I/O; every step returns the
// frames to send and the link events that occurred.

#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "swforge/clock.hpp"
#include "swforge/error.hpp"
#include "swforge/inet.hpp"
#include "swforge/ppp_frame.hpp"
#include "swforge/tunnel.hpp"

namespace swforge::ppp {

using namespace std::chrono_literals;
using tunnel::Role;

enum class Phase : std::uint8_t { Dead, LcpNegotiating, Authenticating, NcpNegotiating, Up };
enum class Ncp : std::uint8_t { Ipv6cp, Ipcp };

std::string_view to_string(Phase p) noexcept;
std::string_view to_string(Ncp n) noexcept;

inline constexpr std::size_t kMinPppMtu = 68;
inline constexpr std::size_t kMinLinkMtu = 576;

/// Largest IP packet that fits the softwire when the transport link carries
/// `link_mtu`: transport IP header, UDP, L2TP data header with length field
/// and PPP overhead (4 bytes, 2 with ACFC) are subtracted.
std::size_t compute_ppp_mtu(std::size_t link_mtu, Af transport_af, bool acfc_accepted);

namespace lcp_opt {
inline constexpr std::uint8_t kMru = 1;
inline constexpr std::uint8_t kAuthProtocol = 3;
inline constexpr std::uint8_t kMagic = 5;
inline constexpr std::uint8_t kAcfc = 8;
}  // namespace lcp_opt

namespace ipcp_opt {
inline constexpr std::uint8_t kAddress = 3;
inline constexpr std::uint8_t kPrimaryDns = 129;
inline constexpr std::uint8_t kSecondaryDns = 131;
}  // namespace ipcp_opt

namespace ipv6cp_opt {
inline constexpr std::uint8_t kInterfaceId = 1;
}  // namespace ipv6cp_opt

inline constexpr std::uint8_t kChapMd5 = 5;

/// What the SC asks its AAA backend once the peer has identified itself.
struct AuthRequest {
  std::string name;
  struct Chap {
    std::uint8_t id = 0;
    Bytes challenge;
    Bytes response;
  };
  std::optional<Chap> chap;  // absent when authentication is disabled
};

struct AuthDecision {
  bool accept = false;
  std::string message;
  std::optional<Ipv4Addr> ipv4;     // Framed-IP-Address
  std::optional<std::uint64_t> iid; // Framed-Interface-Id
};

using Authorizer = std::function<AuthDecision(const AuthRequest&)>;
/// Next free IPv4 address for IPCP when AAA assigns none; nullopt when exhausted.
using Ipv4Allocator = std::function<std::optional<Ipv4Addr>()>;

struct PppConfig {
  Af payload_af = Af::V6;
  Af transport_af = Af::V4;
  std::size_t link_mtu = 1500;
  bool request_acfc = false;
  bool accept_acfc = true;  // false: Configure-Reject a peer's ACFC
  int max_configure = 10;
  Duration restart_interval = 3s;
  std::uint64_t seed = 1;

  // SC side
  bool require_chap = false;
  std::string host_name = "sc";
  std::string peer_hint;  // identity used for authorization when CHAP is off
  Authorizer authorize;
  Ipv4Allocator allocate_ipv4;
  std::vector<Ipv4Addr> dns_servers;  // served via IPCP
  std::optional<Ipv4Addr> local_ipv4;

  // SI side
  std::string user_name;
  std::optional<std::string> secret;
  bool request_dns = false;

  std::optional<std::uint64_t> iid;  // random nonzero when absent
  /// Never adopt a Nak'd interface-id. The SC always behaves this way.
  bool iid_fixed = false;

  bool echo_enabled = false;
  Duration echo_interval = 30s;
  int echo_max_missed = 3;
};

struct PhaseChanged {
  Phase phase;
};
struct LinkUp {};
struct LinkFailed {
  Errc code;
  std::string detail;
};
using Event = std::variant<PhaseChanged, LinkUp, LinkFailed>;

struct Output {
  std::vector<Frame> frames;
  std::vector<Event> events;

  void append(Output&& other);
  bool failed() const;
};

class ControlProtocol;

class PppLink {
 public:
  PppLink(Role role, PppConfig config);
  ~PppLink();
  PppLink(PppLink&&) noexcept;
  PppLink& operator=(PppLink&&) noexcept;

  /// The L2TP session came up: start LCP.
  Output open(SimTime now);
  Output receive(const Frame& frame, SimTime now);
  Output on_timer(SimTime now);
  std::optional<SimTime> next_deadline() const;
  /// Stops all activity without emitting frames (the tunnel is going away).
  void shutdown();

  Role role() const { return role_; }
  Phase phase() const { return phase_; }
  Ncp ncp() const { return config_.payload_af == Af::V6 ? Ncp::Ipv6cp : Ncp::Ipcp; }
  std::size_t mtu() const;
  bool acfc_accepted() const { return acfc_local_ || acfc_peer_; }
  std::optional<std::uint16_t> peer_mru() const { return peer_mru_; }
  std::uint32_t magic() const { return magic_; }
  bool chap_selected() const { return chap_selected_; }
  std::uint64_t local_iid() const { return local_iid_; }
  std::optional<std::uint64_t> remote_iid() const { return remote_iid_; }
  /// SI: the address obtained through IPCP. SC: its own address, if any.
  std::optional<Ipv4Addr> local_ipv4() const { return local_ipv4_; }
  /// SC: the address assigned to the SI.
  std::optional<Ipv4Addr> peer_ipv4() const { return peer_ipv4_; }
  const std::vector<Ipv4Addr>& dns() const { return dns_; }
  const std::optional<AuthDecision>& authorization() const { return authorization_; }
  std::string peer_name() const { return peer_name_; }
  const PppConfig& config() const { return config_; }
  int configure_requests_sent() const;

 private:
  friend class ControlProtocol;
  friend class LcpPolicy;
  friend class IpcpPolicy;
  friend class Ipv6cpPolicy;

  void set_phase(Phase p, Output& out);
  void fail(Errc code, std::string detail, Output& out);
  void on_lcp_opened(SimTime now, Output& out);
  void start_ncp(SimTime now, Output& out);
  void on_ncp_opened(SimTime now, Output& out);
  void receive_chap(const CpPacket& p, SimTime now, Output& out);
  void send_challenge(SimTime now, Output& out);
  bool run_authorization(const AuthRequest& req, Output& out);
  void receive_echo(const CpPacket& p, SimTime now, Output& out);
  void protocol_reject(const Frame& frame, Output& out);
  std::uint8_t next_id() { return ++id_counter_; }

  Role role_;
  PppConfig config_;
  std::mt19937_64 rng_;
  Phase phase_ = Phase::Dead;
  std::uint8_t id_counter_ = 0;

  std::unique_ptr<ControlProtocol> lcp_;
  std::unique_ptr<ControlProtocol> ncp_;

  std::uint32_t magic_ = 0;
  std::optional<std::uint16_t> peer_mru_;
  bool acfc_local_ = false;  // our ACFC request was acked
  bool acfc_peer_ = false;   // we acked the peer's ACFC
  bool chap_selected_ = false;

  // CHAP
  Bytes chap_challenge_;
  std::uint8_t chap_id_ = 0;
  SimTime chap_deadline_ = kNever;
  int chap_sent_ = 0;
  std::string peer_name_;
  std::optional<AuthDecision> authorization_;

  // NCP results
  std::uint64_t local_iid_ = 0;
  std::optional<std::uint64_t> remote_iid_;
  std::optional<Ipv4Addr> local_ipv4_;
  std::optional<Ipv4Addr> peer_ipv4_;
  std::vector<Ipv4Addr> dns_;

  // Echo
  SimTime echo_deadline_ = kNever;
  int echo_missed_ = 0;
};

}  // namespace swforge::ppp
