#pragma once

// In-process AAA: a user directory answering access requests with
// RADIUS-style attribute bundles, the mapping from those attributes to
// provisioning directives, and per-session accounting records.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "swforge/ppp.hpp"
#include "swforge/provisioner.hpp"
#include "swforge/tunnel.hpp"

namespace swforge::aaa {

enum class AttrType : std::uint8_t {
  FramedInterfaceId,
  FramedIpv6Prefix,
  FramedIpv6Pool,
  FramedIpAddress,
  FramedIpNetmask,
  DelegatedIpv6Prefix,
};

std::string_view to_string(AttrType t) noexcept;
/// RADIUS dictionary names, e.g. "Framed-IPv6-Prefix".
AttrType parse_attr_type(std::string_view s);

struct Attribute {
  AttrType type;
  std::variant<std::uint64_t, Prefix6, std::string, Ipv4Addr> value;

  bool operator==(const Attribute&) const = default;
};

/// Builds an attribute from its dictionary name and textual value.
Attribute make_attribute(std::string_view name, const nlohmann::json& value);
nlohmann::json to_json(const Attribute& a);

enum class Verdict : std::uint8_t { Accept, Reject };
std::string_view to_string(Verdict v) noexcept;

struct AccessResult {
  Verdict verdict = Verdict::Reject;
  std::vector<Attribute> attributes;  // empty on Reject
  std::string reason;
};

struct Hint {
  std::string tunnel_type = "L2TP";
  Af tunnel_medium = Af::V4;
};

struct Decision {
  std::string user;
  Verdict verdict;
  std::string reason;
  Hint hint;
};

struct UserProfile {
  std::string user;
  std::string secret;
  std::vector<Attribute> attributes;
};

class UserDirectory {
 public:
  UserDirectory() = default;
  /// {"users": [{"user", "secret", "attributes"}]}; attributes are either an
  /// object of name -> value or an array of {"type", "value"} pairs.
  static UserDirectory from_json(const nlohmann::json& j);
  static UserDirectory load(const std::filesystem::path& file);

  void add(UserProfile profile);
  const UserProfile* find(std::string_view user) const;

  AccessResult access_request(const ppp::AuthRequest& req, const Hint& hint);
  /// PPP authorizer bound to this directory; the last result per user is
  /// kept for apply_attributes.
  ppp::Authorizer authorizer(Hint hint);
  std::optional<AccessResult> last_result(std::string_view user) const;
  const std::vector<Decision>& decision_log() const { return log_; }

 private:
  std::map<std::string, UserProfile, std::less<>> users_;
  std::map<std::string, AccessResult, std::less<>> last_;
  std::vector<Decision> log_;
};

/// Order-independent attribute interpretation. Throws
/// InconsistentAttributes on conflicting duplicates, a netmask without an
/// address, a non-contiguous netmask or a zero interface-id; throws
/// AuthFailed on a Reject.
prov::Directives apply_attributes(const AccessResult& result);

/// What PPP needs from an access result: the verdict, an IPCP address when
/// Framed-IP-Address selects the endpoint, and the IPV6CP interface-id.
ppp::AuthDecision to_auth_decision(const AccessResult& result);

// ---- accounting ---------------------------------------------------------------

enum class AcctKind : std::uint8_t { Start, Stop };
std::string_view to_string(AcctKind k) noexcept;

struct SessionInfo {
  std::string user;
  std::uint16_t local_tunnel_id = 0;
  std::uint16_t remote_tunnel_id = 0;
  std::uint16_t local_session_id = 0;
  std::uint16_t remote_session_id = 0;
  Af tunnel_medium = Af::V4;
  Af payload_af = Af::V6;
};

struct AccountingRecord {
  AcctKind kind = AcctKind::Start;
  SimTime at{};
  SessionInfo session;
  tunnel::AfCounters v4;
  tunnel::AfCounters v6;
  std::optional<double> duration;  // seconds, Stop only
};

nlohmann::json to_json(const AccountingRecord& r);

class Accountant {
 public:
  Accountant() = default;
  /// Appends one JSON line per record.
  explicit Accountant(std::filesystem::path file);

  /// Throws ProtocolViolation when `key` already has an open session.
  AccountingRecord start(std::uint64_t key, SessionInfo session, SimTime now);
  /// Closes the session with the tunnel's counters; nullopt when `key` has
  /// no open session, so a second teardown writes nothing.
  std::optional<AccountingRecord> stop(std::uint64_t key, const tunnel::Stats& stats, SimTime now);
  bool open(std::uint64_t key) const { return open_.contains(key); }
  const std::vector<AccountingRecord>& records() const { return records_; }

 private:
  void write(const AccountingRecord& r);

  std::optional<std::filesystem::path> file_;
  std::map<std::uint64_t, AccountingRecord> open_;
  std::vector<AccountingRecord> records_;
};

}  // namespace swforge::aaa
