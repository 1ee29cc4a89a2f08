#include "swforge/aaa.hpp"

#include <algorithm>
#include <fstream>

#include "swforge/digest.hpp"

namespace swforge::aaa {

using nlohmann::json;

namespace {

constexpr std::pair<AttrType, std::string_view> kNames[] = {
    {AttrType::FramedInterfaceId, "Framed-Interface-Id"},
    {AttrType::FramedIpv6Prefix, "Framed-IPv6-Prefix"},
    {AttrType::FramedIpv6Pool, "Framed-IPv6-Pool"},
    {AttrType::FramedIpAddress, "Framed-IP-Address"},
    {AttrType::FramedIpNetmask, "Framed-IP-Netmask"},
    {AttrType::DelegatedIpv6Prefix, "Delegated-IPv6-Prefix"},
};

// "0x1", "1", or four colon-separated 16-bit hex groups.
std::uint64_t parse_iid(const std::string& s) {
  try {
    if (std::count(s.begin(), s.end(), ':') == 3) {
      std::uint64_t v = 0;
      std::size_t pos = 0;
      for (int i = 0; i < 4; ++i) {
        std::size_t end = s.find(':', pos);
        std::string group = s.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
        if (group.empty() || group.size() > 4) throw std::invalid_argument(s);
        std::size_t used = 0;
        auto g = std::stoul(group, &used, 16);
        if (used != group.size()) throw std::invalid_argument(s);
        v = (v << 16) | g;
        pos = end + 1;
      }
      return v;
    }
    std::size_t used = 0;
    auto v = std::stoull(s, &used, 0);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    throw Error(Errc::ParseError, "bad interface-id '" + s + "'");
  }
}

std::string iid_text(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%04x:%04x:%04x:%04x", unsigned(v >> 48), unsigned(v >> 32 & 0xffff),
                unsigned(v >> 16 & 0xffff), unsigned(v & 0xffff));
  return buf;
}

}  // namespace

std::string_view to_string(AttrType t) noexcept {
  for (auto& [type, name] : kNames)
    if (type == t) return name;
  return "?";
}

AttrType parse_attr_type(std::string_view s) {
  for (auto& [type, name] : kNames)
    if (name == s) return type;
  throw Error(Errc::ParseError, "unknown attribute '" + std::string(s) + "'");
}

Attribute make_attribute(std::string_view name, const json& value) {
  AttrType t = parse_attr_type(name);
  try {
    switch (t) {
      case AttrType::FramedInterfaceId:
        if (value.is_number_integer() && value.get<std::int64_t>() >= 0)
          return {t, value.get<std::uint64_t>()};
        return {t, parse_iid(value.get<std::string>())};
      case AttrType::FramedIpv6Prefix:
      case AttrType::DelegatedIpv6Prefix:
        return {t, parse_prefix6(value.get<std::string>())};
      case AttrType::FramedIpv6Pool:
        return {t, value.get<std::string>()};
      case AttrType::FramedIpAddress:
      case AttrType::FramedIpNetmask:
        return {t, Ipv4Addr::parse(value.get<std::string>())};
    }
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string(name) + ": " + e.what());
  }
  throw Error(Errc::ParseError, std::string(name));
}

json to_json(const Attribute& a) {
  json v = std::visit(
      [](const auto& x) -> json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::uint64_t>)
          return iid_text(x);
        else if constexpr (std::is_same_v<T, Prefix6>)
          return to_string(x);
        else if constexpr (std::is_same_v<T, Ipv4Addr>)
          return x.str();
        else
          return x;
      },
      a.value);
  return {{"type", to_string(a.type)}, {"value", v}};
}

std::string_view to_string(Verdict v) noexcept {
  return v == Verdict::Accept ? "Accept" : "Reject";
}

// ---- directory -------------------------------------------------------------------

UserDirectory UserDirectory::from_json(const json& j) {
  UserDirectory dir;
  try {
    for (const auto& u : j.at("users")) {
      UserProfile p;
      p.user = u.at("user").get<std::string>();
      p.secret = u.value("secret", "");
      if (auto it = u.find("attributes"); it != u.end()) {
        if (it->is_object()) {
          for (auto& [name, value] : it->items()) p.attributes.push_back(make_attribute(name, value));
        } else {
          for (const auto& a : *it)
            p.attributes.push_back(make_attribute(a.at("type").get<std::string>(), a.at("value")));
        }
      }
      dir.add(std::move(p));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("user directory: ") + e.what());
  }
  return dir;
}

UserDirectory UserDirectory::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::InvalidConfig, "cannot read " + file.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(Errc::ParseError, file.string() + ": " + e.what());
  }
}

void UserDirectory::add(UserProfile profile) {
  std::string key = profile.user;
  users_[key] = std::move(profile);
}

const UserProfile* UserDirectory::find(std::string_view user) const {
  auto it = users_.find(user);
  return it == users_.end() ? nullptr : &it->second;
}

AccessResult UserDirectory::access_request(const ppp::AuthRequest& req, const Hint& hint) {
  AccessResult r;
  const UserProfile* p = find(req.name);
  if (!p) {
    r.reason = "unknown user";
  } else if (req.chap && chap_md5(req.chap->id, p->secret, req.chap->challenge) != req.chap->response) {
    r.reason = "bad credentials";
  } else {
    r.verdict = Verdict::Accept;
    r.attributes = p->attributes;
    r.reason = req.chap ? "CHAP verified" : "authentication disabled";
  }
  log_.push_back({req.name, r.verdict, r.reason, hint});
  last_[req.name] = r;
  return r;
}

ppp::Authorizer UserDirectory::authorizer(Hint hint) {
  return [this, hint](const ppp::AuthRequest& req) { return to_auth_decision(access_request(req, hint)); };
}

std::optional<AccessResult> UserDirectory::last_result(std::string_view user) const {
  auto it = last_.find(user);
  if (it == last_.end()) return std::nullopt;
  return it->second;
}

// ---- attribute semantics --------------------------------------------------------

namespace {

template <typename T>
std::optional<T> single(const std::vector<Attribute>& attrs, AttrType type) {
  std::optional<T> found;
  for (const auto& a : attrs) {
    if (a.type != type) continue;
    const T& v = std::get<T>(a.value);
    if (found && *found != v)
      throw Error(Errc::InconsistentAttributes, "conflicting " + std::string(to_string(type)));
    found = v;
  }
  return found;
}

}  // namespace

prov::Directives apply_attributes(const AccessResult& result) {
  if (result.verdict != Verdict::Accept) throw Error(Errc::AuthFailed, result.reason);
  const auto& at = result.attributes;
  prov::Directives d;
  d.interface_id = single<std::uint64_t>(at, AttrType::FramedInterfaceId);
  if (d.interface_id && *d.interface_id == 0)
    throw Error(Errc::InconsistentAttributes, "zero Framed-Interface-Id");
  d.onlink_v6 = single<Prefix6>(at, AttrType::FramedIpv6Prefix);
  d.v6_pool = single<std::string>(at, AttrType::FramedIpv6Pool);
  d.delegated_v6 = single<Prefix6>(at, AttrType::DelegatedIpv6Prefix);
  auto addr = single<Ipv4Addr>(at, AttrType::FramedIpAddress);
  auto mask = single<Ipv4Addr>(at, AttrType::FramedIpNetmask);
  if (mask && !addr) throw Error(Errc::InconsistentAttributes, "Framed-IP-Netmask without Framed-IP-Address");
  if (mask) {
    auto len = netmask_length(*mask);
    if (!len) throw Error(Errc::InconsistentAttributes, "non-contiguous netmask " + mask->str());
    d.delegated_v4 = make_prefix(*addr, *len);
  } else {
    d.address_v4 = addr;
  }
  return d;
}

ppp::AuthDecision to_auth_decision(const AccessResult& result) {
  ppp::AuthDecision out;
  out.message = result.reason;
  if (result.verdict != Verdict::Accept) return out;
  try {
    auto d = apply_attributes(result);
    out.accept = true;
    out.ipv4 = d.address_v4;
    out.iid = d.interface_id;
  } catch (const Error& e) {
    out.message = e.what();
  }
  return out;
}

// ---- accounting -------------------------------------------------------------------

std::string_view to_string(AcctKind k) noexcept {
  return k == AcctKind::Start ? "Start" : "Stop";
}

json to_json(const AccountingRecord& r) {
  json j = {
      {"kind", to_string(r.kind)},
      {"time", to_seconds(r.at)},
      {"user", r.session.user},
      {"local_tunnel_id", r.session.local_tunnel_id},
      {"remote_tunnel_id", r.session.remote_tunnel_id},
      {"local_session_id", r.session.local_session_id},
      {"remote_session_id", r.session.remote_session_id},
      {"tunnel_type", "L2TP"},
      {"tunnel_medium", r.session.tunnel_medium == Af::V4 ? "IPv4" : "IPv6"},
      {"payload_af", to_string(r.session.payload_af)},
  };
  if (r.kind == AcctKind::Stop) {
    for (auto [name, c] : {std::pair{"v4", &r.v4}, std::pair{"v6", &r.v6}}) {
      std::string p = name;
      j[p + "_octets_in"] = c->octets_in;
      j[p + "_octets_out"] = c->octets_out;
      j[p + "_packets_in"] = c->packets_in;
      j[p + "_packets_out"] = c->packets_out;
    }
    j["duration"] = r.duration.value_or(0.0);
  }
  return j;
}

Accountant::Accountant(std::filesystem::path file) : file_(std::move(file)) {}

void Accountant::write(const AccountingRecord& r) {
  records_.push_back(r);
  if (!file_) return;
  std::ofstream out(*file_, std::ios::app);
  if (!out) throw Error(Errc::InvalidConfig, "cannot write " + file_->string());
  out << to_json(r).dump() << '\n';
}

AccountingRecord Accountant::start(std::uint64_t key, SessionInfo session, SimTime now) {
  if (open_.contains(key)) throw Error(Errc::ProtocolViolation, "session already accounted");
  AccountingRecord r;
  r.kind = AcctKind::Start;
  r.at = now;
  r.session = std::move(session);
  open_[key] = r;
  write(r);
  return r;
}

std::optional<AccountingRecord> Accountant::stop(std::uint64_t key, const tunnel::Stats& stats, SimTime now) {
  auto it = open_.find(key);
  if (it == open_.end()) return std::nullopt;
  AccountingRecord r = it->second;
  open_.erase(it);
  r.kind = AcctKind::Stop;
  r.v4 = stats.v4;
  r.v6 = stats.v6;
  r.duration = to_seconds(now - r.at);
  r.at = now;
  write(r);
  return r;
}

}  // namespace swforge::aaa
