#include "swforge/provisioning.hpp"

#include <algorithm>
#include <fstream>

namespace swforge::prov {

using nlohmann::json;

// ---- Scope combinations ------------------------------------------------

std::string_view to_string(Verdict v) noexcept {
  return v == Verdict::Possible ? "Possible" : "PossibleNotRecommended";
}

ComboVerdict validate_combo(Ipv6Scope endpoint, Ipv6Scope delegated) {
  if (delegated == Ipv6Scope::LinkLocal) {
    throw Error(Errc::InvalidConfig, "a delegated prefix cannot be link-local");
  }
  if (endpoint == Ipv6Scope::Global && delegated == Ipv6Scope::Ula) {
    return {Verdict::PossibleNotRecommended, "Possible, but Not Recommended"};
  }
  return {Verdict::Possible, "Possible"};
}

ComboVerdict validate_combo(Ipv4Scope endpoint, Ipv4Scope delegated) {
  if (delegated == Ipv4Scope::Public) return {Verdict::Possible, "Possible"};
  if (endpoint == Ipv4Scope::Private) {
    return {Verdict::PossibleNotRecommended, "Possible, but Not Recommended when using NAT"};
  }
  return {Verdict::Possible, "Possible, but NAT usage is recommended"};
}

namespace {

std::optional<Ipv6Scope> parse_v6_scope(std::string_view s) {
  if (s == "link-local" || s == "linklocal" || s == "ll") return Ipv6Scope::LinkLocal;
  if (s == "ula") return Ipv6Scope::Ula;
  if (s == "global") return Ipv6Scope::Global;
  return std::nullopt;
}

std::optional<Ipv4Scope> parse_v4_scope(std::string_view s) {
  if (s == "private") return Ipv4Scope::Private;
  if (s == "public") return Ipv4Scope::Public;
  return std::nullopt;
}

}  // namespace

ComboVerdict validate_combo(std::string_view af, std::string_view endpoint, std::string_view delegated) {
  if (parse_af(af) == Af::V6) {
    auto e = parse_v6_scope(endpoint);
    auto d = parse_v6_scope(delegated);
    if (!e || !d) throw Error(Errc::InvalidConfig, "IPv6 scopes are link-local, ula, global");
    return validate_combo(*e, *d);
  }
  auto e = parse_v4_scope(endpoint);
  auto d = parse_v4_scope(delegated);
  if (!e || !d) throw Error(Errc::InvalidConfig, "IPv4 scopes are private, public");
  return validate_combo(*e, *d);
}

void check_delegated_length(Af af, int len) {
  const int lo = af == Af::V6 ? kMinDelegatedV6 : kMinDelegatedV4;
  const int hi = af == Af::V6 ? kMaxDelegatedV6 : kMaxDelegatedV4;
  if (len < lo || len > hi) {
    throw Error(Errc::LengthOutOfRange, "delegated " + std::string(to_string(af)) + " prefix length /" +
                                            std::to_string(len) + " outside /" + std::to_string(lo) +
                                            "../" + std::to_string(hi));
  }
}

// ---- Prefix pools ------------------------------------------------------

namespace {

__extension__ typedef unsigned __int128 u128;

// Pools work on the upper bits of the address: all of an IPv4 address,
// the routing half of an IPv6 address.
template <typename Addr>
struct KeySpace;

template <>
struct KeySpace<Ipv4Addr> {
  static constexpr int kWidth = 32;
  static std::uint64_t key(Ipv4Addr a) { return a.value; }
  static Ipv4Addr addr(std::uint64_t k) { return Ipv4Addr{static_cast<std::uint32_t>(k)}; }
};

template <>
struct KeySpace<Ipv6Addr> {
  static constexpr int kWidth = 64;
  static std::uint64_t key(const Ipv6Addr& a) { return a.upper(); }
  static Ipv6Addr addr(std::uint64_t k) {
    Ipv6Addr a;
    for (int i = 0; i < 8; ++i) a.bytes[7 - i] = static_cast<std::uint8_t>(k >> (8 * i));
    return a;
  }
};

template <typename Addr>
u128 block_size(int len) {
  return u128{1} << (KeySpace<Addr>::kWidth - len);
}

}  // namespace

template <typename Addr>
bool PrefixPool<Addr>::is_free(const PrefixT& p) const {
  return std::none_of(allocated_.begin(), allocated_.end(),
                      [&](const PrefixT& a) { return overlaps(a, p); });
}

template <typename Addr>
std::optional<BasicPrefix<Addr>> PrefixPool<Addr>::allocate(int len) {
  using K = KeySpace<Addr>;
  if (len < base_.len || len > K::kWidth) return std::nullopt;
  const u128 step = block_size<Addr>(len);
  const u128 end = u128{K::key(base_.addr)} + block_size<Addr>(base_.len);
  u128 cand = K::key(base_.addr);
  while (cand < end) {
    PrefixT p{K::addr(static_cast<std::uint64_t>(cand)), static_cast<std::uint8_t>(len)};
    auto hit = std::find_if(allocated_.begin(), allocated_.end(),
                            [&](const PrefixT& a) { return overlaps(a, p); });
    if (hit == allocated_.end()) {
      allocated_.push_back(p);
      return p;
    }
    // Skip past the blocking allocation, staying aligned to `len`.
    const u128 blocked_end = u128{K::key(hit->addr)} + block_size<Addr>(hit->len);
    cand = std::max(cand + step, (blocked_end + step - 1) / step * step);
  }
  return std::nullopt;
}

template <typename Addr>
bool PrefixPool<Addr>::reserve(const PrefixT& p) {
  if (p.len < base_.len || !contains(base_, p.addr) || !is_free(p)) return false;
  allocated_.push_back(p);
  return true;
}

template <typename Addr>
void PrefixPool<Addr>::release(const PrefixT& p) {
  std::erase(allocated_, p);
}

template class PrefixPool<Ipv4Addr>;
template class PrefixPool<Ipv6Addr>;

bool AddressPool4::usable(Ipv4Addr a) const {
  if (!contains(base_, a)) return false;
  if (base_.len >= 31) return true;
  const auto host = a.value & ~(base_.len == 0 ? 0u : ~0u << (32 - base_.len));
  const auto all_ones = base_.len == 0 ? ~0u : (1u << (32 - base_.len)) - 1;
  return host != 0 && host != all_ones;
}

std::optional<Ipv4Addr> AddressPool4::allocate() {
  const std::uint64_t first = base_.addr.value;
  const std::uint64_t count = std::uint64_t{1} << (32 - base_.len);
  for (std::uint64_t i = 0; i < count; ++i) {
    Ipv4Addr a{static_cast<std::uint32_t>(first + i)};
    if (!usable(a)) continue;
    if (std::find(allocated_.begin(), allocated_.end(), a) != allocated_.end()) continue;
    allocated_.push_back(a);
    return a;
  }
  return std::nullopt;
}

bool AddressPool4::reserve(Ipv4Addr a) {
  if (!usable(a) || std::find(allocated_.begin(), allocated_.end(), a) != allocated_.end()) return false;
  allocated_.push_back(a);
  return true;
}

void AddressPool4::release(Ipv4Addr a) { std::erase(allocated_, a); }

// ---- Routing -------------------------------------------------------------

std::string_view to_string(RouteOrigin o) noexcept {
  return o == RouteOrigin::Default ? "default" : "delegated";
}

void Rib::inject(const Prefix& prefix, std::uint32_t softwire, RouteOrigin origin) {
  for (auto& e : entries_) {
    if (e.prefix == prefix && e.softwire == softwire) {
      e.origin = origin;
      return;
    }
    if (origin == RouteOrigin::Delegated && e.origin == RouteOrigin::Delegated &&
        e.softwire != softwire && overlaps(e.prefix, prefix)) {
      throw Error(Errc::Conflict, to_string(prefix) + " overlaps " + to_string(e.prefix) +
                                      " routed to softwire " + std::to_string(e.softwire));
    }
  }
  entries_.push_back({prefix, softwire, origin});
}

void Rib::remove(const Prefix& prefix) {
  std::erase_if(entries_, [&](const RibEntry& e) { return e.prefix == prefix; });
}

std::size_t Rib::remove_softwire(std::uint32_t softwire) {
  return std::erase_if(entries_, [&](const RibEntry& e) { return e.softwire == softwire; });
}

std::optional<RibEntry> Rib::lookup(const IpAddr& addr) const {
  std::optional<RibEntry> best;
  int best_len = -1;
  for (auto& e : entries_) {
    const bool match = std::visit(
        [&](const auto& p) -> bool {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, Prefix4>) {
            auto* a = std::get_if<Ipv4Addr>(&addr);
            return a && contains(p, *a);
          } else {
            auto* a = std::get_if<Ipv6Addr>(&addr);
            return a && contains(p, *a);
          }
        },
        e.prefix);
    const int len = std::visit([](const auto& p) { return int{p.len}; }, e.prefix);
    if (match && len > best_len) {
      best = e;
      best_len = len;
    }
  }
  return best;
}

std::vector<RibEntry> Rib::entries_via(std::uint32_t softwire) const {
  std::vector<RibEntry> out;
  for (auto& e : entries_) {
    if (e.softwire == softwire) out.push_back(e);
  }
  return out;
}

json Rib::to_json() const {
  json out = json::array();
  for (auto& e : entries_) {
    out.push_back({{"prefix", to_string(e.prefix)}, {"softwire", e.softwire},
                   {"origin", std::string(prov::to_string(e.origin))}});
  }
  return out;
}

// ---- Stable assignments --------------------------------------------------

json to_json(const Assignment& a) {
  json j = json::object();
  if (a.onlink_v6) j["onlink_v6"] = to_string(*a.onlink_v6);
  if (a.delegated_v6) j["delegated_v6"] = to_string(*a.delegated_v6);
  if (a.address_v4) j["address_v4"] = a.address_v4->str();
  if (a.delegated_v4) j["delegated_v4"] = to_string(*a.delegated_v4);
  return j;
}

Assignment assignment_from_json(const json& j) {
  Assignment a;
  if (j.contains("onlink_v6")) a.onlink_v6 = parse_prefix6(j["onlink_v6"].get<std::string>());
  if (j.contains("delegated_v6")) a.delegated_v6 = parse_prefix6(j["delegated_v6"].get<std::string>());
  if (j.contains("address_v4")) a.address_v4 = Ipv4Addr::parse(j["address_v4"].get<std::string>());
  if (j.contains("delegated_v4")) a.delegated_v4 = parse_prefix4(j["delegated_v4"].get<std::string>());
  return a;
}

std::string_view to_string(StablePolicy p) noexcept {
  switch (p) {
    case StablePolicy::Stable: return "stable";
    case StablePolicy::Temporary: return "temporary";
    case StablePolicy::CrossSc: return "cross-sc";
  }
  return "?";
}

StablePolicy parse_stable_policy(std::string_view s) {
  if (s == "stable") return StablePolicy::Stable;
  if (s == "temporary") return StablePolicy::Temporary;
  if (s == "cross-sc") return StablePolicy::CrossSc;
  throw Error(Errc::InvalidConfig, "unknown stability policy '" + std::string(s) + "'");
}

StableStore::StableStore(StablePolicy policy, std::filesystem::path file) : policy_(policy) {
  if (std::ifstream in{file}) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw Error(Errc::ParseError, file.string() + ": " + e.what());
      }
      auto key = std::make_pair(j.at("user").get<std::string>(), j.at("sc_id").get<std::string>());
      if (j.at("assignment").is_null()) {
        records_.erase(key);
      } else {
        records_[key] = {assignment_from_json(j["assignment"]),
                         SimTime{static_cast<std::int64_t>(j.at("timestamp").get<double>() * 1e6)}, ++seq_};
      }
    }
  }
  file_ = std::move(file);
}

std::optional<Assignment> StableStore::lookup(const std::string& user, const std::string& sc_id) const {
  switch (policy_) {
    case StablePolicy::Temporary:
      return std::nullopt;
    case StablePolicy::Stable:
      if (auto it = records_.find({user, sc_id}); it != records_.end()) return it->second.assignment;
      return std::nullopt;
    case StablePolicy::CrossSc: {
      const Record* best = nullptr;
      for (auto& [key, rec] : records_) {
        if (key.first == user && (!best || rec.seq > best->seq)) best = &rec;
      }
      if (best) return best->assignment;
      return std::nullopt;
    }
  }
  return std::nullopt;
}

void StableStore::commit(const std::string& user, const std::string& sc_id, const Assignment& a, SimTime now) {
  records_[{user, sc_id}] = {a, now, ++seq_};
  append({{"user", user}, {"sc_id", sc_id}, {"assignment", to_json(a)}, {"timestamp", to_seconds(now)}});
}

void StableStore::expire(const std::string& user, const std::string& sc_id, SimTime now) {
  if (records_.erase({user, sc_id}) == 0) return;
  append({{"user", user}, {"sc_id", sc_id}, {"assignment", nullptr}, {"timestamp", to_seconds(now)}});
}

void StableStore::append(const json& line) {
  if (!file_) return;
  std::ofstream out(*file_, std::ios::app);
  if (!out) throw Error(Errc::InvalidConfig, "cannot write " + file_->string());
  out << line.dump() << '\n';
}

// ---- Provisioning messages -------------------------------------------------

std::string_view to_string(Dhcp6Type t) noexcept {
  switch (t) {
    case Dhcp6Type::Solicit: return "Solicit";
    case Dhcp6Type::Advertise: return "Advertise";
    case Dhcp6Type::Request: return "Request";
    case Dhcp6Type::Reply: return "Reply";
    case Dhcp6Type::InformationRequest: return "Information-Request";
  }
  return "?";
}

std::string_view to_string(Dhcp4Type t) noexcept {
  switch (t) {
    case Dhcp4Type::Discover: return "DHCPDISCOVER";
    case Dhcp4Type::Offer: return "DHCPOFFER";
    case Dhcp4Type::Request: return "DHCPREQUEST";
    case Dhcp4Type::Ack: return "DHCPACK";
    case Dhcp4Type::Nak: return "DHCPNAK";
  }
  return "?";
}

std::string message_name(const Message& m) {
  struct {
    std::string operator()(const RouterSolicitation&) const { return "RS"; }
    std::string operator()(const RouterAdvertisement&) const { return "RA"; }
    std::string operator()(const NeighborSolicitation&) const { return "NS"; }
    std::string operator()(const NeighborAdvertisement&) const { return "NA"; }
    std::string operator()(const Dhcp6Message& d) const { return "DHCPv6 " + std::string(to_string(d.type)); }
    std::string operator()(const Dhcp4Message& d) const { return std::string(to_string(d.type)); }
  } name;
  return std::visit(name, m);
}

namespace {

void put_error(json& j, const std::optional<Errc>& error, const std::string& detail) {
  if (error) {
    j["error"] = static_cast<int>(*error);
    j["detail"] = detail;
  }
}

void get_error(const json& j, std::optional<Errc>& error, std::string& detail) {
  if (j.contains("error")) {
    error = static_cast<Errc>(j["error"].get<int>());
    detail = j.value("detail", "");
  }
}

json addr_list(const std::vector<Ipv6Addr>& v) {
  json out = json::array();
  for (auto& a : v) out.push_back(a.str());
  return out;
}

}  // namespace

json to_json(const Message& m) {
  json j;
  j["kind"] = std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, RouterSolicitation>) return "rs";
        if constexpr (std::is_same_v<T, RouterAdvertisement>) return "ra";
        if constexpr (std::is_same_v<T, NeighborSolicitation>) return "ns";
        if constexpr (std::is_same_v<T, NeighborAdvertisement>) return "na";
        if constexpr (std::is_same_v<T, Dhcp6Message>) return "dhcp6";
        if constexpr (std::is_same_v<T, Dhcp4Message>) return "dhcp4";
      },
      m);
  if (auto* ra = std::get_if<RouterAdvertisement>(&m)) {
    j["prefix"] = to_string(ra->prefix);
    j["m"] = ra->managed;
    j["o"] = ra->other;
    put_error(j, ra->error, ra->detail);
  } else if (auto* ns = std::get_if<NeighborSolicitation>(&m)) {
    j["target"] = ns->target.str();
  } else if (auto* na = std::get_if<NeighborAdvertisement>(&m)) {
    j["target"] = na->target.str();
  } else if (auto* d = std::get_if<Dhcp6Message>(&m)) {
    j["type"] = static_cast<int>(d->type);
    j["xid"] = d->xid;
    j["duid"] = to_hex(d->client_duid);
    j["ia_pd"] = d->ia_pd;
    j["ia_na"] = d->ia_na;
    j["oro_dns"] = d->oro_dns;
    if (d->prefix) j["prefix"] = to_string(*d->prefix);
    if (d->address) j["address"] = d->address->str();
    if (!d->dns.empty()) j["dns"] = addr_list(d->dns);
    put_error(j, d->error, d->detail);
  } else if (auto* d4 = std::get_if<Dhcp4Message>(&m)) {
    j["type"] = static_cast<int>(d4->type);
    j["xid"] = d4->xid;
    j["client_id"] = d4->client_id;
    if (d4->subnet_request) {
      j["subnet_request"] = {{"h", d4->subnet_request->h},
                             {"i", d4->subnet_request->i},
                             {"prefix_len", d4->subnet_request->prefix_len}};
    }
    if (d4->subnet_info) {
      j["subnet_info"] = {{"prefix", to_string(d4->subnet_info->prefix)},
                          {"c", d4->subnet_info->c},
                          {"s", d4->subnet_info->s}};
    }
    put_error(j, d4->error, d4->detail);
  }
  return j;
}

Bytes encode(const Message& m) { return json::to_cbor(to_json(m)); }

Message decode(ByteView wire) {
  json j;
  try {
    j = json::from_cbor(wire.begin(), wire.end());
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("provisioning record: ") + e.what());
  }
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "rs") return RouterSolicitation{};
    if (kind == "ra") {
      RouterAdvertisement ra;
      ra.prefix = parse_prefix6(j.at("prefix").get<std::string>());
      ra.managed = j.at("m").get<bool>();
      ra.other = j.at("o").get<bool>();
      get_error(j, ra.error, ra.detail);
      return ra;
    }
    if (kind == "ns") return NeighborSolicitation{Ipv6Addr::parse(j.at("target").get<std::string>())};
    if (kind == "na") return NeighborAdvertisement{Ipv6Addr::parse(j.at("target").get<std::string>())};
    if (kind == "dhcp6") {
      Dhcp6Message d;
      d.type = static_cast<Dhcp6Type>(j.at("type").get<int>());
      d.xid = j.at("xid").get<std::uint32_t>();
      d.client_duid = from_hex(j.at("duid").get<std::string>());
      d.ia_pd = j.at("ia_pd").get<bool>();
      d.ia_na = j.at("ia_na").get<bool>();
      d.oro_dns = j.at("oro_dns").get<bool>();
      if (j.contains("prefix")) d.prefix = parse_prefix6(j["prefix"].get<std::string>());
      if (j.contains("address")) d.address = Ipv6Addr::parse(j["address"].get<std::string>());
      if (j.contains("dns")) {
        for (auto& a : j["dns"]) d.dns.push_back(Ipv6Addr::parse(a.get<std::string>()));
      }
      get_error(j, d.error, d.detail);
      return d;
    }
    if (kind == "dhcp4") {
      Dhcp4Message d;
      d.type = static_cast<Dhcp4Type>(j.at("type").get<int>());
      d.xid = j.at("xid").get<std::uint32_t>();
      d.client_id = j.at("client_id").get<std::string>();
      if (j.contains("subnet_request")) {
        auto& r = j["subnet_request"];
        d.subnet_request = SubnetRequest{r.at("h").get<bool>(), r.at("i").get<bool>(),
                                         r.at("prefix_len").get<std::uint8_t>()};
      }
      if (j.contains("subnet_info")) {
        auto& s = j["subnet_info"];
        d.subnet_info = SubnetInformation{parse_prefix4(s.at("prefix").get<std::string>()),
                                          s.at("c").get<bool>(), s.at("s").get<bool>()};
      }
      get_error(j, d.error, d.detail);
      return d;
    }
    throw Error(Errc::ParseError, "unknown provisioning record kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("provisioning record: ") + e.what());
  }
}

std::pair<SubnetRequest, std::optional<SubnetInformation>> build_subnet_request(
    const std::optional<Prefix4>& prior, std::optional<std::uint8_t> longest_supported) {
  SubnetRequest req;
  req.h = true;
  if (prior) {
    req.i = true;
    req.prefix_len = prior->len;
    return {req, SubnetInformation{*prior, false, false}};
  }
  req.i = false;
  req.prefix_len = longest_supported.value_or(0);
  return {req, std::nullopt};
}

}  // namespace swforge::prov
