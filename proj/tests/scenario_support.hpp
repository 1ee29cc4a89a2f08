#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "swforge/l2tp.hpp"
#include "swforge/scenario.hpp"

namespace swforge::testing {

inline const std::vector<std::string> kEstablishment = {"SCCRQ", "SCCRP", "SCCCN", "ICRQ", "ICRP", "ICCN"};

/// AVP type by its trace name, for the IETF attributes.
inline std::optional<l2tp::AvpType> avp_by_name(const std::string& name) {
  for (std::uint16_t t = 0; t <= 39; ++t)
    if (l2tp::avp_name(0, t) == name) return static_cast<l2tp::AvpType>(t);
  return std::nullopt;
}

inline std::optional<l2tp::MessageType> message_by_name(const std::string& name) {
  for (std::uint16_t t = 0; t <= 16; ++t) {
    auto m = l2tp::message_type_from_wire(t);
    if (m && l2tp::to_string(*m) == name) return m;
  }
  return std::nullopt;
}

/// First-transmission control messages up to the session coming up, ZLBs
/// excluded.
inline std::vector<nlohmann::json> establishment_messages(const std::vector<nlohmann::json>& trace) {
  std::vector<nlohmann::json> out;
  for (const auto& l : trace) {
    if (l["event"] == "SessionUp" && l["from"] == "sc") break;
    if (l["event"] != "Control" || l["message"] == "ZLB" || l["retransmission"].get<bool>()) continue;
    out.push_back(l);
  }
  return out;
}

/// Empty when the establishment exchange conforms; otherwise what is wrong.
inline std::string check_establishment(const std::vector<nlohmann::json>& trace) {
  auto msgs = establishment_messages(trace);
  std::vector<std::string> names;
  for (const auto& m : msgs) names.push_back(m["message"]);
  if (names != kEstablishment) return "sequence " + nlohmann::json(names).dump();
  for (const auto& m : msgs) {
    auto type = *message_by_name(m["message"]);
    std::vector<l2tp::AvpType> present;
    for (const auto& a : m["avps"]) {
      auto t = avp_by_name(a);
      if (!t) continue;
      if (l2tp::classify_avp(type, *t) == l2tp::Relevance::NotRelevant)
        return m["message"].get<std::string>() + " carries not-relevant " + a.get<std::string>();
      present.push_back(*t);
    }
    for (auto r : l2tp::required_avps(type))
      if (std::find(present.begin(), present.end(), r) == present.end())
        return m["message"].get<std::string>() + " lacks " + l2tp::avp_name(0, static_cast<std::uint16_t>(r));
  }
  return {};
}

inline std::vector<nlohmann::json> events(const std::vector<nlohmann::json>& trace, const std::string& name) {
  std::vector<nlohmann::json> out;
  for (const auto& l : trace)
    if (l["event"] == name) out.push_back(l);
  return out;
}

}  // namespace swforge::testing
