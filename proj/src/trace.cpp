#include "swforge/trace.hpp"

#include <fstream>

#include "swforge/error.hpp"

namespace swforge {

void Trace::emit(SimTime at, std::string event, std::string from, std::string to, std::string summary,
                 nlohmann::json extra) {
  nlohmann::json j = {{"time", to_seconds(at)},
                      {"event", std::move(event)},
                      {"from", std::move(from)},
                      {"to", std::move(to)},
                      {"summary", std::move(summary)}};
  for (auto& [k, v] : extra.items()) j[k] = v;
  lines_.push_back(std::move(j));
}

std::vector<nlohmann::json> Trace::events(std::string_view name) const {
  std::vector<nlohmann::json> out;
  for (const auto& l : lines_)
    if (l["event"] == name) out.push_back(l);
  return out;
}

std::string Trace::dump() const {
  std::string out;
  for (const auto& l : lines_) {
    out += l.dump();
    out += '\n';
  }
  return out;
}

void Trace::write(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::InvalidConfig, "cannot write " + file.string());
  out << dump();
}

std::vector<nlohmann::json> Trace::read(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::MissingTrace, file.string());
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::ParseError, file.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace swforge
