#pragma once

// JSON-lines event trace shared by the simulator and the scenario runner.
// Every line has time (seconds), event, from, to and summary; extra keys
// depend on the event.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "swforge/clock.hpp"

namespace swforge {

class Trace {
 public:
  void emit(SimTime at, std::string event, std::string from, std::string to, std::string summary,
            nlohmann::json extra = nlohmann::json::object());

  const std::vector<nlohmann::json>& lines() const { return lines_; }
  std::vector<nlohmann::json> events(std::string_view name) const;
  std::string dump() const;  // one JSON document per line
  void write(const std::filesystem::path& file) const;
  static std::vector<nlohmann::json> read(const std::filesystem::path& file);

 private:
  std::vector<nlohmann::json> lines_;
};

}  // namespace swforge
