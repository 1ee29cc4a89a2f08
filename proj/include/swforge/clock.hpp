#pragma once

#include <chrono>

namespace swforge {

/// Virtual simulation time; all protocol timers run on this clock.
using Duration = std::chrono::microseconds;
using SimTime = std::chrono::microseconds;  // offset from simulation start

inline double to_seconds(Duration d) { return std::chrono::duration<double>(d).count(); }

inline constexpr SimTime kNever = SimTime::max();

}  // namespace swforge
