#include "restorisk/clpu.hpp"

#include <array>
#include <cmath>
#include <string>

#include "restorisk/error.hpp"

namespace restorisk::clpu {

namespace {

// Rows: residential, commercial. Columns: morning, afternoon, evening, night.
constexpr std::array<std::array<Overshoot, 4>, 2> kTable{{
    {{{1.33, 11.5}, {1.03, 34.0}, {0.62, 9.8}, {0.96, 10.3}}},
    {{{0.62, 144.1}, {0.51, 31.4}, {0.24, 20.8}, {0.70, 9.4}}},
}};

}  // namespace

std::string_view to_string(LoadType type) {
  return type == LoadType::Residential ? "residential" : "commercial";
}

std::string_view to_string(TimeOfDay tod) {
  switch (tod) {
    case TimeOfDay::Morning: return "morning";
    case TimeOfDay::Afternoon: return "afternoon";
    case TimeOfDay::Evening: return "evening";
    case TimeOfDay::Night: return "night";
  }
  return "night";
}

LoadType load_type_from_string(std::string_view name) {
  if (name == "residential") return LoadType::Residential;
  if (name == "commercial") return LoadType::Commercial;
  throw Error(ErrorCode::InvalidConfig, "unknown load type '" + std::string(name) + "'");
}

TimeOfDay time_of_day_from_string(std::string_view name) {
  if (name == "morning") return TimeOfDay::Morning;
  if (name == "afternoon") return TimeOfDay::Afternoon;
  if (name == "evening") return TimeOfDay::Evening;
  if (name == "night") return TimeOfDay::Night;
  throw Error(ErrorCode::InvalidConfig, "unknown time of day '" + std::string(name) + "'");
}

TimeOfDay time_of_day(int hour) {
  hour = ((hour % 24) + 24) % 24;
  if (hour < 6) return TimeOfDay::Night;
  if (hour < 12) return TimeOfDay::Morning;
  if (hour < 18) return TimeOfDay::Afternoon;
  return TimeOfDay::Evening;
}

Overshoot lookup_params(LoadType type, TimeOfDay tod) {
  return kTable[static_cast<std::size_t>(type)][static_cast<std::size_t>(tod)];
}

double inflation(double overshoot, double decay_minutes, double elapsed_minutes) {
  if (elapsed_minutes < 0.0) throw Error(ErrorCode::TimeBeforePickup, "time precedes pickup");
  if (!(decay_minutes > 0.0)) throw Error(ErrorCode::InvalidConfig, "decay constant must be positive");
  return 1.0 + overshoot * std::exp(-elapsed_minutes / decay_minutes);
}

double clpu_power(double p0_kw, const ClpuParams& params, std::chrono::sys_seconds t) {
  if (t < params.pickup_time) throw Error(ErrorCode::TimeBeforePickup, "time precedes pickup");
  const double minutes = std::chrono::duration<double, std::ratio<60>>(t - params.pickup_time).count();
  return p0_kw * inflation(params.overshoot, params.decay_minutes, minutes);
}

std::vector<double> apply_clpu(std::span<const double> series_kw, std::size_t pickup_hour,
                               const Overshoot& params, double minutes_per_step) {
  if (pickup_hour >= series_kw.size()) throw Error(ErrorCode::IndexOutOfRange, "pickup hour outside series");
  std::vector<double> out(series_kw.size(), 0.0);
  for (std::size_t h = pickup_hour; h < series_kw.size(); ++h) {
    const double elapsed = minutes_per_step * static_cast<double>(h - pickup_hour);
    out[h] = series_kw[h] * inflation(params.overshoot, params.decay_minutes, elapsed);
  }
  return out;
}

}  // namespace restorisk::clpu
