#pragma once

#include <chrono>
#include <span>
#include <string_view>
#include <vector>

namespace restorisk::clpu {

enum class LoadType { Residential, Commercial };
enum class TimeOfDay { Morning, Afternoon, Evening, Night };

std::string_view to_string(LoadType type);
std::string_view to_string(TimeOfDay tod);
LoadType load_type_from_string(std::string_view name);
TimeOfDay time_of_day_from_string(std::string_view name);

/// Bucket of an hour of day: morning 06-12, afternoon 12-18, evening 18-24, night 00-06.
TimeOfDay time_of_day(int hour);

struct Overshoot {
  double overshoot = 0.0;      // a
  double decay_minutes = 1.0;  // tau
};

/// Overshoot and decay constant for a load type restored in a time-of-day bucket.
Overshoot lookup_params(LoadType type, TimeOfDay tod);

struct ClpuParams {
  double overshoot = 0.0;
  double decay_minutes = 1.0;
  std::chrono::sys_seconds pickup_time{};
};

/// Multiplier 1 + a * exp(-elapsed / tau).
double inflation(double overshoot, double decay_minutes, double elapsed_minutes);

/// P0 * (1 + a * exp(-(t - t0) / tau)).
double clpu_power(double p0_kw, const ClpuParams& params, std::chrono::sys_seconds t);

/// Zero before the pickup hour, hour-start inflation from it onward.
std::vector<double> apply_clpu(std::span<const double> series_kw, std::size_t pickup_hour,
                               const Overshoot& params, double minutes_per_step = 60.0);

}  // namespace restorisk::clpu
