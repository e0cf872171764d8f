#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "restorisk/clpu.hpp"

namespace restorisk::feeder {

using Mat3 = std::array<std::array<double, 3>, 3>;
using CMat3 = std::array<std::array<std::complex<double>, 3>, 3>;

/// Bit set over phases a=1, b=2, c=4.
using PhaseSet = std::uint8_t;

inline constexpr PhaseSet kPhaseA = 1;
inline constexpr PhaseSet kPhaseB = 2;
inline constexpr PhaseSet kPhaseC = 4;
inline constexpr PhaseSet kAllPhases = 7;

constexpr bool has_phase(PhaseSet set, int phase) { return (set >> phase) & 1U; }
int phase_count(PhaseSet set);
PhaseSet parse_phases(std::string_view text);
std::string format_phases(PhaseSet set);
char phase_name(int phase);

struct Base {
  double kva = 0.0;  // three-phase base power
  double kv = 0.0;   // line-to-line base voltage

  double impedance_ohm() const;
  /// Per-phase power base in kW.
  double phase_kw() const { return kva / 3.0; }
};

struct Bus {
  int id = 0;
  PhaseSet phases = kAllPhases;
  double vmin2 = 0.95 * 0.95;
  double vmax2 = 1.05 * 1.05;
};

struct Line {
  std::string id;
  int from = 0;
  int to = 0;
  PhaseSet phases = kAllPhases;
  Mat3 r_ohm{};
  Mat3 x_ohm{};
  Mat3 r_hat{};  // per unit, linearized
  Mat3 x_hat{};
  double pmax_kw = 0.0;   // per phase
  double qmax_kvar = 0.0; // per phase
  bool is_switch = false;
};

enum class IbrKind { Gfl, Gfm };

std::string_view to_string(IbrKind kind);

struct RampParams {
  double mls_kw = 0.0;            // load step allowed at the first ramped stage, per phase
  double sens_kw_per_hz = 0.0;    // growth of the step per Hz of frequency headroom
  double f_nadir = 59.8;
  double f_min = 59.5;

  double step_growth_kw() const { return sens_kw_per_hz * (f_nadir - f_min); }
};

struct Ibr {
  std::string id;
  int bus = 0;
  IbrKind kind = IbrKind::Gfl;
  PhaseSet phases = kAllPhases;
  double pmax_kw = 0.0;   // per phase
  double qmax_kvar = 0.0; // per phase
  RampParams ramp;
};

struct LoadPoint {
  std::string id;
  int bus = 0;
  PhaseSet phases = kAllPhases;
  double weight = 1.0;
  std::string profile;
  clpu::LoadType type = clpu::LoadType::Residential;
  bool attacked = false;
  double nominal_kw = 0.0;  // total over the load's phases
};

/// Immutable three-phase network.
class Feeder {
 public:
  Feeder() = default;
  Feeder(Base base, std::vector<Bus> buses, std::vector<Line> lines, std::vector<Ibr> ibrs,
         std::vector<LoadPoint> loads);

  const Base& base() const noexcept { return base_; }
  const std::vector<Bus>& buses() const noexcept { return buses_; }
  const std::vector<Line>& lines() const noexcept { return lines_; }
  const std::vector<Ibr>& ibrs() const noexcept { return ibrs_; }
  const std::vector<LoadPoint>& loads() const noexcept { return loads_; }

  bool has_bus(int id) const { return bus_index_.count(id) > 0; }
  std::size_t bus_index(int id) const;
  const Bus& bus(int id) const { return buses_[bus_index(id)]; }
  std::size_t line_index(std::string_view id) const;
  const Line& line(std::string_view id) const { return lines_[line_index(id)]; }
  std::size_t load_index(std::string_view id) const;
  std::size_t ibr_index(std::string_view id) const;

  std::vector<std::size_t> switch_lines() const;
  std::vector<int> gfm_buses() const;

  /// Connected components of the graph restricted to non-switch lines, each sorted by bus id, ordered by
  /// their smallest bus id.
  const std::vector<std::vector<int>>& zones() const noexcept { return zones_; }
  std::size_t zone_of(int bus) const;

 private:
  void index();
  void validate();

  Base base_;
  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  std::vector<Ibr> ibrs_;
  std::vector<LoadPoint> loads_;
  std::map<int, std::size_t> bus_index_;
  std::map<std::string, std::size_t, std::less<>> line_index_, load_index_, ibr_index_;
  std::vector<std::vector<int>> zones_;
  std::map<int, std::size_t> zone_of_;
};

/// Z_pu = Z_ohm * kva / (1000 * kv^2), entrywise.
Mat3 to_per_unit(const Mat3& ohm, const Base& base);
Mat3 to_ohm(const Mat3& pu, const Base& base);

struct Linearized {
  Mat3 r_hat{};
  Mat3 x_hat{};
};

/// Relative-phasor linearization of a phase impedance matrix; rows and columns outside the phase set
/// are zeroed.
Linearized linearize(const CMat3& z, PhaseSet phases);

Feeder load_feeder(const std::filesystem::path& path);
Feeder feeder_from_json(std::string_view text);
std::string feeder_to_json(const Feeder& feeder);

/// Buses reachable from the sources over non-switch lines and the closed switches.
std::set<int> energized_subgraph(const Feeder& feeder, const std::set<std::string>& closed_switches,
                                 const std::set<int>& sources);

/// Connected components (islands) of the energized graph, each holding at least one source.
std::vector<std::set<int>> energized_islands(const Feeder& feeder, const std::set<std::string>& closed_switches,
                                             const std::set<int>& sources);

}  // namespace restorisk::feeder
