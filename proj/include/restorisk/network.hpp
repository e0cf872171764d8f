#pragma once

#include <array>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "restorisk/feeder.hpp"
#include "restorisk/lp.hpp"

namespace restorisk::network {

using PhaseVec = std::array<double, 3>;

struct PhasePQ {
  PhaseVec p{};
  PhaseVec q{};
};

double total(const PhaseVec& v);

/// Reactive demand of a load at the given lagging power factor.
double reactive_for(double p_kw, double power_factor);

enum class RowKind {
  ActiveBalance,
  ReactiveBalance,
  LineP,
  LineQ,
  VoltageLow,
  VoltageHigh,
  VoltageDrop,
  GflSetpoint,
  GfmCapacity,
  Ramping,
  Auxiliary,
};

std::string_view to_string(RowKind kind);

/// Identity of a constraint row: what it limits and where.
struct RowTag {
  RowKind kind = RowKind::Auxiliary;
  int bus = -1;
  int phase = -1;
  std::string element;
};

/// Problem rows together with their tags (tags[i] describes row i).
struct TaggedProblem {
  lp::Problem problem;
  std::vector<RowTag> tags;

  int add_row(RowTag tag, std::vector<lp::Term> terms, lp::Relation rel, double rhs);
};

/// One energized island at one stage.
struct IslandSpec {
  std::set<int> buses;
  std::vector<std::size_t> lines;
  std::vector<std::size_t> ibrs;
  std::map<int, PhaseVec> load_p_kw;    // per bus
  std::map<int, PhaseVec> load_q_kvar;  // per bus
};

/// Lines with both ends inside the bus set: every non-switch line plus the closed switches.
std::vector<std::size_t> energized_lines(const feeder::Feeder& feeder, const std::set<int>& buses,
                                         const std::set<std::string>& closed_switches);
/// IBRs located on the bus set.
std::vector<std::size_t> energized_ibrs(const feeder::Feeder& feeder, const std::set<int>& buses);

struct IbrLimits {
  PhaseVec p_lo{}, p_hi{}, q_lo{}, q_hi{};  // kW / kvar per phase
};

struct BuildOptions {
  bool voltage = true;
  bool reactive = true;
  /// Line flow limits and voltage bands as tagged rows instead of variable bounds.
  bool limits_as_rows = false;
};

/// Variable indices of one island-stage.
struct StageVars {
  std::map<std::pair<int, int>, int> u;                  // (bus, phase)
  std::map<std::pair<std::size_t, int>, int> p_line;     // (line, phase)
  std::map<std::pair<std::size_t, int>, int> q_line;
  std::map<std::pair<std::size_t, int>, int> p_ibr;      // (ibr, phase)
  std::map<std::pair<std::size_t, int>, int> q_ibr;
  int reference_bus = -1;
};

/// Appends the LinDistFlow model of an island: per-phase nodal P/Q balance, flow limits, squared-voltage
/// band, voltage-drop relation, IBR output ranges. The lowest grid-forming bus holds U = 1.
StageVars add_island(TaggedProblem& tp, const feeder::Feeder& feeder, const IslandSpec& island,
                     const std::map<std::size_t, IbrLimits>& limits, const BuildOptions& options,
                     const std::string& prefix);

/// kW per per-unit of per-phase power.
double kw_per_pu(const feeder::Feeder& feeder);

}  // namespace restorisk::network
