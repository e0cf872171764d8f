#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "restorisk/feeder.hpp"
#include "restorisk/network.hpp"
#include "restorisk/planner.hpp"

namespace restorisk::validator {

using network::PhasePQ;
using network::PhaseVec;
using network::RowKind;

/// One energized island at one stage, with the true loads it must carry.
struct StageProblem {
  const feeder::Feeder* feeder = nullptr;
  int stage = 1;
  std::set<int> buses;
  std::set<std::string> closed_switches;
  std::map<int, PhaseVec> load_p_kw;    // actual demand per bus
  std::map<int, PhaseVec> load_q_kvar;
  std::map<std::string, PhasePQ> gfl_setpoints;
  /// Previous-stage GFM output per phase; units absent here are not ramp-limited at this stage.
  std::map<std::string, PhaseVec> prev_gfm_kw;
  /// Per-phase load-step allowance for each ramp-limited GFM.
  std::map<std::string, double> ramp_cap_kw;
  /// Dispatch the objective stays close to (the plan's GFM output); zero when absent.
  std::map<std::string, PhaseVec> planned_gfm_kw;
  bool voltage = true;
  bool reactive = true;
};

struct Violation {
  RowKind kind = RowKind::ActiveBalance;
  int bus = -1;
  int phase = -1;
  std::string element;
  double slack = 0.0;     // native row units (pu power or squared pu voltage)
  double slack_kw = 0.0;  // power rows only
};

struct Attribution {
  std::vector<Violation> violations;
  /// Equipment limits (GFM capacity, ramping) active at the relaxed optimum.
  std::vector<Violation> binding_limits;
  double total_slack = 0.0;
};

struct StageValidationResult {
  bool feasible = false;
  std::vector<Violation> violations;
  std::vector<Violation> binding_limits;
  double total_slack = 0.0;
  std::map<std::string, PhasePQ> dispatch;       // every energized IBR, kW / kvar
  std::map<std::pair<int, int>, double> voltage_sq;  // (bus, phase) -> squared pu magnitude
};

StageValidationResult validate_stage(const StageProblem& problem);

/// Elastic re-solve of an infeasible stage: network rows (balance, line limits, voltage band) get
/// unit-weight slack, ramp rows a heavy weight, GFM capacity and GFL setpoints stay hard.
Attribution attribute_violations(const StageProblem& problem);

struct IslandStage {
  int microgrid = 0;  // 1-based, ranked by the island's lowest grid-forming bus
  int stage = 0;
  enum class Status { Feasible, Infeasible, Skipped } status = Status::Feasible;
  std::set<int> buses;
  std::vector<std::string> loads;
  StageValidationResult result;
  double planned_gfm_kw = 0.0;
  double actual_gfm_kw = 0.0;  // dispatched when feasible, required otherwise
  double required_gfm_kw = 0.0;
  double gfl_kw = 0.0;
  double attacked_load_kw = 0.0;  // planned demand of the island's restored loads
  double actual_load_kw = 0.0;
};

std::string_view to_string(IslandStage::Status status);

struct ValidationReport {
  std::vector<IslandStage> entries;
  std::optional<std::pair<int, int>> first_failure;  // (microgrid, stage)
  bool all_feasible() const;
  std::vector<std::pair<int, int>> failures() const;
};

struct ValidateOptions {
  bool voltage = true;
  bool reactive = true;
  /// Cold-load inflation of the actual loads; follows the plan's setting when unset.
  std::optional<bool> clpu;
};

/// actual_kw[load id][stage - 1] is the true demand before cold-load inflation.
ValidationReport validate_plan(const feeder::Feeder& feeder, const planner::RestorationPlan& plan,
                               const std::map<std::string, std::vector<double>>& actual_kw,
                               const ValidateOptions& options = {});

std::string report_to_json(const ValidationReport& report);
/// microgrid,stage,bus,phase,constraint,slack_kw
std::string violations_csv(const ValidationReport& report);
/// microgrid,stage,planned_gfm_kw,actual_gfm_kw,attacked_load_kw,actual_load_kw,status
std::string generation_csv(const ValidationReport& report);

}  // namespace restorisk::validator
