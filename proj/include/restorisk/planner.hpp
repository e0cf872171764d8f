#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "restorisk/feeder.hpp"
#include "restorisk/network.hpp"

namespace restorisk::planner {

using network::PhasePQ;
using network::PhaseVec;

/// Wall-clock placement of the stages, used for cold-load-pickup lookups.
struct StageClock {
  int start_hour = 8;          // local hour at which stage 1 begins
  double stage_minutes = 60.0;

  int hour_of(int stage) const;
};

/// Demand of a load at `stage` when it was picked up at `pickup_stage` (kW over all its phases).
/// Zero before pickup; inflated by the cold-load-pickup decay when enabled.
double stage_demand_kw(const feeder::LoadPoint& load, double forecast_kw, int pickup_stage, int stage,
                       const StageClock& clock, bool clpu_enabled);

/// Per-phase split of a load's demand.
PhaseVec per_phase(const feeder::LoadPoint& load, double total_kw);

/// Per-phase load-step allowance of a grid-forming unit at `stage`, whose first energized stage is
/// `first_stage`; infinite at the first stage itself.
double ramp_cap_kw(const feeder::Ibr& gfm, int first_stage, int stage);

struct PlannerOptions {
  bool clpu_enabled = true;
  bool voltage = true;
  bool reactive = true;
  double power_factor = 0.95;
  /// Preferred grid-forming operating point as a fraction of capacity (P and Q). Dispatch first keeps
  /// GFM output steady between stages, then drifts toward this point with weight `target_weight`.
  double gfm_target_fraction = 0.43;
  double target_weight = 0.01;
  /// Allow switch closures that join two grid-forming units into one island.
  bool merge_microgrids = false;
  double switch_penalty_kw = 1e-3;
  double zone_penalty_kw = 1e-4;
  /// Solve all stages in one model when it has at most this many binaries; otherwise stage by stage.
  std::size_t joint_binary_limit = 48;
  std::uint64_t node_limit = 20000;
  double gap_tol = 1e-6;
  int max_cuts = 400;
};

struct PlannerInput {
  const feeder::Feeder* feeder = nullptr;
  int stages = 1;
  StageClock clock;
  /// forecasts_kw[load][stage - 1], total over the load's phases.
  std::vector<std::vector<double>> forecasts_kw;
  PlannerOptions options;
};

struct StagePlan {
  int stage = 0;
  std::vector<std::string> closed_switches;   // cumulative
  std::vector<std::string> restored_loads;    // cumulative
  std::vector<std::string> restored_ibrs;
  std::vector<int> energized_buses;
  std::map<std::string, PhasePQ> gfl_setpoints;  // kW / kvar per phase
  std::map<std::string, PhasePQ> gfm_dispatch;
  std::map<std::string, double> planned_demand_kw;  // restored loads, as the planner saw them
};

struct RestorationPlan {
  int stages = 0;
  StageClock clock;
  bool clpu_enabled = true;
  double power_factor = 0.95;
  std::vector<StagePlan> stage_plans;
  std::map<std::string, int> pickup_stage;
  std::map<std::string, int> closure_stage;
  /// Sum over stages of weighted restored forecast demand (kW, no cold-load inflation).
  double objective_kw = 0.0;
  bool node_limit_reached = false;
  int cuts = 0;
  bool joint = false;
};

RestorationPlan plan_restoration(const PlannerInput& input);

struct StageDiff {
  int stage = 0;
  std::vector<std::string> switches_only_a, switches_only_b;
  std::vector<std::string> loads_only_a, loads_only_b;
  /// (IBR id, phase, P delta b - a in kW) for setpoints differing by more than 1e-6.
  struct Delta {
    std::string ibr;
    int phase = 0;
    double p_kw = 0.0;
    double q_kvar = 0.0;
  };
  std::vector<Delta> setpoint_deltas;

  bool sequence_identical() const;
};

struct PlanDiff {
  std::vector<StageDiff> stages;
  bool sequence_identical() const;
  bool empty() const;
  std::size_t entry_count() const;
};

PlanDiff plan_diff(const RestorationPlan& a, const RestorationPlan& b);

std::string plan_to_json(const RestorationPlan& plan);
RestorationPlan plan_from_json(std::string_view text);
std::string plan_diff_to_json(const PlanDiff& diff);

/// Independent re-check of one stage: largest nodal balance residual (per unit) of the plan's own
/// dispatch against its planned demand over a spanning flow solution.
double balance_residual_pu(const feeder::Feeder& feeder, const RestorationPlan& plan, int stage);

}  // namespace restorisk::planner
