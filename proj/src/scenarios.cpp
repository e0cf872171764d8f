#include "restorisk/scenarios.hpp"

#include "restorisk/network.hpp"

namespace restorisk::scenarios {

namespace {

feeder::Line short_line(std::string id, int from, int to, bool is_switch) {
  feeder::Line l;
  l.id = std::move(id);
  l.from = from;
  l.to = to;
  l.is_switch = is_switch;
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) {
      l.r_ohm[i][k] = i == k ? 0.02 : 0.005;
      l.x_ohm[i][k] = i == k ? 0.04 : 0.01;
    }
  }
  l.pmax_kw = 2000.0;
  l.qmax_kvar = 2000.0;
  return l;
}

feeder::LoadPoint load(std::string id, int bus, feeder::PhaseSet phases, double nominal) {
  feeder::LoadPoint p;
  p.id = std::move(id);
  p.bus = bus;
  p.phases = phases;
  p.profile = "flat";
  p.nominal_kw = nominal;
  return p;
}

}  // namespace

PlanScenario mg4_stage2() {
  using namespace feeder;
  std::vector<Bus> buses{{76, kAllPhases}, {77, kAllPhases}, {78, kAllPhases}};
  std::vector<Line> lines{short_line("L76_77", 76, 77, false), short_line("S77_78", 77, 78, true)};

  Ibr gfm;
  gfm.id = "GFM76";
  gfm.bus = 76;
  gfm.kind = IbrKind::Gfm;
  gfm.pmax_kw = 300.0;
  gfm.qmax_kvar = 300.0;
  gfm.ramp = {11.0, 10.0, 59.8, 59.5};
  Ibr gfl;
  gfl.id = "GFL78";
  gfl.bus = 78;
  gfl.kind = IbrKind::Gfl;
  gfl.pmax_kw = 800.0;
  gfl.qmax_kvar = 400.0;

  const double new_phase_kw = 2174.0 / 3.0;
  std::vector<LoadPoint> loads{load("A77", 77, kAllPhases, 648.0), load("La78", 78, kPhaseA, new_phase_kw),
                               load("Lb78", 78, kPhaseB, new_phase_kw), load("Lc78", 78, kPhaseC, new_phase_kw)};

  PlanScenario s{Feeder({5000.0, 4.16}, buses, lines, {gfm, gfl}, loads), {}, {}, {}};
  s.attacked_kw = {{"A77", {648.0, 648.0}},
                   {"La78", {0.0, new_phase_kw}},
                   {"Lb78", {0.0, new_phase_kw}},
                   {"Lc78", {0.0, new_phase_kw}}};
  s.actual_kw = s.attacked_kw;
  s.actual_kw["A77"][0] = 669.0;
  s.actual_kw["La78"][1] = new_phase_kw + 22.0;

  auto& plan = s.plan;
  plan.stages = 2;
  plan.clpu_enabled = false;
  plan.power_factor = 0.95;
  plan.pickup_stage = {{"A77", 1}, {"La78", 2}, {"Lb78", 2}, {"Lc78", 2}};
  plan.closure_stage = {{"S77_78", 2}};

  planner::StagePlan s1;
  s1.stage = 1;
  s1.restored_loads = {"A77"};
  s1.restored_ibrs = {"GFM76"};
  s1.energized_buses = {76, 77};
  s1.gfm_dispatch["GFM76"].p = {216.0, 216.0, 216.0};
  s1.planned_demand_kw = {{"A77", 648.0}};

  const double gfl_phase_kw = 2184.5 / 3.0;
  const double phase_load_kw = 216.0 + new_phase_kw;
  const double q_ratio = network::reactive_for(1.0, plan.power_factor);
  planner::StagePlan s2;
  s2.stage = 2;
  s2.closed_switches = {"S77_78"};
  s2.restored_loads = {"A77", "La78", "Lb78", "Lc78"};
  s2.restored_ibrs = {"GFL78", "GFM76"};
  s2.energized_buses = {76, 77, 78};
  const double gfm_phase_kw = phase_load_kw - gfl_phase_kw;  // 212.5
  s2.gfm_dispatch["GFM76"].p = {gfm_phase_kw, gfm_phase_kw, gfm_phase_kw};
  s2.gfl_setpoints["GFL78"].p = {gfl_phase_kw, gfl_phase_kw, gfl_phase_kw};
  s2.gfl_setpoints["GFL78"].q = {0.75 * q_ratio * phase_load_kw, 0.75 * q_ratio * phase_load_kw,
                                 0.75 * q_ratio * phase_load_kw};
  s2.planned_demand_kw = {{"A77", 648.0}, {"La78", new_phase_kw}, {"Lb78", new_phase_kw}, {"Lc78", new_phase_kw}};
  for (int p = 0; p < 3; ++p) {
    s1.gfm_dispatch["GFM76"].q[p] = q_ratio * 216.0;
    s2.gfm_dispatch["GFM76"].q[p] = 0.25 * q_ratio * phase_load_kw;
  }
  plan.stage_plans = {s1, s2};
  return s;
}

}  // namespace restorisk::scenarios
