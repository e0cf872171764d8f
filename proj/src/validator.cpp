#include "restorisk/validator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "restorisk/error.hpp"
#include "restorisk/lp.hpp"

namespace restorisk::validator {

using feeder::Feeder;
using feeder::has_phase;
using feeder::IbrKind;
using lp::Relation;

namespace {

constexpr double kSlackTol = 1e-6;
constexpr double kBindTol = 1e-7;
constexpr double kRampWeight = 1e3;

struct Built {
  network::TaggedProblem tp;
  network::StageVars vars;
  std::vector<std::size_t> ibrs;
  double base = 1.0;
};

bool is_network_row(RowKind k) {
  switch (k) {
    case RowKind::ActiveBalance:
    case RowKind::ReactiveBalance:
    case RowKind::LineP:
    case RowKind::LineQ:
    case RowKind::VoltageLow:
    case RowKind::VoltageHigh:
      return true;
    default:
      return false;
  }
}

bool is_power_row(RowKind k) {
  return k == RowKind::ActiveBalance || k == RowKind::ReactiveBalance || k == RowKind::LineP || k == RowKind::LineQ ||
         k == RowKind::Ramping;
}

Built build(const StageProblem& sp) {
  if (sp.feeder == nullptr) throw Error(ErrorCode::MalformedStage, "stage has no feeder");
  const Feeder& f = *sp.feeder;
  if (sp.buses.empty()) throw Error(ErrorCode::MalformedStage, "stage has no energized buses");
  for (int b : sp.buses) {
    if (!f.has_bus(b)) throw Error(ErrorCode::MalformedStage, "unknown bus " + std::to_string(b));
  }
  for (const auto& [b, v] : sp.load_p_kw) {
    if (!sp.buses.count(b)) throw Error(ErrorCode::MalformedStage, "load on de-energized bus " + std::to_string(b));
  }
  Built out;
  out.base = network::kw_per_pu(f);
  network::IslandSpec spec;
  spec.buses = sp.buses;
  spec.lines = network::energized_lines(f, sp.buses, sp.closed_switches);
  spec.ibrs = network::energized_ibrs(f, sp.buses);
  spec.load_p_kw = sp.load_p_kw;
  spec.load_q_kvar = sp.load_q_kvar;
  out.ibrs = spec.ibrs;

  std::map<std::size_t, network::IbrLimits> limits;
  bool has_gfm = false;
  for (std::size_t g : spec.ibrs) {
    const auto& ibr = f.ibrs()[g];
    network::IbrLimits L;
    if (ibr.kind == IbrKind::Gfm) {
      has_gfm = true;
      for (int p = 0; p < 3; ++p) {
        if (!has_phase(ibr.phases, p)) continue;
        L.p_hi[p] = ibr.pmax_kw;
        L.q_hi[p] = ibr.qmax_kvar;
      }
    } else {
      auto it = sp.gfl_setpoints.find(ibr.id);
      if (it == sp.gfl_setpoints.end()) throw Error(ErrorCode::MalformedStage, "no setpoint for GFL " + ibr.id);
      L.p_lo = L.p_hi = it->second.p;
      L.q_lo = L.q_hi = it->second.q;
    }
    limits[g] = L;
  }
  if (!has_gfm) throw Error(ErrorCode::MalformedStage, "island has no grid-forming unit");

  network::BuildOptions bo;
  bo.voltage = sp.voltage;
  bo.reactive = sp.reactive;
  bo.limits_as_rows = true;
  out.tp.problem.sense = lp::Sense::Minimize;
  out.vars = network::add_island(out.tp, f, spec, limits, bo, "");

  for (std::size_t g : spec.ibrs) {
    const auto& ibr = f.ibrs()[g];
    if (ibr.kind != IbrKind::Gfm) continue;
    const auto planned = sp.planned_gfm_kw.find(ibr.id);
    const auto prev = sp.prev_gfm_kw.find(ibr.id);
    const auto cap = sp.ramp_cap_kw.find(ibr.id);
    for (int ph = 0; ph < 3; ++ph) {
      if (!has_phase(ibr.phases, ph)) continue;
      const int pv = out.vars.p_ibr.at({g, ph});
      const double ref = planned == sp.planned_gfm_kw.end() ? 0.0 : planned->second[ph] / out.base;
      const int d = out.tp.problem.add_variable("dev" + ibr.id + feeder::phase_name(ph), 0.0, lp::kInf, 1.0);
      out.tp.add_row({RowKind::Auxiliary, ibr.bus, ph, ibr.id}, {{d, 1.0}, {pv, -1.0}}, Relation::GreaterEqual, -ref);
      out.tp.add_row({RowKind::Auxiliary, ibr.bus, ph, ibr.id}, {{d, 1.0}, {pv, 1.0}}, Relation::GreaterEqual, ref);
      if (prev != sp.prev_gfm_kw.end() && cap != sp.ramp_cap_kw.end() && std::isfinite(cap->second)) {
        const double p0 = prev->second[ph] / out.base;
        const double c = cap->second / out.base;
        out.tp.add_row({RowKind::Ramping, ibr.bus, ph, ibr.id}, {{pv, 1.0}}, Relation::LessEqual, p0 + c);
        out.tp.add_row({RowKind::Ramping, ibr.bus, ph, ibr.id}, {{pv, 1.0}}, Relation::GreaterEqual, p0 - c);
      }
    }
  }
  return out;
}

Attribution relax(const StageProblem& sp, const Built& b) {
  const auto& tags = b.tp.tags;
  std::vector<double> weights(tags.size(), 0.0);
  for (std::size_t r = 0; r < tags.size(); ++r) {
    if (is_network_row(tags[r].kind)) weights[r] = 1.0;
    else if (tags[r].kind == RowKind::Ramping) weights[r] = kRampWeight;
  }
  const auto er = lp::elastic_solve(b.tp.problem, weights);
  if (er.status != lp::Status::Optimal) throw Error(ErrorCode::MalformedStage, "relaxed stage has no solution");
  Attribution a;
  a.total_slack = er.total;
  for (std::size_t r = 0; r < tags.size(); ++r) {
    if (er.slack[r] <= kSlackTol) continue;
    Violation v{tags[r].kind, tags[r].bus, tags[r].phase, tags[r].element, er.slack[r], 0.0};
    if (is_power_row(v.kind)) v.slack_kw = er.slack[r] * b.base;
    a.violations.push_back(std::move(v));
  }
  const Feeder& f = *sp.feeder;
  for (std::size_t g : b.ibrs) {
    const auto& ibr = f.ibrs()[g];
    if (ibr.kind != IbrKind::Gfm) continue;
    for (int ph = 0; ph < 3; ++ph) {
      if (!has_phase(ibr.phases, ph)) continue;
      const double v = er.values[static_cast<std::size_t>(b.vars.p_ibr.at({g, ph}))];
      if (v >= ibr.pmax_kw / b.base - kBindTol) a.binding_limits.push_back({RowKind::GfmCapacity, ibr.bus, ph, ibr.id, 0.0, 0.0});
    }
  }
  for (std::size_t r = 0; r < tags.size(); ++r) {
    if (tags[r].kind != RowKind::Ramping) continue;
    const auto& c = b.tp.problem.constraints()[r];
    if (std::abs(b.tp.problem.row_activity(r, er.values) - c.rhs) <= kBindTol) {
      a.binding_limits.push_back({RowKind::Ramping, tags[r].bus, tags[r].phase, tags[r].element, 0.0, 0.0});
    }
  }
  return a;
}

}  // namespace

StageValidationResult validate_stage(const StageProblem& problem) {
  const Built b = build(problem);
  lp::LpOptions lo;
  lo.compute_hint = false;
  const auto out = lp::solve_lp(b.tp.problem, lo);
  StageValidationResult res;
  if (out.status == lp::Status::Optimal) {
    res.feasible = true;
    const Feeder& f = *problem.feeder;
    for (std::size_t g : b.ibrs) {
      PhasePQ pq;
      for (int ph = 0; ph < 3; ++ph) {
        auto ip = b.vars.p_ibr.find({g, ph});
        if (ip != b.vars.p_ibr.end()) pq.p[ph] = out.values[static_cast<std::size_t>(ip->second)] * b.base;
        auto iq = b.vars.q_ibr.find({g, ph});
        if (iq != b.vars.q_ibr.end()) pq.q[ph] = out.values[static_cast<std::size_t>(iq->second)] * b.base;
      }
      const auto& ibr = f.ibrs()[g];
      if (ibr.kind == IbrKind::Gfl) pq = problem.gfl_setpoints.at(ibr.id);
      res.dispatch[ibr.id] = pq;
    }
    for (const auto& [key, var] : b.vars.u) res.voltage_sq[key] = out.values[static_cast<std::size_t>(var)];
    return res;
  }
  auto a = relax(problem, b);
  res.feasible = false;
  res.violations = std::move(a.violations);
  res.binding_limits = std::move(a.binding_limits);
  res.total_slack = a.total_slack;
  return res;
}

Attribution attribute_violations(const StageProblem& problem) {
  const Built b = build(problem);
  lp::LpOptions lo;
  lo.compute_hint = false;
  if (lp::solve_lp(b.tp.problem, lo).status == lp::Status::Optimal) {
    throw Error(ErrorCode::UnexpectedlyFeasible, "stage is feasible; nothing to attribute");
  }
  return relax(problem, b);
}

std::string_view to_string(IslandStage::Status status) {
  switch (status) {
    case IslandStage::Status::Feasible: return "feasible";
    case IslandStage::Status::Infeasible: return "infeasible";
    case IslandStage::Status::Skipped: return "skipped";
  }
  return "skipped";
}

bool ValidationReport::all_feasible() const {
  return std::all_of(entries.begin(), entries.end(),
                     [](const IslandStage& e) { return e.status == IslandStage::Status::Feasible; });
}

std::vector<std::pair<int, int>> ValidationReport::failures() const {
  std::vector<std::pair<int, int>> out;
  for (const auto& e : entries) {
    if (e.status == IslandStage::Status::Infeasible) out.emplace_back(e.microgrid, e.stage);
  }
  return out;
}

ValidationReport validate_plan(const Feeder& f, const planner::RestorationPlan& plan,
                               const std::map<std::string, std::vector<double>>& actual_kw,
                               const ValidateOptions& options) {
  if (plan.stage_plans.size() != static_cast<std::size_t>(plan.stages) || plan.stages < 1) {
    throw Error(ErrorCode::PlanFeederMismatch, "plan stages do not cover its horizon");
  }
  std::map<std::string, int> pickup = plan.pickup_stage;
  std::map<std::string, int> ibr_first;
  for (const auto& sp : plan.stage_plans) {
    for (const auto& id : sp.closed_switches) {
      std::size_t li = 0;
      try {
        li = f.line_index(id);
      } catch (const Error&) {
        throw Error(ErrorCode::PlanFeederMismatch, "plan closes unknown switch " + id);
      }
      if (!f.lines()[li].is_switch) throw Error(ErrorCode::PlanFeederMismatch, id + " is not a switch");
    }
    for (const auto& id : sp.restored_loads) {
      try {
        f.load_index(id);
      } catch (const Error&) {
        throw Error(ErrorCode::PlanFeederMismatch, "plan restores unknown load " + id);
      }
      auto it = actual_kw.find(id);
      if (it == actual_kw.end() || it->second.size() < static_cast<std::size_t>(plan.stages)) {
        throw Error(ErrorCode::PlanFeederMismatch, "no actual demand series for load " + id);
      }
      pickup.emplace(id, sp.stage);
    }
    for (const auto& id : sp.restored_ibrs) {
      try {
        f.ibr_index(id);
      } catch (const Error&) {
        throw Error(ErrorCode::PlanFeederMismatch, "plan uses unknown IBR " + id);
      }
      ibr_first.emplace(id, sp.stage);
    }
  }

  const auto gfm_list = f.gfm_buses();
  const std::set<int> gfm_set(gfm_list.begin(), gfm_list.end());
  std::vector<int> ranked(gfm_set.begin(), gfm_set.end());
  std::set<std::string> failed;
  std::map<std::string, PhaseVec> prev_actual;
  ValidationReport report;

  for (const auto& sp : plan.stage_plans) {
    const int t = sp.stage;
    const std::set<std::string> closed(sp.closed_switches.begin(), sp.closed_switches.end());
    const std::set<std::string> restored(sp.restored_loads.begin(), sp.restored_loads.end());
    auto islands = feeder::energized_islands(f, closed, gfm_set);
    for (const auto& island : islands) {
      IslandStage e;
      e.stage = t;
      e.buses = island;
      int low = -1;
      for (int b : island) {
        if (gfm_set.count(b)) {
          low = b;
          break;
        }
      }
      e.microgrid = static_cast<int>(std::find(ranked.begin(), ranked.end(), low) - ranked.begin()) + 1;

      StageProblem prob;
      prob.feeder = &f;
      prob.stage = t;
      prob.buses = island;
      prob.closed_switches = closed;
      prob.voltage = options.voltage;
      prob.reactive = options.reactive;
      for (const auto& load : f.loads()) {
        if (!island.count(load.bus) || !restored.count(load.id)) continue;
        e.loads.push_back(load.id);
        const double p = planner::stage_demand_kw(load, actual_kw.at(load.id)[static_cast<std::size_t>(t - 1)],
                                                  pickup.at(load.id), t, plan.clock,
                                                  options.clpu.value_or(plan.clpu_enabled));
        e.actual_load_kw += p;
        auto it = sp.planned_demand_kw.find(load.id);
        if (it != sp.planned_demand_kw.end()) e.attacked_load_kw += it->second;
        const auto pv = planner::per_phase(load, p);
        auto& lp = prob.load_p_kw[load.bus];
        auto& lq = prob.load_q_kvar[load.bus];
        for (int ph = 0; ph < 3; ++ph) {
          lp[ph] += pv[ph];
          lq[ph] += network::reactive_for(pv[ph], plan.power_factor);
        }
      }
      bool skip = false;
      std::vector<std::string> gfms;
      for (const auto& ibr : f.ibrs()) {
        if (!island.count(ibr.bus)) continue;
        if (ibr.kind == IbrKind::Gfm) {
          gfms.push_back(ibr.id);
          if (failed.count(ibr.id)) skip = true;
          auto pl = sp.gfm_dispatch.find(ibr.id);
          if (pl != sp.gfm_dispatch.end()) {
            prob.planned_gfm_kw[ibr.id] = pl->second.p;
            e.planned_gfm_kw += network::total(pl->second.p);
          }
          const int first = ibr_first.count(ibr.id) ? ibr_first.at(ibr.id) : t;
          if (t > first && prev_actual.count(ibr.id)) {
            prob.prev_gfm_kw[ibr.id] = prev_actual.at(ibr.id);
            prob.ramp_cap_kw[ibr.id] = planner::ramp_cap_kw(ibr, first, t);
          }
        } else {
          auto it = sp.gfl_setpoints.find(ibr.id);
          const PhasePQ pq = it == sp.gfl_setpoints.end() ? PhasePQ{} : it->second;
          prob.gfl_setpoints[ibr.id] = pq;
          e.gfl_kw += network::total(pq.p);
        }
      }
      e.required_gfm_kw = e.actual_load_kw - e.gfl_kw;
      if (skip) {
        e.status = IslandStage::Status::Skipped;
        for (const auto& id : gfms) failed.insert(id);
        report.entries.push_back(std::move(e));
        continue;
      }
      e.result = validate_stage(prob);
      if (e.result.feasible) {
        e.status = IslandStage::Status::Feasible;
        for (const auto& id : gfms) {
          prev_actual[id] = e.result.dispatch.at(id).p;
          e.actual_gfm_kw += network::total(e.result.dispatch.at(id).p);
        }
      } else {
        e.status = IslandStage::Status::Infeasible;
        e.actual_gfm_kw = e.required_gfm_kw;
        for (const auto& id : gfms) failed.insert(id);
        if (!report.first_failure) report.first_failure = std::make_pair(e.microgrid, t);
      }
      report.entries.push_back(std::move(e));
    }
  }
  std::stable_sort(report.entries.begin(), report.entries.end(), [](const IslandStage& a, const IslandStage& b) {
    return std::tie(a.microgrid, a.stage) < std::tie(b.microgrid, b.stage);
  });
  return report;
}

namespace {

using nlohmann::json;

json violation_json(const Violation& v) {
  return {{"constraint", std::string(network::to_string(v.kind))},
          {"bus", v.bus},
          {"phase", v.phase >= 0 ? std::string(1, feeder::phase_name(v.phase)) : std::string()},
          {"element", v.element},
          {"slack", v.slack},
          {"slack_kw", v.slack_kw}};
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << (std::abs(v) < 5e-11 ? 0.0 : v);
  return os.str();
}

}  // namespace

std::string report_to_json(const ValidationReport& report) {
  json j;
  j["all_feasible"] = report.all_feasible();
  if (report.first_failure) {
    j["first_failure"] = {{"microgrid", report.first_failure->first}, {"stage", report.first_failure->second}};
  } else {
    j["first_failure"] = nullptr;
  }
  json entries = json::array();
  for (const auto& e : report.entries) {
    json x;
    x["microgrid"] = e.microgrid;
    x["stage"] = e.stage;
    x["status"] = std::string(to_string(e.status));
    x["buses"] = e.buses;
    x["loads"] = e.loads;
    x["planned_gfm_kw"] = e.planned_gfm_kw;
    x["actual_gfm_kw"] = e.actual_gfm_kw;
    x["required_gfm_kw"] = e.required_gfm_kw;
    x["gfl_kw"] = e.gfl_kw;
    x["attacked_load_kw"] = e.attacked_load_kw;
    x["actual_load_kw"] = e.actual_load_kw;
    json v = json::array(), bl = json::array();
    for (const auto& viol : e.result.violations) v.push_back(violation_json(viol));
    for (const auto& b : e.result.binding_limits) bl.push_back(violation_json(b));
    x["violations"] = v;
    x["binding_limits"] = bl;
    x["total_slack"] = e.result.total_slack;
    json d = json::object();
    for (const auto& [id, pq] : e.result.dispatch) {
      d[id] = {{"p_kw", std::vector<double>(pq.p.begin(), pq.p.end())},
               {"q_kvar", std::vector<double>(pq.q.begin(), pq.q.end())}};
    }
    x["dispatch"] = d;
    entries.push_back(x);
  }
  j["entries"] = entries;
  return j.dump(1);
}

std::string violations_csv(const ValidationReport& report) {
  std::ostringstream os;
  os << "microgrid,stage,bus,phase,constraint,slack_kw\n";
  for (const auto& e : report.entries) {
    for (const auto& v : e.result.violations) {
      os << "MG " << e.microgrid << ',' << e.stage << ',' << v.bus << ','
         << (v.phase >= 0 ? feeder::phase_name(v.phase) : '-') << ',' << network::to_string(v.kind) << ','
         << fmt(v.slack_kw) << '\n';
    }
  }
  return os.str();
}

std::string generation_csv(const ValidationReport& report) {
  std::ostringstream os;
  os << "microgrid,stage,planned_gfm_kw,actual_gfm_kw,attacked_load_kw,actual_load_kw,status\n";
  for (const auto& e : report.entries) {
    os << "MG " << e.microgrid << ',' << e.stage << ',' << fmt(e.planned_gfm_kw) << ',' << fmt(e.actual_gfm_kw) << ','
       << fmt(e.attacked_load_kw) << ',' << fmt(e.actual_load_kw) << ',' << to_string(e.status) << '\n';
  }
  return os.str();
}

}  // namespace restorisk::validator
