#include "restorisk/network.hpp"

#include <algorithm>
#include <cmath>

#include "restorisk/error.hpp"

namespace restorisk::network {

using feeder::Feeder;
using feeder::has_phase;
using feeder::IbrKind;
using lp::Relation;
using lp::Term;

double total(const PhaseVec& v) { return v[0] + v[1] + v[2]; }

double reactive_for(double p_kw, double power_factor) {
  return p_kw * std::tan(std::acos(power_factor));
}

std::string_view to_string(RowKind kind) {
  switch (kind) {
    case RowKind::ActiveBalance: return "active_balance";
    case RowKind::ReactiveBalance: return "reactive_balance";
    case RowKind::LineP: return "line_p";
    case RowKind::LineQ: return "line_q";
    case RowKind::VoltageLow: return "voltage_low";
    case RowKind::VoltageHigh: return "voltage_high";
    case RowKind::VoltageDrop: return "voltage_drop";
    case RowKind::GflSetpoint: return "gfl_setpoint";
    case RowKind::GfmCapacity: return "gfm_capacity";
    case RowKind::Ramping: return "ramping";
    case RowKind::Auxiliary: return "auxiliary";
  }
  return "auxiliary";
}

int TaggedProblem::add_row(RowTag tag, std::vector<Term> terms, Relation rel, double rhs) {
  tags.push_back(std::move(tag));
  return problem.add_constraint(
      std::string(to_string(tags.back().kind)) + "@" + std::to_string(tags.back().bus) + "." +
          std::to_string(tags.back().phase) + (tags.back().element.empty() ? "" : "." + tags.back().element),
      std::move(terms), rel, rhs);
}

double kw_per_pu(const Feeder& feeder) { return feeder.base().phase_kw(); }

std::vector<std::size_t> energized_lines(const Feeder& feeder, const std::set<int>& buses,
                                         const std::set<std::string>& closed_switches) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < feeder.lines().size(); ++i) {
    const auto& l = feeder.lines()[i];
    if (!buses.count(l.from) || !buses.count(l.to)) continue;
    if (l.is_switch && !closed_switches.count(l.id)) continue;
    out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> energized_ibrs(const Feeder& feeder, const std::set<int>& buses) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < feeder.ibrs().size(); ++i) {
    if (buses.count(feeder.ibrs()[i].bus)) out.push_back(i);
  }
  return out;
}

StageVars add_island(TaggedProblem& tp, const Feeder& feeder, const IslandSpec& island,
                     const std::map<std::size_t, IbrLimits>& limits, const BuildOptions& options,
                     const std::string& prefix) {
  auto& p = tp.problem;
  const double base = kw_per_pu(feeder);
  StageVars v;

  for (std::size_t g : island.ibrs) {
    const auto& ibr = feeder.ibrs()[g];
    if (ibr.kind == IbrKind::Gfm && (v.reference_bus < 0 || ibr.bus < v.reference_bus)) v.reference_bus = ibr.bus;
  }

  // Squared voltage per bus-phase.
  for (int b : island.buses) {
    const auto& bus = feeder.bus(b);
    for (int ph = 0; ph < 3; ++ph) {
      if (!has_phase(bus.phases, ph)) continue;
      const std::string name = prefix + "U" + std::to_string(b) + feeder::phase_name(ph);
      int var;
      if (!options.voltage) {
        var = p.add_variable(name, -lp::kInf, lp::kInf);
      } else if (b == v.reference_bus) {
        var = p.add_variable(name, 1.0, 1.0);
      } else if (options.limits_as_rows) {
        var = p.add_variable(name, -lp::kInf, lp::kInf);
        tp.add_row({RowKind::VoltageLow, b, ph, ""}, {{var, 1.0}}, Relation::GreaterEqual, bus.vmin2);
        tp.add_row({RowKind::VoltageHigh, b, ph, ""}, {{var, 1.0}}, Relation::LessEqual, bus.vmax2);
      } else {
        var = p.add_variable(name, bus.vmin2, bus.vmax2);
      }
      v.u[{b, ph}] = var;
    }
  }

  // Line flows, from -> to.
  for (std::size_t li : island.lines) {
    const auto& l = feeder.lines()[li];
    for (int ph = 0; ph < 3; ++ph) {
      if (!has_phase(l.phases, ph)) continue;
      const double pm = l.pmax_kw / base;
      const double qm = l.qmax_kvar / base;
      const std::string tag = prefix + "L" + l.id + feeder::phase_name(ph);
      int pv, qv;
      if (options.limits_as_rows) {
        pv = p.add_variable("P" + tag, -lp::kInf, lp::kInf);
        tp.add_row({RowKind::LineP, l.to, ph, l.id}, {{pv, 1.0}}, Relation::LessEqual, pm);
        tp.add_row({RowKind::LineP, l.to, ph, l.id}, {{pv, 1.0}}, Relation::GreaterEqual, -pm);
      } else {
        pv = p.add_variable("P" + tag, -pm, pm);
      }
      v.p_line[{li, ph}] = pv;
      if (options.reactive) {
        if (options.limits_as_rows) {
          qv = p.add_variable("Q" + tag, -lp::kInf, lp::kInf);
          tp.add_row({RowKind::LineQ, l.to, ph, l.id}, {{qv, 1.0}}, Relation::LessEqual, qm);
          tp.add_row({RowKind::LineQ, l.to, ph, l.id}, {{qv, 1.0}}, Relation::GreaterEqual, -qm);
        } else {
          qv = p.add_variable("Q" + tag, -qm, qm);
        }
        v.q_line[{li, ph}] = qv;
      }
    }
  }

  // IBR outputs.
  for (std::size_t g : island.ibrs) {
    const auto& ibr = feeder.ibrs()[g];
    auto it = limits.find(g);
    if (it == limits.end()) throw Error(ErrorCode::MalformedStage, "no output limits for IBR " + ibr.id);
    for (int ph = 0; ph < 3; ++ph) {
      if (!has_phase(ibr.phases, ph)) continue;
      const std::string tag = prefix + "G" + ibr.id + feeder::phase_name(ph);
      v.p_ibr[{g, ph}] = p.add_variable("P" + tag, it->second.p_lo[ph] / base, it->second.p_hi[ph] / base);
      if (options.reactive) {
        v.q_ibr[{g, ph}] = p.add_variable("Q" + tag, it->second.q_lo[ph] / base, it->second.q_hi[ph] / base);
      }
    }
  }

  // Nodal balance: generation - demand = outflow - inflow.
  for (int b : island.buses) {
    const auto& bus = feeder.bus(b);
    const auto lp_it = island.load_p_kw.find(b);
    const auto lq_it = island.load_q_kvar.find(b);
    for (int ph = 0; ph < 3; ++ph) {
      if (!has_phase(bus.phases, ph)) continue;
      std::vector<Term> pt, qt;
      for (std::size_t li : island.lines) {
        const auto& l = feeder.lines()[li];
        if (!has_phase(l.phases, ph)) continue;
        if (l.from == b) {
          pt.push_back({v.p_line.at({li, ph}), 1.0});
          if (options.reactive) qt.push_back({v.q_line.at({li, ph}), 1.0});
        } else if (l.to == b) {
          pt.push_back({v.p_line.at({li, ph}), -1.0});
          if (options.reactive) qt.push_back({v.q_line.at({li, ph}), -1.0});
        }
      }
      for (std::size_t g : island.ibrs) {
        const auto& ibr = feeder.ibrs()[g];
        if (ibr.bus != b || !has_phase(ibr.phases, ph)) continue;
        pt.push_back({v.p_ibr.at({g, ph}), -1.0});
        if (options.reactive) qt.push_back({v.q_ibr.at({g, ph}), -1.0});
      }
      const double pl = lp_it == island.load_p_kw.end() ? 0.0 : lp_it->second[ph] / base;
      const double ql = lq_it == island.load_q_kvar.end() ? 0.0 : lq_it->second[ph] / base;
      tp.add_row({RowKind::ActiveBalance, b, ph, ""}, std::move(pt), Relation::Equal, -pl);
      if (options.reactive) tp.add_row({RowKind::ReactiveBalance, b, ph, ""}, std::move(qt), Relation::Equal, -ql);
    }
  }

  // U_from - U_to = 2 (R P + X Q).
  if (options.voltage) {
    for (std::size_t li : island.lines) {
      const auto& l = feeder.lines()[li];
      for (int ph = 0; ph < 3; ++ph) {
        if (!has_phase(l.phases, ph)) continue;
        std::vector<Term> t{{v.u.at({l.from, ph}), 1.0}, {v.u.at({l.to, ph}), -1.0}};
        for (int q = 0; q < 3; ++q) {
          if (!has_phase(l.phases, q)) continue;
          if (l.r_hat[ph][q] != 0.0) t.push_back({v.p_line.at({li, q}), -2.0 * l.r_hat[ph][q]});
          if (options.reactive && l.x_hat[ph][q] != 0.0) t.push_back({v.q_line.at({li, q}), -2.0 * l.x_hat[ph][q]});
        }
        tp.add_row({RowKind::VoltageDrop, l.to, ph, l.id}, std::move(t), Relation::Equal, 0.0);
      }
    }
  }
  return v;
}

}  // namespace restorisk::network
