#include "restorisk/planner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include <json.hpp>

#include "restorisk/clpu.hpp"
#include "restorisk/error.hpp"
#include "restorisk/lp.hpp"

namespace restorisk::planner {

using feeder::Feeder;
using feeder::has_phase;
using feeder::IbrKind;
using lp::Relation;
using lp::Term;

int StageClock::hour_of(int stage) const {
  const double minutes = start_hour * 60.0 + (stage - 1) * stage_minutes;
  return static_cast<int>(std::floor(minutes / 60.0)) % 24;
}

double stage_demand_kw(const feeder::LoadPoint& load, double forecast_kw, int pickup_stage, int stage,
                       const StageClock& clock, bool clpu_enabled) {
  if (pickup_stage <= 0 || stage < pickup_stage) return 0.0;
  if (!clpu_enabled) return forecast_kw;
  const auto params = clpu::lookup_params(load.type, clpu::time_of_day(clock.hour_of(pickup_stage)));
  const double elapsed = (stage - pickup_stage) * clock.stage_minutes;
  return forecast_kw * clpu::inflation(params.overshoot, params.decay_minutes, elapsed);
}

PhaseVec per_phase(const feeder::LoadPoint& load, double total_kw) {
  PhaseVec out{};
  const int n = feeder::phase_count(load.phases);
  for (int p = 0; p < 3; ++p) {
    if (has_phase(load.phases, p)) out[p] = total_kw / n;
  }
  return out;
}

double ramp_cap_kw(const feeder::Ibr& gfm, int first_stage, int stage) {
  if (stage <= first_stage) return lp::kInf;
  const int ramped = stage - first_stage;  // 1 at the first ramped stage
  return gfm.ramp.mls_kw + (ramped - 1) * gfm.ramp.step_growth_kw();
}

namespace {

struct Zone {
  std::vector<int> buses;
  std::vector<std::size_t> loads;
  std::vector<std::size_t> ibrs;
  std::vector<std::size_t> switches;  // topology switch indices
  bool has_gfm = false;
};

struct Switch {
  std::size_t line = 0;
  std::size_t z_from = 0;
  std::size_t z_to = 0;
};

struct Topology {
  std::vector<Zone> zones;
  std::vector<Switch> switches;
  std::vector<std::size_t> load_zone;
  /// Switch sets of the simple zone paths joining two grid-forming zones.
  std::vector<std::vector<std::size_t>> gfm_paths;
};

constexpr std::size_t kMaxPaths = 20000;

void collect_paths(const Topology& t, std::size_t zone, std::vector<char>& seen, std::vector<std::size_t>& path,
                   std::size_t origin, std::vector<std::vector<std::size_t>>& out) {
  for (std::size_t k : t.zones[zone].switches) {
    const auto& sw = t.switches[k];
    const std::size_t next = sw.z_from == zone ? sw.z_to : sw.z_from;
    if (seen[next] || out.size() >= kMaxPaths) continue;
    path.push_back(k);
    if (t.zones[next].has_gfm) {
      if (next > origin) out.push_back(path);
    } else {
      seen[next] = 1;
      collect_paths(t, next, seen, path, origin, out);
      seen[next] = 0;
    }
    path.pop_back();
  }
}

Topology build_topology(const Feeder& f) {
  Topology t;
  t.zones.resize(f.zones().size());
  for (std::size_t z = 0; z < f.zones().size(); ++z) t.zones[z].buses = f.zones()[z];
  t.load_zone.resize(f.loads().size());
  for (std::size_t l = 0; l < f.loads().size(); ++l) {
    const auto z = f.zone_of(f.loads()[l].bus);
    t.zones[z].loads.push_back(l);
    t.load_zone[l] = z;
  }
  for (std::size_t g = 0; g < f.ibrs().size(); ++g) {
    const auto z = f.zone_of(f.ibrs()[g].bus);
    t.zones[z].ibrs.push_back(g);
    if (f.ibrs()[g].kind == IbrKind::Gfm) t.zones[z].has_gfm = true;
  }
  for (std::size_t li : f.switch_lines()) {
    const auto& l = f.lines()[li];
    const auto a = f.zone_of(l.from);
    const auto b = f.zone_of(l.to);
    if (a == b) continue;  // would only close a loop inside a zone
    t.zones[a].switches.push_back(t.switches.size());
    t.zones[b].switches.push_back(t.switches.size());
    t.switches.push_back({li, a, b});
  }
  for (std::size_t z = 0; z < t.zones.size(); ++z) {
    if (!t.zones[z].has_gfm) continue;
    std::vector<char> seen(t.zones.size(), 0);
    seen[z] = 1;
    std::vector<std::size_t> path;
    collect_paths(t, z, seen, path, z, t.gfm_paths);
  }
  return t;
}

/// Restoration state after a stage.
struct State {
  std::vector<char> zone_on;
  std::vector<char> closed;
  std::vector<int> pickup;  // 0 = not restored
  std::map<std::size_t, PhaseVec> gfm_prev;
  int stage = 0;
};

struct Schedule {
  // Per stage in the window: zones on, switches closed; pickups over all loads.
  std::vector<std::vector<char>> zone_on;
  std::vector<std::vector<char>> closed;
  std::vector<int> pickup;
};

struct StageDispatch {
  std::map<std::size_t, PhasePQ> ibr;  // kW / kvar
};

class Planner {
 public:
  explicit Planner(const PlannerInput& in) : in_(in), f_(*in.feeder), opt_(in.options), topo_(build_topology(f_)) {
    for (int b : f_.gfm_buses()) gfm_buses_.insert(b);
  }

  RestorationPlan run() {
    validate_input();
    RestorationPlan plan;
    plan.stages = in_.stages;
    plan.clock = in_.clock;
    plan.clpu_enabled = opt_.clpu_enabled;
    plan.power_factor = opt_.power_factor;

    Schedule sched;
    std::vector<StageDispatch> dispatch;
    const std::size_t joint_binaries = count_joint_binaries();
    if (joint_binaries <= opt_.joint_binary_limit) {
      plan.joint = true;
      solve_joint(sched, dispatch);
    } else {
      solve_rolling(sched, dispatch);
    }
    plan.node_limit_reached = node_limit_hit_;
    plan.cuts = cuts_;
    assemble(plan, sched, dispatch);
    return plan;
  }

 private:
  // -------------------------------------------------------------------------
  void validate_input() const {
    if (in_.feeder == nullptr) throw Error(ErrorCode::InvalidConfig, "planner input has no feeder");
    if (in_.stages < 1) throw Error(ErrorCode::InvalidConfig, "need at least one stage");
    if (in_.forecasts_kw.size() != f_.loads().size()) {
      throw Error(ErrorCode::InvalidConfig, "need one forecast series per load");
    }
    for (const auto& s : in_.forecasts_kw) {
      if (s.size() < static_cast<std::size_t>(in_.stages)) {
        throw Error(ErrorCode::InvalidConfig, "every load needs a forecast for every stage");
      }
      for (double v : s) {
        if (!std::isfinite(v) || v < 0.0) throw Error(ErrorCode::InvalidConfig, "forecasts must be finite and >= 0");
      }
    }
    if (gfm_buses_.empty()) throw Error(ErrorCode::InvalidConfig, "feeder has no grid-forming unit");
  }

  double forecast(std::size_t l, int t) const { return in_.forecasts_kw[l][static_cast<std::size_t>(t - 1)]; }

  double demand(std::size_t l, int pickup, int t) const {
    return stage_demand_kw(f_.loads()[l], forecast(l, t), pickup, t, in_.clock, opt_.clpu_enabled);
  }

  double pickup_value(std::size_t l, int t) const {
    double v = 0.0;
    for (int tau = t; tau <= in_.stages; ++tau) v += forecast(l, tau);
    return f_.loads()[l].weight * v;
  }

  double q_ratio() const { return std::tan(std::acos(opt_.power_factor)); }

  std::size_t count_joint_binaries() const {
    std::size_t per_stage = topo_.switches.size() + f_.loads().size();
    for (const auto& z : topo_.zones) per_stage += z.has_gfm ? 0 : 1;
    return per_stage * static_cast<std::size_t>(in_.stages);
  }

  // -------------------------------------------------------------------------
  // Zone-aggregated MILP over stages [first, last] restricted to a zone subset.

  struct Model {
    lp::Problem problem;
    std::vector<int> binaries;
    int first = 1, last = 1;
    std::vector<std::size_t> zones, switches, loads;
    std::vector<std::map<std::size_t, int>> e, s, y;  // per stage offset
  };

  Model build_model(int first, int last, const std::vector<std::size_t>& zones, const State& hist) const {
    Model m;
    m.first = first;
    m.last = last;
    m.zones = zones;
    std::set<std::size_t> zset(zones.begin(), zones.end());
    for (std::size_t k = 0; k < topo_.switches.size(); ++k) {
      if (zset.count(topo_.switches[k].z_from) && zset.count(topo_.switches[k].z_to)) m.switches.push_back(k);
    }
    for (std::size_t z : zones) {
      for (std::size_t l : topo_.zones[z].loads) {
        if (hist.pickup[l] == 0) m.loads.push_back(l);
      }
    }
    std::sort(m.loads.begin(), m.loads.end());

    auto& p = m.problem;
    p.sense = lp::Sense::Maximize;
    const int n = last - first + 1;
    m.e.resize(n);
    m.s.resize(n);
    m.y.resize(n);

    for (int i = 0; i < n; ++i) {
      const int t = first + i;
      const std::string st = "t" + std::to_string(t);
      for (std::size_t z : zones) {
        const bool fixed = hist.zone_on[z] || topo_.zones[z].has_gfm;
        const int v = p.add_variable(st + ".e" + std::to_string(z), fixed ? 1.0 : 0.0, 1.0,
                                     fixed ? 0.0 : -opt_.zone_penalty_kw);
        if (!fixed) m.binaries.push_back(v);
        m.e[i][z] = v;
      }
      for (std::size_t k : m.switches) {
        const bool fixed = hist.closed[k] != 0;
        const int v = p.add_variable(st + ".s" + f_.lines()[topo_.switches[k].line].id, fixed ? 1.0 : 0.0, 1.0,
                                     fixed ? 0.0 : -opt_.switch_penalty_kw);
        if (!fixed) m.binaries.push_back(v);
        m.s[i][k] = v;
      }
      for (std::size_t l : m.loads) {
        const int v = p.add_variable(st + ".y" + f_.loads()[l].id, 0.0, 1.0, pickup_value(l, t));
        m.binaries.push_back(v);
        m.y[i][l] = v;
      }
    }

    // Sequencing.
    for (int i = 0; i < n; ++i) {
      auto e_prev = [&](std::size_t z, std::vector<Term>& terms, double& rhs, double coef) {
        if (i > 0) terms.push_back({m.e[i - 1].at(z), coef});
        else rhs -= coef * (hist.zone_on[z] ? 1.0 : 0.0);
      };
      for (std::size_t z : zones) {
        if (hist.zone_on[z] || topo_.zones[z].has_gfm) continue;
        // monotone
        if (i > 0) p.add_constraint("mono_e", {{m.e[i].at(z), 1.0}, {m.e[i - 1].at(z), -1.0}}, Relation::GreaterEqual, 0.0);
        // energized only if it was, or through a switch closed now
        std::vector<Term> terms{{m.e[i].at(z), 1.0}};
        double rhs = 0.0;
        e_prev(z, terms, rhs, -1.0);
        for (std::size_t k : topo_.zones[z].switches) {
          if (m.s[i].count(k)) terms.push_back({m.s[i].at(k), -1.0});
        }
        p.add_constraint("reach", std::move(terms), Relation::LessEqual, rhs);
      }
      for (std::size_t k : m.switches) {
        if (hist.closed[k]) continue;
        const auto& sw = topo_.switches[k];
        if (i > 0) p.add_constraint("mono_s", {{m.s[i].at(k), 1.0}, {m.s[i - 1].at(k), -1.0}}, Relation::GreaterEqual, 0.0);
        std::vector<Term> terms{{m.s[i].at(k), 1.0}};
        double rhs = 0.0;
        e_prev(sw.z_from, terms, rhs, -1.0);
        e_prev(sw.z_to, terms, rhs, -1.0);
        p.add_constraint("hop", std::move(terms), Relation::LessEqual, rhs);
        p.add_constraint("s_e1", {{m.s[i].at(k), 1.0}, {m.e[i].at(sw.z_from), -1.0}}, Relation::LessEqual, 0.0);
        p.add_constraint("s_e2", {{m.s[i].at(k), 1.0}, {m.e[i].at(sw.z_to), -1.0}}, Relation::LessEqual, 0.0);
      }
      for (std::size_t l : m.loads) {
        std::vector<Term> terms;
        for (int j = 0; j <= i; ++j) terms.push_back({m.y[j].at(l), 1.0});
        terms.push_back({m.e[i].at(topo_.load_zone[l]), -1.0});
        p.add_constraint("pick", std::move(terms), Relation::LessEqual, 0.0);
      }
      if (!opt_.merge_microgrids) {
        for (const auto& path : topo_.gfm_paths) {
          std::vector<Term> terms;
          double rhs = static_cast<double>(path.size()) - 1.0;
          bool open_outside = false;
          for (std::size_t k : path) {
            if (hist.closed[k]) rhs -= 1.0;
            else if (m.s[i].count(k)) terms.push_back({m.s[i].at(k), 1.0});
            else open_outside = true;
          }
          if (!open_outside && !terms.empty()) p.add_constraint("separate", std::move(terms), Relation::LessEqual, rhs);
        }
      }
    }

    // Generation, switch flows, zone balance, ramping.
    const double qr = q_ratio();
    std::vector<std::map<std::pair<std::size_t, int>, int>> pg(n), qg(n), fp(n), fq(n);
    for (int i = 0; i < n; ++i) {
      const int t = first + i;
      const std::string st = "t" + std::to_string(t);
      for (std::size_t z : zones) {
        const bool fixed = hist.zone_on[z] || topo_.zones[z].has_gfm;
        for (std::size_t g : topo_.zones[z].ibrs) {
          const auto& ibr = f_.ibrs()[g];
          for (int ph = 0; ph < 3; ++ph) {
            if (!has_phase(ibr.phases, ph)) continue;
            const int pv = p.add_variable(st + ".P" + ibr.id + feeder::phase_name(ph), 0.0, ibr.pmax_kw);
            pg[i][{g, ph}] = pv;
            int qv = -1;
            if (opt_.reactive) {
              qv = p.add_variable(st + ".Q" + ibr.id + feeder::phase_name(ph), 0.0, ibr.qmax_kvar);
              qg[i][{g, ph}] = qv;
            }
            if (!fixed) {
              p.add_constraint("gen_on", {{pv, 1.0}, {m.e[i].at(z), -ibr.pmax_kw}}, Relation::LessEqual, 0.0);
              if (qv >= 0) p.add_constraint("genq_on", {{qv, 1.0}, {m.e[i].at(z), -ibr.qmax_kvar}}, Relation::LessEqual, 0.0);
            }
          }
        }
      }
      for (std::size_t k : m.switches) {
        const auto& line = f_.lines()[topo_.switches[k].line];
        for (int ph = 0; ph < 3; ++ph) {
          if (!has_phase(line.phases, ph)) continue;
          const int pv = p.add_variable(st + ".F" + line.id + feeder::phase_name(ph), -line.pmax_kw, line.pmax_kw);
          fp[i][{k, ph}] = pv;
          int qv = -1;
          if (opt_.reactive) {
            qv = p.add_variable(st + ".FQ" + line.id + feeder::phase_name(ph), -line.qmax_kvar, line.qmax_kvar);
            fq[i][{k, ph}] = qv;
          }
          if (!hist.closed[k]) {
            const int sv = m.s[i].at(k);
            p.add_constraint("flow_hi", {{pv, 1.0}, {sv, -line.pmax_kw}}, Relation::LessEqual, 0.0);
            p.add_constraint("flow_lo", {{pv, 1.0}, {sv, line.pmax_kw}}, Relation::GreaterEqual, 0.0);
            if (qv >= 0) {
              p.add_constraint("flowq_hi", {{qv, 1.0}, {sv, -line.qmax_kvar}}, Relation::LessEqual, 0.0);
              p.add_constraint("flowq_lo", {{qv, 1.0}, {sv, line.qmax_kvar}}, Relation::GreaterEqual, 0.0);
            }
          }
        }
      }
      for (std::size_t z : zones) {
        for (int ph = 0; ph < 3; ++ph) {
          std::vector<Term> pt, qt;
          double pconst = 0.0;
          for (std::size_t g : topo_.zones[z].ibrs) {
            if (!has_phase(f_.ibrs()[g].phases, ph)) continue;
            pt.push_back({pg[i].at({g, ph}), 1.0});
            if (opt_.reactive) qt.push_back({qg[i].at({g, ph}), 1.0});
          }
          for (std::size_t k : m.switches) {
            const auto& sw = topo_.switches[k];
            if (!fp[i].count({k, ph})) continue;
            const double sign = sw.z_to == z ? 1.0 : (sw.z_from == z ? -1.0 : 0.0);
            if (sign == 0.0) continue;
            pt.push_back({fp[i].at({k, ph}), sign});
            if (opt_.reactive) qt.push_back({fq[i].at({k, ph}), sign});
          }
          for (std::size_t l : topo_.zones[z].loads) {
            const auto& load = f_.loads()[l];
            if (!has_phase(load.phases, ph)) continue;
            const double share = 1.0 / feeder::phase_count(load.phases);
            if (hist.pickup[l] > 0) {
              pconst += demand(l, hist.pickup[l], t) * share;
              continue;
            }
            for (int j = 0; j <= i; ++j) {
              const double d = demand(l, first + j, t) * share;
              if (d == 0.0) continue;
              pt.push_back({m.y[j].at(l), -d});
              if (opt_.reactive) qt.push_back({m.y[j].at(l), -d * qr});
            }
          }
          if (pt.empty() && pconst == 0.0) continue;
          p.add_constraint("bal_p", std::move(pt), Relation::Equal, pconst);
          if (opt_.reactive) p.add_constraint("bal_q", std::move(qt), Relation::Equal, pconst * qr);
        }
        for (std::size_t g : topo_.zones[z].ibrs) {
          const auto& ibr = f_.ibrs()[g];
          if (ibr.kind != IbrKind::Gfm || t < 2) continue;
          const double cap = ramp_cap_kw(ibr, 1, t);
          for (int ph = 0; ph < 3; ++ph) {
            if (!has_phase(ibr.phases, ph)) continue;
            const int cur = pg[i].at({g, ph});
            if (i > 0) {
              const int prev = pg[i - 1].at({g, ph});
              p.add_constraint("ramp_up", {{cur, 1.0}, {prev, -1.0}}, Relation::LessEqual, cap);
              p.add_constraint("ramp_dn", {{cur, 1.0}, {prev, -1.0}}, Relation::GreaterEqual, -cap);
            } else {
              const double prev = hist.gfm_prev.count(g) ? hist.gfm_prev.at(g)[ph] : 0.0;
              p.add_constraint("ramp_up", {{cur, 1.0}}, Relation::LessEqual, prev + cap);
              p.add_constraint("ramp_dn", {{cur, 1.0}}, Relation::GreaterEqual, prev - cap);
            }
          }
        }
      }
    }
    return m;
  }

  struct Cut {
    std::vector<int> ones, zeros;
  };

  static void add_cuts(lp::Problem& p, const std::vector<Cut>& cuts) {
    for (const auto& c : cuts) {
      std::vector<Term> terms;
      for (int v : c.ones) terms.push_back({v, -1.0});
      for (int v : c.zeros) terms.push_back({v, 1.0});
      p.add_constraint("nogood", std::move(terms), Relation::GreaterEqual, 1.0 - static_cast<double>(c.ones.size()));
    }
  }

  std::vector<double> solve_model(Model& m, const std::vector<Cut>& cuts) {
    lp::Problem p = m.problem;
    add_cuts(p, cuts);
    lp::MilpOptions mo;
    mo.gap_tol = opt_.gap_tol;
    mo.node_limit = opt_.node_limit;
    const auto out = lp::solve_milp(p, m.binaries, mo);
    if (out.status == lp::Status::NodeLimit) {
      if (!out.has_incumbent) throw Error(ErrorCode::NodeLimitReached, "restoration MILP hit its node limit");
      node_limit_hit_ = true;
      return out.values;
    }
    if (out.status != lp::Status::Optimal) {
      std::string zones;
      for (std::size_t z : m.zones) zones += " " + std::to_string(topo_.zones[z].buses.front());
      throw Error(ErrorCode::Infeasible, "no feasible schedule for stages " + std::to_string(m.first) + "-" +
                                             std::to_string(m.last) + " over zones rooted at" + zones +
                                             " after " + std::to_string(cuts.size()) + " cuts");
    }
    return out.values;
  }

  Cut nogood(const Model& m, const std::vector<double>& x) const {
    Cut c;
    for (int b : m.binaries) {
      if (x[static_cast<std::size_t>(b)] > 0.5) c.ones.push_back(b);
      else c.zeros.push_back(b);
    }
    return c;
  }

  // -------------------------------------------------------------------------
  // Full-network check.

  std::map<int, PhaseVec> bus_loads(int t, const std::vector<int>& pickup, const std::set<int>& buses, bool reactive) const {
    std::map<int, PhaseVec> out;
    for (std::size_t l = 0; l < f_.loads().size(); ++l) {
      const auto& load = f_.loads()[l];
      if (pickup[l] == 0 || pickup[l] > t || !buses.count(load.bus)) continue;
      auto pv = per_phase(load, demand(l, pickup[l], t));
      if (reactive) {
        for (double& v : pv) v *= q_ratio();
      }
      auto& slot = out[load.bus];
      for (int p = 0; p < 3; ++p) slot[p] += pv[p];
    }
    return out;
  }

  std::map<std::size_t, network::IbrLimits> ibr_limits(const std::vector<std::size_t>& ibrs) const {
    std::map<std::size_t, network::IbrLimits> lim;
    for (std::size_t g : ibrs) {
      const auto& ibr = f_.ibrs()[g];
      network::IbrLimits L;
      for (int p = 0; p < 3; ++p) {
        if (!has_phase(ibr.phases, p)) continue;
        L.p_hi[p] = ibr.pmax_kw;
        L.q_hi[p] = ibr.qmax_kvar;
      }
      lim[g] = L;
    }
    return lim;
  }

  /// Adds weight * |expr - ref| to the objective.
  static void add_abs_dev(network::TaggedProblem& tp, const feeder::Ibr& ibr, int ph, std::vector<Term> expr,
                          double ref, double weight) {
    const int d = tp.problem.add_variable("dev", 0.0, lp::kInf, weight);
    std::vector<Term> up{{d, 1.0}}, down{{d, 1.0}};
    for (const auto& t : expr) {
      up.push_back({t.var, -t.coef});
      down.push_back({t.var, t.coef});
    }
    tp.add_row({network::RowKind::Auxiliary, ibr.bus, ph, ibr.id}, std::move(up), Relation::GreaterEqual, -ref);
    tp.add_row({network::RowKind::Auxiliary, ibr.bus, ph, ibr.id}, std::move(down), Relation::GreaterEqual, ref);
  }

  struct CheckItem {
    int stage;
    std::set<int> buses;
    std::set<std::string> closed;
  };

  /// Solves the dispatch LP over the listed island-stages (ramps link consecutive stages of the same unit).
  /// Returns nullopt when infeasible.
  std::optional<std::map<int, StageDispatch>> check(const std::vector<CheckItem>& items,
                                                     const std::vector<int>& pickup,
                                                     const std::map<std::size_t, PhaseVec>& prev_stage_gfm,
                                                     int prev_stage) const {
    network::TaggedProblem tp;
    tp.problem.sense = lp::Sense::Minimize;
    network::BuildOptions bo;
    bo.voltage = opt_.voltage;
    bo.reactive = opt_.reactive;
    const double base = network::kw_per_pu(f_);
    std::map<std::pair<int, std::size_t>, std::map<int, int>> gfm_vars;  // (stage, ibr) -> phase -> var
    std::vector<std::pair<int, network::StageVars>> built;
    for (const auto& it : items) {
      network::IslandSpec spec;
      spec.buses = it.buses;
      spec.lines = network::energized_lines(f_, it.buses, it.closed);
      spec.ibrs = network::energized_ibrs(f_, it.buses);
      spec.load_p_kw = bus_loads(it.stage, pickup, it.buses, false);
      if (opt_.reactive) spec.load_q_kvar = bus_loads(it.stage, pickup, it.buses, true);
      const auto vars = network::add_island(tp, f_, spec, ibr_limits(spec.ibrs), bo,
                                            "t" + std::to_string(it.stage) + ".");
      for (std::size_t g : spec.ibrs) {
        const auto& ibr = f_.ibrs()[g];
        if (ibr.kind != IbrKind::Gfm) continue;
        for (int ph = 0; ph < 3; ++ph) {
          if (!has_phase(ibr.phases, ph)) continue;
          const int pv = vars.p_ibr.at({g, ph});
          gfm_vars[{it.stage, g}][ph] = pv;
          add_abs_dev(tp, ibr, ph, {{pv, 1.0}}, opt_.gfm_target_fraction * ibr.pmax_kw / base, opt_.target_weight);
          if (opt_.reactive) {
            add_abs_dev(tp, ibr, ph, {{vars.q_ibr.at({g, ph}), 1.0}}, opt_.gfm_target_fraction * ibr.qmax_kvar / base,
                        opt_.target_weight);
          }
        }
      }
      built.emplace_back(it.stage, vars);
    }
    for (const auto& [key, phases] : gfm_vars) {
      const auto [t, g] = key;
      if (t < 2) continue;
      const auto& ibr = f_.ibrs()[g];
      const double cap = ramp_cap_kw(ibr, 1, t) / base;
      auto prev_it = gfm_vars.find({t - 1, g});
      for (const auto& [ph, var] : phases) {
        if (prev_it != gfm_vars.end()) {
          const int pv = prev_it->second.at(ph);
          add_abs_dev(tp, ibr, ph, {{var, 1.0}, {pv, -1.0}}, 0.0, 1.0);
          tp.add_row({network::RowKind::Ramping, ibr.bus, ph, ibr.id}, {{var, 1.0}, {pv, -1.0}}, Relation::LessEqual, cap);
          tp.add_row({network::RowKind::Ramping, ibr.bus, ph, ibr.id}, {{var, 1.0}, {pv, -1.0}}, Relation::GreaterEqual, -cap);
        } else if (prev_stage == t - 1 && prev_stage_gfm.count(g)) {
          const double prev = prev_stage_gfm.at(g)[ph] / base;
          add_abs_dev(tp, ibr, ph, {{var, 1.0}}, prev, 1.0);
          tp.add_row({network::RowKind::Ramping, ibr.bus, ph, ibr.id}, {{var, 1.0}}, Relation::LessEqual, prev + cap);
          tp.add_row({network::RowKind::Ramping, ibr.bus, ph, ibr.id}, {{var, 1.0}}, Relation::GreaterEqual, prev - cap);
        }
      }
    }
    lp::LpOptions lo;
    lo.compute_hint = false;
    const auto out = lp::solve_lp(tp.problem, lo);
    if (out.status != lp::Status::Optimal) return std::nullopt;
    std::map<int, StageDispatch> result;
    for (const auto& [t, vars] : built) {
      auto& d = result[t];
      for (const auto& [key, var] : vars.p_ibr) d.ibr[key.first].p[key.second] = out.values[static_cast<std::size_t>(var)] * base;
      for (const auto& [key, var] : vars.q_ibr) d.ibr[key.first].q[key.second] = out.values[static_cast<std::size_t>(var)] * base;
    }
    return result;
  }

  std::set<std::string> closed_ids(const std::vector<char>& closed) const {
    std::set<std::string> out;
    for (std::size_t k = 0; k < closed.size(); ++k) {
      if (closed[k]) out.insert(f_.lines()[topo_.switches[k].line].id);
    }
    return out;
  }

  // -------------------------------------------------------------------------
  void solve_joint(Schedule& sched, std::vector<StageDispatch>& dispatch) {
    State hist = empty_state();
    std::vector<std::size_t> all(topo_.zones.size());
    std::iota(all.begin(), all.end(), 0);
    Model m = build_model(1, in_.stages, all, hist);
    std::vector<Cut> cuts;
    for (;;) {
      const auto x = solve_model(m, cuts);
      Schedule s = extract(m, x, hist);
      std::vector<CheckItem> items;
      for (int t = 1; t <= in_.stages; ++t) {
        const auto closed = closed_ids(s.closed[static_cast<std::size_t>(t - 1)]);
        for (auto& island : feeder::energized_islands(f_, closed, gfm_buses_)) items.push_back({t, island, closed});
      }
      const auto res = check(items, s.pickup, {}, 0);
      if (res) {
        sched = std::move(s);
        dispatch.assign(static_cast<std::size_t>(in_.stages), {});
        for (const auto& [t, d] : *res) {
          for (const auto& [g, pq] : d.ibr) dispatch[static_cast<std::size_t>(t - 1)].ibr[g] = pq;
        }
        return;
      }
      if (++cuts_ > opt_.max_cuts) throw Error(ErrorCode::Infeasible, "no schedule passes the network check");
      cuts.push_back(nogood(m, x));
    }
  }

  State empty_state() const {
    State s;
    s.zone_on.assign(topo_.zones.size(), 0);
    s.closed.assign(topo_.switches.size(), 0);
    s.pickup.assign(f_.loads().size(), 0);
    return s;
  }

  Schedule extract(const Model& m, const std::vector<double>& x, const State& hist) const {
    Schedule s;
    const int n = m.last - m.first + 1;
    s.pickup = hist.pickup;
    for (int i = 0; i < n; ++i) {
      std::vector<char> zon = hist.zone_on, cl = hist.closed;
      for (const auto& [z, v] : m.e[static_cast<std::size_t>(i)]) zon[z] = x[static_cast<std::size_t>(v)] > 0.5;
      for (const auto& [k, v] : m.s[static_cast<std::size_t>(i)]) cl[k] = x[static_cast<std::size_t>(v)] > 0.5;
      for (const auto& [l, v] : m.y[static_cast<std::size_t>(i)]) {
        if (x[static_cast<std::size_t>(v)] > 0.5) s.pickup[l] = m.first + i;
      }
      s.zone_on.push_back(std::move(zon));
      s.closed.push_back(std::move(cl));
    }
    return s;
  }

  /// Components of the stage-t candidate graph: energized zones and their one-hop neighbours.
  std::vector<std::vector<std::size_t>> components(const State& hist) const {
    const std::size_t nz = topo_.zones.size();
    std::vector<char> active(nz, 0);
    for (std::size_t z = 0; z < nz; ++z) active[z] = hist.zone_on[z] || topo_.zones[z].has_gfm;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t k = 0; k < topo_.switches.size(); ++k) {
      const auto& sw = topo_.switches[k];
      if (hist.closed[k]) {
        edges.emplace_back(sw.z_from, sw.z_to);
      } else if (hist.zone_on[sw.z_from] || hist.zone_on[sw.z_to]) {
        active[sw.z_from] = active[sw.z_to] = 1;
        edges.emplace_back(sw.z_from, sw.z_to);
      }
    }
    std::vector<std::size_t> parent(nz);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t a) {
      while (parent[a] != a) a = parent[a] = parent[parent[a]];
      return a;
    };
    for (const auto& [a, b] : edges) parent[find(a)] = find(b);
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t z = 0; z < nz; ++z) {
      if (active[z]) groups[find(z)].push_back(z);
    }
    std::vector<std::vector<std::size_t>> out;
    for (auto& [r, zs] : groups) out.push_back(std::move(zs));
    std::sort(out.begin(), out.end());
    return out;
  }

  void solve_rolling(Schedule& sched, std::vector<StageDispatch>& dispatch) {
    State hist = empty_state();
    for (int t = 1; t <= in_.stages; ++t) {
      const auto comps = components(hist);
      std::vector<Model> models;
      std::vector<std::vector<Cut>> cuts(comps.size());
      std::vector<Schedule> parts(comps.size());
      std::vector<std::vector<double>> sols(comps.size());
      for (std::size_t c = 0; c < comps.size(); ++c) {
        models.push_back(build_model(t, t, comps[c], hist));
        sols[c] = solve_model(models[c], cuts[c]);
      }
      for (;;) {
        State next = hist;
        next.stage = t;
        for (std::size_t c = 0; c < comps.size(); ++c) {
          const auto s = extract(models[c], sols[c], hist);
          for (std::size_t z : comps[c]) next.zone_on[z] = s.zone_on[0][z];
          for (std::size_t k : models[c].switches) next.closed[k] = s.closed[0][k];
          for (std::size_t l : models[c].loads) next.pickup[l] = s.pickup[l];
        }
        for (std::size_t z = 0; z < topo_.zones.size(); ++z) {
          if (topo_.zones[z].has_gfm) next.zone_on[z] = 1;
        }
        const auto closed = closed_ids(next.closed);
        bool all_ok = true;
        StageDispatch stage_dispatch;
        for (auto& island : feeder::energized_islands(f_, closed, gfm_buses_)) {
          std::vector<CheckItem> items;
          for (int u = t; u <= in_.stages; ++u) items.push_back({u, island, closed});
          const auto res = check(items, next.pickup, hist.gfm_prev, t - 1);
          if (res) {
            for (const auto& [g, pq] : res->at(t).ibr) stage_dispatch.ibr[g] = pq;
            continue;
          }
          all_ok = false;
          const std::size_t zone = f_.zone_of(*std::find_if(island.begin(), island.end(),
                                                            [&](int b) { return gfm_buses_.count(b) > 0; }));
          for (std::size_t c = 0; c < comps.size(); ++c) {
            if (std::find(comps[c].begin(), comps[c].end(), zone) == comps[c].end()) continue;
            if (++cuts_ > opt_.max_cuts) throw Error(ErrorCode::Infeasible, "no schedule passes the network check");
            cuts[c].push_back(nogood(models[c], sols[c]));
            sols[c] = solve_model(models[c], cuts[c]);
          }
          break;
        }
        if (!all_ok) continue;
        for (const auto& [g, pq] : stage_dispatch.ibr) {
          if (f_.ibrs()[g].kind == IbrKind::Gfm) next.gfm_prev[g] = pq.p;
        }
        sched.zone_on.push_back(next.zone_on);
        sched.closed.push_back(next.closed);
        dispatch.push_back(std::move(stage_dispatch));
        hist = std::move(next);
        break;
      }
    }
    sched.pickup = hist.pickup;
  }

  // -------------------------------------------------------------------------
  void assemble(RestorationPlan& plan, const Schedule& sched, const std::vector<StageDispatch>& dispatch) const {
    for (std::size_t l = 0; l < f_.loads().size(); ++l) {
      if (sched.pickup[l] > 0) plan.pickup_stage[f_.loads()[l].id] = sched.pickup[l];
    }
    for (int t = 1; t <= in_.stages; ++t) {
      const auto idx = static_cast<std::size_t>(t - 1);
      StagePlan sp;
      sp.stage = t;
      const auto closed = closed_ids(sched.closed[idx]);
      sp.closed_switches.assign(closed.begin(), closed.end());
      for (const auto& id : closed) {
        if (!plan.closure_stage.count(id)) plan.closure_stage[id] = t;
      }
      const auto energized = feeder::energized_subgraph(f_, closed, gfm_buses_);
      sp.energized_buses.assign(energized.begin(), energized.end());
      for (std::size_t l = 0; l < f_.loads().size(); ++l) {
        const int pk = sched.pickup[l];
        if (pk == 0 || pk > t) continue;
        const auto& load = f_.loads()[l];
        sp.restored_loads.push_back(load.id);
        sp.planned_demand_kw[load.id] = demand(l, pk, t);
        plan.objective_kw += load.weight * forecast(l, t);
      }
      std::sort(sp.restored_loads.begin(), sp.restored_loads.end());
      for (std::size_t g = 0; g < f_.ibrs().size(); ++g) {
        const auto& ibr = f_.ibrs()[g];
        if (!energized.count(ibr.bus)) continue;
        sp.restored_ibrs.push_back(ibr.id);
        PhasePQ pq{};
        auto it = dispatch[idx].ibr.find(g);
        if (it != dispatch[idx].ibr.end()) pq = it->second;
        if (ibr.kind == IbrKind::Gfm) sp.gfm_dispatch[ibr.id] = pq;
        else sp.gfl_setpoints[ibr.id] = pq;
      }
      std::sort(sp.restored_ibrs.begin(), sp.restored_ibrs.end());
      plan.stage_plans.push_back(std::move(sp));
    }
  }

  const PlannerInput& in_;
  const Feeder& f_;
  const PlannerOptions& opt_;
  Topology topo_;
  std::set<int> gfm_buses_;
  bool node_limit_hit_ = false;
  int cuts_ = 0;
};

}  // namespace

RestorationPlan plan_restoration(const PlannerInput& input) {
  if (input.feeder == nullptr) throw Error(ErrorCode::InvalidConfig, "planner input has no feeder");
  return Planner(input).run();
}

// ---------------------------------------------------------------------------
// diff

namespace {

std::vector<std::string> minus(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::string> sa(a), sb(b), out;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  std::set_difference(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(out));
  return out;
}

}  // namespace

bool StageDiff::sequence_identical() const {
  return switches_only_a.empty() && switches_only_b.empty() && loads_only_a.empty() && loads_only_b.empty();
}

bool PlanDiff::sequence_identical() const {
  return std::all_of(stages.begin(), stages.end(), [](const StageDiff& s) { return s.sequence_identical(); });
}

bool PlanDiff::empty() const { return entry_count() == 0; }

std::size_t PlanDiff::entry_count() const {
  std::size_t n = 0;
  for (const auto& s : stages) {
    n += s.switches_only_a.size() + s.switches_only_b.size() + s.loads_only_a.size() + s.loads_only_b.size() +
         s.setpoint_deltas.size();
  }
  return n;
}

PlanDiff plan_diff(const RestorationPlan& a, const RestorationPlan& b) {
  if (a.stages != b.stages || a.stage_plans.size() != b.stage_plans.size()) {
    throw Error(ErrorCode::ShapeMismatch, "plans cover different horizons");
  }
  PlanDiff diff;
  for (std::size_t i = 0; i < a.stage_plans.size(); ++i) {
    const auto& sa = a.stage_plans[i];
    const auto& sb = b.stage_plans[i];
    StageDiff d;
    d.stage = sa.stage;
    d.switches_only_a = minus(sa.closed_switches, sb.closed_switches);
    d.switches_only_b = minus(sb.closed_switches, sa.closed_switches);
    d.loads_only_a = minus(sa.restored_loads, sb.restored_loads);
    d.loads_only_b = minus(sb.restored_loads, sa.restored_loads);
    auto compare = [&](const std::map<std::string, PhasePQ>& ma, const std::map<std::string, PhasePQ>& mb) {
      std::set<std::string> ids;
      for (const auto& [id, v] : ma) ids.insert(id);
      for (const auto& [id, v] : mb) ids.insert(id);
      for (const auto& id : ids) {
        const PhasePQ za = ma.count(id) ? ma.at(id) : PhasePQ{};
        const PhasePQ zb = mb.count(id) ? mb.at(id) : PhasePQ{};
        for (int p = 0; p < 3; ++p) {
          const double dp = zb.p[p] - za.p[p];
          const double dq = zb.q[p] - za.q[p];
          if (std::abs(dp) > 1e-6 || std::abs(dq) > 1e-6) d.setpoint_deltas.push_back({id, p, dp, dq});
        }
      }
    };
    compare(sa.gfl_setpoints, sb.gfl_setpoints);
    compare(sa.gfm_dispatch, sb.gfm_dispatch);
    diff.stages.push_back(std::move(d));
  }
  return diff;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

using nlohmann::json;

json pq_json(const std::map<std::string, PhasePQ>& m) {
  json out = json::object();
  for (const auto& [id, pq] : m) {
    out[id] = {{"p_kw", std::vector<double>(pq.p.begin(), pq.p.end())},
               {"q_kvar", std::vector<double>(pq.q.begin(), pq.q.end())}};
  }
  return out;
}

std::map<std::string, PhasePQ> pq_from(const json& j) {
  std::map<std::string, PhasePQ> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    PhasePQ pq;
    const auto p = it.value().at("p_kw").get<std::vector<double>>();
    const auto q = it.value().at("q_kvar").get<std::vector<double>>();
    if (p.size() != 3 || q.size() != 3) throw Error(ErrorCode::SchemaError, "setpoints need three phases");
    std::copy(p.begin(), p.end(), pq.p.begin());
    std::copy(q.begin(), q.end(), pq.q.begin());
    out[it.key()] = pq;
  }
  return out;
}

}  // namespace

std::string plan_to_json(const RestorationPlan& plan) {
  json j;
  j["stages"] = plan.stages;
  j["start_hour"] = plan.clock.start_hour;
  j["stage_minutes"] = plan.clock.stage_minutes;
  j["clpu_enabled"] = plan.clpu_enabled;
  j["power_factor"] = plan.power_factor;
  j["objective_kw"] = plan.objective_kw;
  j["node_limit_reached"] = plan.node_limit_reached;
  j["cuts"] = plan.cuts;
  j["joint"] = plan.joint;
  j["pickup_stage"] = plan.pickup_stage;
  j["closure_stage"] = plan.closure_stage;
  json stages = json::array();
  for (const auto& s : plan.stage_plans) {
    json st;
    st["stage"] = s.stage;
    st["switches"] = s.closed_switches;
    st["loads"] = s.restored_loads;
    st["ibrs"] = s.restored_ibrs;
    st["energized_buses"] = s.energized_buses;
    st["setpoints"] = {{"gfl", pq_json(s.gfl_setpoints)}, {"gfm", pq_json(s.gfm_dispatch)}};
    st["planned_demand_kw"] = s.planned_demand_kw;
    stages.push_back(st);
  }
  j["stage_plans"] = stages;
  return j.dump(1);
}

RestorationPlan plan_from_json(std::string_view text) {
  RestorationPlan plan;
  try {
    const auto j = json::parse(text);
    plan.stages = j.at("stages").get<int>();
    plan.clock.start_hour = j.at("start_hour").get<int>();
    plan.clock.stage_minutes = j.at("stage_minutes").get<double>();
    plan.clpu_enabled = j.at("clpu_enabled").get<bool>();
    plan.power_factor = j.at("power_factor").get<double>();
    plan.objective_kw = j.at("objective_kw").get<double>();
    plan.node_limit_reached = j.value("node_limit_reached", false);
    plan.cuts = j.value("cuts", 0);
    plan.joint = j.value("joint", false);
    plan.pickup_stage = j.at("pickup_stage").get<std::map<std::string, int>>();
    plan.closure_stage = j.value("closure_stage", std::map<std::string, int>{});
    for (const auto& st : j.at("stage_plans")) {
      StagePlan s;
      s.stage = st.at("stage").get<int>();
      s.closed_switches = st.at("switches").get<std::vector<std::string>>();
      s.restored_loads = st.at("loads").get<std::vector<std::string>>();
      s.restored_ibrs = st.at("ibrs").get<std::vector<std::string>>();
      s.energized_buses = st.at("energized_buses").get<std::vector<int>>();
      s.gfl_setpoints = pq_from(st.at("setpoints").at("gfl"));
      s.gfm_dispatch = pq_from(st.at("setpoints").at("gfm"));
      s.planned_demand_kw = st.at("planned_demand_kw").get<std::map<std::string, double>>();
      plan.stage_plans.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("plan JSON is malformed: ") + e.what());
  }
  if (plan.stage_plans.size() != static_cast<std::size_t>(plan.stages)) {
    throw Error(ErrorCode::SchemaError, "plan stage count does not match its stage list");
  }
  return plan;
}

std::string plan_diff_to_json(const PlanDiff& diff) {
  json j;
  j["sequence_identical"] = diff.sequence_identical();
  j["entries"] = diff.entry_count();
  json stages = json::array();
  for (const auto& s : diff.stages) {
    json d;
    d["stage"] = s.stage;
    d["switches_only_a"] = s.switches_only_a;
    d["switches_only_b"] = s.switches_only_b;
    d["loads_only_a"] = s.loads_only_a;
    d["loads_only_b"] = s.loads_only_b;
    json deltas = json::array();
    for (const auto& dl : s.setpoint_deltas) {
      deltas.push_back({{"ibr", dl.ibr}, {"phase", std::string(1, feeder::phase_name(dl.phase))},
                        {"p_kw", dl.p_kw}, {"q_kvar", dl.q_kvar}});
    }
    d["setpoint_deltas"] = deltas;
    stages.push_back(d);
  }
  j["stages"] = stages;
  return j.dump(1);
}

double balance_residual_pu(const Feeder& feeder, const RestorationPlan& plan, int stage) {
  if (stage < 1 || stage > plan.stages) throw Error(ErrorCode::IndexOutOfRange, "stage outside the plan");
  const auto& sp = plan.stage_plans[static_cast<std::size_t>(stage - 1)];
  const std::set<std::string> closed(sp.closed_switches.begin(), sp.closed_switches.end());
  std::set<int> sources;
  for (int b : feeder.gfm_buses()) sources.insert(b);
  const double base = network::kw_per_pu(feeder);
  double worst = 0.0;
  for (const auto& island : feeder::energized_islands(feeder, closed, sources)) {
    PhaseVec net{};
    for (const auto& ibr : feeder.ibrs()) {
      if (!island.count(ibr.bus)) continue;
      const auto& m = ibr.kind == IbrKind::Gfm ? sp.gfm_dispatch : sp.gfl_setpoints;
      auto it = m.find(ibr.id);
      if (it == m.end()) continue;
      for (int p = 0; p < 3; ++p) net[p] += it->second.p[p];
    }
    for (const auto& load : feeder.loads()) {
      if (!island.count(load.bus)) continue;
      auto it = sp.planned_demand_kw.find(load.id);
      if (it == sp.planned_demand_kw.end()) continue;
      const auto share = per_phase(load, it->second);
      for (int p = 0; p < 3; ++p) net[p] -= share[p];
    }
    for (double v : net) worst = std::max(worst, std::abs(v) / base);
  }
  return worst;
}

}  // namespace restorisk::planner
