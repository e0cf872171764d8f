#pragma once

// Independent reference implementations shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <random>
#include <string>
#include <vector>

#include "restorisk/clpu.hpp"
#include "restorisk/feeder.hpp"
#include "restorisk/lp.hpp"
#include "restorisk/planner.hpp"

namespace fixtures {

using namespace restorisk;

// ---------- linear programs ----------

// Gaussian elimination with partial pivoting; false when singular.
inline bool solve_square(std::vector<std::vector<double>> a, std::vector<double> b, std::vector<double>& x) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    }
    if (std::abs(a[p][c]) < 1e-10) return false;
    std::swap(a[p], a[c]);
    std::swap(b[p], b[c]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  x.resize(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = b[i] / a[i][i];
  return true;
}

struct Halfspace {
  std::vector<double> a;
  double b;  // a.x <= b
};

// Best objective over all basic feasible points of {a.x <= b}.
inline double enumerate_vertices(const std::vector<Halfspace>& hs, const std::vector<double>& c, bool maximize) {
  const std::size_t n = c.size();
  double best = maximize ? -1e300 : 1e300;
  std::vector<bool> mask(hs.size(), false);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(n), true);
  do {
    std::vector<std::vector<double>> a;
    std::vector<double> b;
    for (std::size_t i = 0; i < hs.size(); ++i) {
      if (mask[i]) {
        a.push_back(hs[i].a);
        b.push_back(hs[i].b);
      }
    }
    std::vector<double> x;
    if (!solve_square(a, b, x)) continue;
    bool ok = true;
    for (const auto& h : hs) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += h.a[j] * x[j];
      if (s > h.b + 1e-7) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += c[j] * x[j];
    best = maximize ? std::max(best, z) : std::min(best, z);
  } while (std::prev_permutation(mask.begin(), mask.end()));
  return best;
}

struct LpTrial {
  lp::Problem problem;
  double expected = 0.0;
};

// Bounded 5-variable, 8-row LP with a known interior point, solved by vertex enumeration.
inline LpTrial random_lp(std::mt19937_64& rng, int trial) {
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  std::uniform_real_distribution<double> pos(0.1, 1.0);
  constexpr int n = 5;
  constexpr int m = 8;
  std::vector<double> x0(n), ub(n);
  for (int j = 0; j < n; ++j) {
    ub[j] = 1.0 + 3.0 * pos(rng);
    x0[j] = ub[j] * pos(rng) * 0.9;
  }
  LpTrial out;
  auto& p = out.problem;
  p.sense = trial % 2 == 0 ? lp::Sense::Maximize : lp::Sense::Minimize;
  std::vector<double> c(n);
  for (int j = 0; j < n; ++j) {
    c[j] = coef(rng);
    p.add_variable("x" + std::to_string(j), 0.0, ub[j], c[j]);
  }
  std::vector<Halfspace> hs;
  for (int i = 0; i < m; ++i) {
    std::vector<double> a(n);
    std::vector<lp::Term> terms;
    double act = 0.0;
    for (int j = 0; j < n; ++j) {
      a[j] = coef(rng);
      act += a[j] * x0[j];
      terms.push_back({j, a[j]});
    }
    const bool ge = i % 3 == 2;
    const double rhs = ge ? act - pos(rng) : act + pos(rng);
    p.add_constraint("r" + std::to_string(i), terms, ge ? lp::Relation::GreaterEqual : lp::Relation::LessEqual, rhs);
    if (ge) {
      std::vector<double> neg(n);
      for (int j = 0; j < n; ++j) neg[j] = -a[j];
      hs.push_back({neg, -rhs});
    } else {
      hs.push_back({a, rhs});
    }
  }
  for (int j = 0; j < n; ++j) {
    std::vector<double> e(n, 0.0);
    e[j] = 1.0;
    hs.push_back({e, ub[j]});
    e[j] = -1.0;
    hs.push_back({e, 0.0});
  }
  out.expected = enumerate_vertices(hs, c, p.sense == lp::Sense::Maximize);
  return out;
}

struct KnapsackTrial {
  lp::Problem problem;
  std::vector<int> binaries;
  int expected = 0;
};

// Two-constraint 12-item knapsack, solved by enumerating all 2^12 subsets.
inline KnapsackTrial random_knapsack(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> value(1, 40);
  std::uniform_int_distribution<int> weight(1, 30);
  constexpr int n = 12;
  std::vector<int> v(n), w(n), w2(n);
  for (int j = 0; j < n; ++j) {
    v[j] = value(rng);
    w[j] = weight(rng);
    w2[j] = weight(rng);
  }
  const int cap = 80, cap2 = 90;
  KnapsackTrial out;
  auto& p = out.problem;
  p.sense = lp::Sense::Maximize;
  std::vector<lp::Term> row, row2;
  for (int j = 0; j < n; ++j) {
    out.binaries.push_back(p.add_variable("b" + std::to_string(j), 0.0, 1.0, v[j]));
    row.push_back({j, static_cast<double>(w[j])});
    row2.push_back({j, static_cast<double>(w2[j])});
  }
  p.add_constraint("cap", row, lp::Relation::LessEqual, cap);
  p.add_constraint("cap2", row2, lp::Relation::LessEqual, cap2);
  for (int mask = 0; mask < (1 << n); ++mask) {
    int tv = 0, tw = 0, tw2 = 0;
    for (int j = 0; j < n; ++j) {
      if (mask & (1 << j)) {
        tv += v[j];
        tw += w[j];
        tw2 += w2[j];
      }
    }
    if (tw <= cap && tw2 <= cap2) out.expected = std::max(out.expected, tv);
  }
  return out;
}

// ---------- toy restoration feeder ----------
// Source zone {1,2} with G1 (100 kW/phase, load step 20 kW then +15 kW per stage), S23 to bus 3 (GFL,
// 30 kW/phase), S34 to bus 4. Loads D2, D3, D4 with weights 1, 1, 2.

inline const std::vector<std::vector<double>> kToyForecast = {{60, 62, 64}, {90, 85, 80}, {150, 155, 160}};

struct Schedule {
  int c23 = 0, c34 = 0;
  std::array<int, 3> pickup{};
};

inline double toy_demand(int load, int pickup, int t, bool clpu_on) {
  if (pickup == 0 || t < pickup) return 0.0;
  const double base = kToyForecast[load][t - 1];
  if (!clpu_on) return base;
  const int hour = 8 + pickup - 1;
  const auto type = load == 1 ? clpu::LoadType::Commercial : clpu::LoadType::Residential;
  const auto p = clpu::lookup_params(type, clpu::time_of_day(hour));
  return base * (1.0 + p.overshoot * std::exp(-(t - pickup) * 60.0 / p.decay_minutes));
}

// Stage-by-stage feasibility of a schedule over `stages` stages, tracking the reachable GFM output band.
inline bool toy_feasible(const Schedule& s, bool clpu_on, int stages = 3) {
  auto closed_by = [](int c, int t) { return c != 0 && c <= t; };
  auto zone3 = [&](int t) { return t >= 1 && closed_by(s.c23, t); };
  auto zone4 = [&](int t) { return zone3(t) && closed_by(s.c34, t); };
  if (s.c23 == 1 || s.c34 == 1) return false;
  if (s.c23 > stages || s.c34 > stages) return false;
  if (s.c34 != 0 && !zone3(s.c34 - 1)) return false;
  const std::array<int, 3> bus_of{2, 3, 4};
  for (int l = 0; l < 3; ++l) {
    const int p = s.pickup[l];
    if (p == 0) continue;
    if (p > stages) return false;
    if (bus_of[l] == 3 && !zone3(p)) return false;
    if (bus_of[l] == 4 && !zone4(p)) return false;
  }
  double lo = 0.0, hi = 0.0;
  for (int t = 1; t <= stages; ++t) {
    double d = 0.0;
    for (int l = 0; l < 3; ++l) d += toy_demand(l, s.pickup[l], t, clpu_on) / 3.0;
    const double gfl = zone3(t) ? 30.0 : 0.0;
    double rlo = std::max(0.0, d - gfl), rhi = std::min(100.0, d);
    if (t >= 2) {
      const double cap = 20.0 + (t - 2) * 15.0;
      rlo = std::max(rlo, lo - cap);
      rhi = std::min(rhi, hi + cap);
    }
    if (rlo > rhi + 1e-9) return false;
    lo = rlo;
    hi = rhi;
  }
  return true;
}

inline double toy_value(const Schedule& s, int stages = 3) {
  const std::array<double, 3> w{1.0, 1.0, 2.0};
  double v = 0.0;
  for (int l = 0; l < 3; ++l) {
    if (s.pickup[l] == 0) continue;
    for (int t = s.pickup[l]; t <= stages; ++t) v += w[l] * kToyForecast[l][t - 1];
  }
  return v;
}

// Best objective over every switch-closure and pickup schedule.
inline double toy_best(bool clpu_on, int stages = 3) {
  double best = -1.0;
  Schedule s;
  for (s.c23 = 0; s.c23 <= stages; ++s.c23)
    for (s.c34 = 0; s.c34 <= stages; ++s.c34)
      for (s.pickup[0] = 0; s.pickup[0] <= stages; ++s.pickup[0])
        for (s.pickup[1] = 0; s.pickup[1] <= stages; ++s.pickup[1])
          for (s.pickup[2] = 0; s.pickup[2] <= stages; ++s.pickup[2])
            if (toy_feasible(s, clpu_on, stages)) best = std::max(best, toy_value(s, stages));
  return best;
}

inline Schedule schedule_of(const planner::RestorationPlan& plan) {
  Schedule s;
  if (plan.closure_stage.count("S23")) s.c23 = plan.closure_stage.at("S23");
  if (plan.closure_stage.count("S34")) s.c34 = plan.closure_stage.at("S34");
  const std::array<const char*, 3> ids{"D2", "D3", "D4"};
  for (int l = 0; l < 3; ++l) {
    if (plan.pickup_stage.count(ids[l])) s.pickup[l] = plan.pickup_stage.at(ids[l]);
  }
  return s;
}

inline planner::PlannerInput toy_input(const feeder::Feeder& f, int stages = 3) {
  planner::PlannerInput in;
  in.feeder = &f;
  in.stages = stages;
  for (const auto& row : kToyForecast) in.forecasts_kw.emplace_back(row.begin(), row.begin() + stages);
  return in;
}

// ---------- two-bus network ----------

inline feeder::Line make_line(std::string id, int from, int to, feeder::PhaseSet phases, double r_self, double x_self,
                              double r_mut, double x_mut, bool is_switch = false) {
  feeder::Line l;
  l.id = std::move(id);
  l.from = from;
  l.to = to;
  l.phases = phases;
  l.is_switch = is_switch;
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) {
      if (!feeder::has_phase(phases, i) || !feeder::has_phase(phases, k)) continue;
      l.r_ohm[i][k] = i == k ? r_self : r_mut;
      l.x_ohm[i][k] = i == k ? x_self : x_mut;
    }
  }
  l.pmax_kw = 5000.0;
  l.qmax_kvar = 5000.0;
  return l;
}

inline feeder::Ibr make_gfm(std::string id, int bus, feeder::PhaseSet phases, double pmax, double qmax,
                            double mls = 50.0) {
  feeder::Ibr g;
  g.id = std::move(id);
  g.bus = bus;
  g.kind = feeder::IbrKind::Gfm;
  g.phases = phases;
  g.pmax_kw = pmax;
  g.qmax_kvar = qmax;
  g.ramp = {mls, 10.0, 59.8, 59.5};
  return g;
}

inline feeder::Feeder two_bus(feeder::PhaseSet phases, double r, double x, double r_mut, double x_mut, double pmax,
                              double qmax, double mls = 50.0, double kva = 1000.0) {
  return feeder::Feeder({kva, 4.16}, {{1, phases}, {2, phases}}, {make_line("L12", 1, 2, phases, r, x, r_mut, x_mut)},
                        {make_gfm("G1", 1, phases, pmax, qmax, mls)}, {});
}

// Exact unbalanced power flow on a two-bus line by fixed-point iteration on the load currents.
// Impedances in ohm (self, mutual), loads in kW / kvar per phase; returns |V2| per phase in pu.
inline std::array<double, 3> exact_two_bus_voltage(double kv, double kva, double rs, double xs, double rm, double xm,
                                                   const std::array<double, 3>& pl, const std::array<double, 3>& ql) {
  using C = std::complex<double>;
  const double zbase = 1000.0 * kv * kv / kva, sbase = kva / 3.0;
  std::array<std::array<C, 3>, 3> z;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) z[i][k] = C(i == k ? rs : rm, i == k ? xs : xm) / zbase;
  const double pi = std::acos(-1.0);
  const std::array<C, 3> v1{std::polar(1.0, 0.0), std::polar(1.0, -2 * pi / 3), std::polar(1.0, 2 * pi / 3)};
  std::array<C, 3> v2 = v1;
  for (int it = 0; it < 200; ++it) {
    std::array<C, 3> cur;
    for (int p = 0; p < 3; ++p) cur[p] = std::conj(C(pl[p], ql[p]) / sbase / v2[p]);
    for (int p = 0; p < 3; ++p) {
      C drop = 0.0;
      for (int k = 0; k < 3; ++k) drop += z[p][k] * cur[k];
      v2[p] = v1[p] - drop;
    }
  }
  return {std::abs(v2[0]), std::abs(v2[1]), std::abs(v2[2])};
}

}  // namespace fixtures
