#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "restorisk/clpu.hpp"
#include "restorisk/error.hpp"
#include "restorisk/feeder.hpp"
#include "restorisk/planner.hpp"
#include "fixtures.hpp"

using namespace restorisk;

namespace {

feeder::Feeder toy() { return feeder::load_feeder(std::string(RESTORISK_DATA_DIR) + "/toy_feeder.json"); }

}  // namespace



TEST_CASE("stage clock and demand helpers") {
  planner::StageClock clock;
  CHECK(clock.hour_of(1) == 8);
  CHECK(clock.hour_of(5) == 12);
  clock.stage_minutes = 30;
  CHECK(clock.hour_of(3) == 9);

  const auto f = toy();
  const auto& d4 = f.loads()[2];
  CHECK(planner::stage_demand_kw(d4, 150, 0, 2, {}, true) == 0.0);
  CHECK(planner::stage_demand_kw(d4, 150, 3, 2, {}, true) == 0.0);
  CHECK(planner::stage_demand_kw(d4, 150, 2, 2, {}, true) == doctest::Approx(150 * 2.33));
  CHECK(planner::stage_demand_kw(d4, 150, 2, 2, {}, false) == 150.0);
  const auto split = planner::per_phase(d4, 150);
  CHECK(split[0] == 50.0);
  CHECK(split[2] == 50.0);

  const auto& g = f.ibrs()[0];
  CHECK(std::isinf(planner::ramp_cap_kw(g, 1, 1)));
  CHECK(planner::ramp_cap_kw(g, 1, 2) == doctest::Approx(20.0));
  CHECK(planner::ramp_cap_kw(g, 1, 3) == doctest::Approx(35.0));
}

TEST_CASE("joint plan matches the exhaustive schedule optimum") {
  const auto f = toy();
  for (bool clpu_on : {true, false}) {
    CAPTURE(clpu_on);
    auto in = fixtures::toy_input(f);
    in.options.clpu_enabled = clpu_on;
    const auto plan = planner::plan_restoration(in);
    CHECK(plan.joint);
    CHECK_FALSE(plan.node_limit_reached);
    const double best = fixtures::toy_best(clpu_on);
    REQUIRE(best > 0.0);
    CHECK(plan.objective_kw == doctest::Approx(best).epsilon(1e-9));
    CHECK(fixtures::toy_feasible(fixtures::schedule_of(plan), clpu_on));
    for (int t = 1; t <= plan.stages; ++t) CHECK(planner::balance_residual_pu(f, plan, t) <= 1e-6);
  }
}

TEST_CASE("rolling plan is feasible and no better than the joint optimum") {
  const auto f = toy();
  auto in = fixtures::toy_input(f);
  in.options.joint_binary_limit = 0;
  const auto plan = planner::plan_restoration(in);
  CHECK_FALSE(plan.joint);
  CHECK(fixtures::toy_feasible(fixtures::schedule_of(plan), true));
  CHECK(plan.objective_kw <= fixtures::toy_best(true) + 1e-6);
  CHECK(plan.objective_kw > 0.0);
  for (int t = 1; t <= plan.stages; ++t) CHECK(planner::balance_residual_pu(f, plan, t) <= 1e-6);
}

TEST_CASE("plan structure invariants") {
  const auto f = toy();
  const auto plan = planner::plan_restoration(fixtures::toy_input(f));
  REQUIRE(plan.stage_plans.size() == 3);
  CHECK(plan.stage_plans[0].closed_switches.empty());
  for (std::size_t i = 0; i < plan.stage_plans.size(); ++i) {
    const auto& sp = plan.stage_plans[i];
    const std::set<std::string> closed(sp.closed_switches.begin(), sp.closed_switches.end());
    const auto energized = feeder::energized_subgraph(f, closed, {1});
    for (const auto& id : sp.restored_loads) CHECK(energized.count(f.loads()[f.load_index(id)].bus));
    if (i > 0) {
      const auto& prev = plan.stage_plans[i - 1];
      for (const auto& s : prev.closed_switches) CHECK(closed.count(s));
      for (const auto& l : prev.restored_loads) {
        CHECK(std::find(sp.restored_loads.begin(), sp.restored_loads.end(), l) != sp.restored_loads.end());
      }
    }
    CHECK(sp.gfm_dispatch.count("G1"));
  }
}

TEST_CASE("planner is deterministic and round-trips through JSON") {
  const auto f = toy();
  const auto a = planner::plan_restoration(fixtures::toy_input(f));
  const auto b = planner::plan_restoration(fixtures::toy_input(f));
  CHECK(planner::plan_to_json(a) == planner::plan_to_json(b));
  CHECK(planner::plan_diff(a, b).empty());
  const auto back = planner::plan_from_json(planner::plan_to_json(a));
  CHECK(planner::plan_to_json(back) == planner::plan_to_json(a));
  CHECK_THROWS_AS(planner::plan_from_json("{\"stages\": 2}"), Error);
}

TEST_CASE("plan diff reports sequence and setpoint changes") {
  const auto f = toy();
  auto in = fixtures::toy_input(f);
  const auto a = planner::plan_restoration(in);
  in.forecasts_kw[2] = {150, 155, 400};
  in.options.clpu_enabled = false;
  const auto b = planner::plan_restoration(in);
  const auto d = planner::plan_diff(a, b);
  CHECK_FALSE(d.empty());
  in.stages = 2;
  const auto c = planner::plan_restoration(in);
  CHECK_THROWS_AS(planner::plan_diff(a, c), Error);
}

TEST_CASE("planner rejects malformed input") {
  const auto f = toy();
  auto in = fixtures::toy_input(f);
  in.forecasts_kw.pop_back();
  CHECK_THROWS_AS(planner::plan_restoration(in), Error);
  in = fixtures::toy_input(f);
  in.forecasts_kw[0][1] = -1.0;
  CHECK_THROWS_AS(planner::plan_restoration(in), Error);
  in = fixtures::toy_input(f);
  in.stages = 0;
  CHECK_THROWS_AS(planner::plan_restoration(in), Error);
}
