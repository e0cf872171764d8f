#pragma once

#include <map>
#include <string>
#include <vector>

#include "restorisk/feeder.hpp"
#include "restorisk/planner.hpp"

namespace restorisk::scenarios {

/// A hand-built plan together with the demand it was planned for and the demand that actually shows up.
struct PlanScenario {
  feeder::Feeder feeder;
  planner::RestorationPlan plan;
  std::map<std::string, std::vector<double>> attacked_kw;  // [load][stage - 1]
  std::map<std::string, std::vector<double>> actual_kw;
};

/// Two-stage island modelled on microgrid 4 of the 123-bus case: stage 1 serves 648 kW planned /
/// 669 kW actual, stage 2 energizes a GFL of 2184.5 kW and loads planned at 2822 kW with 2844 kW
/// actual, the extra 22 kW sitting on phase a. The GFM load-step allowance is 11 kW per phase.
PlanScenario mg4_stage2();

}  // namespace restorisk::scenarios
