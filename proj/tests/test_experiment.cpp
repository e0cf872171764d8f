#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "restorisk/error.hpp"
#include "restorisk/experiment.hpp"
#include "restorisk/feeder.hpp"
#include "restorisk/planner.hpp"
#include "restorisk/validator.hpp"

using namespace restorisk;
using namespace restorisk::experiment;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kData = RESTORISK_DATA_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json minimal_config() {
  return json{{"seed", 11},
              {"data", {{"days", 30}, {"test_days", 2}}},
              {"model", {{"architecture", "mlp"}, {"window", 24}, {"hidden", 4}, {"epochs", 15}}},
              {"evaluation", {{"test_windows", 4}}},
              {"attacks",
               json::array({{{"label", "pgd"}, {"method", "pgd"}, {"iterations", 5}},
                            {{"label", "greedy"}, {"method", "greedy_pgd"}, {"iterations", 5}},
                            {{"label", "saa"}, {"method", "saa"}, {"iterations", 5}, {"sparsity", 24}}})},
              {"plan_attack", "saa"},
              {"feeder", "ieee123_restoration.json"},
              {"restoration", {{"stages", 2}, {"start_hour", 8}, {"stage_minutes", 60}}}};
}

ErrorCode config_code(const json& doc) {
  try {
    validate_config(config_from_json(doc.dump(), kData));
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("config accepted");
  return ErrorCode::IoError;
}

using Series = std::map<std::string, std::vector<double>>;

}  // namespace

TEST_CASE("seed derivation") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(derive_seed(2024, "train/BASE") == fnv1a("2024/train/BASE"));
  CHECK(derive_seed(2024, "train/BASE") != derive_seed(2024, "train/HIGH"));
  CHECK(derive_seed(2024, "x") != derive_seed(2025, "x"));
}

TEST_CASE("synthetic datasets") {
  CHECK(profiles().size() == 7);
  for (const auto& p : profiles()) {
    CAPTURE(p.name);
    const auto rows = synth_dataset(3, 30, p.name);
    CHECK(rows.size() == 720);
    const auto again = synth_dataset(3, 30, p.name);
    bool same = true;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      same = same && rows[i].timestamp == again[i].timestamp && rows[i].load_kw == again[i].load_kw &&
             rows[i].temp_c == again[i].temp_c && rows[i].wind_dir_deg == again[i].wind_dir_deg;
    }
    CHECK(same);
    CHECK(synth_dataset(4, 30, p.name)[10].load_kw != rows[10].load_kw);
    std::vector<double> load, temp;
    for (const auto& r : rows) {
      load.push_back(r.load_kw);
      temp.push_back(r.temp_c);
      CHECK(r.load_kw >= 0.0);
      CHECK(r.humidity_pct >= 0.0);
      CHECK(r.humidity_pct <= 100.0);
    }
    CHECK(std::abs(pearson(load, temp)) > 0.3);
    CHECK(forecast::build_windows(rows, 72).size() == 648);
  }
  CHECK(forecast::format_rfc3339(synth_dataset(1, 30, "LOW")[0].timestamp) == "2023-06-01T00:00:00Z");
  CHECK_THROWS_AS(synth_dataset(1, 29, "LOW"), Error);
  CHECK_THROWS_AS(synth_dataset(1, 30, "NOPE"), Error);
  CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
}

TEST_CASE("config parsing, defaults and errors") {
  const auto c = config_from_json(minimal_config().dump(), kData);
  CHECK(c.seed == 11);
  CHECK(c.profiles.size() == 7);
  CHECK(c.feeder == kData / "ieee123_restoration.json");
  CHECK(c.attacks.size() == 3);
  CHECK(c.attacks[0].config.target_feature == forecast::kTemperature);
  CHECK(c.attacks[2].config.sparsity == 24);
  CHECK(c.stages == 2);
  CHECK_NOTHROW(validate_config(c));
  const auto again = config_from_json(config_to_json(c), kData);
  CHECK(config_to_json(again) == config_to_json(c));

  auto unknown = minimal_config();
  unknown["colour"] = "blue";
  CHECK(config_code(unknown) == ErrorCode::ConfigError);
  auto nested = minimal_config();
  nested["model"]["depth"] = 3;
  CHECK(config_code(nested) == ErrorCode::ConfigError);
  auto short_days = minimal_config();
  short_days["data"]["days"] = 20;
  CHECK(config_code(short_days) == ErrorCode::ConfigError);
  auto profile = minimal_config();
  profile["data"]["profiles"] = {"BASE", "Nowhere"};
  CHECK(config_code(profile) == ErrorCode::ConfigError);
  auto dup = minimal_config();
  dup["attacks"][1]["label"] = "pgd";
  CHECK(config_code(dup) == ErrorCode::ConfigError);
  auto sparse = minimal_config();
  sparse["attacks"][2]["sparsity"] = 97;
  CHECK(config_code(sparse) == ErrorCode::ConfigError);
  auto method = minimal_config();
  method["attacks"][0]["method"] = "fgsm";
  CHECK(config_code(method) == ErrorCode::ConfigError);
  auto feeder = minimal_config();
  feeder["feeder"] = "missing.json";
  CHECK(config_code(feeder) == ErrorCode::ConfigError);
  auto load = minimal_config();
  load["attacked_loads"] = {"L12", "L9999"};
  CHECK(config_code(load) == ErrorCode::ConfigError);
  auto late = minimal_config();
  late["restoration"]["start_hour"] = 23;
  CHECK(config_code(late) == ErrorCode::ConfigError);
  auto plan = minimal_config();
  plan["plan_attack"] = "other";
  CHECK(config_code(plan) == ErrorCode::ConfigError);
  CHECK(config_code(json::parse("[1, 2]")) == ErrorCode::ConfigError);
  try {
    config_from_json("{\"seed\": ", kData);
    FAIL("broken JSON accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
  }
}

TEST_CASE("environment overrides the output directory") {
  auto c = config_from_json(minimal_config().dump(), kData);
  c.output_dir = "somewhere";
  ::setenv(kOutputDirEnv, "/tmp/restorisk_env_dir", 1);
  apply_environment(c);
  CHECK(c.output_dir == fs::path("/tmp/restorisk_env_dir"));
  ::unsetenv(kOutputDirEnv);
  c.output_dir = "kept";
  apply_environment(c);
  CHECK(c.output_dir == fs::path("kept"));
}

TEST_CASE("bundled attacked-load scenario fails where the planted deviations bite") {
  const auto f = feeder::load_feeder(kData / "ieee123_restoration.json");
  const auto doc = json::parse(slurp(kData / "scenarios" / "ieee123_attacked.json"));
  const auto attacked = doc["attacked_kw"].get<Series>();
  const auto actual = doc["actual_kw"].get<Series>();
  planner::PlannerInput in;
  in.feeder = &f;
  in.stages = doc["stages"].get<int>();
  in.clock.start_hour = doc["start_hour"].get<int>();
  in.clock.stage_minutes = doc["stage_minutes"].get<double>();
  for (const auto& l : f.loads()) in.forecasts_kw.push_back(attacked.at(l.id));
  const auto plan = planner::plan_restoration(in);

  const auto truth = validator::validate_plan(f, plan, actual);
  REQUIRE(truth.first_failure.has_value());
  CHECK(*truth.first_failure == std::pair<int, int>{4, 2});
  const auto failures = truth.failures();
  CHECK(std::set<std::pair<int, int>>(failures.begin(), failures.end()) ==
        std::set<std::pair<int, int>>{{4, 2}, {2, 3}, {3, 3}});
  for (const auto& e : truth.entries) {
    if (e.status != validator::IslandStage::Status::Infeasible) continue;
    REQUIRE_FALSE(e.result.violations.empty());
    for (const auto& v : e.result.violations) CHECK(v.kind == validator::RowKind::ActiveBalance);
  }
  const auto planned = validator::validate_plan(f, plan, attacked);
  CHECK(planned.all_feasible());
}

TEST_CASE("small pipeline writes every artifact and reproduces its report") {
  auto c = config_from_json(minimal_config().dump(), kData);
  c.output_dir = fs::temp_directory_path() / "restorisk_small_pipeline";
  fs::remove_all(c.output_dir);
  const auto r = run_experiment(c);
  CHECK(r.attack_table.size() == 21);
  for (const auto& row : r.attack_table) {
    CHECK(row.increase == doctest::Approx(row.attacked_mse - row.clean_mse));
    CHECK(row.queries == 0);
  }
  CHECK(r.clean_plan.all_feasible);
  for (const char* name : {"config.json", "attack_table.csv", "forecasts.json", "plan_clean.json", "plan_attacked.json",
                           "plan_diff.json", "validation_attacked.json", "validation_clean.json", "report.json",
                           "report.md", "data/BASE.csv", "models/BASE.json", "attacks/saa__BASE.json"}) {
    CHECK_MESSAGE(fs::exists(c.output_dir / name), name);
  }
  const auto report = json::parse(slurp(c.output_dir / "report.json"));
  CHECK(report["provenance"]["seed"] == 11);
  CHECK(report["validation"].contains("damage_only_at_validation"));
  const auto fingerprint = report_fingerprint(c.output_dir);
  CHECK(fingerprint.find("generated_at") == std::string::npos);

  const auto rebuilt = assemble_report(c.output_dir);
  CHECK(rebuilt.sequences_identical == r.sequences_identical);
  CHECK(rebuilt.attack_table.size() == r.attack_table.size());
  CHECK(report_fingerprint(c.output_dir) == fingerprint);

  fs::remove(c.output_dir / "plan_clean.json");
  try {
    assemble_report(c.output_dir);
    FAIL("missing artifact accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IoError);
    CHECK(std::string(e.what()).find("plan_clean.json") != std::string::npos);
  }
  fs::remove_all(c.output_dir);
}
