#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "restorisk/attack.hpp"
#include "restorisk/clpu.hpp"
#include "restorisk/forecast.hpp"
#include "restorisk/planner.hpp"

namespace restorisk::experiment {

/// Environment variable that overrides the configured output directory.
inline constexpr const char* kOutputDirEnv = "RESTORISK_OUTPUT_DIR";

/// Synthetic building load profile.
struct Profile {
  std::string name;
  clpu::LoadType type = clpu::LoadType::Commercial;
  double base_kw = 100.0;
  std::array<double, 24> shape{};  // hour-of-day multiplier on base_kw
  double weekend_factor = 1.0;
  double cooling_kw_per_c = 0.0;   // added per degree above 20 C
  double noise_kw = 1.0;
};

/// Four commercial and three residential profiles.
const std::vector<Profile>& profiles();
const Profile& profile(std::string_view name);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view text);
/// Child seed of `master` for a named pipeline step.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);

/// Hourly load and weather rows starting 2023-06-01T00:00Z; `days` must be at least 30.
std::vector<forecast::SeriesRow> synth_dataset(std::uint64_t seed, int days, std::string_view profile_name);

/// Pearson correlation of two equally long series.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

struct AttackSpec {
  std::string label;  // unique within a config
  attack::Method method = attack::Method::Pgd;
  attack::AttackConfig config;
};

struct ExperimentConfig {
  std::uint64_t seed = 2024;
  int days = 60;
  int test_days = 7;
  std::vector<std::string> profiles;  // defaults to all seven
  std::size_t window_length = 72;
  forecast::TrainConfig model;
  std::size_t test_windows = 24;  // evaluation windows per profile, evenly spaced over the test days
  std::vector<AttackSpec> attacks;
  /// Attack whose adversarial windows replace the forecasts of the attacked loads; empty uses the last one.
  std::string plan_attack;
  std::filesystem::path feeder;
  std::vector<std::string> attacked_loads;  // empty uses the loads flagged in the feeder
  int stages = 3;
  planner::StageClock clock;
  bool planner_clpu = true;
  bool validator_clpu = true;
  /// Optional fixed attacked/actual load scenario validated alongside the pipeline.
  std::optional<std::filesystem::path> scenario;
  std::filesystem::path output_dir = "out";
};

/// Relative paths resolve against `base_dir`.
ExperimentConfig config_from_json(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config);
/// Checks referenced files, profiles, attack labels and attacked load ids.
void validate_config(const ExperimentConfig& config);
/// Applies the output directory override, if set.
void apply_environment(ExperimentConfig& config);

struct AttackRow {
  std::string method;
  std::string profile;
  double clean_mse = 0.0;
  double attacked_mse = 0.0;
  double increase = 0.0;
  std::uint64_t queries = 0;
};

struct ValidationSummary {
  bool all_feasible = true;
  std::optional<std::pair<int, int>> first_failure;  // (microgrid, stage)
  std::vector<std::pair<int, int>> failures;
};

struct ExperimentReport {
  std::vector<AttackRow> attack_table;
  bool sequences_identical = true;
  std::size_t plan_diff_entries = 0;
  double clean_objective_kw = 0.0;
  double attacked_objective_kw = 0.0;
  ValidationSummary attacked_plan;  // attacked-forecast plan under true loads
  ValidationSummary clean_plan;     // clean-forecast plan under true loads
  std::optional<ValidationSummary> scenario;          // fixed scenario under its actual loads
  std::optional<ValidationSummary> scenario_planned;  // fixed scenario under its attacked loads
  std::string config_hash;
  std::uint64_t seed = 0;
};

/// Dataset, model and evaluation windows of one profile.
struct ProfileRun {
  std::string profile;
  std::vector<forecast::SeriesRow> series;
  forecast::Normalizer normalizer;
  forecast::ForecastModel model;
  std::vector<forecast::ForecastSample> test;  // normalized evaluation windows
  double mean_load_kw = 0.0;
};

ProfileRun prepare_profile(const ExperimentConfig& config, const std::string& profile_name);

/// MSE increase of every configured attack on one prepared profile.
std::vector<AttackRow> attack_rows(const ExperimentConfig& config, const ProfileRun& run);

/// Runs the whole pipeline and writes every stage artifact plus report.json / report.md under the output
/// directory. Stage errors surface as StageFailure naming the stage.
ExperimentReport run_experiment(const ExperimentConfig& config);

/// Rebuilds report.json and report.md from the stage artifacts in `dir`.
ExperimentReport assemble_report(const std::filesystem::path& dir);

/// report.json without its generation timestamp.
std::string report_fingerprint(const std::filesystem::path& dir);

}  // namespace restorisk::experiment
