#include "restorisk/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "restorisk/error.hpp"
#include "restorisk/feeder.hpp"
#include "restorisk/validator.hpp"

namespace restorisk::experiment {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Peak {
  double hour;
  double amplitude;
  double width;
};

std::array<double, 24> shape(double floor, std::initializer_list<Peak> peaks) {
  std::array<double, 24> s{};
  for (int h = 0; h < 24; ++h) {
    double v = floor;
    for (const auto& p : peaks) {
      double d = std::abs(h - p.hour);
      d = std::min(d, 24.0 - d);
      v += p.amplitude * std::exp(-d * d / (2.0 * p.width * p.width));
    }
    s[static_cast<std::size_t>(h)] = v;
  }
  return s;
}

Profile make(std::string name, clpu::LoadType type, double base, std::array<double, 24> s, double weekend,
             double cooling, double noise) {
  Profile p;
  p.name = std::move(name);
  p.type = type;
  p.base_kw = base;
  p.shape = s;
  p.weekend_factor = weekend;
  p.cooling_kw_per_c = cooling;
  p.noise_kw = noise;
  return p;
}

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

template <typename F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError || e.code() == ErrorCode::StageFailure) throw;
    throw Error(ErrorCode::StageFailure, std::string(name) + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::StageFailure, std::string(name) + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

template <typename T>
T get(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    config_error(std::string("key '") + key + "' has the wrong type");
  }
}

void check_keys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) config_error(std::string(where) + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
      config_error(std::string("unknown key '") + k + "' in " + where);
    }
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : (base / path).lexically_normal();
}

std::size_t feature_index(const std::string& name) {
  const auto& names = forecast::feature_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  config_error("unknown feature '" + name + "'");
}

AttackSpec attack_from_json(const json& a) {
  check_keys(a, "attack", {"label", "method", "epsilon", "step_size", "iterations", "sparsity", "fd_delta", "mode",
                           "target_feature"});
  AttackSpec s;
  try {
    s.method = attack::method_from_string(get<std::string>(a, "method", "pgd"));
    s.config.mode = attack::oracle_mode_from_string(get<std::string>(a, "mode", "white_box"));
  } catch (const Error& e) {
    config_error(e.what());
  }
  s.label = get<std::string>(a, "label", std::string(attack::to_string(s.method)));
  s.config.epsilon = get<double>(a, "epsilon", 0.05);
  s.config.step_size = get<double>(a, "step_size", s.config.epsilon / 10.0);
  s.config.iterations = get<int>(a, "iterations", 50);
  s.config.sparsity = get<std::size_t>(a, "sparsity", 72);
  s.config.fd_delta = get<double>(a, "fd_delta", 1e-3);
  if (a.contains("target_feature")) {
    s.config.target_feature = feature_index(get<std::string>(a, "target_feature", ""));
  } else if (s.method == attack::Method::Pgd) {
    s.config.target_feature = forecast::kTemperature;
  }
  return s;
}

json attack_to_json(const AttackSpec& s) {
  json a;
  a["label"] = s.label;
  a["method"] = std::string(attack::to_string(s.method));
  a["mode"] = std::string(attack::to_string(s.config.mode));
  a["epsilon"] = s.config.epsilon;
  a["step_size"] = s.config.step_size;
  a["iterations"] = s.config.iterations;
  a["sparsity"] = s.config.sparsity;
  a["fd_delta"] = s.config.fd_delta;
  if (s.config.target_feature) {
    a["target_feature"] = std::string(forecast::feature_names()[*s.config.target_feature]);
  }
  return a;
}

attack::GradientOracle make_oracle(const forecast::ForecastModel& model, const attack::AttackConfig& c) {
  return c.mode == attack::OracleMode::WhiteBox ? attack::GradientOracle::white_box(model)
                                                : attack::GradientOracle::black_box(model, c.fd_delta);
}

const AttackSpec& planning_attack(const ExperimentConfig& c) {
  if (c.plan_attack.empty()) return c.attacks.back();
  for (const auto& a : c.attacks) {
    if (a.label == c.plan_attack) return a;
  }
  config_error("plan_attack '" + c.plan_attack + "' names no configured attack");
}

ValidationSummary summary_from_json(const json& j) {
  ValidationSummary s;
  s.all_feasible = j.at("all_feasible").get<bool>();
  if (!j.at("first_failure").is_null()) {
    s.first_failure = {j["first_failure"].at("microgrid").get<int>(), j["first_failure"].at("stage").get<int>()};
  }
  for (const auto& e : j.at("entries")) {
    if (e.at("status").get<std::string>() == "infeasible") {
      s.failures.emplace_back(e.at("microgrid").get<int>(), e.at("stage").get<int>());
    }
  }
  return s;
}

json summary_json(const ValidationSummary& s) {
  json j;
  j["all_feasible"] = s.all_feasible;
  j["first_failure"] = s.first_failure ? json{{"microgrid", s.first_failure->first}, {"stage", s.first_failure->second}}
                                       : json(nullptr);
  json f = json::array();
  for (const auto& [mg, st] : s.failures) f.push_back({{"microgrid", mg}, {"stage", st}});
  j["failures"] = f;
  return j;
}

std::string describe(const ValidationSummary& s) {
  if (s.all_feasible) return "feasible at every stage";
  std::string out = "infeasible at";
  for (std::size_t i = 0; i < s.failures.size(); ++i) {
    out += (i ? ", " : " ") + std::string("MG ") + std::to_string(s.failures[i].first) + " stage " +
           std::to_string(s.failures[i].second);
  }
  return out;
}

using SeriesMap = std::map<std::string, std::vector<double>>;

struct Forecasts {
  SeriesMap clean, attacked;
  json traces = json::array();
};

planner::RestorationPlan plan_for(const feeder::Feeder& f, const ExperimentConfig& c, const SeriesMap& kw,
                                  int stages, const planner::StageClock& clock) {
  planner::PlannerInput in;
  in.feeder = &f;
  in.stages = stages;
  in.clock = clock;
  in.options.clpu_enabled = c.planner_clpu;
  for (const auto& l : f.loads()) in.forecasts_kw.push_back(kw.at(l.id));
  return planner::plan_restoration(in);
}

validator::ValidationReport validate_for(const feeder::Feeder& f, const ExperimentConfig& c,
                                         const planner::RestorationPlan& plan, const SeriesMap& truth) {
  validator::ValidateOptions vo;
  vo.clpu = c.validator_clpu;
  return validator::validate_plan(f, plan, truth, vo);
}

void write_validation(const fs::path& dir, const std::string& stem, const validator::ValidationReport& r) {
  write_text(dir / (stem + ".json"), validator::report_to_json(r) + "\n");
  write_text(dir / (stem + "_violations.csv"), validator::violations_csv(r));
  write_text(dir / (stem + "_generation.csv"), validator::generation_csv(r));
}

std::string attack_file_stem(const std::string& label, const std::string& profile) {
  return label + "__" + profile;
}

}  // namespace

// ---------------------------------------------------------------------------
const std::vector<Profile>& profiles() {
  using clpu::LoadType;
  static const std::vector<Profile> all{
      make("FullSrvcRestaurant", LoadType::Commercial, 120.0, shape(0.35, {{12, 0.7, 1.5}, {19, 1.0, 2.0}}), 1.15,
           3.0, 4.0),
      make("MidriseApartment", LoadType::Commercial, 150.0, shape(0.5, {{7, 0.35, 1.5}, {20, 0.6, 2.5}}), 1.05, 5.0,
           4.0),
      make("QuickSrvcRestaurant", LoadType::Commercial, 90.0, shape(0.3, {{12, 0.9, 2.0}, {18, 0.7, 2.0}}), 1.1, 2.0,
           3.0),
      make("SmallHotel", LoadType::Commercial, 110.0, shape(0.6, {{8, 0.3, 2.0}, {21, 0.45, 2.5}}), 1.1, 4.0, 3.0),
      make("BASE", LoadType::Residential, 3.0, shape(0.4, {{7, 0.3, 1.5}, {19, 0.6, 2.5}}), 1.2, 0.25, 0.15),
      make("HIGH", LoadType::Residential, 5.0, shape(0.4, {{7, 0.35, 1.5}, {19, 0.8, 2.5}}), 1.25, 0.45, 0.25),
      make("LOW", LoadType::Residential, 1.5, shape(0.5, {{7, 0.2, 1.5}, {20, 0.4, 2.0}}), 1.1, 0.1, 0.1),
  };
  return all;
}

const Profile& profile(std::string_view name) {
  for (const auto& p : profiles()) {
    if (p.name == name) return p;
  }
  throw Error(ErrorCode::ConfigError, "unknown profile '" + std::string(name) + "'");
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
  return fnv1a(std::to_string(master) + "/" + std::string(label));
}

std::vector<forecast::SeriesRow> synth_dataset(std::uint64_t seed, int days, std::string_view profile_name) {
  if (days < 30) throw Error(ErrorCode::ConfigError, "synthetic datasets need at least 30 days");
  const Profile& p = profile(profile_name);
  std::mt19937_64 rng(derive_seed(seed, p.name));
  std::normal_distribution<double> unit(0.0, 1.0);
  using namespace std::chrono;
  const sys_days start = 2023y / June / 1;
  constexpr double two_pi = 2.0 * std::numbers::pi;

  std::vector<forecast::SeriesRow> rows;
  rows.reserve(static_cast<std::size_t>(days) * 24);
  double drift = 0.0;
  for (int d = 0; d < days; ++d) {
    const sys_days day = start + std::chrono::days(d);
    const unsigned wd = weekday(day).c_encoding();
    const bool weekend = wd == 0 || wd == 6;
    for (int h = 0; h < 24; ++h) {
      drift = 0.85 * drift + 0.8 * unit(rng);
      forecast::SeriesRow r;
      r.timestamp = sys_seconds(day) + hours(h);
      r.temp_c = 24.0 + 6.0 * std::sin(two_pi * (h - 9) / 24.0) + 2.0 * std::sin(two_pi * d / 45.0) + drift;
      r.humidity_pct = std::clamp(65.0 - 2.0 * (r.temp_c - 24.0) + 4.0 * unit(rng), 5.0, 100.0);
      r.wind_speed_mps = std::max(0.0, 3.5 + 1.2 * std::sin(two_pi * (h - 14) / 24.0) + 0.8 * unit(rng));
      r.wind_dir_deg = std::fmod(220.0 + 35.0 * std::sin(two_pi * d / 7.0) + 15.0 * unit(rng) + 720.0, 360.0);
      const double level = p.base_kw * p.shape[static_cast<std::size_t>(h)] * (weekend ? p.weekend_factor : 1.0);
      r.load_kw = std::max(0.0, level + p.cooling_kw_per_c * std::max(0.0, r.temp_c - 20.0) + p.noise_kw * unit(rng));
      rows.push_back(r);
    }
  }
  return rows;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw Error(ErrorCode::ShapeMismatch, "pearson needs equal lengths >= 2");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// ---------------------------------------------------------------------------
ExperimentConfig config_from_json(std::string_view text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    config_error(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "config", {"seed", "data", "model", "evaluation", "attacks", "plan_attack", "feeder", "attacked_loads",
                           "restoration", "scenario", "output_dir"});
  ExperimentConfig c;
  c.seed = get<std::uint64_t>(j, "seed", c.seed);
  if (j.contains("data")) {
    const auto& d = j["data"];
    check_keys(d, "data", {"days", "test_days", "profiles"});
    c.days = get<int>(d, "days", c.days);
    c.test_days = get<int>(d, "test_days", c.test_days);
    c.profiles = get<std::vector<std::string>>(d, "profiles", {});
  }
  if (c.profiles.empty()) {
    for (const auto& p : profiles()) c.profiles.push_back(p.name);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, "model", {"architecture", "window", "hidden", "epochs", "learning_rate"});
    try {
      c.model.architecture = forecast::architecture_from_string(get<std::string>(m, "architecture", "mlp"));
    } catch (const Error& e) {
      config_error(e.what());
    }
    c.window_length = get<std::size_t>(m, "window", c.window_length);
    c.model.hidden = get<std::size_t>(m, "hidden", c.model.hidden);
    c.model.epochs = get<int>(m, "epochs", c.model.epochs);
    c.model.learning_rate = get<double>(m, "learning_rate", 0.0);
  }
  if (j.contains("evaluation")) {
    check_keys(j["evaluation"], "evaluation", {"test_windows"});
    c.test_windows = get<std::size_t>(j["evaluation"], "test_windows", c.test_windows);
  }
  if (j.contains("attacks")) {
    if (!j["attacks"].is_array()) config_error("attacks must be an array");
    for (const auto& a : j["attacks"]) c.attacks.push_back(attack_from_json(a));
  }
  c.plan_attack = get<std::string>(j, "plan_attack", "");
  if (!j.contains("feeder")) config_error("config needs a feeder path");
  c.feeder = resolve(base_dir, get<std::string>(j, "feeder", ""));
  c.attacked_loads = get<std::vector<std::string>>(j, "attacked_loads", {});
  if (j.contains("restoration")) {
    const auto& r = j["restoration"];
    check_keys(r, "restoration", {"stages", "start_hour", "stage_minutes", "planner_clpu", "validator_clpu"});
    c.stages = get<int>(r, "stages", c.stages);
    c.clock.start_hour = get<int>(r, "start_hour", c.clock.start_hour);
    c.clock.stage_minutes = get<double>(r, "stage_minutes", c.clock.stage_minutes);
    c.planner_clpu = get<bool>(r, "planner_clpu", c.planner_clpu);
    c.validator_clpu = get<bool>(r, "validator_clpu", c.validator_clpu);
  }
  if (j.contains("scenario") && !j["scenario"].is_null()) c.scenario = resolve(base_dir, get<std::string>(j, "scenario", ""));
  c.output_dir = resolve(base_dir, get<std::string>(j, "output_dir", "out"));
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const Error& e) {
    config_error(e.what());
  }
  return config_from_json(text, path.parent_path());
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["data"] = {{"days", c.days}, {"test_days", c.test_days}, {"profiles", c.profiles}};
  j["model"] = {{"architecture", std::string(forecast::to_string(c.model.architecture))},
                {"window", c.window_length},
                {"hidden", c.model.hidden},
                {"epochs", c.model.epochs},
                {"learning_rate", c.model.learning_rate}};
  j["evaluation"] = {{"test_windows", c.test_windows}};
  json a = json::array();
  for (const auto& s : c.attacks) a.push_back(attack_to_json(s));
  j["attacks"] = a;
  j["plan_attack"] = c.plan_attack;
  j["feeder"] = c.feeder.generic_string();
  j["attacked_loads"] = c.attacked_loads;
  j["restoration"] = {{"stages", c.stages},
                      {"start_hour", c.clock.start_hour},
                      {"stage_minutes", c.clock.stage_minutes},
                      {"planner_clpu", c.planner_clpu},
                      {"validator_clpu", c.validator_clpu}};
  j["scenario"] = c.scenario ? json(c.scenario->generic_string()) : json(nullptr);
  j["output_dir"] = c.output_dir.generic_string();
  return j.dump(1);
}

void validate_config(const ExperimentConfig& c) {
  if (c.days < 30) config_error("data.days must be at least 30");
  if (c.test_days < 1 || c.test_days >= c.days) config_error("data.test_days must lie in [1, days)");
  if (c.window_length < 1 || c.window_length >= static_cast<std::size_t>(c.days - c.test_days) * 24) {
    config_error("model.window must be positive and shorter than the training span");
  }
  if (c.model.epochs < 0) config_error("model.epochs must be non-negative");
  if (c.test_windows < 1) config_error("evaluation.test_windows must be positive");
  for (const auto& p : c.profiles) profile(p);
  std::set<std::string> labels;
  for (const auto& a : c.attacks) {
    if (!labels.insert(a.label).second) config_error("duplicate attack label '" + a.label + "'");
    try {
      a.config.validate(c.window_length);
    } catch (const Error& e) {
      config_error("attack '" + a.label + "': " + e.what());
    }
  }
  if (!c.attacks.empty()) planning_attack(c);
  if (!c.plan_attack.empty() && c.attacks.empty()) config_error("plan_attack set without attacks");
  if (c.stages < 1) config_error("restoration.stages must be positive");
  if (c.clock.stage_minutes <= 0.0) config_error("restoration.stage_minutes must be positive");
  const double last_hour = c.clock.start_hour + (c.stages - 1) * c.clock.stage_minutes / 60.0;
  if (c.clock.start_hour < 0 || last_hour > 23.0) config_error("restoration stages must fit in the forecast day");
  if (!fs::exists(c.feeder)) config_error("feeder file not found: " + c.feeder.string());
  if (c.scenario && !fs::exists(*c.scenario)) config_error("scenario file not found: " + c.scenario->string());
  feeder::Feeder f;
  try {
    f = feeder::load_feeder(c.feeder);
  } catch (const Error& e) {
    config_error(e.what());
  }
  for (const auto& id : c.attacked_loads) {
    try {
      f.load_index(id);
    } catch (const Error&) {
      config_error("attacked load '" + id + "' is not in the feeder");
    }
  }
  for (const auto& l : f.loads()) profile(l.profile);
}

void apply_environment(ExperimentConfig& c) {
  if (const char* dir = std::getenv(kOutputDirEnv); dir != nullptr && *dir != '\0') c.output_dir = dir;
}

// ---------------------------------------------------------------------------
ProfileRun prepare_profile(const ExperimentConfig& c, const std::string& name) {
  ProfileRun run;
  run.profile = name;
  run.series = synth_dataset(c.seed, c.days, name);
  double total = 0.0;
  for (const auto& r : run.series) total += r.load_kw;
  run.mean_load_kw = total / static_cast<double>(run.series.size());

  const auto raw = forecast::build_windows(run.series, c.window_length);
  const std::size_t split = static_cast<std::size_t>(c.days - c.test_days) * 24;
  std::vector<forecast::ForecastSample> train_raw, test_raw;
  for (std::size_t k = 0; k < raw.size(); ++k) {
    (k + c.window_length < split ? train_raw : test_raw).push_back(raw[k]);
  }
  run.normalizer = forecast::fit_normalizer(train_raw);
  const auto train = run.normalizer.apply(train_raw);
  auto tc = c.model;
  tc.seed = derive_seed(c.seed, "model/" + name);
  run.model = forecast::train(train, tc, run.normalizer);

  const std::size_t n = std::min(c.test_windows, test_raw.size());
  for (std::size_t i = 0; i < n; ++i) run.test.push_back(run.normalizer.apply(test_raw[i * test_raw.size() / n]));
  return run;
}

std::vector<AttackRow> attack_rows(const ExperimentConfig& c, const ProfileRun& run) {
  std::vector<AttackRow> rows;
  for (const auto& spec : c.attacks) {
    AttackRow r;
    r.method = spec.label;
    r.profile = run.profile;
    double clean = 0.0, attacked = 0.0;
    for (const auto& s : run.test) {
      auto oracle = make_oracle(run.model, spec.config);
      const auto trace = attack::run_attack(spec.method, oracle, s.window, s.target, spec.config);
      clean += run.model.loss(s.window.values, s.target);
      attacked += run.model.loss(trace.adversarial.values, s.target);
      r.queries += trace.query_count;
    }
    const double n = static_cast<double>(run.test.size());
    r.clean_mse = clean / n;
    r.attacked_mse = attacked / n;
    r.increase = r.attacked_mse - r.clean_mse;
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
ExperimentReport run_experiment(const ExperimentConfig& config) {
  validate_config(config);
  const fs::path out = config.output_dir;
  stage("setup", [&] {
    fs::create_directories(out);
    write_text(out / "config.json", config_to_json(config) + "\n");
    return 0;
  });
  const feeder::Feeder f = stage("feeder", [&] { return feeder::load_feeder(config.feeder); });

  std::set<std::string> needed(config.profiles.begin(), config.profiles.end());
  for (const auto& l : f.loads()) needed.insert(l.profile);
  std::map<std::string, ProfileRun> runs;
  for (const auto& name : needed) {
    runs[name] = stage("train", [&] { return prepare_profile(config, name); });
    stage("data", [&] {
      fs::create_directories(out / "data");
      forecast::write_series_csv(out / "data" / (name + ".csv"), runs[name].series);
      write_text(out / "models" / (name + ".json"), forecast::model_to_json(runs[name].model) + "\n");
      return 0;
    });
  }

  stage("attack", [&] {
    std::ostringstream csv;
    csv << "method,profile,clean_mse,attacked_mse,mse_increase,queries\n";
    for (const auto& name : config.profiles) {
      for (const auto& r : attack_rows(config, runs.at(name))) {
        json j;
        j["method"] = r.method;
        j["profile"] = r.profile;
        j["clean_mse"] = r.clean_mse;
        j["attacked_mse"] = r.attacked_mse;
        j["mse_increase"] = r.increase;
        j["queries"] = r.queries;
        j["test_windows"] = runs.at(name).test.size();
        write_text(out / "attacks" / (attack_file_stem(r.method, r.profile) + ".json"), j.dump(1) + "\n");
        csv << r.method << ',' << r.profile << ',' << fixed(r.clean_mse, 8) << ',' << fixed(r.attacked_mse, 8) << ','
            << fixed(r.increase, 8) << ',' << r.queries << '\n';
      }
    }
    write_text(out / "attack_table.csv", csv.str());
    return 0;
  });

  std::set<std::string> attacked_ids(config.attacked_loads.begin(), config.attacked_loads.end());
  if (attacked_ids.empty()) {
    for (const auto& l : f.loads()) {
      if (l.attacked) attacked_ids.insert(l.id);
    }
  }

  const Forecasts fc = stage("forecast", [&] {
    Forecasts r;
    // Per (profile, stage): clean and attacked forecast of the profile's own load, in kW.
    std::map<std::pair<std::string, int>, std::pair<double, double>> per_profile;
    const AttackSpec* spec = config.attacks.empty() ? nullptr : &planning_attack(config);
    const std::size_t day_start = static_cast<std::size_t>(config.days - 1) * 24;
    for (const auto& name : needed) {
      const auto& run = runs.at(name);
      for (int s = 1; s <= config.stages; ++s) {
        const auto hour = static_cast<std::size_t>(config.clock.start_hour +
                                                   std::floor((s - 1) * config.clock.stage_minutes / 60.0));
        const std::size_t row = day_start + hour;
        const std::size_t k = row - config.window_length;
        const auto raw = forecast::build_windows(std::span(run.series).subspan(k, config.window_length + 1),
                                                 config.window_length);
        const auto sample = run.normalizer.apply(raw.front());
        const double clean = std::max(0.0, run.normalizer.load_kw(run.model.predict(sample.window.values)));
        double attacked = clean;
        if (spec != nullptr) {
          auto oracle = make_oracle(run.model, spec->config);
          const auto trace = attack::run_attack(spec->method, oracle, sample.window, sample.target, spec->config);
          attacked = std::max(0.0, run.normalizer.load_kw(run.model.predict(trace.adversarial.values)));
          json t = json::parse(attack::trace_to_json(trace, true));
          t["profile"] = name;
          t["stage"] = s;
          t["clean_forecast_kw"] = clean;
          t["attacked_forecast_kw"] = attacked;
          r.traces.push_back(t);
        }
        per_profile[{name, s}] = {clean, attacked};
      }
    }
    for (const auto& l : f.loads()) {
      const double scale = l.nominal_kw / runs.at(l.profile).mean_load_kw;
      auto& cl = r.clean[l.id];
      auto& at = r.attacked[l.id];
      for (int s = 1; s <= config.stages; ++s) {
        const auto [c, a] = per_profile.at({l.profile, s});
        cl.push_back(scale * c);
        at.push_back(scale * (attacked_ids.count(l.id) ? a : c));
      }
    }
    json j;
    j["stages"] = config.stages;
    j["start_hour"] = config.clock.start_hour;
    j["stage_minutes"] = config.clock.stage_minutes;
    j["plan_attack"] = spec != nullptr ? json(spec->label) : json(nullptr);
    j["attacked_loads"] = std::vector<std::string>(attacked_ids.begin(), attacked_ids.end());
    j["attacked_kw"] = r.attacked;
    j["actual_kw"] = r.clean;
    write_text(out / "forecasts.json", j.dump(1) + "\n");
    write_text(out / "substitution_traces.json", r.traces.dump(1) + "\n");
    return r;
  });

  const auto [clean_plan, attacked_plan] = stage("plan", [&] {
    auto cp = plan_for(f, config, fc.clean, config.stages, config.clock);
    auto ap = plan_for(f, config, fc.attacked, config.stages, config.clock);
    write_text(out / "plan_clean.json", planner::plan_to_json(cp) + "\n");
    write_text(out / "plan_attacked.json", planner::plan_to_json(ap) + "\n");
    write_text(out / "plan_diff.json", planner::plan_diff_to_json(planner::plan_diff(cp, ap)) + "\n");
    return std::pair{cp, ap};
  });

  stage("validate", [&] {
    write_validation(out, "validation_attacked", validate_for(f, config, attacked_plan, fc.clean));
    write_validation(out, "validation_clean", validate_for(f, config, clean_plan, fc.clean));
    return 0;
  });

  if (config.scenario) {
    stage("scenario", [&] {
      const json s = json::parse(read_text(*config.scenario));
      const SeriesMap attacked = s.at("attacked_kw").get<SeriesMap>();
      const SeriesMap actual = s.at("actual_kw").get<SeriesMap>();
      planner::StageClock clock;
      clock.start_hour = s.value("start_hour", config.clock.start_hour);
      clock.stage_minutes = s.value("stage_minutes", config.clock.stage_minutes);
      const int stages = s.value("stages", config.stages);
      const auto plan = plan_for(f, config, attacked, stages, clock);
      write_text(out / "scenario_plan.json", planner::plan_to_json(plan) + "\n");
      write_validation(out, "scenario_validation", validate_for(f, config, plan, actual));
      write_validation(out, "scenario_validation_planned", validate_for(f, config, plan, attacked));
      return 0;
    });
  }
  return stage("report", [&] { return assemble_report(out); });
}

// ---------------------------------------------------------------------------
ExperimentReport assemble_report(const fs::path& dir) {
  ExperimentReport rep;
  const json cfg = json::parse(read_text(dir / "config.json"));
  rep.seed = cfg.at("seed").get<std::uint64_t>();
  rep.config_hash = hex64(fnv1a(cfg.dump()));

  std::vector<fs::path> attack_files;
  if (fs::exists(dir / "attacks")) {
    for (const auto& e : fs::directory_iterator(dir / "attacks")) {
      if (e.path().extension() == ".json") attack_files.push_back(e.path());
    }
  }
  std::sort(attack_files.begin(), attack_files.end());
  std::map<std::string, std::size_t> method_order;
  for (const auto& a : cfg.at("attacks")) method_order.emplace(a.at("label").get<std::string>(), method_order.size());
  std::map<std::string, std::size_t> profile_order;
  for (const auto& p : cfg.at("data").at("profiles")) profile_order.emplace(p.get<std::string>(), profile_order.size());
  for (const auto& path : attack_files) {
    const json j = json::parse(read_text(path));
    AttackRow r;
    r.method = j.at("method").get<std::string>();
    r.profile = j.at("profile").get<std::string>();
    r.clean_mse = j.at("clean_mse").get<double>();
    r.attacked_mse = j.at("attacked_mse").get<double>();
    r.increase = j.at("mse_increase").get<double>();
    r.queries = j.at("queries").get<std::uint64_t>();
    rep.attack_table.push_back(r);
  }
  auto rank = [](const std::map<std::string, std::size_t>& m, const std::string& k) {
    auto it = m.find(k);
    return it == m.end() ? m.size() : it->second;
  };
  std::stable_sort(rep.attack_table.begin(), rep.attack_table.end(), [&](const AttackRow& a, const AttackRow& b) {
    return std::pair(rank(method_order, a.method), rank(profile_order, a.profile)) <
           std::pair(rank(method_order, b.method), rank(profile_order, b.profile));
  });

  const json diff = json::parse(read_text(dir / "plan_diff.json"));
  rep.sequences_identical = diff.at("sequence_identical").get<bool>();
  rep.plan_diff_entries = diff.at("entries").get<std::size_t>();
  rep.clean_objective_kw = json::parse(read_text(dir / "plan_clean.json")).at("objective_kw").get<double>();
  rep.attacked_objective_kw = json::parse(read_text(dir / "plan_attacked.json")).at("objective_kw").get<double>();
  rep.attacked_plan = summary_from_json(json::parse(read_text(dir / "validation_attacked.json")));
  rep.clean_plan = summary_from_json(json::parse(read_text(dir / "validation_clean.json")));
  if (fs::exists(dir / "scenario_validation.json")) {
    rep.scenario = summary_from_json(json::parse(read_text(dir / "scenario_validation.json")));
    rep.scenario_planned = summary_from_json(json::parse(read_text(dir / "scenario_validation_planned.json")));
  }

  const bool verdicts_differ = rep.attacked_plan.failures != rep.clean_plan.failures;
  json j;
  j["provenance"] = {{"config_hash", rep.config_hash},
                     {"seed", rep.seed},
                     {"version", kVersion},
                     {"generated_at", forecast::format_rfc3339(std::chrono::floor<std::chrono::seconds>(
                                          std::chrono::system_clock::now()))}};
  json table = json::array();
  for (const auto& r : rep.attack_table) {
    table.push_back({{"method", r.method},
                     {"profile", r.profile},
                     {"clean_mse", r.clean_mse},
                     {"attacked_mse", r.attacked_mse},
                     {"mse_increase", r.increase},
                     {"queries", r.queries},
                     {"source", "attacks/" + attack_file_stem(r.method, r.profile) + ".json"}});
  }
  j["attack_table"] = table;
  j["plans"] = {{"clean_objective_kw", rep.clean_objective_kw},
                {"attacked_objective_kw", rep.attacked_objective_kw},
                {"sequences_identical", rep.sequences_identical},
                {"diff_entries", rep.plan_diff_entries},
                {"source", "plan_diff.json"}};
  j["validation"] = {{"attacked_plan", summary_json(rep.attacked_plan)},
                     {"clean_plan", summary_json(rep.clean_plan)},
                     {"verdicts_differ", verdicts_differ},
                     {"damage_only_at_validation", rep.sequences_identical && verdicts_differ}};
  if (rep.scenario) {
    j["scenario"] = {{"actual_loads", summary_json(*rep.scenario)},
                     {"attacked_loads", summary_json(*rep.scenario_planned)},
                     {"source", "scenario_validation.json"}};
  } else {
    j["scenario"] = nullptr;
  }
  write_text(dir / "report.json", j.dump(1) + "\n");

  std::ostringstream md;
  md << "# Restoration risk report\n\n";
  md << "Config hash `" << rep.config_hash << "`, seed " << rep.seed << ", version " << kVersion << ".\n\n";
  md << "## Attack table (MSE increase, normalized units)\n\n| method | profile | clean MSE | attacked MSE | increase |"
        " queries |\n|---|---|---|---|---|---|\n";
  for (const auto& r : rep.attack_table) {
    md << "| " << r.method << " | " << r.profile << " | " << fixed(r.clean_mse, 6) << " | " << fixed(r.attacked_mse, 6)
       << " | " << fixed(r.increase, 6) << " | " << r.queries << " |\n";
  }
  md << "\n## Plans\n\n";
  md << "- clean-forecast objective: " << fixed(rep.clean_objective_kw, 3) << " kW\n";
  md << "- attacked-forecast objective: " << fixed(rep.attacked_objective_kw, 3) << " kW\n";
  md << "- restoration sequences identical: " << (rep.sequences_identical ? "yes" : "NO (flagged)") << " ("
     << rep.plan_diff_entries << " diff entries)\n";
  md << "\n## Validation under true loads\n\n";
  md << "- attacked-forecast plan: " << describe(rep.attacked_plan) << "\n";
  md << "- clean-forecast plan: " << describe(rep.clean_plan) << "\n";
  md << "- verdicts differ: " << (verdicts_differ ? "yes" : "no") << "\n";
  if (rep.scenario) {
    md << "\n## Bundled scenario\n\n";
    md << "- under actual loads: " << describe(*rep.scenario) << "\n";
    md << "- under attacked loads: " << describe(*rep.scenario_planned) << "\n";
  }
  write_text(dir / "report.md", md.str());
  return rep;
}

std::string report_fingerprint(const fs::path& dir) {
  json j = json::parse(read_text(dir / "report.json"));
  j["provenance"].erase("generated_at");
  return j.dump();
}

}  // namespace restorisk::experiment
