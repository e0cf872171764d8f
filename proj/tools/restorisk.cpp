#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "restorisk/attack.hpp"
#include "restorisk/error.hpp"
#include "restorisk/experiment.hpp"
#include "restorisk/feeder.hpp"
#include "restorisk/forecast.hpp"
#include "restorisk/planner.hpp"
#include "restorisk/validator.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace restorisk;

namespace {

constexpr int kConfigExit = 2;
constexpr int kStageExit = 3;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
}

using SeriesMap = std::map<std::string, std::vector<double>>;

struct LoadFile {
  int stages = 1;
  planner::StageClock clock;
  SeriesMap kw;
};

LoadFile read_loads(const fs::path& path, const std::string& key) {
  const json j = read_json(path);
  if (!j.contains(key)) throw Error(ErrorCode::ConfigError, path.string() + " has no '" + key + "' block");
  LoadFile f;
  f.kw = j[key].get<SeriesMap>();
  f.stages = j.value("stages", 0);
  if (f.stages == 0 && !f.kw.empty()) f.stages = static_cast<int>(f.kw.begin()->second.size());
  f.clock.start_hour = j.value("start_hour", f.clock.start_hour);
  f.clock.stage_minutes = j.value("stage_minutes", f.clock.stage_minutes);
  return f;
}

std::vector<forecast::ForecastSample> windows_from_csv(const fs::path& csv, std::size_t window) {
  const auto rows = forecast::read_series_csv(csv);
  return forecast::build_windows(rows, window);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial forecast attacks against staged distribution-system restoration"};
  app.require_subcommand(1);

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "Write a synthetic hourly load and weather CSV");
  std::string synth_profile = "BASE", synth_out;
  int synth_days = 60;
  std::uint64_t synth_seed = 2024;
  synth->add_option("--profile", synth_profile, "Profile name")->capture_default_str();
  synth->add_option("--days", synth_days, "Number of days (>= 30)")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Seed")->capture_default_str();
  synth->add_option("--out", synth_out, "Output CSV")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a forecaster on a dataset CSV");
  std::string train_data, train_out, train_arch = "mlp";
  std::size_t train_window = 72, train_hidden = 12;
  int train_epochs = 200, train_test_days = 0;
  double train_lr = 0.0;
  std::uint64_t train_seed = 7;
  train->add_option("--data", train_data, "Dataset CSV")->required();
  train->add_option("--out", train_out, "Model JSON")->required();
  train->add_option("--architecture", train_arch, "linear | mlp | recurrent")->capture_default_str();
  train->add_option("--window", train_window, "Window length H")->capture_default_str();
  train->add_option("--hidden", train_hidden, "Hidden units")->capture_default_str();
  train->add_option("--epochs", train_epochs, "Epochs")->capture_default_str();
  train->add_option("--learning-rate", train_lr, "Step size (0 selects the architecture default)");
  train->add_option("--seed", train_seed, "Initialization seed")->capture_default_str();
  train->add_option("--test-days", train_test_days, "Trailing days held out of training")->capture_default_str();

  // attack
  auto* atk = app.add_subcommand("attack", "Attack one window of a dataset");
  std::string atk_model, atk_data, atk_out, atk_method = "saa", atk_mode = "white_box", atk_feature = "temperature";
  auto atk_cfg = attack::AttackConfig::defaults();
  long atk_index = -1;
  atk->add_option("--model", atk_model, "Model JSON")->required();
  atk->add_option("--data", atk_data, "Dataset CSV")->required();
  atk->add_option("--out", atk_out, "Trace JSON")->required();
  atk->add_option("--method", atk_method, "pgd | greedy_pgd | saa")->capture_default_str();
  atk->add_option("--mode", atk_mode, "white_box | black_box")->capture_default_str();
  atk->add_option("--epsilon", atk_cfg.epsilon, "Box radius")->capture_default_str();
  atk->add_option("--step-size", atk_cfg.step_size, "Step size")->capture_default_str();
  atk->add_option("--iterations", atk_cfg.iterations, "Iterations")->capture_default_str();
  atk->add_option("--sparsity", atk_cfg.sparsity, "Cells per iteration (saa)")->capture_default_str();
  atk->add_option("--fd-delta", atk_cfg.fd_delta, "Finite-difference step (black_box)")->capture_default_str();
  atk->add_option("--target-feature", atk_feature, "Column for plain PGD")->capture_default_str();
  atk->add_option("--window-index", atk_index, "Sample index (negative counts from the end)")->capture_default_str();

  // plan
  auto* plan = app.add_subcommand("plan", "Plan a staged restoration from load forecasts");
  std::string plan_feeder, plan_loads, plan_out, plan_key = "attacked_kw";
  bool plan_no_clpu = false, plan_merge = false;
  plan->add_option("--feeder", plan_feeder, "Feeder JSON")->required();
  plan->add_option("--forecasts", plan_loads, "Load file with per-load stage forecasts")->required();
  plan->add_option("--key", plan_key, "Block of the load file to plan for")->capture_default_str();
  plan->add_option("--out", plan_out, "Plan JSON")->required();
  plan->add_flag("--no-clpu", plan_no_clpu, "Plan without cold-load inflation");
  plan->add_flag("--merge-microgrids", plan_merge, "Allow islands with several grid-forming units");

  // validate
  auto* val = app.add_subcommand("validate", "Validate a plan against true loads");
  std::string val_feeder, val_plan, val_loads, val_key = "actual_kw", val_out;
  bool val_no_clpu = false;
  val->add_option("--feeder", val_feeder, "Feeder JSON")->required();
  val->add_option("--plan", val_plan, "Plan JSON")->required();
  val->add_option("--loads", val_loads, "Load file with true per-load stage demand")->required();
  val->add_option("--key", val_key, "Block of the load file holding true demand")->capture_default_str();
  val->add_option("--out-dir", val_out, "Directory for validation.json and the two CSV tables");
  val->add_flag("--no-clpu", val_no_clpu, "Validate without cold-load inflation");

  // run
  auto* run = app.add_subcommand("run", "Run the full pipeline from a config file");
  std::string run_config, run_out;
  run->add_option("--config", run_config, "Experiment config JSON")->required();
  run->add_option("--output-dir", run_out, "Output directory (overrides config and environment)");

  // report
  auto* rep = app.add_subcommand("report", "Rebuild report.json and report.md from stage artifacts");
  std::string rep_dir;
  rep->add_option("--dir", rep_dir, "Pipeline output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    if (*synth) {
      const auto rows = experiment::synth_dataset(synth_seed, synth_days, synth_profile);
      if (fs::path(synth_out).has_parent_path()) fs::create_directories(fs::path(synth_out).parent_path());
      forecast::write_series_csv(synth_out, rows);
      std::cout << "wrote " << rows.size() << " rows to " << synth_out << "\n";
    } else if (*train) {
      forecast::TrainConfig tc;
      tc.architecture = forecast::architecture_from_string(train_arch);
      tc.hidden = train_hidden;
      tc.epochs = train_epochs;
      tc.learning_rate = train_lr;
      tc.seed = train_seed;
      const auto raw = windows_from_csv(train_data, train_window);
      const std::size_t held = static_cast<std::size_t>(std::max(0, train_test_days)) * 24;
      if (held >= raw.size()) throw Error(ErrorCode::ConfigError, "--test-days leaves no training windows");
      const std::vector<forecast::ForecastSample> fit(raw.begin(), raw.end() - static_cast<long>(held));
      const auto norm = forecast::fit_normalizer(fit);
      const auto model = forecast::train(norm.apply(fit), tc, norm);
      write_text(train_out, forecast::model_to_json(model) + "\n");
      std::cout << "trained " << train_arch << " on " << fit.size() << " windows, final mse "
                << (model.training_log().empty() ? 0.0 : model.training_log().back().mse) << "\n";
    } else if (*atk) {
      const auto model = forecast::model_from_json(read_text(atk_model));
      atk_cfg.mode = attack::oracle_mode_from_string(atk_mode);
      const auto method = attack::method_from_string(atk_method);
      if (method == attack::Method::Pgd) {
        const auto& names = forecast::feature_names();
        const auto it = std::find(names.begin(), names.end(), atk_feature);
        if (it == names.end()) throw Error(ErrorCode::ConfigError, "unknown feature " + atk_feature);
        atk_cfg.target_feature = static_cast<std::size_t>(it - names.begin());
      }
      const auto raw = windows_from_csv(atk_data, model.window_length());
      const long n = static_cast<long>(raw.size());
      const long idx = atk_index < 0 ? n + atk_index : atk_index;
      if (idx < 0 || idx >= n) throw Error(ErrorCode::ConfigError, "--window-index outside the dataset");
      const auto sample = model.normalizer().apply(raw[static_cast<std::size_t>(idx)]);
      auto oracle = atk_cfg.mode == attack::OracleMode::WhiteBox
                        ? attack::GradientOracle::white_box(model)
                        : attack::GradientOracle::black_box(model, atk_cfg.fd_delta);
      const auto trace = attack::run_attack(method, oracle, sample.window, sample.target, atk_cfg);
      write_text(atk_out, attack::trace_to_json(trace, true) + "\n");
      std::cout << attack::to_string(method) << " loss " << trace.initial_loss << " -> " << trace.final_loss
                << ", forecast " << model.normalizer().load_kw(model.predict(sample.window.values)) << " -> "
                << model.normalizer().load_kw(model.predict(trace.adversarial.values)) << " kW, queries "
                << trace.query_count << "\n";
    } else if (*plan) {
      const auto f = feeder::load_feeder(plan_feeder);
      const auto loads = read_loads(plan_loads, plan_key);
      planner::PlannerInput in;
      in.feeder = &f;
      in.stages = loads.stages;
      in.clock = loads.clock;
      in.options.clpu_enabled = !plan_no_clpu;
      in.options.merge_microgrids = plan_merge;
      for (const auto& l : f.loads()) {
        const auto it = loads.kw.find(l.id);
        if (it == loads.kw.end()) throw Error(ErrorCode::ConfigError, "no forecast for load " + l.id);
        in.forecasts_kw.push_back(it->second);
      }
      const auto p = planner::plan_restoration(in);
      write_text(plan_out, planner::plan_to_json(p) + "\n");
      std::cout << "planned " << p.stages << " stages, objective " << p.objective_kw << " kW, "
                << p.pickup_stage.size() << " loads restored\n";
    } else if (*val) {
      const auto f = feeder::load_feeder(val_feeder);
      const auto p = planner::plan_from_json(read_text(val_plan));
      const auto loads = read_loads(val_loads, val_key);
      validator::ValidateOptions vo;
      if (val_no_clpu) vo.clpu = false;
      const auto r = validator::validate_plan(f, p, loads.kw, vo);
      if (!val_out.empty()) {
        write_text(fs::path(val_out) / "validation.json", validator::report_to_json(r) + "\n");
        write_text(fs::path(val_out) / "violations.csv", validator::violations_csv(r));
        write_text(fs::path(val_out) / "generation.csv", validator::generation_csv(r));
      }
      std::cout << validator::generation_csv(r);
      if (r.first_failure) {
        std::cout << "first failure: MG " << r.first_failure->first << " stage " << r.first_failure->second << "\n";
      } else {
        std::cout << "feasible at every stage\n";
      }
    } else if (*run) {
      auto cfg = experiment::load_config(run_config);
      experiment::apply_environment(cfg);
      if (!run_out.empty()) cfg.output_dir = run_out;
      const auto r = experiment::run_experiment(cfg);
      std::cout << "report written to " << (cfg.output_dir / "report.md").string() << "\n";
      std::cout << "sequences identical: " << (r.sequences_identical ? "yes" : "no") << ", attacked plan "
                << (r.attacked_plan.all_feasible ? "feasible" : "infeasible") << ", clean plan "
                << (r.clean_plan.all_feasible ? "feasible" : "infeasible") << "\n";
    } else if (*rep) {
      experiment::assemble_report(rep_dir);
      std::cout << "report written to " << (fs::path(rep_dir) / "report.md").string() << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (e.code() == ErrorCode::ConfigError || e.code() == ErrorCode::InvalidConfig || e.code() == ErrorCode::SchemaError ||
        e.code() == ErrorCode::DanglingReference || e.code() == ErrorCode::PhaseMismatch ||
        e.code() == ErrorCode::NonRadialCore) {
      return kConfigExit;
    }
    return kStageExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kStageExit;
  }
  return 0;
}
