#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
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

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace restorisk;

namespace {

using Series = std::map<std::string, std::vector<double>>;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

py::dict rows_to_dict(const std::vector<forecast::SeriesRow>& rows) {
  std::vector<std::string> ts;
  std::vector<double> load, temp, hum, ws, wd;
  for (const auto& r : rows) {
    ts.push_back(forecast::format_rfc3339(r.timestamp));
    load.push_back(r.load_kw);
    temp.push_back(r.temp_c);
    hum.push_back(r.humidity_pct);
    ws.push_back(r.wind_speed_mps);
    wd.push_back(r.wind_dir_deg);
  }
  py::dict d;
  d["timestamp"] = ts;
  d["load_kw"] = load;
  d["temp_c"] = temp;
  d["humidity_pct"] = hum;
  d["wind_speed_mps"] = ws;
  d["wind_dir_deg"] = wd;
  return d;
}

std::vector<std::vector<double>> to_rows(const Matrix& m) {
  std::vector<std::vector<double>> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r].assign(m.row(r).begin(), m.row(r).end());
  return out;
}

std::vector<forecast::ForecastSample> windows_of(const fs::path& data, std::size_t window) {
  return forecast::build_windows(forecast::read_series_csv(data), window);
}

std::string train_model(const fs::path& data, std::size_t window, const std::string& architecture, std::size_t hidden,
                        int epochs, double learning_rate, std::uint64_t seed, int test_days) {
  const auto samples = windows_of(data, window);
  const std::size_t held = static_cast<std::size_t>(std::max(0, test_days)) * 24;
  if (held >= samples.size()) throw Error(ErrorCode::SeriesTooShort, "no training windows left");
  const std::span<const forecast::ForecastSample> fit(samples.data(), samples.size() - held);
  forecast::TrainConfig tc;
  tc.architecture = forecast::architecture_from_string(architecture);
  tc.hidden = hidden;
  tc.epochs = epochs;
  tc.learning_rate = learning_rate;
  tc.seed = seed;
  const auto norm = forecast::fit_normalizer(fit);
  return forecast::model_to_json(forecast::train(norm.apply(fit), tc, norm));
}

py::dict run_attack(const std::string& model_json, const fs::path& data, long window_index, const std::string& method,
                    const std::string& mode, double epsilon, double step_size, int iterations, std::size_t sparsity,
                    double fd_delta, std::optional<std::size_t> target_feature) {
  const auto model = forecast::model_from_json(model_json);
  const auto samples = windows_of(data, model.window_length());
  const long n = static_cast<long>(samples.size());
  const long idx = window_index < 0 ? n + window_index : window_index;
  if (idx < 0 || idx >= n) throw Error(ErrorCode::IndexOutOfRange, "window index out of range");
  const auto s = model.normalizer().apply(samples[static_cast<std::size_t>(idx)]);
  attack::AttackConfig c;
  c.epsilon = epsilon;
  c.step_size = step_size;
  c.iterations = iterations;
  c.sparsity = sparsity;
  c.fd_delta = fd_delta;
  c.mode = attack::oracle_mode_from_string(mode);
  c.target_feature = target_feature;
  auto oracle = c.mode == attack::OracleMode::BlackBox ? attack::GradientOracle::black_box(model, fd_delta)
                                                       : attack::GradientOracle::white_box(model);
  const auto t = attack::run_attack(attack::method_from_string(method), oracle, s.window, s.target, c);
  py::dict d;
  d["initial_loss"] = t.initial_loss;
  d["final_loss"] = t.final_loss;
  d["linf"] = t.linf_norm();
  d["query_count"] = t.query_count;
  d["clean_forecast_kw"] = model.normalizer().load_kw(model.predict(t.original.values));
  d["attacked_forecast_kw"] = model.normalizer().load_kw(model.predict(t.adversarial.values));
  d["target_kw"] = model.normalizer().load_kw(s.target);
  d["original"] = to_rows(t.original.values);
  d["adversarial"] = to_rows(t.adversarial.values);
  d["trace_json"] = attack::trace_to_json(t, false);
  return d;
}

std::string plan(const fs::path& feeder_path, const Series& forecasts_kw, int stages, int start_hour,
                 double stage_minutes, bool clpu, bool merge_microgrids) {
  const auto f = feeder::load_feeder(feeder_path);
  planner::PlannerInput in;
  in.feeder = &f;
  in.stages = stages;
  in.clock.start_hour = start_hour;
  in.clock.stage_minutes = stage_minutes;
  in.options.clpu_enabled = clpu;
  in.options.merge_microgrids = merge_microgrids;
  for (const auto& l : f.loads()) {
    const auto it = forecasts_kw.find(l.id);
    if (it == forecasts_kw.end()) throw Error(ErrorCode::PlanFeederMismatch, "no forecast for load " + l.id);
    in.forecasts_kw.push_back(it->second);
  }
  return planner::plan_to_json(planner::plan_restoration(in));
}

std::string validate(const fs::path& feeder_path, const std::string& plan_json, const Series& actual_kw,
                     std::optional<bool> clpu) {
  const auto f = feeder::load_feeder(feeder_path);
  validator::ValidateOptions opt;
  opt.clpu = clpu;
  return validator::report_to_json(validator::validate_plan(f, planner::plan_from_json(plan_json), actual_kw, opt));
}

std::string run(const fs::path& config, std::optional<fs::path> output_dir) {
  auto c = experiment::load_config(config);
  experiment::apply_environment(c);
  if (output_dir) c.output_dir = *output_dir;
  experiment::run_experiment(c);
  return slurp(c.output_dir / "report.json");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Forecast attacks against microgrid restoration planning";

  static PyObject* error_type = py::exception<Error>(m, "Error", PyExc_RuntimeError).release().ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type, exc.ptr());
    }
  });

  m.def("profiles", [] {
    std::vector<std::string> names;
    for (const auto& p : experiment::profiles()) names.push_back(p.name);
    return names;
  });
  m.def("fnv1a", &experiment::fnv1a, py::arg("text"));
  m.def("derive_seed", &experiment::derive_seed, py::arg("master"), py::arg("label"));
  m.def(
      "synth_dataset",
      [](std::uint64_t seed, int days, const std::string& profile) {
        return rows_to_dict(experiment::synth_dataset(seed, days, profile));
      },
      py::arg("seed"), py::arg("days"), py::arg("profile"));
  m.def(
      "write_dataset",
      [](const fs::path& path, std::uint64_t seed, int days, const std::string& profile) {
        forecast::write_series_csv(path, experiment::synth_dataset(seed, days, profile));
      },
      py::arg("path"), py::arg("seed"), py::arg("days"), py::arg("profile"));
  m.def("read_dataset", [](const fs::path& path) { return rows_to_dict(forecast::read_series_csv(path)); },
        py::arg("path"));
  m.def("train", &train_model, py::arg("data"), py::arg("window") = 72, py::arg("architecture") = "mlp",
        py::arg("hidden") = 12, py::arg("epochs") = 200, py::arg("learning_rate") = 0.0, py::arg("seed") = 7,
        py::arg("test_days") = 0);
  m.def("attack", &run_attack, py::arg("model_json"), py::arg("data"), py::arg("window_index") = -1,
        py::arg("method") = "saa", py::arg("mode") = "white_box", py::arg("epsilon") = 0.05,
        py::arg("step_size") = 0.005, py::arg("iterations") = 50, py::arg("sparsity") = 72,
        py::arg("fd_delta") = 1e-3, py::arg("target_feature") = py::none());
  m.def("plan", &plan, py::arg("feeder"), py::arg("forecasts_kw"), py::arg("stages") = 3, py::arg("start_hour") = 8,
        py::arg("stage_minutes") = 60.0, py::arg("clpu") = true, py::arg("merge_microgrids") = false);
  m.def("validate", &validate, py::arg("feeder"), py::arg("plan_json"), py::arg("actual_kw"),
        py::arg("clpu") = py::none());
  m.def("run", &run, py::arg("config"), py::arg("output_dir") = py::none());
}
