#include "restorisk/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "restorisk/error.hpp"

namespace restorisk::attack {

using forecast::FeatureWindow;
using forecast::kFirstWeather;
using forecast::kLastWeather;
using forecast::kNumWeather;

std::string_view to_string(OracleMode mode) {
  return mode == OracleMode::WhiteBox ? "white_box" : "black_box";
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::Pgd: return "pgd";
    case Method::GreedyPgd: return "greedy_pgd";
    case Method::Sparse: return "saa";
  }
  return "pgd";
}

OracleMode oracle_mode_from_string(std::string_view name) {
  if (name == "white_box" || name == "white-box" || name == "whitebox") return OracleMode::WhiteBox;
  if (name == "black_box" || name == "black-box" || name == "blackbox") return OracleMode::BlackBox;
  throw Error(ErrorCode::InvalidConfig, "unknown oracle mode '" + std::string(name) + "'");
}

Method method_from_string(std::string_view name) {
  if (name == "pgd") return Method::Pgd;
  if (name == "greedy_pgd" || name == "greedy-pgd" || name == "greedy") return Method::GreedyPgd;
  if (name == "saa" || name == "sparse") return Method::Sparse;
  throw Error(ErrorCode::InvalidConfig, "unknown attack method '" + std::string(name) + "'");
}

AttackConfig AttackConfig::defaults() {
  AttackConfig c;
  c.epsilon = 0.05;
  c.step_size = c.epsilon / 10.0;
  c.iterations = 50;
  return c;
}

void AttackConfig::validate(std::size_t window_length) const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw Error(ErrorCode::InvalidConfig, "epsilon must be >= 0");
  if (!(step_size > 0.0)) throw Error(ErrorCode::InvalidConfig, "step size must be > 0");
  if (iterations < 0) throw Error(ErrorCode::InvalidConfig, "iterations must be >= 0");
  if (!(fd_delta > 0.0)) throw Error(ErrorCode::InvalidConfig, "fd_delta must be > 0");
  if (sparsity > window_length * kNumWeather) {
    throw Error(ErrorCode::InvalidConfig, "sparsity exceeds the number of weather cells");
  }
  if (target_feature && !forecast::is_weather(*target_feature)) {
    throw Error(ErrorCode::InvalidConfig, "target feature must be a weather column");
  }
}

double AttackTrace::linf_norm() const {
  double m = 0.0;
  const auto a = adversarial.values.flat();
  const auto o = original.values.flat();
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - o[i]));
  return m;
}

// ---------------------------------------------------------------------------
// oracle

GradientOracle GradientOracle::white_box(const forecast::ForecastModel& model) {
  GradientOracle o;
  o.mode_ = OracleMode::WhiteBox;
  o.model_ = &model;
  return o;
}

GradientOracle GradientOracle::black_box(QueryFn query, double fd_delta) {
  if (!(fd_delta > 0.0)) throw Error(ErrorCode::InvalidConfig, "fd_delta must be > 0");
  GradientOracle o;
  o.mode_ = OracleMode::BlackBox;
  o.query_ = std::move(query);
  o.fd_delta_ = fd_delta;
  return o;
}

GradientOracle GradientOracle::black_box(const forecast::ForecastModel& model, double fd_delta) {
  auto o = black_box([&model](const Matrix& x) { return model.predict(x); }, fd_delta);
  o.model_ = &model;
  return o;
}

double GradientOracle::loss(const Matrix& window, double target) const {
  const double f = model_ ? model_->predict(window) : query_(window);
  const double e = f - target;
  return e * e;
}

Matrix GradientOracle::gradient(const Matrix& window, double target) {
  if (mode_ == OracleMode::WhiteBox) {
    Matrix g = model_->input_gradient(window, target);
    for (double v : g.flat()) {
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteLoss, "non-finite analytic gradient");
    }
    return g;
  }

  Matrix g(window.rows(), window.cols());
  Matrix probe = window;
  auto query_loss = [&](const Matrix& x) {
    ++queries_;
    const double e = query_(x) - target;
    const double l = e * e;
    if (!std::isfinite(l)) throw Error(ErrorCode::NonFiniteLoss, "non-finite loss from query");
    return l;
  };
  for (std::size_t i = 0; i < window.rows(); ++i) {
    for (std::size_t j = kFirstWeather; j <= kLastWeather; ++j) {
      const double base = window(i, j);
      probe(i, j) = base + fd_delta_;
      const double up = query_loss(probe);
      probe(i, j) = base - fd_delta_;
      const double down = query_loss(probe);
      probe(i, j) = base;
      g(i, j) = (up - down) / (2.0 * fd_delta_);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// building blocks

Matrix clip(const Matrix& candidate, const Matrix& original, double epsilon) {
  if (!candidate.same_shape(original)) throw Error(ErrorCode::ShapeMismatch, "clip operands differ in shape");
  Matrix out = candidate;
  auto o = out.flat();
  const auto base = original.flat();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::clamp(o[i], base[i] - epsilon, base[i] + epsilon);
  return out;
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_window(const FeatureWindow& window) {
  if (window.values.cols() != forecast::kNumFeatures || window.values.rows() == 0) {
    throw Error(ErrorCode::ShapeMismatch, "feature window must be H x 6");
  }
}

AttackTrace start_trace(Method method, GradientOracle& oracle, const FeatureWindow& window, double target,
                        const AttackConfig& config) {
  check_window(window);
  config.validate(window.length());
  oracle.reset_queries();
  AttackTrace t;
  t.method = method;
  t.config = config;
  t.original = window;
  t.adversarial = window;
  t.initial_loss = oracle.loss(window.values, target);
  if (!std::isfinite(t.initial_loss)) throw Error(ErrorCode::NonFiniteLoss, "initial loss is not finite");
  t.per_iteration.reserve(static_cast<std::size_t>(config.iterations));
  return t;
}

void finish_trace(AttackTrace& t, GradientOracle& oracle, double target) {
  t.final_loss = oracle.loss(t.adversarial.values, target);
  t.query_count = oracle.query_count();
}

// Column update shared by plain and greedy PGD.
void step_column(Matrix& x, const Matrix& original, const Matrix& g, std::size_t col, double step, double eps) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double v = x(i, col) + step * sign(g(i, col));
    x(i, col) = std::clamp(v, original(i, col) - eps, original(i, col) + eps);
  }
}

// Gradient with the components pointing out of the epsilon box at pinned cells zeroed.
Matrix movable_gradient(const Matrix& g, const Matrix& x, const Matrix& original, double eps) {
  Matrix out = g;
  for (std::size_t i = 0; i < g.rows(); ++i) {
    for (std::size_t j = 0; j < g.cols(); ++j) {
      const double v = g(i, j);
      if ((v > 0.0 && x(i, j) >= original(i, j) + eps) || (v < 0.0 && x(i, j) <= original(i, j) - eps)) out(i, j) = 0.0;
    }
  }
  return out;
}

}  // namespace

std::size_t most_influential_feature(const Matrix& gradient) {
  std::size_t best = kFirstWeather;
  double best_score = -1.0;
  for (std::size_t j = kFirstWeather; j <= kLastWeather; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < gradient.rows(); ++i) s += std::abs(gradient(i, j));
    s /= static_cast<double>(gradient.rows());
    if (s > best_score) {
      best_score = s;
      best = j;
    }
  }
  return best;
}

std::vector<Cell> top_weather_cells(const Matrix& gradient, std::size_t n) {
  const std::size_t eligible = gradient.rows() * kNumWeather;
  n = std::min(n, eligible);
  std::vector<Cell> cells;
  cells.reserve(eligible);
  for (std::size_t i = 0; i < gradient.rows(); ++i) {
    for (std::size_t j = kFirstWeather; j <= kLastWeather; ++j) cells.push_back({i, j});
  }
  // Row-major enumeration plus a stable partial ordering gives the row-major tie-break.
  auto by_magnitude = [&](const Cell& a, const Cell& b) {
    return std::abs(gradient(a.row, a.col)) > std::abs(gradient(b.row, b.col));
  };
  std::stable_sort(cells.begin(), cells.end(), by_magnitude);
  cells.resize(n);
  std::sort(cells.begin(), cells.end(),
            [](const Cell& a, const Cell& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
  return cells;
}

AttackTrace pgd_attack(GradientOracle& oracle, const FeatureWindow& window, double target,
                       const AttackConfig& config) {
  if (!config.target_feature) throw Error(ErrorCode::MissingTargetFeature, "plain PGD needs a target feature");
  auto t = start_trace(Method::Pgd, oracle, window, target, config);
  const std::size_t col = *config.target_feature;
  Matrix& x = t.adversarial.values;
  for (int k = 0; k < config.iterations; ++k) {
    const Matrix g = oracle.gradient(x, target);
    step_column(x, window.values, g, col, config.step_size, config.epsilon);
    t.per_iteration.push_back({col, {}, oracle.loss(x, target)});
  }
  t.cumulative_support = config.iterations > 0 ? window.length() : 0;
  finish_trace(t, oracle, target);
  return t;
}

AttackTrace greedy_pgd_attack(GradientOracle& oracle, const FeatureWindow& window, double target,
                              const AttackConfig& config) {
  auto t = start_trace(Method::GreedyPgd, oracle, window, target, config);
  Matrix& x = t.adversarial.values;
  std::set<std::size_t> touched;
  for (int k = 0; k < config.iterations; ++k) {
    const Matrix g = oracle.gradient(x, target);
    const std::size_t col = most_influential_feature(movable_gradient(g, x, window.values, config.epsilon));
    touched.insert(col);
    step_column(x, window.values, g, col, config.step_size, config.epsilon);
    t.per_iteration.push_back({col, {}, oracle.loss(x, target)});
  }
  t.cumulative_support = touched.size() * window.length();
  finish_trace(t, oracle, target);
  return t;
}

AttackTrace sparse_attack(GradientOracle& oracle, const FeatureWindow& window, double target,
                          const AttackConfig& config) {
  auto t = start_trace(Method::Sparse, oracle, window, target, config);
  Matrix& x = t.adversarial.values;
  const Matrix& base = window.values;
  std::vector<char> support(x.size(), 0);
  for (int k = 0; k < config.iterations; ++k) {
    const Matrix g = oracle.gradient(x, target);
    auto cells = top_weather_cells(movable_gradient(g, x, base, config.epsilon), config.sparsity);
    // X <- clip(X + alpha * sign(g) (.) M), with M supported on the selected cells.
    for (const auto& c : cells) {
      const double v = x(c.row, c.col) + config.step_size * sign(g(c.row, c.col));
      x(c.row, c.col) = std::clamp(v, base(c.row, c.col) - config.epsilon, base(c.row, c.col) + config.epsilon);
      support[c.row * x.cols() + c.col] = 1;
    }
    t.per_iteration.push_back({std::nullopt, std::move(cells), oracle.loss(x, target)});
  }
  t.cumulative_support = static_cast<std::size_t>(std::count(support.begin(), support.end(), 1));
  finish_trace(t, oracle, target);
  return t;
}

AttackTrace run_attack(Method method, GradientOracle& oracle, const FeatureWindow& window, double target,
                       const AttackConfig& config) {
  switch (method) {
    case Method::Pgd: return pgd_attack(oracle, window, target, config);
    case Method::GreedyPgd: return greedy_pgd_attack(oracle, window, target, config);
    case Method::Sparse: return sparse_attack(oracle, window, target, config);
  }
  return pgd_attack(oracle, window, target, config);
}

double mse_increase(const forecast::ForecastModel& model, std::span<const forecast::ForecastSample> samples,
                    const AttackFn& attack_fn) {
  if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "no test samples");
  double clean = 0.0;
  double attacked = 0.0;
  for (const auto& s : samples) {
    clean += model.loss(s.window.values, s.target);
    const auto adv = attack_fn(s.window, s.target);
    attacked += model.loss(adv.values, s.target);
  }
  return (attacked - clean) / static_cast<double>(samples.size());
}

std::string trace_to_json(const AttackTrace& trace, bool include_windows) {
  using nlohmann::json;
  json j;
  j["method"] = std::string(to_string(trace.method));
  const auto& c = trace.config;
  j["config"] = {{"epsilon", c.epsilon},
                 {"step_size", c.step_size},
                 {"iterations", c.iterations},
                 {"sparsity", c.sparsity},
                 {"fd_delta", c.fd_delta},
                 {"mode", std::string(to_string(c.mode))}};
  if (c.target_feature) j["config"]["target_feature"] = std::string(forecast::feature_names()[*c.target_feature]);
  j["initial_loss"] = trace.initial_loss;
  j["final_loss"] = trace.final_loss;
  j["query_count"] = trace.query_count;
  j["linf_norm"] = trace.linf_norm();
  j["cumulative_support"] = trace.cumulative_support;
  json iters = json::array();
  for (const auto& it : trace.per_iteration) {
    json r;
    r["loss"] = it.loss;
    if (it.chosen_feature) r["feature"] = std::string(forecast::feature_names()[*it.chosen_feature]);
    if (!it.chosen_cells.empty()) {
      json cells = json::array();
      for (const auto& cell : it.chosen_cells) cells.push_back({cell.row, cell.col});
      r["cells"] = cells;
    }
    iters.push_back(r);
  }
  j["per_iteration"] = iters;
  if (include_windows) {
    auto rows = [](const Matrix& m) {
      json out = json::array();
      for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto r = m.row(i);
        out.push_back(std::vector<double>(r.begin(), r.end()));
      }
      return out;
    };
    j["clean_window"] = rows(trace.original.values);
    j["adversarial_window"] = rows(trace.adversarial.values);
  }
  return j.dump();
}

}  // namespace restorisk::attack
