#include "restorisk/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "restorisk/error.hpp"

namespace restorisk::forecast {

namespace {

using nlohmann::json;

double feature_value(const SeriesRow& row, std::size_t feature) {
  switch (feature) {
    case kLoad: return row.load_kw;
    case kTemperature: return row.temp_c;
    case kHumidity: return row.humidity_pct;
    case kWindSpeed: return row.wind_speed_mps;
    case kWindDirection: return row.wind_dir_deg;
    case kTimeIndex: return time_index(row.timestamp);
    default: return 0.0;
  }
}

}  // namespace

const std::array<std::string_view, kNumFeatures>& feature_names() {
  static const std::array<std::string_view, kNumFeatures> names{
      "load", "temperature", "humidity", "wind_speed", "wind_direction", "time_index"};
  return names;
}

double time_index(TimePoint t) {
  const auto day = std::chrono::floor<std::chrono::days>(t);
  const auto hour = std::chrono::duration_cast<std::chrono::hours>(t - day).count();
  return static_cast<double>(hour) / 24.0;
}

std::vector<ForecastSample> build_windows(std::span<const SeriesRow> series, std::size_t window_length) {
  if (window_length == 0) throw Error(ErrorCode::SeriesTooShort, "window length must be positive");
  if (series.size() < window_length + 1) {
    throw Error(ErrorCode::SeriesTooShort, "need at least " + std::to_string(window_length + 1) +
                                               " rows, got " + std::to_string(series.size()));
  }
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (series[i].timestamp - series[i - 1].timestamp != std::chrono::hours(1)) {
      throw Error(ErrorCode::NonUniformSpacing, "gap before row " + std::to_string(i));
    }
  }

  std::vector<ForecastSample> samples;
  samples.reserve(series.size() - window_length);
  for (std::size_t k = 0; k + window_length < series.size(); ++k) {
    ForecastSample s;
    s.window.values = Matrix(window_length, kNumFeatures);
    s.window.timestamps.reserve(window_length);
    for (std::size_t i = 0; i < window_length; ++i) {
      const auto& row = series[k + i];
      for (std::size_t f = 0; f < kNumFeatures; ++f) s.window.values(i, f) = feature_value(row, f);
      s.window.timestamps.push_back(row.timestamp);
    }
    s.target = series[k + window_length].load_kw;
    samples.push_back(std::move(s));
  }
  return samples;
}

double Normalizer::normalize(std::size_t feature, double value) const {
  const auto& r = ranges_.at(feature);
  return (value - r.min) / (r.max - r.min);
}

double Normalizer::denormalize(std::size_t feature, double value) const {
  const auto& r = ranges_.at(feature);
  return r.min + value * (r.max - r.min);
}

FeatureWindow Normalizer::apply(const FeatureWindow& raw) const {
  FeatureWindow out = raw;
  for (std::size_t i = 0; i < out.values.rows(); ++i) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) out.values(i, f) = normalize(f, raw.values(i, f));
  }
  return out;
}

ForecastSample Normalizer::apply(const ForecastSample& raw) const {
  return ForecastSample{apply(raw.window), normalize(kLoad, raw.target)};
}

std::vector<ForecastSample> Normalizer::apply(std::span<const ForecastSample> raw) const {
  std::vector<ForecastSample> out;
  out.reserve(raw.size());
  for (const auto& s : raw) out.push_back(apply(s));
  return out;
}

Normalizer fit_normalizer(std::span<const ForecastSample> samples) {
  if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "cannot fit normalizer on no samples");
  std::array<FeatureRange, kNumFeatures> ranges;
  for (auto& r : ranges) {
    r.min = std::numeric_limits<double>::infinity();
    r.max = -std::numeric_limits<double>::infinity();
  }
  for (const auto& s : samples) {
    const auto& v = s.window.values;
    if (v.cols() != kNumFeatures) throw Error(ErrorCode::ShapeMismatch, "window must have 6 columns");
    for (std::size_t i = 0; i < v.rows(); ++i) {
      for (std::size_t f = 0; f < kNumFeatures; ++f) {
        ranges[f].min = std::min(ranges[f].min, v(i, f));
        ranges[f].max = std::max(ranges[f].max, v(i, f));
      }
    }
    ranges[kLoad].min = std::min(ranges[kLoad].min, s.target);
    ranges[kLoad].max = std::max(ranges[kLoad].max, s.target);
  }
  for (auto& r : ranges) {
    if (!(r.max > r.min)) r.max = r.min + 1.0;
  }
  return Normalizer(ranges);
}

std::string_view to_string(Architecture arch) {
  switch (arch) {
    case Architecture::Linear: return "linear";
    case Architecture::Mlp: return "mlp";
    case Architecture::Recurrent: return "recurrent";
  }
  return "linear";
}

Architecture architecture_from_string(std::string_view name) {
  if (name == "linear") return Architecture::Linear;
  if (name == "mlp") return Architecture::Mlp;
  if (name == "recurrent" || name == "rnn") return Architecture::Recurrent;
  throw Error(ErrorCode::InvalidConfig, "unknown architecture '" + std::string(name) + "'");
}

double default_learning_rate(Architecture arch) {
  switch (arch) {
    case Architecture::Linear: return 0.05;
    case Architecture::Mlp: return 0.1;
    case Architecture::Recurrent: return 0.05;
  }
  return 0.05;
}

// ---------------------------------------------------------------------------
// ForecastModel

std::size_t ForecastModel::parameter_count(Architecture arch, std::size_t window_length, std::size_t hidden) {
  const std::size_t in = window_length * kNumFeatures;
  switch (arch) {
    case Architecture::Linear: return in + 1;
    case Architecture::Mlp: return hidden * in + hidden + hidden + 1;
    case Architecture::Recurrent:
      return hidden * kNumFeatures + hidden * hidden + hidden + hidden + 1;
  }
  return 0;
}

ForecastModel ForecastModel::initialize(Architecture arch, std::size_t window_length, std::size_t hidden,
                                        std::uint64_t seed) {
  if (window_length == 0) throw Error(ErrorCode::InvalidConfig, "window length must be positive");
  if (arch != Architecture::Linear && hidden == 0) {
    throw Error(ErrorCode::InvalidConfig, "hidden size must be positive");
  }
  ForecastModel m;
  m.arch_ = arch;
  m.window_length_ = window_length;
  m.hidden_ = arch == Architecture::Linear ? 0 : hidden;
  m.seed_ = seed;
  m.theta_.assign(parameter_count(arch, window_length, m.hidden_), 0.0);

  std::mt19937_64 rng(seed);
  auto fill = [&](std::size_t begin, std::size_t count, double scale) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (std::size_t i = 0; i < count; ++i) m.theta_[begin + i] = dist(rng);
  };

  const std::size_t in = window_length * kNumFeatures;
  const std::size_t h = m.hidden_;
  switch (arch) {
    case Architecture::Linear:
      fill(0, in, 0.01);
      break;
    case Architecture::Mlp:
      // Small first-layer weights keep the sensitivity to uninformative cells low until trained.
      fill(0, h * in, 0.1 / std::sqrt(static_cast<double>(in)));
      fill(h * in + h, h, 1.0 / std::sqrt(static_cast<double>(h)));
      break;
    case Architecture::Recurrent:
      fill(0, h * kNumFeatures, 0.5 / std::sqrt(static_cast<double>(kNumFeatures)));
      fill(h * kNumFeatures, h * h, 0.3 / std::sqrt(static_cast<double>(h)));
      fill(h * kNumFeatures + h * h + h, h, 1.0 / std::sqrt(static_cast<double>(h)));
      break;
  }
  return m;
}

void ForecastModel::check_shape(const Matrix& window) const {
  if (window.rows() != window_length_ || window.cols() != kNumFeatures) {
    throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(window_length_) + "x6 window, got " +
                                              std::to_string(window.rows()) + "x" +
                                              std::to_string(window.cols()));
  }
}

namespace {

struct MlpView {
  const double* w1;
  const double* b1;
  const double* w2;
  double b2;
};

struct RnnView {
  const double* wx;
  const double* wh;
  const double* b;
  const double* wo;
  double bo;
};

MlpView mlp_view(std::span<const double> theta, std::size_t in, std::size_t h) {
  const double* p = theta.data();
  return {p, p + h * in, p + h * in + h, p[h * in + 2 * h]};
}

RnnView rnn_view(std::span<const double> theta, std::size_t h) {
  const double* p = theta.data();
  const std::size_t j = kNumFeatures;
  return {p, p + h * j, p + h * j + h * h, p + h * j + h * h + h, p[h * j + h * h + 2 * h]};
}

// Forward pass storing the activations needed for the backward pass.
double mlp_forward(const MlpView& v, std::span<const double> x, std::size_t h, std::vector<double>& act) {
  const std::size_t in = x.size();
  act.resize(h);
  double f = v.b2;
  for (std::size_t k = 0; k < h; ++k) {
    const double* row = v.w1 + k * in;
    double a = v.b1[k];
    for (std::size_t p = 0; p < in; ++p) a += row[p] * x[p];
    act[k] = std::tanh(a);
    f += v.w2[k] * act[k];
  }
  return f;
}

// states has (H+1) * h entries; states[0..h) is the zero initial state.
double rnn_forward(const RnnView& v, const Matrix& x, std::size_t h, std::vector<double>& states) {
  const std::size_t steps = x.rows();
  states.assign((steps + 1) * h, 0.0);
  for (std::size_t i = 0; i < steps; ++i) {
    const double* prev = states.data() + i * h;
    double* cur = states.data() + (i + 1) * h;
    const auto xi = x.row(i);
    for (std::size_t k = 0; k < h; ++k) {
      double a = v.b[k];
      for (std::size_t j = 0; j < kNumFeatures; ++j) a += v.wx[k * kNumFeatures + j] * xi[j];
      for (std::size_t q = 0; q < h; ++q) a += v.wh[k * h + q] * prev[q];
      cur[k] = std::tanh(a);
    }
  }
  double f = v.bo;
  const double* last = states.data() + steps * h;
  for (std::size_t k = 0; k < h; ++k) f += v.wo[k] * last[k];
  return f;
}

}  // namespace

double ForecastModel::predict(const Matrix& window) const {
  check_shape(window);
  const auto x = window.flat();
  switch (arch_) {
    case Architecture::Linear: {
      double f = theta_.back();
      for (std::size_t p = 0; p < x.size(); ++p) f += theta_[p] * x[p];
      return f;
    }
    case Architecture::Mlp: {
      std::vector<double> act;
      return mlp_forward(mlp_view(theta_, x.size(), hidden_), x, hidden_, act);
    }
    case Architecture::Recurrent: {
      std::vector<double> states;
      return rnn_forward(rnn_view(theta_, hidden_), window, hidden_, states);
    }
  }
  return 0.0;
}

double ForecastModel::loss(const Matrix& window, double target) const {
  const double e = predict(window) - target;
  return e * e;
}

Matrix ForecastModel::input_gradient(const Matrix& window, double target) const {
  check_shape(window);
  Matrix grad(window.rows(), window.cols());
  auto gx = grad.flat();
  const auto x = window.flat();
  switch (arch_) {
    case Architecture::Linear: {
      double f = theta_.back();
      for (std::size_t p = 0; p < x.size(); ++p) f += theta_[p] * x[p];
      const double g = 2.0 * (f - target);
      for (std::size_t p = 0; p < x.size(); ++p) gx[p] = g * theta_[p];
      break;
    }
    case Architecture::Mlp: {
      const std::size_t in = x.size();
      const auto v = mlp_view(theta_, in, hidden_);
      std::vector<double> act;
      const double g = 2.0 * (mlp_forward(v, x, hidden_, act) - target);
      for (std::size_t k = 0; k < hidden_; ++k) {
        const double delta = g * v.w2[k] * (1.0 - act[k] * act[k]);
        const double* row = v.w1 + k * in;
        for (std::size_t p = 0; p < in; ++p) gx[p] += delta * row[p];
      }
      break;
    }
    case Architecture::Recurrent: {
      const std::size_t h = hidden_;
      const auto v = rnn_view(theta_, h);
      std::vector<double> states;
      const double g = 2.0 * (rnn_forward(v, window, h, states) - target);
      std::vector<double> dh(h), da(h), dprev(h);
      for (std::size_t k = 0; k < h; ++k) dh[k] = g * v.wo[k];
      for (std::size_t i = window.rows(); i-- > 0;) {
        const double* cur = states.data() + (i + 1) * h;
        for (std::size_t k = 0; k < h; ++k) da[k] = dh[k] * (1.0 - cur[k] * cur[k]);
        auto gi = grad.row(i);
        for (std::size_t k = 0; k < h; ++k) {
          for (std::size_t j = 0; j < kNumFeatures; ++j) gi[j] += v.wx[k * kNumFeatures + j] * da[k];
        }
        std::fill(dprev.begin(), dprev.end(), 0.0);
        for (std::size_t k = 0; k < h; ++k) {
          for (std::size_t q = 0; q < h; ++q) dprev[q] += v.wh[k * h + q] * da[k];
        }
        dh.swap(dprev);
      }
      break;
    }
  }
  return grad;
}

double ForecastModel::accumulate_param_gradient(const Matrix& window, double target,
                                                std::span<double> grad) const {
  check_shape(window);
  if (grad.size() != theta_.size()) throw Error(ErrorCode::ShapeMismatch, "gradient buffer size");
  const auto x = window.flat();
  switch (arch_) {
    case Architecture::Linear: {
      double f = theta_.back();
      for (std::size_t p = 0; p < x.size(); ++p) f += theta_[p] * x[p];
      const double e = f - target;
      const double g = 2.0 * e;
      for (std::size_t p = 0; p < x.size(); ++p) grad[p] += g * x[p];
      grad[x.size()] += g;
      return e * e;
    }
    case Architecture::Mlp: {
      const std::size_t in = x.size();
      const std::size_t h = hidden_;
      const auto v = mlp_view(theta_, in, h);
      std::vector<double> act;
      const double e = mlp_forward(v, x, h, act) - target;
      const double g = 2.0 * e;
      double* gw1 = grad.data();
      double* gb1 = gw1 + h * in;
      double* gw2 = gb1 + h;
      double& gb2 = gw2[h];
      for (std::size_t k = 0; k < h; ++k) {
        gw2[k] += g * act[k];
        const double delta = g * v.w2[k] * (1.0 - act[k] * act[k]);
        gb1[k] += delta;
        double* row = gw1 + k * in;
        for (std::size_t p = 0; p < in; ++p) row[p] += delta * x[p];
      }
      gb2 += g;
      return e * e;
    }
    case Architecture::Recurrent: {
      const std::size_t h = hidden_;
      const auto v = rnn_view(theta_, h);
      std::vector<double> states;
      const double e = rnn_forward(v, window, h, states) - target;
      const double g = 2.0 * e;
      double* gwx = grad.data();
      double* gwh = gwx + h * kNumFeatures;
      double* gb = gwh + h * h;
      double* gwo = gb + h;
      double& gbo = gwo[h];
      const double* last = states.data() + window.rows() * h;
      std::vector<double> dh(h), da(h), dprev(h);
      for (std::size_t k = 0; k < h; ++k) {
        gwo[k] += g * last[k];
        dh[k] = g * v.wo[k];
      }
      gbo += g;
      for (std::size_t i = window.rows(); i-- > 0;) {
        const double* prev = states.data() + i * h;
        const double* cur = states.data() + (i + 1) * h;
        const auto xi = window.row(i);
        for (std::size_t k = 0; k < h; ++k) da[k] = dh[k] * (1.0 - cur[k] * cur[k]);
        std::fill(dprev.begin(), dprev.end(), 0.0);
        for (std::size_t k = 0; k < h; ++k) {
          gb[k] += da[k];
          for (std::size_t j = 0; j < kNumFeatures; ++j) gwx[k * kNumFeatures + j] += da[k] * xi[j];
          for (std::size_t q = 0; q < h; ++q) {
            gwh[k * h + q] += da[k] * prev[q];
            dprev[q] += v.wh[k * h + q] * da[k];
          }
        }
        dh.swap(dprev);
      }
      return e * e;
    }
  }
  return 0.0;
}

bool operator==(const ForecastModel& a, const ForecastModel& b) {
  return a.arch_ == b.arch_ && a.window_length_ == b.window_length_ && a.hidden_ == b.hidden_ &&
         a.seed_ == b.seed_ && a.theta_ == b.theta_;
}

ForecastModel train(std::span<const ForecastSample> samples, const TrainConfig& config,
                    const Normalizer& normalizer) {
  if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "no training samples");
  if (config.epochs < 0) throw Error(ErrorCode::InvalidConfig, "epochs must be non-negative");
  const std::size_t window_length = samples.front().window.length();
  auto model = ForecastModel::initialize(config.architecture, window_length, config.hidden, config.seed);
  model.set_normalizer(normalizer);
  const double lr = config.learning_rate > 0.0 ? config.learning_rate
                                               : default_learning_rate(config.architecture);

  // Full-batch descent visits samples in a fixed order; shuffling would not change the update.
  std::vector<double> grad(model.theta().size());
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double total = 0.0;
    for (const auto& s : samples) total += model.accumulate_param_gradient(s.window.values, s.target, grad);
    const double mse = total * inv_n;
    if (!std::isfinite(mse)) {
      throw Error(ErrorCode::DivergedTraining, "non-finite loss at epoch " + std::to_string(epoch));
    }
    model.append_log({epoch, mse});
    auto theta = model.mutable_theta();
    for (std::size_t p = 0; p < theta.size(); ++p) theta[p] -= lr * grad[p] * inv_n;
  }
  return model;
}

double predict(const ForecastModel& model, const FeatureWindow& window) {
  return model.predict(window.values);
}

double loss(const ForecastModel& model, const FeatureWindow& window, double target) {
  return model.loss(window.values, target);
}

Matrix input_gradient(const ForecastModel& model, const FeatureWindow& window, double target) {
  return model.input_gradient(window.values, target);
}

double mean_squared_error(const ForecastModel& model, std::span<const ForecastSample> samples) {
  if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "no samples");
  double total = 0.0;
  for (const auto& s : samples) total += model.loss(s.window.values, s.target);
  return total / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------------------
// persistence

std::string format_rfc3339(TimePoint t) {
  const auto day = std::chrono::floor<std::chrono::days>(t);
  const std::chrono::year_month_day ymd{day};
  const std::chrono::hh_mm_ss hms{t - day};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long long>(hms.hours().count()), static_cast<long long>(hms.minutes().count()),
                static_cast<long long>(hms.seconds().count()));
  return buf;
}

TimePoint parse_rfc3339(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  int consumed = 0;
  const std::string str(text);
  if (std::sscanf(str.c_str(), "%4d-%2d-%2d%*1[Tt ]%2d:%2d:%2d%n", &y, &mo, &d, &h, &mi, &s, &consumed) != 6) {
    throw Error(ErrorCode::SchemaError, "bad timestamp '" + str + "'");
  }
  std::string_view rest = text.substr(static_cast<std::size_t>(consumed));
  if (!rest.empty() && rest.front() == '.') {
    std::size_t i = 1;
    while (i < rest.size() && rest[i] >= '0' && rest[i] <= '9') ++i;
    rest.remove_prefix(i);
  }
  int offset_minutes = 0;
  if (rest == "Z" || rest == "z" || rest.empty()) {
    offset_minutes = 0;
  } else if (rest.size() == 6 && (rest[0] == '+' || rest[0] == '-') && rest[3] == ':') {
    const int oh = std::stoi(std::string(rest.substr(1, 2)));
    const int om = std::stoi(std::string(rest.substr(4, 2)));
    offset_minutes = (rest[0] == '-' ? -1 : 1) * (oh * 60 + om);
  } else {
    throw Error(ErrorCode::SchemaError, "bad timestamp offset in '" + str + "'");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw Error(ErrorCode::SchemaError, "invalid date in '" + str + "'");
  return std::chrono::sys_days{ymd} + std::chrono::hours(h) + std::chrono::minutes(mi) +
         std::chrono::seconds(s) - std::chrono::minutes(offset_minutes);
}

namespace {
constexpr std::string_view kCsvHeader = "timestamp,load_kw,temp_c,humidity_pct,wind_speed_mps,wind_dir_deg";
}

std::vector<SeriesRow> read_series_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::SchemaError, path.string() + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw Error(ErrorCode::SchemaError, "unexpected CSV header: " + line);

  std::vector<SeriesRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) {
      throw Error(ErrorCode::SchemaError, "line " + std::to_string(lineno) + ": expected 6 columns");
    }
    try {
      SeriesRow r;
      r.timestamp = parse_rfc3339(cells[0]);
      r.load_kw = std::stod(cells[1]);
      r.temp_c = std::stod(cells[2]);
      r.humidity_pct = std::stod(cells[3]);
      r.wind_speed_mps = std::stod(cells[4]);
      r.wind_dir_deg = std::stod(cells[5]);
      rows.push_back(r);
    } catch (const std::invalid_argument&) {
      throw Error(ErrorCode::SchemaError, "line " + std::to_string(lineno) + ": not a number");
    }
  }
  return rows;
}

void write_series_csv(const std::filesystem::path& path, std::span<const SeriesRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << kCsvHeader << '\n';
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%.4f,%.4f,%.4f\n", format_rfc3339(r.timestamp).c_str(),
                  r.load_kw, r.temp_c, r.humidity_pct, r.wind_speed_mps, r.wind_dir_deg);
    out << buf;
  }
}

std::string model_to_json(const ForecastModel& model) {
  json j;
  j["architecture"] = std::string(to_string(model.architecture()));
  j["H"] = model.window_length();
  j["J"] = kNumFeatures;
  j["hidden"] = model.hidden();
  j["seed"] = model.seed();
  json stats = json::array();
  for (const auto& r : model.normalizer().ranges()) stats.push_back({r.min, r.max});
  j["norm_stats"] = stats;
  j["theta"] = std::vector<double>(model.theta().begin(), model.theta().end());
  json log = json::array();
  for (const auto& e : model.training_log()) log.push_back({e.epoch, e.mse});
  j["training_log"] = log;
  return j.dump();
}

ForecastModel model_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
    const auto arch = architecture_from_string(j.at("architecture").get<std::string>());
    const auto window_length = j.at("H").get<std::size_t>();
    if (j.at("J").get<std::size_t>() != kNumFeatures) throw Error(ErrorCode::SchemaError, "J must be 6");
    const auto hidden = j.value("hidden", std::size_t{0});
    auto model = ForecastModel::initialize(arch, window_length, arch == Architecture::Linear ? 1 : hidden,
                                           j.at("seed").get<std::uint64_t>());
    const auto theta = j.at("theta").get<std::vector<double>>();
    if (theta.size() != model.theta().size()) throw Error(ErrorCode::SchemaError, "theta has wrong length");
    std::copy(theta.begin(), theta.end(), model.mutable_theta().begin());
    std::array<FeatureRange, kNumFeatures> ranges;
    const auto& stats = j.at("norm_stats");
    if (stats.size() != kNumFeatures) throw Error(ErrorCode::SchemaError, "norm_stats must have 6 entries");
    for (std::size_t f = 0; f < kNumFeatures; ++f) ranges[f] = {stats[f].at(0).get<double>(), stats[f].at(1).get<double>()};
    model.set_normalizer(Normalizer(ranges));
    if (j.contains("training_log")) {
      for (const auto& e : j["training_log"]) model.append_log({e.at(0).get<int>(), e.at(1).get<double>()});
    }
    return model;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("model JSON: ") + e.what());
  }
}

}  // namespace restorisk::forecast
