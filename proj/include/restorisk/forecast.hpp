#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "restorisk/matrix.hpp"

namespace restorisk::forecast {

using TimePoint = std::chrono::sys_seconds;

/// Number of input features per hour.
inline constexpr std::size_t kNumFeatures = 6;

/// Column order of a feature window. Attackers may only touch the four weather columns.
enum Feature : std::size_t {
  kLoad = 0,
  kTemperature = 1,
  kHumidity = 2,
  kWindSpeed = 3,
  kWindDirection = 4,
  kTimeIndex = 5,
};

inline constexpr std::size_t kFirstWeather = kTemperature;
inline constexpr std::size_t kLastWeather = kWindDirection;
inline constexpr std::size_t kNumWeather = kLastWeather - kFirstWeather + 1;

constexpr bool is_weather(std::size_t col) { return col >= kFirstWeather && col <= kLastWeather; }

const std::array<std::string_view, kNumFeatures>& feature_names();

/// One hourly observation as stored in the dataset CSV.
struct SeriesRow {
  TimePoint timestamp;
  double load_kw = 0.0;
  double temp_c = 0.0;
  double humidity_pct = 0.0;
  double wind_speed_mps = 0.0;
  double wind_dir_deg = 0.0;
};

struct FeatureWindow {
  Matrix values;  // H x kNumFeatures
  std::vector<TimePoint> timestamps;

  std::size_t length() const noexcept { return values.rows(); }
};

struct ForecastSample {
  FeatureWindow window;
  double target = 0.0;  // load one hour after the last window row
};

/// Hour-of-day / 24.
double time_index(TimePoint t);

/// Sample k covers rows k..k+H-1 and targets the load of row k+H. Values are raw (physical units).
std::vector<ForecastSample> build_windows(std::span<const SeriesRow> series, std::size_t window_length);

struct FeatureRange {
  double min = 0.0;
  double max = 1.0;
};

/// Per-feature min-max scaling onto [0, 1].
class Normalizer {
 public:
  Normalizer() = default;
  explicit Normalizer(std::array<FeatureRange, kNumFeatures> ranges) : ranges_(ranges) {}

  const std::array<FeatureRange, kNumFeatures>& ranges() const noexcept { return ranges_; }

  double normalize(std::size_t feature, double value) const;
  double denormalize(std::size_t feature, double value) const;

  FeatureWindow apply(const FeatureWindow& raw) const;
  ForecastSample apply(const ForecastSample& raw) const;
  std::vector<ForecastSample> apply(std::span<const ForecastSample> raw) const;

  double load_kw(double normalized_load) const { return denormalize(kLoad, normalized_load); }

 private:
  std::array<FeatureRange, kNumFeatures> ranges_{};
};

/// Ranges over every window row and target of the given (raw) samples. Constant columns get (v, v+1).
Normalizer fit_normalizer(std::span<const ForecastSample> samples);

enum class Architecture { Linear, Mlp, Recurrent };

std::string_view to_string(Architecture arch);
Architecture architecture_from_string(std::string_view name);

struct TrainConfig {
  Architecture architecture = Architecture::Mlp;
  /// Full-batch gradient-descent step. Defaults per architecture: see default_learning_rate().
  double learning_rate = 0.0;
  int epochs = 200;
  std::uint64_t seed = 7;
  std::size_t hidden = 12;
};

double default_learning_rate(Architecture arch);

struct EpochLoss {
  int epoch = 0;
  double mse = 0.0;
};

/// A small differentiable forecaster f_theta over an H x 6 window.
///
/// Parameter layouts (flat theta):
///  - Linear:    w[H*J], b
///  - Mlp:       W1[m][H*J], b1[m], w2[m], b2          (tanh hidden layer)
///  - Recurrent: Wx[m][J], Wh[m][m], b[m], wo[m], bo    (h_i = tanh(Wx x_i + Wh h_{i-1} + b))
///
/// All methods are const and thread-safe.
class ForecastModel {
 public:
  ForecastModel() = default;

  static ForecastModel initialize(Architecture arch, std::size_t window_length, std::size_t hidden,
                                  std::uint64_t seed);

  Architecture architecture() const noexcept { return arch_; }
  std::size_t window_length() const noexcept { return window_length_; }
  std::size_t hidden() const noexcept { return hidden_; }
  std::uint64_t seed() const noexcept { return seed_; }

  std::span<const double> theta() const noexcept { return theta_; }
  std::span<double> mutable_theta() noexcept { return theta_; }

  const Normalizer& normalizer() const noexcept { return normalizer_; }
  void set_normalizer(const Normalizer& n) { normalizer_ = n; }

  const std::vector<EpochLoss>& training_log() const noexcept { return training_log_; }
  void append_log(EpochLoss e) { training_log_.push_back(e); }

  double predict(const Matrix& window) const;
  double loss(const Matrix& window, double target) const;
  /// d loss / d window, by reverse-mode differentiation.
  Matrix input_gradient(const Matrix& window, double target) const;
  /// Adds d loss / d theta into grad; returns the loss.
  double accumulate_param_gradient(const Matrix& window, double target, std::span<double> grad) const;

  static std::size_t parameter_count(Architecture arch, std::size_t window_length, std::size_t hidden);

  friend bool operator==(const ForecastModel&, const ForecastModel&);

 private:
  void check_shape(const Matrix& window) const;

  Architecture arch_ = Architecture::Linear;
  std::size_t window_length_ = 0;
  std::size_t hidden_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<double> theta_;
  Normalizer normalizer_;
  std::vector<EpochLoss> training_log_;
};

/// Full-batch gradient descent on the mean squared error. Samples must already be normalized.
ForecastModel train(std::span<const ForecastSample> samples, const TrainConfig& config,
                    const Normalizer& normalizer = {});

double predict(const ForecastModel& model, const FeatureWindow& window);
double loss(const ForecastModel& model, const FeatureWindow& window, double target);
Matrix input_gradient(const ForecastModel& model, const FeatureWindow& window, double target);

/// Mean squared error over samples, normalized units.
double mean_squared_error(const ForecastModel& model, std::span<const ForecastSample> samples);

// --- persistence ---

std::string format_rfc3339(TimePoint t);
TimePoint parse_rfc3339(std::string_view text);

std::vector<SeriesRow> read_series_csv(const std::filesystem::path& path);
void write_series_csv(const std::filesystem::path& path, std::span<const SeriesRow> rows);

std::string model_to_json(const ForecastModel& model);
ForecastModel model_from_json(std::string_view text);

}  // namespace restorisk::forecast
