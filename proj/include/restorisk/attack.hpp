#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "restorisk/forecast.hpp"
#include "restorisk/matrix.hpp"

namespace restorisk::attack {

enum class OracleMode { WhiteBox, BlackBox };
enum class Method { Pgd, GreedyPgd, Sparse };

std::string_view to_string(OracleMode mode);
std::string_view to_string(Method method);
OracleMode oracle_mode_from_string(std::string_view name);
Method method_from_string(std::string_view name);

struct AttackConfig {
  double epsilon = 0.05;     // box radius, normalized units
  double step_size = 0.005;  // alpha
  int iterations = 50;       // K
  std::size_t sparsity = 72; // n, sparse attack only
  double fd_delta = 1e-3;    // black-box two-sided difference step
  OracleMode mode = OracleMode::WhiteBox;
  std::optional<std::size_t> target_feature;  // zero-based weather column, plain PGD only

  /// epsilon=0.05, step=epsilon/10, K=50.
  static AttackConfig defaults();
  void validate(std::size_t window_length) const;
};

/// A coordinate (row, column) of a feature window.
struct Cell {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct IterationRecord {
  std::optional<std::size_t> chosen_feature;  // greedy / plain PGD
  std::vector<Cell> chosen_cells;             // sparse attack's S
  double loss = 0.0;                          // after the update
};

struct AttackTrace {
  Method method = Method::Pgd;
  AttackConfig config;
  forecast::FeatureWindow original;
  forecast::FeatureWindow adversarial;
  std::vector<IterationRecord> per_iteration;
  std::uint64_t query_count = 0;       // model queries spent on gradient estimation
  std::size_t cumulative_support = 0;  // distinct cells touched across iterations
  double initial_loss = 0.0;
  double final_loss = 0.0;

  double linf_norm() const;
};

/// Gradient of the attack loss with respect to the window.
///
/// The black-box oracle only sees a query function returning the forecast for a window; it estimates
/// each weather cell with a two-sided difference (2 queries per cell) and reports zero for the load and
/// time-index columns without querying.
class GradientOracle {
 public:
  using QueryFn = std::function<double(const Matrix&)>;

  static GradientOracle white_box(const forecast::ForecastModel& model);
  static GradientOracle black_box(QueryFn query, double fd_delta);
  static GradientOracle black_box(const forecast::ForecastModel& model, double fd_delta);

  OracleMode mode() const noexcept { return mode_; }

  Matrix gradient(const Matrix& window, double target);
  /// Loss evaluation used for bookkeeping (not counted as an attacker query).
  double loss(const Matrix& window, double target) const;

  std::uint64_t query_count() const noexcept { return queries_; }
  void reset_queries() noexcept { queries_ = 0; }

 private:
  GradientOracle() = default;

  OracleMode mode_ = OracleMode::WhiteBox;
  const forecast::ForecastModel* model_ = nullptr;
  QueryFn query_;
  double fd_delta_ = 1e-3;
  std::uint64_t queries_ = 0;
};

/// Entrywise projection onto [original - eps, original + eps].
Matrix clip(const Matrix& candidate, const Matrix& original, double epsilon);

/// Signed-gradient ascent on every row of one fixed weather column.
AttackTrace pgd_attack(GradientOracle& oracle, const forecast::FeatureWindow& window, double target,
                       const AttackConfig& config);

/// Per iteration, perturbs only the weather column with the largest mean |gradient|.
AttackTrace greedy_pgd_attack(GradientOracle& oracle, const forecast::FeatureWindow& window, double target,
                              const AttackConfig& config);

/// Per iteration, perturbs only the n weather cells with the largest |gradient|.
AttackTrace sparse_attack(GradientOracle& oracle, const forecast::FeatureWindow& window, double target,
                          const AttackConfig& config);

AttackTrace run_attack(Method method, GradientOracle& oracle, const forecast::FeatureWindow& window,
                       double target, const AttackConfig& config);

/// argmax over weather columns of mean |g|; ties go to the lowest column.
std::size_t most_influential_feature(const Matrix& gradient);

/// Top-n weather cells by |g|; ties in row-major order. Returns min(n, H*4) cells sorted row-major.
std::vector<Cell> top_weather_cells(const Matrix& gradient, std::size_t n);

using AttackFn = std::function<forecast::FeatureWindow(const forecast::FeatureWindow&, double)>;

/// Attacked-window MSE minus clean MSE over the samples (normalized units).
double mse_increase(const forecast::ForecastModel& model, std::span<const forecast::ForecastSample> samples,
                    const AttackFn& attack_fn);

std::string trace_to_json(const AttackTrace& trace, bool include_windows = true);

}  // namespace restorisk::attack
