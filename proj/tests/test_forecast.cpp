#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "restorisk/error.hpp"
#include "restorisk/forecast.hpp"

using namespace restorisk;
using namespace restorisk::forecast;
using namespace std::chrono;

namespace {

std::vector<SeriesRow> hourly(std::size_t n, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SeriesRow> rows(n);
  const TimePoint t0 = sys_days{2023y / June / 1};
  for (std::size_t i = 0; i < n; ++i) {
    rows[i].timestamp = t0 + hours(i);
    rows[i].load_kw = 50.0 + 10.0 * u(rng);
    rows[i].temp_c = 20.0 + 10.0 * u(rng);
    rows[i].humidity_pct = 40.0 + 40.0 * u(rng);
    rows[i].wind_speed_mps = 5.0 * u(rng);
    rows[i].wind_dir_deg = 360.0 * u(rng);
  }
  return rows;
}

Matrix random_window(std::size_t h, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(h, kNumFeatures);
  for (auto& v : m.flat()) v = u(rng);
  return m;
}

double relative_error(const Matrix& a, const Matrix& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a.flat()[i] - b.flat()[i]) * (a.flat()[i] - b.flat()[i]);
    den += b.flat()[i] * b.flat()[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

Matrix central_difference(const ForecastModel& m, Matrix x, double target, double delta) {
  Matrix g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.flat()[i];
    x.flat()[i] = v + delta;
    const double up = m.loss(x, target);
    x.flat()[i] = v - delta;
    const double down = m.loss(x, target);
    x.flat()[i] = v;
    g.flat()[i] = (up - down) / (2.0 * delta);
  }
  return g;
}

// load_t = 0.3 * temp_{t-1} + 0.1 on normalized windows.
std::vector<ForecastSample> realizable(std::size_t n, std::size_t h, std::mt19937_64& rng) {
  std::vector<ForecastSample> out(n);
  for (auto& s : out) {
    s.window.values = random_window(h, rng);
    s.target = 0.3 * s.window.values(h - 1, kTemperature) + 0.1;
  }
  return out;
}

}  // namespace

TEST_CASE("window construction") {
  CHECK(build_windows(hourly(100), 72).size() == 28);
  const auto rows = hourly(73);
  const auto one = build_windows(rows, 72);
  REQUIRE(one.size() == 1);
  CHECK(one[0].target == rows[72].load_kw);
  CHECK(one[0].window.length() == 72);
  for (std::size_t i = 0; i < 72; ++i) {
    CHECK(one[0].window.values(i, kLoad) == rows[i].load_kw);
    CHECK(one[0].window.values(i, kWindDirection) == rows[i].wind_dir_deg);
    CHECK(one[0].window.values(i, kTimeIndex) == doctest::Approx(static_cast<double>(i % 24) / 24.0));
  }
  const auto many = build_windows(hourly(300), 24);
  CHECK(many.size() == 276);
  CHECK(many[5].window.values(0, kTemperature) == hourly(300)[5].temp_c);

  CHECK_THROWS_AS(build_windows(hourly(72), 72), Error);
  try {
    build_windows(hourly(72), 72);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SeriesTooShort);
  }
  auto gap = hourly(100);
  gap[50].timestamp += minutes(30);
  try {
    build_windows(gap, 24);
    FAIL("gap accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonUniformSpacing);
  }
}

TEST_CASE("normalizer ranges, degenerate columns and round trip") {
  auto rows = hourly(60, 3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].wind_speed_mps = 5.0;
    rows[i].temp_c = 10.0 + 20.0 * static_cast<double>(i % 7) / 6.0;
  }
  const auto samples = build_windows(rows, 12);
  const auto n = fit_normalizer(samples);
  CHECK(n.ranges()[kWindSpeed].min == 5.0);
  CHECK(n.ranges()[kWindSpeed].max == 6.0);
  CHECK(n.ranges()[kTemperature].min == doctest::Approx(10.0));
  CHECK(n.ranges()[kTemperature].max == doctest::Approx(30.0));
  CHECK(n.normalize(kTemperature, 20.0) == doctest::Approx(0.5));

  // Independent scan over every window row and target.
  for (std::size_t f : {kLoad, kHumidity, kWindDirection, kTimeIndex}) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& s : samples) {
      for (std::size_t r = 0; r < s.window.length(); ++r) {
        lo = std::min(lo, s.window.values(r, f));
        hi = std::max(hi, s.window.values(r, f));
      }
      if (f == kLoad) {
        lo = std::min(lo, s.target);
        hi = std::max(hi, s.target);
      }
    }
    if (lo == hi) hi = lo + 1.0;
    CHECK(n.ranges()[f].min == lo);
    CHECK(n.ranges()[f].max == hi);
  }

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-500.0, 500.0);
  for (int k = 0; k < 200; ++k) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      const double v = u(rng);
      CHECK(std::abs(n.denormalize(f, n.normalize(f, v)) - v) <= 1e-12 * std::max(1.0, std::abs(v)));
    }
  }
  CHECK_THROWS_AS(fit_normalizer(std::vector<ForecastSample>{}), Error);
}

TEST_CASE("prediction and loss basics") {
  auto zero = ForecastModel::initialize(Architecture::Linear, 4, 0, 1);
  for (auto& t : zero.mutable_theta()) t = 0.0;
  std::mt19937_64 rng(2);
  const auto x = random_window(4, rng);
  CHECK(zero.predict(x) == 0.0);

  auto bias = zero;
  bias.mutable_theta().back() = 0.5;
  CHECK(bias.loss(x, 0.3) == doctest::Approx(0.04).epsilon(1e-12));
  CHECK(bias.loss(x, 0.5) == 0.0);

  const auto mlp = ForecastModel::initialize(Architecture::Mlp, 6, 5, 4);
  for (int k = 0; k < 100; ++k) {
    const auto w = random_window(6, rng);
    const double target = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double p = mlp.predict(w);
    CHECK(p == mlp.predict(w));
    CHECK(mlp.loss(w, target) == doctest::Approx((p - target) * (p - target)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(mlp.predict(random_window(5, rng)), Error);
  try {
    mlp.input_gradient(Matrix(6, 5), 0.0);
    FAIL("shape accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("linear input gradient is 2(f - L) w") {
  const auto m = ForecastModel::initialize(Architecture::Linear, 5, 0, 11);
  std::mt19937_64 rng(5);
  const auto x = random_window(5, rng);
  const double target = 0.2;
  const double f = m.predict(x);
  const auto g = m.input_gradient(x, target);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(g.flat()[i] == doctest::Approx(2.0 * (f - target) * m.theta()[i]).epsilon(1e-12));
  }
  const auto flat = m.input_gradient(x, f);
  for (double v : flat.flat()) CHECK(v == 0.0);
}

TEST_CASE("reverse-mode gradients match central differences for every architecture") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto arch : {Architecture::Linear, Architecture::Mlp, Architecture::Recurrent}) {
    CAPTURE(to_string(arch));
    const auto m = ForecastModel::initialize(arch, 8, 6, 21);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      const auto x = random_window(8, rng);
      const double target = u(rng) - 0.5;
      worst = std::max(worst, relative_error(m.input_gradient(x, target), central_difference(m, x, target, 1e-4)));
    }
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("training on a realizable linear target converges to ground truth") {
  std::mt19937_64 rng(31);
  const auto data = realizable(200, 6, rng);
  TrainConfig tc;
  tc.architecture = Architecture::Linear;
  tc.epochs = 20000;
  const auto m = train(data, tc);
  CHECK(mean_squared_error(m, data) <= 1e-8);
  const auto fresh = realizable(50, 6, rng);
  for (const auto& s : fresh) CHECK(std::abs(m.predict(s.window.values) - s.target) <= 1e-4);
}

TEST_CASE("training log, zero epochs, determinism and divergence") {
  std::mt19937_64 rng(8);
  const auto data = realizable(80, 6, rng);
  for (auto arch : {Architecture::Linear, Architecture::Mlp, Architecture::Recurrent}) {
    CAPTURE(to_string(arch));
    TrainConfig tc;
    tc.architecture = arch;
    tc.epochs = 60;
    tc.hidden = 5;
    tc.seed = 13;
    const auto a = train(data, tc);
    const auto b = train(data, tc);
    CHECK(a == b);
    REQUIRE(a.training_log().size() == 60);
    for (std::size_t e = 1; e < a.training_log().size(); ++e) {
      CHECK(a.training_log()[e].mse <= a.training_log()[e - 1].mse + 1e-15);
    }
    tc.epochs = 0;
    const auto init = train(data, tc);
    const auto seeded = ForecastModel::initialize(arch, 6, 5, 13);
    CHECK(std::vector<double>(init.theta().begin(), init.theta().end()) ==
          std::vector<double>(seeded.theta().begin(), seeded.theta().end()));
  }
  TrainConfig wild;
  wild.architecture = Architecture::Linear;
  wild.learning_rate = 1e6;
  wild.epochs = 200;
  try {
    train(data, wild);
    FAIL("diverging run accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DivergedTraining);
  }
}

TEST_CASE("MLP explains most of the variance of a daily load cycle") {
  std::vector<SeriesRow> rows(24 * 20);
  const TimePoint t0 = sys_days{2023y / June / 1};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double h = static_cast<double>(i % 24);
    rows[i].timestamp = t0 + hours(i);
    rows[i].load_kw = 100.0 + 30.0 * std::sin(2.0 * M_PI * h / 24.0);
    rows[i].temp_c = 25.0 + 5.0 * std::sin(2.0 * M_PI * (h - 9.0) / 24.0);
    rows[i].humidity_pct = 60.0;
    rows[i].wind_speed_mps = 3.0;
    rows[i].wind_dir_deg = 200.0;
  }
  const auto raw = build_windows(rows, 24);
  const auto norm = fit_normalizer(raw);
  const auto data = norm.apply(raw);
  TrainConfig tc;
  tc.architecture = Architecture::Mlp;
  tc.epochs = 400;
  tc.hidden = 8;
  const auto m = train(data, tc, norm);
  double mean = 0.0;
  for (const auto& s : data) mean += s.target;
  mean /= static_cast<double>(data.size());
  double var = 0.0;
  for (const auto& s : data) var += (s.target - mean) * (s.target - mean);
  var /= static_cast<double>(data.size());
  CHECK(1.0 - mean_squared_error(m, data) / var > 0.5);
}

TEST_CASE("dataset CSV and model JSON round trip") {
  const auto rows = hourly(30, 4);
  const auto path = std::filesystem::temp_directory_path() / "restorisk_forecast_roundtrip.csv";
  write_series_csv(path, rows);
  const auto back = read_series_csv(path);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].timestamp == rows[i].timestamp);
    CHECK(std::abs(back[i].load_kw - rows[i].load_kw) <= 5e-5);
    CHECK(std::abs(back[i].wind_dir_deg - rows[i].wind_dir_deg) <= 5e-5);
  }
  write_series_csv(path, back);
  const auto twice = read_series_csv(path);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(twice[i].humidity_pct == back[i].humidity_pct);
  std::filesystem::remove(path);
  CHECK(format_rfc3339(rows[3].timestamp) == "2023-06-01T03:00:00Z");
  CHECK(parse_rfc3339("2023-06-01T03:00:00Z") == rows[3].timestamp);

  const auto m = ForecastModel::initialize(Architecture::Recurrent, 10, 4, 3);
  const auto again = model_from_json(model_to_json(m));
  CHECK(again == m);
  std::mt19937_64 rng(1);
  const auto x = random_window(10, rng);
  CHECK(again.predict(x) == m.predict(x));
}
