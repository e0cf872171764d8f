#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "restorisk/attack.hpp"
#include "restorisk/error.hpp"
#include "restorisk/experiment.hpp"
#include "restorisk/forecast.hpp"

using namespace restorisk;
using namespace restorisk::attack;
using forecast::Architecture;
using forecast::FeatureWindow;
using forecast::ForecastModel;

namespace {

FeatureWindow random_window(std::size_t h, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FeatureWindow w;
  w.values = Matrix(h, forecast::kNumFeatures);
  for (auto& v : w.values.flat()) v = u(rng);
  return w;
}

Matrix random_matrix(std::size_t h, std::mt19937_64& rng, bool coarse = false) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> k(-3, 3);
  Matrix m(h, forecast::kNumFeatures);
  for (auto& v : m.flat()) v = coarse ? k(rng) : u(rng);
  return m;
}

struct Trained {
  ForecastModel model;
  std::vector<forecast::ForecastSample> test;
};

// Small MLP on a synthetic profile, H = 24.
const Trained& trained_mlp() {
  static const Trained t = [] {
    const auto rows = experiment::synth_dataset(5, 30, "BASE");
    const auto raw = forecast::build_windows(rows, 24);
    const std::vector<forecast::ForecastSample> fit(raw.begin(), raw.end() - 120);
    const auto norm = forecast::fit_normalizer(fit);
    forecast::TrainConfig tc;
    tc.architecture = Architecture::Mlp;
    tc.epochs = 150;
    tc.hidden = 8;
    Trained out{forecast::train(norm.apply(fit), tc, norm), {}};
    const std::vector<forecast::ForecastSample> rest(raw.end() - 120, raw.end());
    out.test = norm.apply(rest);
    return out;
  }();
  return t;
}

AttackConfig config(double eps, int k, std::size_t n = 12) {
  AttackConfig c;
  c.epsilon = eps;
  c.step_size = eps / 10.0;
  c.iterations = k;
  c.sparsity = n;
  return c;
}

}  // namespace

TEST_CASE("box projection") {
  Matrix original(1, 3, 0.5), candidate(1, 3);
  candidate(0, 0) = 0.7;
  candidate(0, 1) = 0.55;
  candidate(0, 2) = 0.3;
  const auto out = clip(candidate, original, 0.1);
  CHECK(out(0, 0) == doctest::Approx(0.6));
  CHECK(out(0, 1) == 0.55);
  CHECK(out(0, 2) == doctest::Approx(0.4));
  CHECK_THROWS_AS(clip(Matrix(2, 3), original, 0.1), Error);
}

TEST_CASE("config validation") {
  auto c = config(0.05, 10, 97);
  CHECK_THROWS_AS(c.validate(24), Error);
  c.sparsity = 96;
  CHECK_NOTHROW(c.validate(24));
  c.target_feature = forecast::kTimeIndex;
  CHECK_THROWS_AS(c.validate(24), Error);
  c.target_feature = forecast::kLoad;
  CHECK_THROWS_AS(c.validate(24), Error);
  const auto d = AttackConfig::defaults();
  CHECK(d.epsilon == 0.05);
  CHECK(d.step_size == doctest::Approx(0.005));
  CHECK(d.iterations == 50);
}

TEST_CASE("plain PGD needs a target feature and leaves trivial cases untouched") {
  const auto m = ForecastModel::initialize(Architecture::Mlp, 6, 4, 3);
  std::mt19937_64 rng(1);
  const auto w = random_window(6, rng);
  auto oracle = GradientOracle::white_box(m);
  auto c = config(0.05, 10);
  try {
    pgd_attack(oracle, w, 0.3, c);
    FAIL("missing target accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingTargetFeature);
  }
  c.target_feature = forecast::kHumidity;
  c.iterations = 0;
  CHECK(pgd_attack(oracle, w, 0.3, c).adversarial.values == w.values);
  c.iterations = 10;
  c.epsilon = 0.0;
  c.step_size = 0.01;
  CHECK(pgd_attack(oracle, w, 0.3, c).adversarial.values == w.values);
  const auto g = greedy_pgd_attack(oracle, w, 0.3, c);
  CHECK(g.adversarial.values == w.values);
  CHECK(g.per_iteration.size() == 10);
  for (const auto& it : g.per_iteration) CHECK(it.chosen_feature.has_value());
  auto s = config(0.05, 10, 0);
  CHECK(sparse_attack(oracle, w, 0.3, s).adversarial.values == w.values);
}

TEST_CASE("linear PGD saturates along the weight signs and never loses ground") {
  const auto m = ForecastModel::initialize(Architecture::Linear, 8, 0, 5);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto w = random_window(8, rng);
    const double target = m.predict(w.values) - 10.0;  // f - L stays positive
    auto oracle = GradientOracle::white_box(m);
    auto c = config(0.05, 12);
    c.target_feature = forecast::kFirstWeather + static_cast<std::size_t>(trial % 4);
    const auto t = pgd_attack(oracle, w, target, c);
    const std::size_t col = *c.target_feature;
    for (std::size_t r = 0; r < 8; ++r) {
      const double weight = m.theta()[r * forecast::kNumFeatures + col];
      const double moved = t.adversarial.values(r, col) - w.values(r, col);
      if (weight != 0.0) CHECK(moved == doctest::Approx(std::copysign(0.05, weight)).epsilon(1e-9));
    }
    double prev = t.initial_loss;
    for (const auto& it : t.per_iteration) {
      CHECK(it.loss >= prev - 1e-15);
      prev = it.loss;
    }
  }
}

TEST_CASE("greedy feature ranking") {
  Matrix g(4, forecast::kNumFeatures, 0.1);
  for (std::size_t r = 0; r < 4; ++r) g(r, forecast::kHumidity) = -0.5;
  g(0, forecast::kLoad) = 100.0;  // never eligible
  CHECK(most_influential_feature(g) == forecast::kHumidity);
  Matrix tie(4, forecast::kNumFeatures, 0.2);
  CHECK(most_influential_feature(tie) == forecast::kTemperature);
  for (std::size_t r = 0; r < 4; ++r) tie(r, forecast::kWindDirection) = -0.2;
  CHECK(most_influential_feature(tie) == forecast::kTemperature);
}

TEST_CASE("top-n selection agrees with a full sort") {
  std::mt19937_64 rng(77);
  for (int k = 0; k < 100; ++k) {
    const std::size_t h = 3 + static_cast<std::size_t>(k % 10);
    const auto g = random_matrix(h, rng, k % 2 == 0);
    const std::size_t n = static_cast<std::size_t>(k * 7) % (h * 4 + 3);
    struct Key {
      double mag;
      std::size_t row, col;
    };
    std::vector<Key> keys;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = forecast::kFirstWeather; c <= forecast::kLastWeather; ++c) keys.push_back({std::abs(g(r, c)), r, c});
    }
    std::stable_sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) { return a.mag > b.mag; });
    keys.resize(std::min(n, keys.size()));
    std::vector<Cell> expect;
    for (const auto& key : keys) expect.push_back({key.row, key.col});
    std::sort(expect.begin(), expect.end(),
              [](const Cell& a, const Cell& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
    CHECK(top_weather_cells(g, n) == expect);
  }
}

TEST_CASE("full-support SAA equals signed ascent on every weather cell") {
  const auto m = ForecastModel::initialize(Architecture::Mlp, 6, 5, 8);
  std::mt19937_64 rng(3);
  const auto w = random_window(6, rng);
  auto oracle = GradientOracle::white_box(m);
  const auto c = config(0.05, 7, 24);
  const auto t = sparse_attack(oracle, w, 0.2, c);
  Matrix x = w.values;
  for (int k = 0; k < 7; ++k) {
    const auto g = m.input_gradient(x, 0.2);
    Matrix cand = x;
    for (std::size_t r = 0; r < 6; ++r) {
      for (std::size_t col = forecast::kFirstWeather; col <= forecast::kLastWeather; ++col) {
        const double s = g(r, col) > 0 ? 1.0 : (g(r, col) < 0 ? -1.0 : 0.0);
        cand(r, col) += c.step_size * s;
      }
    }
    x = clip(cand, w.values, c.epsilon);
  }
  CHECK(t.adversarial.values == x);
}

TEST_CASE("randomized attack invariants hold with zero violations") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ForecastModel> models;
  for (auto arch : {Architecture::Linear, Architecture::Mlp, Architecture::Recurrent}) {
    for (std::size_t h : {4, 9}) models.push_back(ForecastModel::initialize(arch, h, 5, 40 + h));
  }
  std::size_t violations = 0, runs = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto& m = models[static_cast<std::size_t>(k) % models.size()];
    const std::size_t h = m.window_length();
    const auto w = random_window(h, rng);
    const auto method = static_cast<Method>(k % 3);
    AttackConfig c;
    c.epsilon = 0.2 * u(rng);
    c.step_size = c.epsilon * (0.05 + u(rng));
    c.iterations = 1 + static_cast<int>(u(rng) * 12);
    c.sparsity = static_cast<std::size_t>(u(rng) * static_cast<double>(h * 4 + 1));
    c.target_feature = forecast::kFirstWeather + static_cast<std::size_t>(k % 4);
    const bool black = k % 10 == 0;
    auto oracle = black ? GradientOracle::black_box(m, 1e-3) : GradientOracle::white_box(m);
    const auto t = run_attack(method, oracle, w, u(rng), c);
    ++runs;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t col = 0; col < forecast::kNumFeatures; ++col) {
        const double d = std::abs(t.adversarial.values(r, col) - w.values(r, col));
        if (d > c.epsilon + 1e-12) ++violations;
        if (!forecast::is_weather(col) && t.adversarial.values(r, col) != w.values(r, col)) ++violations;
        if (method == Method::Pgd && col != *c.target_feature && d != 0.0) ++violations;
      }
    }
    if (t.per_iteration.size() != static_cast<std::size_t>(c.iterations)) ++violations;
    std::set<std::size_t> chosen;
    for (const auto& it : t.per_iteration) {
      if (method == Method::Sparse) {
        if (it.chosen_cells.size() != std::min(c.sparsity, h * 4)) ++violations;
        for (const auto& cell : it.chosen_cells) {
          if (!forecast::is_weather(cell.col)) ++violations;
        }
      }
      if (it.chosen_feature) chosen.insert(*it.chosen_feature);
    }
    if (method == Method::GreedyPgd) {
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t col = forecast::kFirstWeather; col <= forecast::kLastWeather; ++col) {
          if (!chosen.count(col) && t.adversarial.values(r, col) != w.values(r, col)) ++violations;
        }
      }
    }
    if (black && method == Method::Sparse &&
        t.query_count != 2 * h * 4 * static_cast<std::uint64_t>(c.iterations)) {
      ++violations;
    }
    if (!black && t.query_count != 0) ++violations;
  }
  CHECK(runs == 1000);
  CHECK(violations == 0);
}

TEST_CASE("finite differences are exact on a linear model and close on a trained MLP") {
  const auto lin = ForecastModel::initialize(Architecture::Linear, 6, 0, 12);
  std::mt19937_64 rng(6);
  for (double delta : {1e-1, 1e-3}) {
    const auto w = random_window(6, rng);
    auto bb = GradientOracle::black_box(lin, delta);
    const auto fd = bb.gradient(w.values, 0.4);
    const auto an = lin.input_gradient(w.values, 0.4);
    for (std::size_t r = 0; r < 6; ++r) {
      for (std::size_t c = 0; c < forecast::kNumFeatures; ++c) {
        if (forecast::is_weather(c)) {
          CHECK(fd(r, c) == doctest::Approx(an(r, c)).epsilon(1e-8));
        } else {
          CHECK(fd(r, c) == 0.0);
        }
      }
    }
    CHECK(bb.query_count() == 2 * 6 * 4);
  }
  auto zero = lin;
  for (std::size_t i = 0; i + 1 < zero.theta().size(); ++i) zero.mutable_theta()[i] = 0.0;
  const auto w = random_window(6, rng);
  auto bz = GradientOracle::black_box(zero, 1e-3);
  const auto gz = bz.gradient(w.values, zero.predict(w.values));
  for (double v : gz.flat()) CHECK(v == 0.0);

  const auto& t = trained_mlp();
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto& s = t.test[static_cast<std::size_t>(k) % t.test.size()];
    auto x = s.window.values;
    for (std::size_t r = 0; r < x.rows(); ++r) x(r, forecast::kTemperature) += 0.01 * (k % 7);
    auto bb = GradientOracle::black_box(t.model, 1e-3);
    const auto fd = bb.gradient(x, s.target);
    const auto an = t.model.input_gradient(x, s.target);
    double num = 0.0, den = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t c = forecast::kFirstWeather; c <= forecast::kLastWeather; ++c) {
        num += (fd(r, c) - an(r, c)) * (fd(r, c) - an(r, c));
        den += an(r, c) * an(r, c);
      }
    }
    worst = std::max(worst, std::sqrt(num / den));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("greedy feature choice agrees between oracles") {
  const auto& t = trained_mlp();
  int agree = 0, counted = 0;
  for (int k = 0; k < 100; ++k) {
    const auto& s = t.test[static_cast<std::size_t>(k) % t.test.size()];
    auto x = s.window.values;
    for (std::size_t r = 0; r < x.rows(); ++r) x(r, forecast::kHumidity) -= 0.003 * (k % 11);
    const auto an = t.model.input_gradient(x, s.target);
    auto bb = GradientOracle::black_box(t.model, 1e-3);
    const auto fd = bb.gradient(x, s.target);
    std::vector<double> mean(forecast::kNumFeatures, 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t c = forecast::kFirstWeather; c <= forecast::kLastWeather; ++c) mean[c] += std::abs(an(r, c));
    }
    std::vector<double> sorted(mean.begin() + forecast::kFirstWeather, mean.begin() + forecast::kLastWeather + 1);
    std::sort(sorted.rbegin(), sorted.rend());
    if (sorted[0] - sorted[1] <= 1e-9 * sorted[0]) continue;  // tie
    ++counted;
    if (most_influential_feature(an) == most_influential_feature(fd)) ++agree;
  }
  REQUIRE(counted > 0);
  CHECK(static_cast<double>(agree) >= 0.95 * counted);
}

TEST_CASE("greedy PGD is at least as strong as PGD on the weakest fixed feature") {
  const auto& t = trained_mlp();
  int wins = 0;
  for (int k = 0; k < 50; ++k) {
    const auto& s = t.test[static_cast<std::size_t>(k * 2) % t.test.size()];
    auto c = config(0.05, 20);
    auto oracle = GradientOracle::white_box(t.model);
    const double greedy = greedy_pgd_attack(oracle, s.window, s.target, c).final_loss;
    double weakest = INFINITY;
    for (std::size_t f = forecast::kFirstWeather; f <= forecast::kLastWeather; ++f) {
      c.target_feature = f;
      weakest = std::min(weakest, pgd_attack(oracle, s.window, s.target, c).final_loss);
    }
    if (greedy >= weakest - 1e-12) ++wins;
  }
  CHECK(wins >= 45);
}

TEST_CASE("MSE increase") {
  const auto& t = trained_mlp();
  const std::vector<forecast::ForecastSample> few(t.test.begin(), t.test.begin() + 10);
  CHECK(mse_increase(t.model, few, [](const FeatureWindow& w, double) { return w; }) == 0.0);
  const auto c = config(0.05, 20, 96);
  const double saa = mse_increase(t.model, few, [&](const FeatureWindow& w, double target) {
    auto o = GradientOracle::white_box(t.model);
    return sparse_attack(o, w, target, c).adversarial;
  });
  CHECK(saa > 0.0);
  try {
    mse_increase(t.model, {}, [](const FeatureWindow& w, double) { return w; });
    FAIL("empty set accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyDataset);
  }
}

TEST_CASE("trace serialization carries the audit fields") {
  const auto m = ForecastModel::initialize(Architecture::Mlp, 5, 3, 2);
  std::mt19937_64 rng(12);
  const auto w = random_window(5, rng);
  auto oracle = GradientOracle::black_box(m, 1e-3);
  const auto t = sparse_attack(oracle, w, 0.1, config(0.05, 3, 4));
  const auto text = trace_to_json(t, true);
  for (const char* key : {"\"method\"", "\"config\"", "\"final_loss\"", "\"per_iteration\"", "\"query_count\"",
                          "\"linf_norm\"", "\"adversarial_window\"", "\"clean_window\""}) {
    CHECK(text.find(key) != std::string::npos);
  }
  CHECK(t.linf_norm() <= 0.05 + 1e-12);
  CHECK(t.query_count == 3 * 2 * 5 * 4);
}
