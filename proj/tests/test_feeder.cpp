#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <complex>
#include <fstream>
#include <map>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include "restorisk/error.hpp"
#include "restorisk/feeder.hpp"

using namespace restorisk;
using namespace restorisk::feeder;
using json = nlohmann::json;

namespace {

std::string data_path(const std::string& name) { return std::string(RESTORISK_DATA_DIR) + "/" + name; }

json read_json(const std::string& path) {
  std::ifstream in(path);
  return json::parse(in);
}

const Feeder& bundled() {
  static const Feeder f = load_feeder(data_path("ieee123_restoration.json"));
  return f;
}

ErrorCode code_of(const json& doc) {
  try {
    feeder_from_json(doc.dump());
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("document accepted");
  return ErrorCode::IoError;
}

json two_bus() {
  return json::parse(R"({
    "base": {"kva": 1000, "kv": 4.16},
    "buses": [{"id": 1, "phases": "abc"}, {"id": 2, "phases": "abc"}],
    "lines": [{"id": "L12", "from": 1, "to": 2, "phases": "abc",
               "r_ohm": [[0.3, 0.1, 0.1], [0.1, 0.3, 0.1], [0.1, 0.1, 0.3]],
               "x_ohm": [[0.6, 0.2, 0.2], [0.2, 0.6, 0.2], [0.2, 0.2, 0.6]],
               "pmax_kw": 500, "qmax_kvar": 500}],
    "ibrs": [{"id": "G1", "bus": 1, "kind": "GFM", "phases": "abc", "pmax_kw": 100, "qmax_kvar": 50,
              "ramp": {"mls_kw": 10, "sens_kw_per_hz": 20, "f_nadir": 59.8, "f_min": 59.5}}],
    "loads": [{"id": "D2", "bus": 2, "phases": "abc", "weight": 1, "profile": "BASE", "type": "residential",
               "nominal_kw": 30}]
  })");
}

// Breadth-first reachability written independently of the library.
std::set<int> bfs(const json& doc, const std::set<std::string>& closed, const std::set<int>& sources) {
  std::map<int, std::vector<int>> adj;
  for (const auto& l : doc["lines"]) {
    const bool sw = l.value("switch", false);
    if (sw && !closed.count(l["id"].get<std::string>())) continue;
    adj[l["from"].get<int>()].push_back(l["to"].get<int>());
    adj[l["to"].get<int>()].push_back(l["from"].get<int>());
  }
  std::set<int> seen;
  std::queue<int> q;
  for (int s : sources) {
    if (seen.insert(s).second) q.push(s);
  }
  while (!q.empty()) {
    const int b = q.front();
    q.pop();
    for (int n : adj[b]) {
      if (seen.insert(n).second) q.push(n);
    }
  }
  return seen;
}

}  // namespace

TEST_CASE("bundled 123-bus feeder") {
  const auto& f = bundled();
  CHECK(f.buses().size() == 123);
  CHECK(f.gfm_buses() == std::vector<int>{13, 19, 60, 76});
  std::size_t core = 0;
  for (const auto& l : f.lines()) core += l.is_switch ? 0 : 1;
  CHECK(core == f.buses().size() - f.zones().size());
  std::size_t attacked = 0;
  for (const auto& l : f.loads()) attacked += l.attacked ? 1 : 0;
  CHECK(attacked == 7);
}

TEST_CASE("minimal feeder and schema errors") {
  const auto f = feeder_from_json(two_bus().dump());
  CHECK(f.lines().size() == 1);
  CHECK(f.zones().size() == 1);

  auto dangling = two_bus();
  dangling["lines"][0]["to"] = 7;
  CHECK(code_of(dangling) == ErrorCode::DanglingReference);

  auto phases = two_bus();
  phases["buses"][1]["phases"] = "a";
  CHECK(code_of(phases) == ErrorCode::PhaseMismatch);

  auto loop = two_bus();
  auto back = loop["lines"][0];
  back["id"] = "L21";
  loop["lines"].push_back(back);
  CHECK(code_of(loop) == ErrorCode::NonRadialCore);

  auto no_base = two_bus();
  no_base.erase("base");
  CHECK(code_of(no_base) == ErrorCode::MissingBase);

  auto missing = two_bus();
  missing["lines"][0].erase("r_ohm");
  CHECK(code_of(missing) == ErrorCode::SchemaError);

  CHECK_THROWS_AS(feeder_from_json("{not json"), Error);
}

TEST_CASE("per-unit conversion") {
  const Base base{1000.0, 4.16};
  Mat3 one{};
  one[0][0] = 1.0;
  CHECK(to_per_unit(one, base)[0][0] == doctest::Approx(0.05778).epsilon(1e-4));
  CHECK(to_per_unit(Mat3{}, base)[1][1] == 0.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int k = 0; k < 50; ++k) {
    Mat3 m{};
    for (auto& row : m) {
      for (auto& v : row) v = u(rng);
    }
    const auto back = to_ohm(to_per_unit(m, base), base);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) CHECK(std::abs(back[i][j] - m[i][j]) <= 1e-12);
    }
  }
  try {
    to_per_unit(one, Base{});
    FAIL("missing base accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingBase);
  }
}

TEST_CASE("relative-phasor linearization") {
  const double pi = std::acos(-1.0);
  const std::array<std::complex<double>, 3> alpha = {1.0, std::polar(1.0, -2.0 * pi / 3.0),
                                                     std::polar(1.0, 2.0 * pi / 3.0)};
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (PhaseSet set : {kAllPhases, PhaseSet(kPhaseA | kPhaseC), kPhaseB}) {
    CMat3 z{};
    for (auto& row : z) {
      for (auto& v : row) v = {u(rng), u(rng)};
    }
    const auto lin = linearize(z, set);
    for (int p = 0; p < 3; ++p) {
      for (int q = 0; q < 3; ++q) {
        if (!has_phase(set, p) || !has_phase(set, q)) {
          CHECK(lin.r_hat[p][q] == 0.0);
          CHECK(lin.x_hat[p][q] == 0.0);
          continue;
        }
        const auto g = alpha[p] * std::conj(alpha[q]);
        CHECK(lin.r_hat[p][q] == doctest::Approx(g.real() * z[p][q].real() + g.imag() * z[p][q].imag()));
        CHECK(lin.x_hat[p][q] == doctest::Approx(g.real() * z[p][q].imag() - g.imag() * z[p][q].real()));
      }
    }
  }
}

TEST_CASE("energization agrees with an independent BFS") {
  const auto& f = bundled();
  const auto doc = read_json(data_path("ieee123_restoration.json"));
  std::vector<std::string> switches;
  for (auto i : f.switch_lines()) switches.push_back(f.lines()[i].id);

  CHECK(energized_subgraph(f, {}, {}).empty());
  const auto lone = energized_subgraph(f, {}, {13});
  const auto& zone = f.zones()[f.zone_of(13)];
  CHECK(lone == std::set<int>(zone.begin(), zone.end()));

  // Stage-2 closures of the bundled scenario plan.
  const std::set<std::string> stage2 = {"S13_34", "S18_135", "S18_21", "S57_60", "S60_160", "S60_61",
                                        "S62_63", "S76_77",  "S76_86", "S7_8"};
  const std::set<int> gfm = {13, 19, 60, 76};
  CHECK(energized_subgraph(f, stage2, gfm) == bfs(doc, stage2, gfm));
  const auto islands = energized_islands(f, stage2, gfm);
  CHECK(islands.size() == 4);
  std::set<int> joined;
  for (const auto& is : islands) joined.insert(is.begin(), is.end());
  CHECK(joined == bfs(doc, stage2, gfm));

  std::mt19937_64 rng(19);
  for (int k = 0; k < 200; ++k) {
    std::set<std::string> closed;
    for (const auto& s : switches) {
      if (rng() % 3 == 0) closed.insert(s);
    }
    std::set<int> sources;
    for (int b : gfm) {
      if (rng() % 2 == 0) sources.insert(b);
    }
    const auto got = energized_subgraph(f, closed, sources);
    CHECK(got == bfs(doc, closed, sources));
    auto more = closed;
    more.insert(switches[static_cast<std::size_t>(k) % switches.size()]);
    const auto grown = energized_subgraph(f, more, sources);
    CHECK(std::includes(grown.begin(), grown.end(), got.begin(), got.end()));
  }

  try {
    energized_subgraph(f, {"L8_9"}, {13});
    FAIL("non-switch line accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownSwitch);
  }
  CHECK_THROWS_AS(energized_subgraph(f, {"S999"}, {13}), Error);
}

TEST_CASE("serialization round trip is structurally identical") {
  const auto& f = bundled();
  const auto again = feeder_from_json(feeder_to_json(f));
  REQUIRE(again.buses().size() == f.buses().size());
  REQUIRE(again.lines().size() == f.lines().size());
  REQUIRE(again.ibrs().size() == f.ibrs().size());
  REQUIRE(again.loads().size() == f.loads().size());
  for (std::size_t i = 0; i < f.lines().size(); ++i) {
    const auto& a = f.lines()[i];
    const auto& b = again.lines()[i];
    CHECK(a.id == b.id);
    CHECK(a.phases == b.phases);
    CHECK(a.is_switch == b.is_switch);
    for (int p = 0; p < 3; ++p) {
      for (int q = 0; q < 3; ++q) {
        CHECK(a.r_hat[p][q] == doctest::Approx(b.r_hat[p][q]).epsilon(1e-12));
        CHECK(a.x_hat[p][q] == doctest::Approx(b.x_hat[p][q]).epsilon(1e-12));
      }
    }
  }
  for (std::size_t i = 0; i < f.loads().size(); ++i) {
    CHECK(f.loads()[i].id == again.loads()[i].id);
    CHECK(f.loads()[i].nominal_kw == again.loads()[i].nominal_kw);
    CHECK(f.loads()[i].attacked == again.loads()[i].attacked);
  }
  CHECK(feeder_to_json(again) == feeder_to_json(f));
}
