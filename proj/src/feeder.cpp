#include "restorisk/feeder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <queue>
#include <sstream>

#include <json.hpp>

#include "restorisk/error.hpp"

namespace restorisk::feeder {

using nlohmann::json;

int phase_count(PhaseSet set) { return has_phase(set, 0) + has_phase(set, 1) + has_phase(set, 2); }

PhaseSet parse_phases(std::string_view text) {
  PhaseSet s = 0;
  for (char c : text) {
    switch (c) {
      case 'a': case 'A': s |= kPhaseA; break;
      case 'b': case 'B': s |= kPhaseB; break;
      case 'c': case 'C': s |= kPhaseC; break;
      default: throw Error(ErrorCode::SchemaError, "bad phase set '" + std::string(text) + "'");
    }
  }
  if (s == 0) throw Error(ErrorCode::SchemaError, "empty phase set");
  return s;
}

std::string format_phases(PhaseSet set) {
  std::string out;
  for (int p = 0; p < 3; ++p) {
    if (has_phase(set, p)) out.push_back(phase_name(p));
  }
  return out;
}

char phase_name(int phase) { return static_cast<char>('a' + phase); }

std::string_view to_string(IbrKind kind) { return kind == IbrKind::Gfm ? "GFM" : "GFL"; }

double Base::impedance_ohm() const {
  if (!(kva > 0.0) || !(kv > 0.0)) throw Error(ErrorCode::MissingBase, "base power and voltage must be set");
  return 1000.0 * kv * kv / kva;
}

Mat3 to_per_unit(const Mat3& ohm, const Base& base) {
  const double zb = base.impedance_ohm();
  Mat3 out{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out[i][j] = ohm[i][j] / zb;
  }
  return out;
}

Mat3 to_ohm(const Mat3& pu, const Base& base) {
  const double zb = base.impedance_ohm();
  Mat3 out{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out[i][j] = pu[i][j] * zb;
  }
  return out;
}

Linearized linearize(const CMat3& z, PhaseSet phases) {
  using cd = std::complex<double>;
  const double third = 2.0 * std::numbers::pi / 3.0;
  const std::array<cd, 3> alpha{cd(1.0, 0.0), std::polar(1.0, -third), std::polar(1.0, third)};
  Linearized out;
  for (int p = 0; p < 3; ++p) {
    for (int q = 0; q < 3; ++q) {
      if (!has_phase(phases, p) || !has_phase(phases, q)) continue;
      const cd g = alpha[p] * std::conj(alpha[q]);
      out.r_hat[p][q] = g.real() * z[p][q].real() + g.imag() * z[p][q].imag();
      out.x_hat[p][q] = g.real() * z[p][q].imag() - g.imag() * z[p][q].real();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feeder

Feeder::Feeder(Base base, std::vector<Bus> buses, std::vector<Line> lines, std::vector<Ibr> ibrs,
               std::vector<LoadPoint> loads)
    : base_(base), buses_(std::move(buses)), lines_(std::move(lines)), ibrs_(std::move(ibrs)),
      loads_(std::move(loads)) {
  index();
  validate();
  for (auto& l : lines_) {
    CMat3 z{};
    const auto r = to_per_unit(l.r_ohm, base_);
    const auto x = to_per_unit(l.x_ohm, base_);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) z[i][j] = {r[i][j], x[i][j]};
    }
    const auto lin = linearize(z, l.phases);
    l.r_hat = lin.r_hat;
    l.x_hat = lin.x_hat;
  }
}

void Feeder::index() {
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    if (!bus_index_.emplace(buses_[i].id, i).second) {
      throw Error(ErrorCode::SchemaError, "duplicate bus id " + std::to_string(buses_[i].id));
    }
  }
  for (std::size_t i = 0; i < lines_.size(); ++i) {
    if (!line_index_.emplace(lines_[i].id, i).second) {
      throw Error(ErrorCode::SchemaError, "duplicate line id " + lines_[i].id);
    }
  }
  for (std::size_t i = 0; i < loads_.size(); ++i) {
    if (!load_index_.emplace(loads_[i].id, i).second) {
      throw Error(ErrorCode::SchemaError, "duplicate load id " + loads_[i].id);
    }
  }
  for (std::size_t i = 0; i < ibrs_.size(); ++i) {
    if (!ibr_index_.emplace(ibrs_[i].id, i).second) {
      throw Error(ErrorCode::SchemaError, "duplicate IBR id " + ibrs_[i].id);
    }
  }
}

void Feeder::validate() {
  (void)base_.impedance_ohm();
  for (const auto& b : buses_) {
    if (!(b.vmin2 > 0.0) || !(b.vmin2 < b.vmax2)) {
      throw Error(ErrorCode::SchemaError, "bus " + std::to_string(b.id) + " has invalid voltage bounds");
    }
  }
  auto need_bus = [&](int id, const std::string& who) -> const Bus& {
    auto it = bus_index_.find(id);
    if (it == bus_index_.end()) {
      throw Error(ErrorCode::DanglingReference, who + " references missing bus " + std::to_string(id));
    }
    return buses_[it->second];
  };
  auto need_subset = [](PhaseSet inner, PhaseSet outer, const std::string& who) {
    if ((inner & ~outer) != 0) throw Error(ErrorCode::PhaseMismatch, who + " uses phases its bus lacks");
  };

  std::vector<std::size_t> parent(buses_.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& l : lines_) {
    const auto& f = need_bus(l.from, "line " + l.id);
    const auto& t = need_bus(l.to, "line " + l.id);
    need_subset(l.phases, f.phases, "line " + l.id);
    need_subset(l.phases, t.phases, "line " + l.id);
    if (!(l.pmax_kw > 0.0) || !(l.qmax_kvar > 0.0)) {
      throw Error(ErrorCode::SchemaError, "line " + l.id + " needs positive flow limits");
    }
    if (l.from == l.to) throw Error(ErrorCode::SchemaError, "line " + l.id + " is a self loop");
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        if (!std::isfinite(l.r_ohm[i][j]) || !std::isfinite(l.x_ohm[i][j])) {
          throw Error(ErrorCode::SchemaError, "line " + l.id + " has non-finite impedance");
        }
      }
    }
    if (l.is_switch) continue;
    const auto a = find(bus_index_.at(l.from));
    const auto b = find(bus_index_.at(l.to));
    if (a == b) throw Error(ErrorCode::NonRadialCore, "non-switch line " + l.id + " closes a loop");
    parent[a] = b;
  }
  for (const auto& g : ibrs_) {
    need_subset(g.phases, need_bus(g.bus, "IBR " + g.id).phases, "IBR " + g.id);
    if (!(g.pmax_kw > 0.0) || !(g.qmax_kvar > 0.0)) {
      throw Error(ErrorCode::SchemaError, "IBR " + g.id + " needs positive capacities");
    }
    if (g.ramp.f_nadir < g.ramp.f_min) throw Error(ErrorCode::SchemaError, "IBR " + g.id + " has f_nadir < f_min");
  }
  for (const auto& l : loads_) {
    need_subset(l.phases, need_bus(l.bus, "load " + l.id).phases, "load " + l.id);
    if (!(l.weight > 0.0)) throw Error(ErrorCode::SchemaError, "load " + l.id + " needs a positive weight");
    if (l.nominal_kw < 0.0) throw Error(ErrorCode::SchemaError, "load " + l.id + " has negative demand");
  }

  // Zones from the union-find.
  auto& zones = zones_;
  auto& zone_of = zone_of_;
  std::map<std::size_t, std::vector<int>> groups;
  for (std::size_t i = 0; i < buses_.size(); ++i) groups[find(i)].push_back(buses_[i].id);
  zones.clear();
  for (auto& [root, ids] : groups) {
    std::sort(ids.begin(), ids.end());
    zones.push_back(std::move(ids));
  }
  std::sort(zones.begin(), zones.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  zone_of.clear();
  for (std::size_t z = 0; z < zones.size(); ++z) {
    for (int id : zones[z]) zone_of[id] = z;
  }
}

std::size_t Feeder::bus_index(int id) const {
  auto it = bus_index_.find(id);
  if (it == bus_index_.end()) throw Error(ErrorCode::DanglingReference, "unknown bus " + std::to_string(id));
  return it->second;
}

std::size_t Feeder::line_index(std::string_view id) const {
  auto it = line_index_.find(id);
  if (it == line_index_.end()) throw Error(ErrorCode::DanglingReference, "unknown line " + std::string(id));
  return it->second;
}

std::size_t Feeder::load_index(std::string_view id) const {
  auto it = load_index_.find(id);
  if (it == load_index_.end()) throw Error(ErrorCode::DanglingReference, "unknown load " + std::string(id));
  return it->second;
}

std::size_t Feeder::ibr_index(std::string_view id) const {
  auto it = ibr_index_.find(id);
  if (it == ibr_index_.end()) throw Error(ErrorCode::DanglingReference, "unknown IBR " + std::string(id));
  return it->second;
}

std::vector<std::size_t> Feeder::switch_lines() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < lines_.size(); ++i) {
    if (lines_[i].is_switch) out.push_back(i);
  }
  return out;
}

std::vector<int> Feeder::gfm_buses() const {
  std::vector<int> out;
  for (const auto& g : ibrs_) {
    if (g.kind == IbrKind::Gfm) out.push_back(g.bus);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t Feeder::zone_of(int bus) const {
  auto it = zone_of_.find(bus);
  if (it == zone_of_.end()) throw Error(ErrorCode::DanglingReference, "unknown bus " + std::to_string(bus));
  return it->second;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(ErrorCode::SchemaError, where + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::SchemaError, where + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T field_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  return field<T>(j, key, where);
}

Mat3 matrix_field(const json& j, const char* key, const std::string& where) {
  const auto rows = field<std::vector<std::vector<double>>>(j, key, where);
  if (rows.size() != 3) throw Error(ErrorCode::SchemaError, where + ": '" + key + "' must be 3x3");
  Mat3 m{};
  for (int i = 0; i < 3; ++i) {
    if (rows[i].size() != 3) throw Error(ErrorCode::SchemaError, where + ": '" + key + "' must be 3x3");
    for (int k = 0; k < 3; ++k) m[i][k] = rows[i][k];
  }
  return m;
}

json matrix_json(const Mat3& m) {
  json out = json::array();
  for (const auto& r : m) out.push_back(std::vector<double>(r.begin(), r.end()));
  return out;
}

json array_field(const json& j, const char* key) {
  if (!j.contains(key)) return json::array();
  if (!j.at(key).is_array()) throw Error(ErrorCode::SchemaError, std::string("'") + key + "' must be an array");
  return j.at(key);
}

}  // namespace

Feeder feeder_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaError, std::string("feeder JSON does not parse: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::SchemaError, "feeder document must be an object");
  if (!doc.contains("base")) throw Error(ErrorCode::MissingBase, "feeder has no base block");
  Base base;
  base.kva = field<double>(doc["base"], "kva", "base");
  base.kv = field<double>(doc["base"], "kv", "base");

  std::vector<Bus> buses;
  for (const auto& b : array_field(doc, "buses")) {
    Bus bus;
    bus.id = field<int>(b, "id", "bus");
    const std::string where = "bus " + std::to_string(bus.id);
    bus.phases = parse_phases(field_or<std::string>(b, "phases", "abc", where));
    bus.vmin2 = field_or<double>(b, "vmin2", bus.vmin2, where);
    bus.vmax2 = field_or<double>(b, "vmax2", bus.vmax2, where);
    buses.push_back(bus);
  }
  std::vector<Line> lines;
  for (const auto& l : array_field(doc, "lines")) {
    Line line;
    line.id = field<std::string>(l, "id", "line");
    const std::string where = "line " + line.id;
    line.from = field<int>(l, "from", where);
    line.to = field<int>(l, "to", where);
    line.phases = parse_phases(field_or<std::string>(l, "phases", "abc", where));
    line.r_ohm = matrix_field(l, "r_ohm", where);
    line.x_ohm = matrix_field(l, "x_ohm", where);
    line.pmax_kw = field<double>(l, "pmax_kw", where);
    line.qmax_kvar = field<double>(l, "qmax_kvar", where);
    line.is_switch = field_or<bool>(l, "switch", false, where);
    lines.push_back(line);
  }
  std::vector<Ibr> ibrs;
  for (const auto& g : array_field(doc, "ibrs")) {
    Ibr ibr;
    ibr.id = field<std::string>(g, "id", "ibr");
    const std::string where = "IBR " + ibr.id;
    ibr.bus = field<int>(g, "bus", where);
    const auto kind = field<std::string>(g, "kind", where);
    if (kind == "GFM" || kind == "gfm") ibr.kind = IbrKind::Gfm;
    else if (kind == "GFL" || kind == "gfl") ibr.kind = IbrKind::Gfl;
    else throw Error(ErrorCode::SchemaError, where + ": kind must be GFL or GFM");
    ibr.phases = parse_phases(field_or<std::string>(g, "phases", "abc", where));
    ibr.pmax_kw = field<double>(g, "pmax_kw", where);
    ibr.qmax_kvar = field<double>(g, "qmax_kvar", where);
    if (g.contains("ramp")) {
      const auto& r = g["ramp"];
      ibr.ramp.mls_kw = field<double>(r, "mls_kw", where + " ramp");
      ibr.ramp.sens_kw_per_hz = field<double>(r, "sens_kw_per_hz", where + " ramp");
      ibr.ramp.f_nadir = field<double>(r, "f_nadir", where + " ramp");
      ibr.ramp.f_min = field<double>(r, "f_min", where + " ramp");
    } else if (ibr.kind == IbrKind::Gfm) {
      throw Error(ErrorCode::SchemaError, where + ": grid-forming units need ramp data");
    }
    ibrs.push_back(ibr);
  }
  std::vector<LoadPoint> loads;
  for (const auto& l : array_field(doc, "loads")) {
    LoadPoint load;
    load.id = field<std::string>(l, "id", "load");
    const std::string where = "load " + load.id;
    load.bus = field<int>(l, "bus", where);
    load.phases = parse_phases(field_or<std::string>(l, "phases", "abc", where));
    load.weight = field_or<double>(l, "weight", 1.0, where);
    load.profile = field<std::string>(l, "profile", where);
    try {
      load.type = clpu::load_type_from_string(field<std::string>(l, "type", where));
    } catch (const Error&) {
      throw Error(ErrorCode::SchemaError, where + ": type must be residential or commercial");
    }
    load.attacked = field_or<bool>(l, "attacked", false, where);
    load.nominal_kw = field_or<double>(l, "nominal_kw", 0.0, where);
    loads.push_back(load);
  }
  return Feeder(base, std::move(buses), std::move(lines), std::move(ibrs), std::move(loads));
}

Feeder load_feeder(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open feeder file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return feeder_from_json(ss.str());
}

std::string feeder_to_json(const Feeder& feeder) {
  json doc;
  doc["base"] = {{"kva", feeder.base().kva}, {"kv", feeder.base().kv}};
  json buses = json::array();
  for (const auto& b : feeder.buses()) {
    buses.push_back({{"id", b.id}, {"phases", format_phases(b.phases)}, {"vmin2", b.vmin2}, {"vmax2", b.vmax2}});
  }
  doc["buses"] = buses;
  json lines = json::array();
  for (const auto& l : feeder.lines()) {
    lines.push_back({{"id", l.id},
                     {"from", l.from},
                     {"to", l.to},
                     {"phases", format_phases(l.phases)},
                     {"r_ohm", matrix_json(l.r_ohm)},
                     {"x_ohm", matrix_json(l.x_ohm)},
                     {"pmax_kw", l.pmax_kw},
                     {"qmax_kvar", l.qmax_kvar},
                     {"switch", l.is_switch}});
  }
  doc["lines"] = lines;
  json ibrs = json::array();
  for (const auto& g : feeder.ibrs()) {
    ibrs.push_back({{"id", g.id},
                    {"bus", g.bus},
                    {"kind", std::string(to_string(g.kind))},
                    {"phases", format_phases(g.phases)},
                    {"pmax_kw", g.pmax_kw},
                    {"qmax_kvar", g.qmax_kvar},
                    {"ramp",
                     {{"mls_kw", g.ramp.mls_kw},
                      {"sens_kw_per_hz", g.ramp.sens_kw_per_hz},
                      {"f_nadir", g.ramp.f_nadir},
                      {"f_min", g.ramp.f_min}}}});
  }
  doc["ibrs"] = ibrs;
  json loads = json::array();
  for (const auto& l : feeder.loads()) {
    loads.push_back({{"id", l.id},
                     {"bus", l.bus},
                     {"phases", format_phases(l.phases)},
                     {"weight", l.weight},
                     {"profile", l.profile},
                     {"type", std::string(clpu::to_string(l.type))},
                     {"attacked", l.attacked},
                     {"nominal_kw", l.nominal_kw}});
  }
  doc["loads"] = loads;
  return doc.dump(1);
}

// ---------------------------------------------------------------------------
// connectivity

namespace {

std::map<int, std::vector<int>> adjacency(const Feeder& feeder, const std::set<std::string>& closed) {
  for (const auto& id : closed) {
    const auto idx = [&] {
      try {
        return feeder.line_index(id);
      } catch (const Error&) {
        throw Error(ErrorCode::UnknownSwitch, "unknown switch " + id);
      }
    }();
    if (!feeder.lines()[idx].is_switch) throw Error(ErrorCode::UnknownSwitch, "line " + id + " is not a switch");
  }
  std::map<int, std::vector<int>> adj;
  for (const auto& l : feeder.lines()) {
    if (l.is_switch && !closed.count(l.id)) continue;
    adj[l.from].push_back(l.to);
    adj[l.to].push_back(l.from);
  }
  return adj;
}

std::set<int> reach(const std::map<int, std::vector<int>>& adj, int seed) {
  std::set<int> seen{seed};
  std::queue<int> q;
  q.push(seed);
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    auto it = adj.find(u);
    if (it == adj.end()) continue;
    for (int v : it->second) {
      if (seen.insert(v).second) q.push(v);
    }
  }
  return seen;
}

}  // namespace

std::set<int> energized_subgraph(const Feeder& feeder, const std::set<std::string>& closed_switches,
                                 const std::set<int>& sources) {
  const auto adj = adjacency(feeder, closed_switches);
  std::set<int> out;
  for (int s : sources) {
    (void)feeder.bus_index(s);
    if (out.count(s)) continue;
    const auto part = reach(adj, s);
    out.insert(part.begin(), part.end());
  }
  return out;
}

std::vector<std::set<int>> energized_islands(const Feeder& feeder, const std::set<std::string>& closed_switches,
                                             const std::set<int>& sources) {
  const auto adj = adjacency(feeder, closed_switches);
  std::vector<std::set<int>> out;
  std::set<int> covered;
  for (int s : sources) {
    (void)feeder.bus_index(s);
    if (covered.count(s)) continue;
    auto part = reach(adj, s);
    covered.insert(part.begin(), part.end());
    out.push_back(std::move(part));
  }
  return out;
}

}  // namespace restorisk::feeder
