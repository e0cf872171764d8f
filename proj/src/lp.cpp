#include "restorisk/lp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <queue>
#include <sstream>

#include <Eigen/Dense>

#include "restorisk/error.hpp"

namespace restorisk::lp {

std::string_view to_string(Status status) {
  switch (status) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::Unbounded: return "unbounded";
    case Status::NodeLimit: return "node_limit";
  }
  return "infeasible";
}

std::string_view to_string(Relation rel) {
  switch (rel) {
    case Relation::LessEqual: return "le";
    case Relation::Equal: return "eq";
    case Relation::GreaterEqual: return "ge";
  }
  return "le";
}

// ---------------------------------------------------------------------------
// Problem

int Problem::add_variable(std::string name, double lower, double upper, double objective) {
  variables_.push_back({std::move(name), lower, upper});
  objective_.push_back(objective);
  return static_cast<int>(variables_.size() - 1);
}

int Problem::add_constraint(std::string name, std::vector<Term> terms, Relation relation, double rhs) {
  constraints_.push_back({std::move(name), std::move(terms), relation, rhs});
  return static_cast<int>(constraints_.size() - 1);
}

void Problem::set_objective(int var, double coef) { objective_.at(static_cast<std::size_t>(var)) = coef; }

void Problem::set_bounds(int var, double lower, double upper) {
  auto& v = variables_.at(static_cast<std::size_t>(var));
  v.lower = lower;
  v.upper = upper;
}

void Problem::validate() const {
  for (const auto& v : variables_) {
    if (std::isnan(v.lower) || std::isnan(v.upper) || v.lower > v.upper || v.lower == kInf || v.upper == -kInf) {
      throw Error(ErrorCode::MalformedProblem, "variable '" + v.name + "' has invalid bounds");
    }
  }
  for (double c : objective_) {
    if (!std::isfinite(c)) throw Error(ErrorCode::MalformedProblem, "non-finite objective coefficient");
  }
  const auto n = static_cast<int>(variables_.size());
  for (const auto& c : constraints_) {
    if (!std::isfinite(c.rhs)) throw Error(ErrorCode::MalformedProblem, "constraint '" + c.name + "' has bad rhs");
    for (const auto& t : c.terms) {
      if (t.var < 0 || t.var >= n) {
        throw Error(ErrorCode::MalformedProblem, "constraint '" + c.name + "' references a missing variable");
      }
      if (!std::isfinite(t.coef)) {
        throw Error(ErrorCode::MalformedProblem, "constraint '" + c.name + "' has a non-finite coefficient");
      }
    }
  }
}

double Problem::evaluate_objective(std::span<const double> values) const {
  double z = 0.0;
  for (std::size_t j = 0; j < objective_.size(); ++j) z += objective_[j] * values[j];
  return z;
}

double Problem::row_activity(std::size_t row, std::span<const double> values) const {
  double s = 0.0;
  for (const auto& t : constraints_[row].terms) s += t.coef * values[static_cast<std::size_t>(t.var)];
  return s;
}

double Problem::max_violation(std::span<const double> values) const {
  double worst = 0.0;
  for (std::size_t j = 0; j < variables_.size(); ++j) {
    worst = std::max(worst, variables_[j].lower - values[j]);
    worst = std::max(worst, values[j] - variables_[j].upper);
  }
  for (std::size_t i = 0; i < constraints_.size(); ++i) {
    const double a = row_activity(i, values);
    const auto& c = constraints_[i];
    if (c.relation != Relation::GreaterEqual) worst = std::max(worst, a - c.rhs);
    if (c.relation != Relation::LessEqual) worst = std::max(worst, c.rhs - a);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// simplex

namespace {

enum class State : std::uint8_t { Lower, Upper, Zero, Basic };

constexpr double kPivotTol = 1e-9;
constexpr double kDegenerateStep = 1e-12;

class Simplex {
 public:
  Simplex(const Problem& p, const LpOptions& o) : problem_(p), opt_(o) {}

  Outcome run() {
    build();
    Outcome out;
    if (num_artificial_ > 0) {
      std::vector<double> cost(n_, 0.0);
      for (std::size_t j = first_artificial_; j < n_; ++j) cost[j] = 1.0;
      const auto st = iterate(cost);
      out.iterations = iterations_;
      if (st != Status::Optimal) {
        throw Error(ErrorCode::MalformedProblem, "phase one did not terminate at an optimum");
      }
      double infeas = 0.0;
      for (std::size_t i = 0; i < m_; ++i) {
        if (basis_[i] >= first_artificial_) infeas += std::max(0.0, beta_[i]);
      }
      if (infeas > 1e-7) {
        out.status = Status::Infeasible;
        return out;
      }
      retire_artificials();
    }
    std::vector<double> cost(n_, 0.0);
    const double sign = problem_.sense == Sense::Maximize ? -1.0 : 1.0;
    for (std::size_t j = 0; j < ns_; ++j) cost[j] = sign * problem_.objective()[j];
    const auto st = iterate(cost);
    out.iterations = iterations_;
    if (st == Status::Unbounded) {
      out.status = Status::Unbounded;
      return out;
    }
    refine();
    out.status = Status::Optimal;
    out.values.resize(ns_);
    for (std::size_t j = 0; j < ns_; ++j) {
      double v = value_of(j);
      const auto& var = problem_.variables()[j];
      if (v < var.lower && v > var.lower - 1e-9) v = var.lower;
      if (v > var.upper && v < var.upper + 1e-9) v = var.upper;
      out.values[j] = v;
    }
    out.objective = problem_.evaluate_objective(out.values);
    out.best_bound = out.objective;
    return out;
  }

 private:
  double* row(std::size_t i) { return tab_.data() + i * n_; }
  double value_of(std::size_t j) const {
    return state_[j] == State::Basic ? beta_[pos_[j]] : value_[j];
  }

  void build() {
    ns_ = problem_.num_variables();
    m_ = problem_.num_constraints();
    const auto& cons = problem_.constraints();

    dense_.assign(m_ * ns_, 0.0);
    rhs_.resize(m_);
    for (std::size_t i = 0; i < m_; ++i) {
      for (const auto& t : cons[i].terms) dense_[i * ns_ + static_cast<std::size_t>(t.var)] += t.coef;
      rhs_[i] = cons[i].rhs;
    }

    // Initial nonbasic structural values.
    std::vector<double> lo(ns_ + m_), up(ns_ + m_), val(ns_ + m_, 0.0);
    std::vector<State> st(ns_ + m_);
    for (std::size_t j = 0; j < ns_; ++j) {
      const auto& v = problem_.variables()[j];
      lo[j] = v.lower;
      up[j] = v.upper;
      if (std::isfinite(v.lower)) {
        val[j] = v.lower;
        st[j] = State::Lower;
      } else if (std::isfinite(v.upper)) {
        val[j] = v.upper;
        st[j] = State::Upper;
      } else {
        st[j] = State::Zero;
      }
    }

    std::vector<double> resid(m_);
    for (std::size_t i = 0; i < m_; ++i) {
      double s = rhs_[i];
      for (std::size_t j = 0; j < ns_; ++j) s -= dense_[i * ns_ + j] * val[j];
      resid[i] = s;
    }

    art_row_.clear();
    art_sign_.clear();
    row_sign_.assign(m_, 1.0);
    std::vector<std::size_t> basic(m_);
    for (std::size_t i = 0; i < m_; ++i) {
      const std::size_t s = ns_ + i;
      switch (cons[i].relation) {
        case Relation::LessEqual: lo[s] = 0.0; up[s] = kInf; break;
        case Relation::GreaterEqual: lo[s] = -kInf; up[s] = 0.0; break;
        case Relation::Equal: lo[s] = 0.0; up[s] = 0.0; break;
      }
      if (resid[i] >= lo[s] && resid[i] <= up[s]) {
        basic[i] = s;
        st[s] = State::Basic;
      } else {
        st[s] = cons[i].relation == Relation::GreaterEqual ? State::Upper : State::Lower;
        val[s] = 0.0;
        const double sg = resid[i] > 0.0 ? 1.0 : -1.0;
        basic[i] = ns_ + m_ + art_row_.size();
        art_row_.push_back(i);
        art_sign_.push_back(sg);
        row_sign_[i] = sg;
      }
    }
    num_artificial_ = art_row_.size();
    first_artificial_ = ns_ + m_;
    n_ = ns_ + m_ + num_artificial_;

    lo_ = std::move(lo);
    up_ = std::move(up);
    value_ = std::move(val);
    state_ = std::move(st);
    lo_.resize(n_, 0.0);
    up_.resize(n_, kInf);
    value_.resize(n_, 0.0);
    state_.resize(n_, State::Basic);

    tab_.assign(m_ * n_, 0.0);
    beta_.resize(m_);
    basis_ = basic;
    pos_.assign(n_, 0);
    for (std::size_t i = 0; i < m_; ++i) {
      double* r = row(i);
      const double sg = row_sign_[i];
      for (std::size_t j = 0; j < ns_; ++j) r[j] = sg * dense_[i * ns_ + j];
      r[ns_ + i] = sg;
      beta_[i] = sg * resid[i];
    }
    for (std::size_t k = 0; k < num_artificial_; ++k) {
      const std::size_t i = art_row_[k];
      row(i)[first_artificial_ + k] = 1.0;  // sign * sign
    }
    for (std::size_t i = 0; i < m_; ++i) pos_[basis_[i]] = i;
  }

  void compute_reduced(const std::vector<double>& cost) {
    d_ = cost;
    for (std::size_t i = 0; i < m_; ++i) {
      const double cb = cost[basis_[i]];
      if (cb == 0.0) continue;
      const double* r = row(i);
      for (std::size_t j = 0; j < n_; ++j) d_[j] -= cb * r[j];
    }
    for (std::size_t i = 0; i < m_; ++i) d_[basis_[i]] = 0.0;
  }

  void pivot(std::size_t r, std::size_t q) {
    double* pr = row(r);
    const double inv = 1.0 / pr[q];
    for (std::size_t j = 0; j < n_; ++j) pr[j] *= inv;
    pr[q] = 1.0;
    for (std::size_t i = 0; i < m_; ++i) {
      if (i == r) continue;
      double* ri = row(i);
      const double f = ri[q];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n_; ++j) ri[j] -= f * pr[j];
      ri[q] = 0.0;
    }
    const double fd = d_[q];
    if (fd != 0.0) {
      for (std::size_t j = 0; j < n_; ++j) d_[j] -= fd * pr[j];
      d_[q] = 0.0;
    }
    const std::size_t leaving = basis_[r];
    basis_[r] = q;
    pos_[q] = r;
    state_[q] = State::Basic;
    (void)leaving;
  }

  Status iterate(const std::vector<double>& cost) {
    compute_reduced(cost);
    int degenerate = 0;
    std::uint64_t since_refresh = 0;
    for (;;) {
      if (++iterations_ > opt_.iteration_limit) {
        throw Error(ErrorCode::MalformedProblem, "simplex iteration limit exceeded");
      }
      if (++since_refresh >= 100) {
        compute_reduced(cost);
        since_refresh = 0;
      }
      const bool bland = degenerate >= opt_.degenerate_streak_for_bland;

      // Pricing.
      std::size_t q = n_;
      int dir = 0;
      double best = 0.0;
      for (std::size_t j = 0; j < n_; ++j) {
        const State s = state_[j];
        if (s == State::Basic || lo_[j] == up_[j]) continue;
        const double dj = d_[j];
        int dj_dir = 0;
        if (s == State::Lower) {
          if (dj < -opt_.optimality_tol) dj_dir = 1;
        } else if (s == State::Upper) {
          if (dj > opt_.optimality_tol) dj_dir = -1;
        } else {
          if (dj < -opt_.optimality_tol) dj_dir = 1;
          else if (dj > opt_.optimality_tol) dj_dir = -1;
        }
        if (dj_dir == 0) continue;
        if (bland) {
          q = j;
          dir = dj_dir;
          break;
        }
        if (std::abs(dj) > best) {
          best = std::abs(dj);
          q = j;
          dir = dj_dir;
        }
      }
      if (q == n_) {
        // Confirm with fresh reduced costs before declaring optimality.
        if (since_refresh != 0) {
          compute_reduced(cost);
          since_refresh = 0;
          bool any = false;
          for (std::size_t j = 0; j < n_ && !any; ++j) {
            if (state_[j] == State::Basic || lo_[j] == up_[j]) continue;
            const double dj = d_[j];
            if ((state_[j] != State::Upper && dj < -opt_.optimality_tol) ||
                (state_[j] != State::Lower && dj > opt_.optimality_tol)) {
              any = true;
            }
          }
          if (any) continue;
        }
        return Status::Optimal;
      }

      // Ratio test.
      const double flip = up_[q] - lo_[q];
      std::size_t r = m_;
      double t = flip;
      if (bland) {
        for (std::size_t i = 0; i < m_; ++i) {
          const double alpha = tab_[i * n_ + q];
          if (std::abs(alpha) < kPivotTol) continue;
          const double rate = -dir * alpha;
          const std::size_t k = basis_[i];
          double ratio;
          if (rate < 0.0 && std::isfinite(lo_[k])) ratio = (beta_[i] - lo_[k]) / -rate;
          else if (rate > 0.0 && std::isfinite(up_[k])) ratio = (up_[k] - beta_[i]) / rate;
          else continue;
          ratio = std::max(ratio, 0.0);
          if (ratio < t || (ratio == t && r < m_ && k < basis_[r])) {
            t = ratio;
            r = i;
          }
        }
      } else {
        // Harris two-pass: relaxed bound, then the largest pivot among candidates.
        double relaxed = flip;
        for (std::size_t i = 0; i < m_; ++i) {
          const double alpha = tab_[i * n_ + q];
          if (std::abs(alpha) < kPivotTol) continue;
          const double rate = -dir * alpha;
          const std::size_t k = basis_[i];
          double ratio;
          if (rate < 0.0 && std::isfinite(lo_[k])) ratio = (beta_[i] - lo_[k] + opt_.feasibility_tol) / -rate;
          else if (rate > 0.0 && std::isfinite(up_[k])) ratio = (up_[k] - beta_[i] + opt_.feasibility_tol) / rate;
          else continue;
          relaxed = std::min(relaxed, ratio);
        }
        double best_alpha = 0.0;
        for (std::size_t i = 0; i < m_; ++i) {
          const double alpha = tab_[i * n_ + q];
          if (std::abs(alpha) < kPivotTol) continue;
          const double rate = -dir * alpha;
          const std::size_t k = basis_[i];
          double ratio;
          if (rate < 0.0 && std::isfinite(lo_[k])) ratio = (beta_[i] - lo_[k]) / -rate;
          else if (rate > 0.0 && std::isfinite(up_[k])) ratio = (up_[k] - beta_[i]) / rate;
          else continue;
          if (ratio <= relaxed && std::abs(alpha) > best_alpha) {
            best_alpha = std::abs(alpha);
            r = i;
            t = std::max(ratio, 0.0);
          }
        }
        if (r < m_ && flip <= t) {
          r = m_;
          t = flip;
        }
      }

      if (!std::isfinite(t)) return Status::Unbounded;

      degenerate = t <= kDegenerateStep ? degenerate + 1 : 0;

      for (std::size_t i = 0; i < m_; ++i) {
        const double alpha = tab_[i * n_ + q];
        if (alpha != 0.0) beta_[i] -= dir * t * alpha;
      }
      if (r == m_) {
        value_[q] += dir * t;
        state_[q] = state_[q] == State::Lower ? State::Upper : State::Lower;
        value_[q] = state_[q] == State::Lower ? lo_[q] : up_[q];
        continue;
      }
      const std::size_t k = basis_[r];
      const double rate = -dir * tab_[r * n_ + q];
      if (lo_[k] == up_[k] || rate < 0.0) {
        state_[k] = std::isfinite(lo_[k]) ? State::Lower : State::Zero;
        value_[k] = std::isfinite(lo_[k]) ? lo_[k] : 0.0;
      } else {
        state_[k] = State::Upper;
        value_[k] = up_[k];
      }
      beta_[r] = value_[q] + dir * t;
      pivot(r, q);
    }
  }

  // Fix artificials at zero and pivot basic ones out where possible.
  void retire_artificials() {
    for (std::size_t j = first_artificial_; j < n_; ++j) {
      lo_[j] = 0.0;
      up_[j] = 0.0;
      if (state_[j] != State::Basic) {
        state_[j] = State::Lower;
        value_[j] = 0.0;
      }
    }
    for (std::size_t i = 0; i < m_; ++i) {
      if (basis_[i] < first_artificial_) continue;
      const double* r = row(i);
      std::size_t best = n_;
      double best_abs = 1e-7;
      for (std::size_t j = 0; j < first_artificial_; ++j) {
        if (state_[j] == State::Basic) continue;
        if (std::abs(r[j]) > best_abs) {
          best_abs = std::abs(r[j]);
          best = j;
        }
      }
      if (best == n_) {
        beta_[i] = 0.0;
        continue;
      }
      const std::size_t k = basis_[i];
      state_[k] = State::Lower;
      value_[k] = 0.0;
      beta_[i] = value_[best];
      pivot(i, best);
    }
  }

  // Recompute basic values from the original data with a dense LU of the basis.
  void refine() {
    if (m_ == 0) return;
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m_), static_cast<Eigen::Index>(m_));
    Eigen::VectorXd b(static_cast<Eigen::Index>(m_));
    for (std::size_t i = 0; i < m_; ++i) b[static_cast<Eigen::Index>(i)] = rhs_[i];
    auto add_column = [&](std::size_t j, double scale, auto&& sink) {
      if (j < ns_) {
        for (std::size_t i = 0; i < m_; ++i) {
          const double a = dense_[i * ns_ + j];
          if (a != 0.0) sink(i, a * scale);
        }
      } else if (j < first_artificial_) {
        sink(j - ns_, scale);
      } else {
        const std::size_t k = j - first_artificial_;
        sink(art_row_[k], art_sign_[k] * scale);
      }
    };
    for (std::size_t j = 0; j < n_; ++j) {
      if (state_[j] == State::Basic) continue;
      const double v = value_[j];
      if (v == 0.0) continue;
      add_column(j, v, [&](std::size_t i, double a) { b[static_cast<Eigen::Index>(i)] -= a; });
    }
    for (std::size_t c = 0; c < m_; ++c) {
      add_column(basis_[c], 1.0, [&](std::size_t i, double a) {
        B(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = a;
      });
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    const Eigen::VectorXd x = lu.solve(b);
    const double resid = (B * x - b).lpNorm<Eigen::Infinity>();
    if (!x.allFinite() || resid > 1e-9 * (1.0 + b.lpNorm<Eigen::Infinity>())) return;
    for (std::size_t i = 0; i < m_; ++i) beta_[i] = x[static_cast<Eigen::Index>(i)];
  }

  const Problem& problem_;
  const LpOptions& opt_;
  std::size_t ns_ = 0, m_ = 0, n_ = 0;
  std::size_t num_artificial_ = 0, first_artificial_ = 0;
  std::vector<double> dense_, rhs_, row_sign_;
  std::vector<std::size_t> art_row_;
  std::vector<double> art_sign_;
  std::vector<double> tab_, beta_, d_, lo_, up_, value_;
  std::vector<State> state_;
  std::vector<std::size_t> basis_, pos_;
  std::uint64_t iterations_ = 0;
};

}  // namespace

Outcome solve_lp(const Problem& problem, const LpOptions& options) {
  problem.validate();
  Simplex simplex(problem, options);
  Outcome out = simplex.run();
  if (out.status == Status::Infeasible && options.compute_hint && problem.num_constraints() > 0) {
    LpOptions inner = options;
    inner.compute_hint = false;
    const auto el = elastic_solve(problem, {}, inner);
    for (std::size_t i = 0; i < el.slack.size(); ++i) {
      if (el.slack[i] > 1e-7) out.infeasibility_hint.push_back(static_cast<int>(i));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// elastic pass

ElasticResult elastic_solve(const Problem& problem, std::span<const double> weights, const LpOptions& options) {
  problem.validate();
  const std::size_t m = problem.num_constraints();
  if (!weights.empty() && weights.size() != m) {
    throw Error(ErrorCode::MalformedProblem, "elastic weights do not match the constraint count");
  }
  Problem el;
  el.sense = Sense::Minimize;
  for (const auto& v : problem.variables()) el.add_variable(v.name, v.lower, v.upper, 0.0);
  std::vector<int> over(m, -1), under(m, -1);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& c = problem.constraints()[i];
    auto terms = c.terms;
    const double w = weights.empty() ? 1.0 : weights[i];
    if (w > 0.0) {
      if (c.relation != Relation::GreaterEqual) {
        over[i] = el.add_variable(c.name + "#over", 0.0, kInf, w);
        terms.push_back({over[i], -1.0});
      }
      if (c.relation != Relation::LessEqual) {
        under[i] = el.add_variable(c.name + "#under", 0.0, kInf, w);
        terms.push_back({under[i], 1.0});
      }
    }
    el.add_constraint(c.name, std::move(terms), c.relation, c.rhs);
  }
  LpOptions inner = options;
  inner.compute_hint = false;
  const auto out = solve_lp(el, inner);
  ElasticResult res;
  res.status = out.status;
  res.slack.assign(m, 0.0);
  res.direction.assign(m, 0);
  if (out.status != Status::Optimal) return res;
  res.values.assign(out.values.begin(), out.values.begin() + static_cast<std::ptrdiff_t>(problem.num_variables()));
  for (std::size_t i = 0; i < m; ++i) {
    const double o = over[i] >= 0 ? out.values[static_cast<std::size_t>(over[i])] : 0.0;
    const double u = under[i] >= 0 ? out.values[static_cast<std::size_t>(under[i])] : 0.0;
    res.slack[i] = o + u;
    if (o > u) res.direction[i] = 1;
    else if (u > o) res.direction[i] = -1;
  }
  res.total = out.objective;
  return res;
}

// ---------------------------------------------------------------------------
// branch and bound

namespace {

struct Node {
  double parent_bound = 0.0;
  std::uint64_t id = 0;
  std::vector<std::pair<int, double>> fixes;
};

}  // namespace

Outcome solve_milp(const Problem& problem, std::span<const int> binaries, const MilpOptions& options) {
  problem.validate();
  for (int b : binaries) {
    if (b < 0 || static_cast<std::size_t>(b) >= problem.num_variables()) {
      throw Error(ErrorCode::MalformedProblem, "binary index out of range");
    }
    const auto& v = problem.variables()[static_cast<std::size_t>(b)];
    if (v.lower < 0.0 || v.upper > 1.0) {
      throw Error(ErrorCode::MalformedProblem, "binary '" + v.name + "' has bounds outside [0, 1]");
    }
  }
  const bool maximize = problem.sense == Sense::Maximize;
  auto better = [&](double a, double b) { return maximize ? a > b : a < b; };
  auto improves = [&](double bound, double incumbent) {
    const double tol = options.gap_tol * std::max(1.0, std::abs(incumbent));
    return maximize ? bound > incumbent + tol : bound < incumbent - tol;
  };
  auto node_order = [&](const Node& a, const Node& b) {
    if (a.parent_bound != b.parent_bound) return better(b.parent_bound, a.parent_bound);
    return a.id > b.id;
  };
  std::priority_queue<Node, std::vector<Node>, decltype(node_order)> open(node_order);

  LpOptions lp_opt = options.lp;
  lp_opt.compute_hint = false;

  Outcome result;
  std::uint64_t next_id = 0;
  Problem work = problem;
  auto solve_with = [&](const std::vector<std::pair<int, double>>& fixes) {
    for (std::size_t j = 0; j < problem.num_variables(); ++j) {
      const auto& v = problem.variables()[j];
      work.set_bounds(static_cast<int>(j), v.lower, v.upper);
    }
    for (const auto& [var, val] : fixes) work.set_bounds(var, val, val);
    auto out = solve_lp(work, lp_opt);
    result.iterations += out.iterations;
    return out;
  };

  open.push({maximize ? kInf : -kInf, next_id++, {}});
  bool root = true;
  while (!open.empty()) {
    if (result.nodes >= options.node_limit) break;
    Node node = open.top();
    open.pop();
    if (result.has_incumbent && !improves(node.parent_bound, result.objective)) continue;
    ++result.nodes;
    auto relax = solve_with(node.fixes);
    if (root) {
      root = false;
      if (relax.status == Status::Unbounded) {
        result.status = Status::Unbounded;
        return result;
      }
      if (relax.status == Status::Infeasible) {
        result.status = Status::Infeasible;
        if (options.lp.compute_hint) result.infeasibility_hint = solve_lp(problem, options.lp).infeasibility_hint;
        return result;
      }
    }
    if (relax.status != Status::Optimal) continue;
    if (result.has_incumbent && !improves(relax.objective, result.objective)) continue;

    int branch = -1;
    double most = -1.0;
    for (int b : binaries) {
      const double v = relax.values[static_cast<std::size_t>(b)];
      const double frac = std::abs(v - std::round(v));
      if (frac <= options.integrality_tol) continue;
      const double score = 0.5 - std::abs(v - std::floor(v) - 0.5);
      if (score > most) {
        most = score;
        branch = b;
      }
    }
    if (branch < 0) {
      auto fixes = node.fixes;
      for (int b : binaries) fixes.emplace_back(b, std::round(relax.values[static_cast<std::size_t>(b)]));
      auto clean = solve_with(fixes);
      if (clean.status != Status::Optimal) continue;
      if (!result.has_incumbent || better(clean.objective, result.objective)) {
        result.has_incumbent = true;
        result.objective = clean.objective;
        result.values = std::move(clean.values);
      }
      continue;
    }
    for (double val : {0.0, 1.0}) {
      Node child{relax.objective, next_id++, node.fixes};
      child.fixes.emplace_back(branch, val);
      open.push(std::move(child));
    }
  }

  if (!open.empty()) {
    double bound = result.has_incumbent ? result.objective : (maximize ? -kInf : kInf);
    while (!open.empty()) {
      if (better(open.top().parent_bound, bound)) bound = open.top().parent_bound;
      open.pop();
    }
    result.best_bound = bound;
    result.status = Status::NodeLimit;
    return result;
  }
  result.best_bound = result.objective;
  result.status = result.has_incumbent ? Status::Optimal : Status::Infeasible;
  return result;
}

// ---------------------------------------------------------------------------
// text dump

namespace {

std::string fmt_number(double v) {
  if (v == kInf) return "inf";
  if (v == -kInf) return "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_number(const std::string& s) {
  if (s == "inf" || s == "+inf") return kInf;
  if (s == "-inf") return -kInf;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw Error(ErrorCode::MalformedProblem, "bad number '" + s + "' in problem dump");
  }
  if (used != s.size()) throw Error(ErrorCode::MalformedProblem, "bad number '" + s + "' in problem dump");
  return v;
}

std::string safe_name(const std::string& name) {
  std::string out = name.empty() ? "_" : name;
  for (char& c : out) {
    if (c == ' ' || c == '\t' || c == '\n') c = '_';
  }
  return out;
}

}  // namespace

std::string dump(const Problem& problem, std::span<const int> binaries) {
  std::ostringstream os;
  os << "sense " << (problem.sense == Sense::Maximize ? "max" : "min") << '\n';
  for (std::size_t j = 0; j < problem.num_variables(); ++j) {
    const auto& v = problem.variables()[j];
    os << "var " << safe_name(v.name) << ' ' << fmt_number(v.lower) << ' ' << fmt_number(v.upper) << ' '
       << fmt_number(problem.objective()[j]) << '\n';
  }
  for (const auto& c : problem.constraints()) {
    os << "con " << safe_name(c.name) << ' ' << to_string(c.relation) << ' ' << fmt_number(c.rhs);
    for (const auto& t : c.terms) os << ' ' << t.var << ':' << fmt_number(t.coef);
    os << '\n';
  }
  for (int b : binaries) os << "bin " << b << '\n';
  return os.str();
}

Problem parse_dump(std::string_view text, std::vector<int>* binaries) {
  Problem p;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind) || kind[0] == '#') continue;
    auto fail = [&] {
      return Error(ErrorCode::MalformedProblem, "problem dump line " + std::to_string(lineno) + " is malformed");
    };
    if (kind == "sense") {
      std::string s;
      if (!(ls >> s)) throw fail();
      if (s == "max") p.sense = Sense::Maximize;
      else if (s == "min") p.sense = Sense::Minimize;
      else throw fail();
    } else if (kind == "var") {
      std::string name, lo, up, obj;
      if (!(ls >> name >> lo >> up >> obj)) throw fail();
      p.add_variable(name, parse_number(lo), parse_number(up), parse_number(obj));
    } else if (kind == "con") {
      std::string name, rel, rhs, term;
      if (!(ls >> name >> rel >> rhs)) throw fail();
      Relation r;
      if (rel == "le") r = Relation::LessEqual;
      else if (rel == "eq") r = Relation::Equal;
      else if (rel == "ge") r = Relation::GreaterEqual;
      else throw fail();
      std::vector<Term> terms;
      while (ls >> term) {
        const auto colon = term.find(':');
        if (colon == std::string::npos) throw fail();
        terms.push_back({static_cast<int>(parse_number(term.substr(0, colon))), parse_number(term.substr(colon + 1))});
      }
      p.add_constraint(name, std::move(terms), r, parse_number(rhs));
    } else if (kind == "bin") {
      std::string idx;
      if (!(ls >> idx)) throw fail();
      if (binaries) binaries->push_back(static_cast<int>(parse_number(idx)));
    } else {
      throw fail();
    }
  }
  p.validate();
  return p;
}

}  // namespace restorisk::lp
