#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace restorisk::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { Minimize, Maximize };
enum class Relation { LessEqual, Equal, GreaterEqual };
enum class Status { Optimal, Infeasible, Unbounded, NodeLimit };

std::string_view to_string(Status status);
std::string_view to_string(Relation rel);

struct Variable {
  std::string name;
  double lower = 0.0;
  double upper = kInf;
};

struct Term {
  int var = 0;
  double coef = 0.0;
};

struct Constraint {
  std::string name;
  std::vector<Term> terms;
  Relation relation = Relation::LessEqual;
  double rhs = 0.0;
};

/// A linear program over bounded variables.
class Problem {
 public:
  Sense sense = Sense::Minimize;

  int add_variable(std::string name, double lower = 0.0, double upper = kInf, double objective = 0.0);
  int add_constraint(std::string name, std::vector<Term> terms, Relation relation, double rhs);
  void set_objective(int var, double coef);
  void set_bounds(int var, double lower, double upper);

  std::size_t num_variables() const noexcept { return variables_.size(); }
  std::size_t num_constraints() const noexcept { return constraints_.size(); }
  const std::vector<Variable>& variables() const noexcept { return variables_; }
  const std::vector<Constraint>& constraints() const noexcept { return constraints_; }
  const std::vector<double>& objective() const noexcept { return objective_; }
  Variable& variable(int var) { return variables_.at(static_cast<std::size_t>(var)); }

  /// Throws MalformedProblem on dangling indices, crossed or NaN bounds, or non-finite coefficients.
  void validate() const;

  double evaluate_objective(std::span<const double> values) const;
  /// Largest violation of any bound or constraint by the assignment.
  double max_violation(std::span<const double> values) const;
  double row_activity(std::size_t row, std::span<const double> values) const;

 private:
  std::vector<Variable> variables_;
  std::vector<Constraint> constraints_;
  std::vector<double> objective_;
};

struct Outcome {
  Status status = Status::Infeasible;
  std::vector<double> values;
  double objective = 0.0;
  /// For infeasible problems: constraints carrying slack in the elastic pass.
  std::vector<int> infeasibility_hint;
  std::uint64_t iterations = 0;
  std::uint64_t nodes = 0;
  double best_bound = 0.0;
  bool has_incumbent = false;
};

struct LpOptions {
  double feasibility_tol = 1e-9;
  double optimality_tol = 1e-9;
  int degenerate_streak_for_bland = 50;
  std::uint64_t iteration_limit = 200000;
  /// Run the elastic pass on infeasible problems to fill infeasibility_hint.
  bool compute_hint = true;
};

/// Two-phase bounded-variable primal simplex.
Outcome solve_lp(const Problem& problem, const LpOptions& options = {});

struct MilpOptions {
  double gap_tol = 1e-6;
  std::uint64_t node_limit = 100000;
  double integrality_tol = 1e-6;
  LpOptions lp;
};

/// Best-first branch and bound over the listed binary variables. A NodeLimit status carries the best
/// incumbent when one was found (has_incumbent).
Outcome solve_milp(const Problem& problem, std::span<const int> binaries, const MilpOptions& options = {});

struct ElasticResult {
  Status status = Status::Optimal;
  std::vector<double> values;
  /// Per constraint: amount by which the row had to be relaxed (>= 0).
  std::vector<double> slack;
  /// Per constraint: +1 if the activity exceeds the rhs, -1 if it falls short, 0 otherwise.
  std::vector<int> direction;
  double total = 0.0;
};

/// Adds non-negative slacks to every constraint with positive weight and minimizes the weighted total.
/// Constraints with weight <= 0 stay hard. An empty weight list makes every constraint elastic.
ElasticResult elastic_solve(const Problem& problem, std::span<const double> weights = {},
                            const LpOptions& options = {});

/// Line-oriented dump: "sense", one "var" line per variable, one "con" line per constraint, "bin" lines.
std::string dump(const Problem& problem, std::span<const int> binaries = {});
Problem parse_dump(std::string_view text, std::vector<int>* binaries = nullptr);

}  // namespace restorisk::lp
