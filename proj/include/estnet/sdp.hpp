#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "estnet/numerics.hpp"

namespace estnet::sdp {

using VariableId = std::size_t;

/// Default slack margin: every constraint is enforced as F(x) <= -margin * I.
inline constexpr double kDefaultMargin = 1e-9;

struct MatrixVariable {
  std::string id;
  Index rows = 1;
  Index cols = 1;
  /// Symmetric variables are square; only the upper triangle is free.
  bool symmetric = false;
};

/// left * X * right, or left * X^T * right when `transpose_variable`.
struct AffineTerm {
  VariableId variable = 0;
  Matrix left;
  Matrix right;
  bool transpose_variable = false;
};

/// constant + sum of affine terms.
struct AffineBlock {
  Matrix constant;
  std::vector<AffineTerm> terms;

  static AffineBlock fixed(Matrix value) { return AffineBlock{std::move(value), {}}; }
  AffineBlock& add(VariableId v, Matrix left, Matrix right, bool transpose = false) {
    terms.push_back(AffineTerm{v, std::move(left), std::move(right), transpose});
    return *this;
  }
};

/// Symmetric block matrix, affine in the decision variables, constrained to
/// be <= -margin * I. Only blocks on or above the diagonal are stored; the
/// lower triangle is their transpose. Unset blocks are zero.
class LmiConstraint {
 public:
  explicit LmiConstraint(std::vector<Index> block_sizes, double margin = kDefaultMargin,
                         std::string label = {});

  /// Requires row <= col; the block must be block_sizes[row] x block_sizes[col].
  void set_block(std::size_t row, std::size_t col, AffineBlock block);

  const std::vector<Index>& block_sizes() const { return sizes_; }
  Index dimension() const;
  double margin() const { return margin_; }
  void set_margin(double margin);
  const std::string& label() const { return label_; }
  const std::optional<AffineBlock>& block(std::size_t row, std::size_t col) const;

 private:
  std::vector<Index> sizes_;
  std::vector<std::optional<AffineBlock>> blocks_;  // upper triangle, row-major over the full grid
  double margin_;
  std::string label_;
};

class SdpProblem {
 public:
  VariableId add_variable(std::string id, Index rows, Index cols, bool symmetric = false);
  void add_constraint(LmiConstraint constraint);
  /// Adds trace(weight * X_v) to the (minimized) objective.
  void add_objective(VariableId v, Matrix weight);
  void set_initial_value(VariableId v, Matrix value);

  const std::vector<MatrixVariable>& variables() const { return variables_; }
  const std::vector<LmiConstraint>& constraints() const { return constraints_; }
  const std::vector<std::optional<Matrix>>& objective() const { return objective_; }
  const std::vector<std::optional<Matrix>>& initial_values() const { return initial_; }

  /// The full symmetric constraint matrix (without the margin) at `values`.
  Matrix evaluate_constraint(std::size_t index, const std::vector<Matrix>& values) const;
  double evaluate_objective(const std::vector<Matrix>& values) const;

 private:
  std::vector<MatrixVariable> variables_;
  std::vector<LmiConstraint> constraints_;
  std::vector<std::optional<Matrix>> objective_;
  std::vector<std::optional<Matrix>> initial_;
};

struct SolveOptions {
  double feas_tol = 1e-8;
  double opt_tol = 1e-6;
  int max_iter = 500;
};

enum class SolveStatus { optimal, infeasible, iteration_limit, unbounded };

const char* to_string(SolveStatus status);

struct SdpSolution {
  std::vector<Matrix> values;
  double objective = 0.0;
  SolveStatus status = SolveStatus::iteration_limit;
  /// max over constraints of lambda_max(F_j(x)) + margin_j; <= 0 means satisfied.
  double worst_residual = 0.0;
  std::size_t worst_constraint = 0;
  /// Upper bound on objective - optimum implied by the barrier path (optimal only).
  double gap_bound = 0.0;
  /// Phase-one optimum of the worst constraint eigenvalue (only when it was run to completion).
  std::optional<double> phase_one_value;
  int iterations = 0;

  const Matrix& value(VariableId v) const { return values.at(v); }
};

/// Primal log-barrier interior-point method with a phase-one feasibility search.
SdpSolution solve(const SdpProblem& problem, const SolveOptions& options = {});

/// [[-bound I, X], [X^T, -bound I]] <= 0, i.e. ||X||_2 <= bound.
LmiConstraint norm_cap_constraint(VariableId x, double bound, Index rows, Index cols,
                                  double margin = kDefaultMargin);

/// Debug dump: variables, objective weights, constraint blocks as dense
/// numbers with symbolic variable slots.
std::string dump_json(const SdpProblem& problem);

}  // namespace estnet::sdp
