#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <json.hpp>

#include "estnet/errors.hpp"
#include "estnet/sdp.hpp"
#include "support.hpp"

namespace estnet::sdp {
namespace {

// min G subject to [[-G, b], [b, -1]] <= 0, i.e. G >= b^2.
SdpProblem schur_scalar(double b) {
  SdpProblem p;
  const auto g = p.add_variable("G", 1, 1, true);
  p.add_objective(g, Matrix::Ones(1, 1));
  LmiConstraint con({1, 1});
  con.set_block(0, 0, AffineBlock::fixed(Matrix::Zero(1, 1)).add(g, -Matrix::Ones(1, 1), Matrix::Ones(1, 1)));
  con.set_block(0, 1, AffineBlock::fixed(Matrix::Constant(1, 1, b)));
  con.set_block(1, 1, AffineBlock::fixed(-Matrix::Ones(1, 1)));
  p.add_constraint(std::move(con));
  return p;
}

TEST(Solve, ScalarSchurComplement) {
  const auto sol = solve(schur_scalar(2.0));
  ASSERT_EQ(sol.status, SolveStatus::optimal);
  EXPECT_NEAR(sol.objective, 4.0, 1e-6);
  EXPECT_LE(sol.worst_residual, 0.0);
  EXPECT_GE(sol.gap_bound, 0.0);
}

TEST(Solve, MatrixInverseViaSchur) {
  // min Tr G subject to [[-G, I], [I, -P]] <= 0 gives G = P^{-1}.
  Matrix pm(2, 2);
  pm << 2.0, 0.5, 0.5, 1.0;
  SdpProblem p;
  const auto g = p.add_variable("G", 2, 2, true);
  p.add_objective(g, Matrix::Identity(2, 2));
  LmiConstraint con({2, 2});
  con.set_block(0, 0, AffineBlock::fixed(Matrix::Zero(2, 2)).add(g, -Matrix::Identity(2, 2), Matrix::Identity(2, 2)));
  con.set_block(0, 1, AffineBlock::fixed(Matrix::Identity(2, 2)));
  con.set_block(1, 1, AffineBlock::fixed(-pm));
  p.add_constraint(std::move(con));
  const auto sol = solve(p);
  ASSERT_EQ(sol.status, SolveStatus::optimal);
  EXPECT_NEAR(sol.objective, pm.inverse().trace(), 1e-6);
  EXPECT_LE((sol.value(g) - pm.inverse()).cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_EQ(sol.value(g)(0, 1), sol.value(g)(1, 0));
}

TEST(Solve, NormCapMaximization) {
  // max trace(X) over ||X||_2 <= 3 for a 2x2 X reaches 6 at X = 3 I.
  SdpProblem p;
  const auto x = p.add_variable("X", 2, 2);
  p.add_objective(x, -Matrix::Identity(2, 2));
  p.add_constraint(norm_cap_constraint(x, 3.0, 2, 2));
  const auto sol = solve(p);
  ASSERT_EQ(sol.status, SolveStatus::optimal);
  EXPECT_NEAR(sol.objective, -6.0, 1e-5);
  EXPECT_LE(testing::oracle_spectral_norm(sol.value(x)), 3.0);
}

TEST(Solve, DetectsInfeasibility) {
  // x <= -1 and x >= 1.
  SdpProblem p;
  const auto x = p.add_variable("x", 1, 1);
  LmiConstraint upper({1});
  upper.set_block(0, 0, AffineBlock::fixed(Matrix::Ones(1, 1)).add(x, Matrix::Ones(1, 1), Matrix::Ones(1, 1)));
  LmiConstraint lower({1});
  lower.set_block(0, 0, AffineBlock::fixed(Matrix::Ones(1, 1)).add(x, -Matrix::Ones(1, 1), Matrix::Ones(1, 1)));
  p.add_constraint(std::move(upper));
  p.add_constraint(std::move(lower));
  const auto sol = solve(p);
  EXPECT_EQ(sol.status, SolveStatus::infeasible);
  ASSERT_TRUE(sol.phase_one_value.has_value());
  EXPECT_GT(*sol.phase_one_value, 0.5);
}

TEST(Solve, DetectsUnboundedObjective) {
  // min x subject to x <= 0 only.
  SdpProblem p;
  const auto x = p.add_variable("x", 1, 1);
  p.add_objective(x, Matrix::Ones(1, 1));
  LmiConstraint con({1});
  con.set_block(0, 0, AffineBlock::fixed(Matrix::Zero(1, 1)).add(x, Matrix::Ones(1, 1), Matrix::Ones(1, 1)));
  p.add_constraint(std::move(con));
  EXPECT_EQ(solve(p).status, SolveStatus::unbounded);
}

TEST(Solve, FeasibilityOnlyProblem) {
  SdpProblem p;
  const auto x = p.add_variable("X", 2, 3);
  p.add_constraint(norm_cap_constraint(x, 0.5, 2, 3));
  const auto sol = solve(p);
  ASSERT_EQ(sol.status, SolveStatus::optimal);
  EXPECT_LE(testing::oracle_spectral_norm(sol.value(x)), 0.5);
}

TEST(Solve, HonorsInitialValue) {
  auto p = schur_scalar(1.0);
  p.set_initial_value(0, Matrix::Constant(1, 1, 10.0));
  const auto sol = solve(p);
  ASSERT_EQ(sol.status, SolveStatus::optimal);
  EXPECT_NEAR(sol.objective, 1.0, 1e-6);
}

TEST(Solve, IterationBudget) {
  SolveOptions opt;
  opt.max_iter = 2;
  EXPECT_EQ(solve(schur_scalar(3.0), opt).status, SolveStatus::iteration_limit);
}

TEST(Solve, AgreesWithConvexOracle) {
  std::mt19937_64 rng(31);
  int optimal = 0;
  for (int trial = 0; trial < 24; ++trial) {
    const std::size_t d = 1 + static_cast<std::size_t>(trial % 2);
    const auto prob = testing::random_scalar_sdp(rng, d, trial % 3 != 0);
    const auto sol = solve(prob.to_problem());
    const auto oracle = testing::convex_oracle(prob, prob.margin);
    if (sol.status == SolveStatus::optimal) {
      ++optimal;
      ASSERT_TRUE(oracle.feasible) << "trial " << trial;
      EXPECT_NEAR(sol.objective, oracle.objective, 1e-4 * std::max(1.0, std::abs(oracle.objective)))
          << "trial " << trial;
    } else {
      ASSERT_EQ(sol.status, SolveStatus::infeasible) << "trial " << trial;
      EXPECT_GT(oracle.best_worst, -1e-6) << "trial " << trial;
    }
  }
  EXPECT_GE(optimal, 12);
}

TEST(Lmi, BlockValidation) {
  LmiConstraint con({2, 1});
  EXPECT_THROW(con.set_block(1, 0, AffineBlock::fixed(Matrix::Zero(1, 2))), ShapeError);
  EXPECT_THROW(con.set_block(0, 1, AffineBlock::fixed(Matrix::Zero(2, 2))), DimensionError);
  EXPECT_THROW(con.set_block(0, 2, AffineBlock::fixed(Matrix::Zero(2, 1))), DimensionError);
  EXPECT_EQ(con.dimension(), 3);
  EXPECT_THROW(LmiConstraint({0}), DimensionError);
  EXPECT_THROW(con.set_margin(-1.0), ParameterError);
}

TEST(Lmi, UnknownVariableAndBadFactors) {
  SdpProblem p;
  const auto x = p.add_variable("x", 2, 1);
  LmiConstraint bad_var({2});
  bad_var.set_block(0, 0, AffineBlock::fixed(Matrix::Zero(2, 2)).add(7, Matrix::Identity(2, 2), Matrix::Identity(2, 2)));
  EXPECT_THROW(p.add_constraint(bad_var), InputError);
  LmiConstraint bad_shape({2});
  bad_shape.set_block(0, 0, AffineBlock::fixed(Matrix::Zero(2, 2)).add(x, Matrix::Identity(2, 2), Matrix::Identity(2, 2)));
  EXPECT_THROW(p.add_constraint(bad_shape), DimensionError);
  EXPECT_THROW(p.add_variable("x", 1, 1), InputError);
  EXPECT_THROW(p.add_variable("s", 2, 3, true), DimensionError);
  EXPECT_THROW(p.add_objective(x, Matrix::Zero(2, 1)), DimensionError);
}

TEST(Lmi, AsymmetricDiagonalBlockIsRejected) {
  SdpProblem p;
  const auto x = p.add_variable("x", 2, 2);
  LmiConstraint con({2});
  con.set_block(0, 0, AffineBlock::fixed(-Matrix::Identity(2, 2)).add(x, Matrix::Identity(2, 2), Matrix::Identity(2, 2)));
  p.add_constraint(std::move(con));
  Matrix v(2, 2);
  v << 0.0, 1.0, 0.0, 0.0;
  EXPECT_THROW(p.evaluate_constraint(0, {v}), ShapeError);
  EXPECT_NO_THROW(p.evaluate_constraint(0, {Matrix::Identity(2, 2)}));
}

TEST(Lmi, EvaluateConstraintFillsLowerTriangle) {
  const auto p = schur_scalar(2.0);
  const Matrix f = p.evaluate_constraint(0, {Matrix::Constant(1, 1, 5.0)});
  Matrix expect(2, 2);
  expect << -5.0, 2.0, 2.0, -1.0;
  EXPECT_EQ(f, expect);
  EXPECT_DOUBLE_EQ(p.evaluate_objective({Matrix::Constant(1, 1, 5.0)}), 5.0);
}

TEST(DumpJson, ListsVariablesAndConstraints) {
  const auto doc = nlohmann::json::parse(dump_json(schur_scalar(2.0)));
  ASSERT_EQ(doc.at("variables").size(), 1u);
  EXPECT_EQ(doc["variables"][0]["id"], "G");
  EXPECT_EQ(doc.at("constraints").size(), 1u);
}

}  // namespace
}  // namespace estnet::sdp
