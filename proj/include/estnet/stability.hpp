#pragma once

#include <cstddef>
#include <map>
#include <string_view>
#include <utility>
#include <vector>

#include "estnet/model.hpp"
#include "estnet/numerics.hpp"

namespace estnet {

enum class Mode { ideal, delayed };

const char* to_string(Mode mode);
Mode parse_mode(std::string_view text);

struct StabilityParams {
  double lambda = 0.6;
  double eta = 100.0;
  Mode mode = Mode::delayed;

  /// Throws ParameterError unless 0 < lambda < 1 and eta is finite positive.
  void validate() const;
};

/// eps(i, j) for j in Omega_i. Rows sum to one.
class EpsilonWeights {
 public:
  void set(std::size_t i, std::size_t j, double value) { eps_[{i, j}] = value; }
  /// Throws TopologyError when (i, j) is not a neighbor pair.
  double at(std::size_t i, std::size_t j) const;
  bool contains(std::size_t i, std::size_t j) const { return eps_.count({i, j}) != 0; }
  const std::map<std::pair<std::size_t, std::size_t>, double>& entries() const { return eps_; }

 private:
  std::map<std::pair<std::size_t, std::size_t>, double> eps_;
};

struct BetaAssignment {
  std::vector<double> beta;
  std::vector<double> alpha;
  double lambda = 0.0;
  double rho = 0.0;
  EpsilonWeights eps_bar;
};

/// I - K C.
Matrix residual_matrix(const Matrix& K, const Matrix& C);

/// [[-lambda I, (I - K C) A], [*, -lambda I]].
Matrix build_N_local(const Matrix& K, const Matrix& A, const Matrix& C, double lambda);

/// [[0, K_Ci A_ij], [A_ji^T K_Cj^T, 0]], (2 n_i) x (2 n_j).
Matrix build_N_pair(const Matrix& K_i, const Matrix& K_j, const Matrix& A_ij, const Matrix& A_ji,
                    const Matrix& C_i, const Matrix& C_j);

/// [[eps_ij N_i, N_ij], [N_ij^T, eps_ji N_j]].
Matrix assemble_M(double eps_ij, const Matrix& N_i, const Matrix& N_ij, double eps_ji, const Matrix& N_j);

/// M_{i,j}(k): gains are K(k), C at k, A blocks at k - 1. Requires k >= 1.
Matrix build_M_pair(const InterconnectedModel& model, Step k, std::size_t i, std::size_t j,
                    const std::vector<Matrix>& gains, const EpsilonWeights& eps, double lambda);

/// Weights proportional to ||A_ij(k-1)|| + ||A_ji(k-1)||, normalized over Omega_i.
EpsilonWeights epsilon_feasible(const InterconnectedModel& model, Step k);
/// Same rule on the certified bounds alpha_ij + alpha_ji.
EpsilonWeights epsilon_bar(const InterconnectedModel& model, const NormBounds& bounds);

struct LocalVerdict {
  std::size_t subsystem = 0;
  double residual_norm = 0.0;  // ||K_Ci(k) A_i(k-1)||
  double gain_norm = 0.0;
  bool passes = false;
};

struct PairVerdict {
  std::size_t i = 0;
  std::size_t j = 0;
  double max_eigenvalue = 0.0;
  bool passes = false;
};

struct DistributedReport {
  std::vector<LocalVerdict> local;
  std::vector<PairVerdict> pairs;

  bool passes() const;
};

DistributedReport check_distributed(Step k, const std::vector<Matrix>& gains, const InterconnectedModel& model,
                                    const StabilityParams& params, const EpsilonWeights& eps,
                                    double tol = kNsdTolerance);

bool check_corollary(const Matrix& K, const Matrix& C, double beta, double eta, double tol = kNsdTolerance);

/// Sequential beta assignment in index order. A subsystem that still has
/// unassigned neighbors takes rho times its largest feasible value.
BetaAssignment compute_beta(const InterconnectedModel& model, const NormBounds& bounds, double lambda,
                            const EpsilonWeights& eps_bar, double rho = 0.4);

/// Largest violation of the beta invariants (<= 0 when all hold): the cap
/// beta_i <= lambda / alpha_i and both orientations of every pair inequality.
double beta_violation(const InterconnectedModel& model, const NormBounds& bounds, const BetaAssignment& beta);

struct CentralizedReport {
  double residual_norm = 0.0;  // ||K_C(k) A(k-1)||
  double gain_norm = 0.0;
  bool passes = false;
};

CentralizedReport centralized_condition(Step k, const std::vector<Matrix>& gains, const InterconnectedModel& model,
                                        double lambda, double eta, double tol = kNsdTolerance);

struct BoundednessCertificate {
  double delta_p1 = 0.0;
  double f_p = 0.0;
  double delta_p0 = 0.0;
  double bound = 0.0;
};

/// Qw and Qv are the stacked (block-diagonal) noise covariances.
BoundednessCertificate boundedness_certificate(const NormBounds& bounds, double lambda, double eta, const Matrix& Qw,
                                               const Matrix& Qv, double delta_p0);

}  // namespace estnet
