#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <vector>

#include "estnet/model.hpp"
#include "estnet/numerics.hpp"
#include "estnet/sdp.hpp"
#include "estnet/stability.hpp"

namespace estnet {

/// One subsystem's estimator quantities at a step.
struct SubsystemEstimate {
  Vector xhat;
  Vector xhat_pred;
  Matrix P_hat;
  Matrix P_hat_pred;
  Matrix K;
  Matrix G_hat;
};

struct EstimatorState {
  Step k = 0;
  std::vector<SubsystemEstimate> sub;
};

/// x_hat(0) = 0, P_hat(0) = p0 I, empty gains.
EstimatorState initial_state(const InterconnectedModel& model, double p0);

struct StateMessage {
  std::size_t sender = 0;
  Step step = 0;
  Vector xhat;
  Matrix P_hat;
};

/// Neighbor-to-neighbor message store. Estimates and covariance bounds posted
/// at step k are readable from step k+1 on. Gains posted at step k are
/// readable from step k + gain_delay on (0 in ideal mode, 1 in delayed mode).
class Mailbox {
 public:
  Mailbox(const InterconnectedModel& model, int gain_delay);

  int gain_delay() const { return gain_delay_; }

  void post_state(std::size_t sender, Step step, const Vector& xhat, const Matrix& P_hat);
  void post_gain(std::size_t sender, Step step, const Matrix& K);

  /// Throws ProtocolError when the edge does not exist or the message is not readable at `now`.
  const StateMessage& read_state(std::size_t receiver, std::size_t sender, Step step, Step now) const;
  const Matrix& read_gain(std::size_t receiver, std::size_t sender, Step step, Step now) const;

  /// Drops everything older than `step`.
  void prune_before(Step step);

 private:
  void check_edge(std::size_t receiver, std::size_t sender) const;

  const InterconnectedModel* model_;
  int gain_delay_;
  std::map<std::pair<std::size_t, Step>, StateMessage> states_;  // (sender, step)
  std::map<std::pair<std::size_t, Step>, Matrix> gains_;
};

/// Square roots of the diagonal. Entries in [-1e-9, 0) are clamped to zero;
/// anything more negative raises NumericalError.
Vector sqrt_diag(const Matrix& P);

/// A_i(k-1) xhat_i(k-1) + sum_j A_ij(k-1) xhat_j(k-1) over present couplings.
/// `prev` is the snapshot at k-1.
Vector predict(const InterconnectedModel& model, std::size_t i, const ModelSnapshot& prev, const Vector& own,
               const std::map<std::size_t, Vector>& neighbor_xhat);

/// Prediction covariance bound from the local and neighbor bounds at k-1,
/// with every cross-covariance replaced by the square-root diagonal outer product.
Matrix bound_prediction_covariance(const InterconnectedModel& model, std::size_t i, const ModelSnapshot& prev,
                                   const Matrix& own_P_hat, const std::map<std::size_t, Matrix>& neighbor_P_hat);

Vector update(const Vector& xhat_pred, const Vector& y, const Matrix& K, const Matrix& C);

/// K_C P_pred K_C^T + K D Qv D^T K^T.
Matrix update_covariance_bound(const Matrix& P_hat_pred, const Matrix& K, const Matrix& C, const Matrix& D,
                               const Matrix& Qv);

enum class ConstraintMode { primary, fallback_corollary, fallback_stability_priority };

const char* to_string(ConstraintMode mode);

/// What design_gain needs besides the covariance.
struct GainContext {
  StabilityParams params;
  /// Required in delayed mode; used as the first fallback in ideal mode.
  const BetaAssignment* beta = nullptr;
  /// Ideal mode: epsilon weights at k and the gains K_j(k) already fixed for j in Sigma_i.
  const EpsilonWeights* eps = nullptr;
  std::map<std::size_t, Matrix> later_gains;
  sdp::SolveOptions solver;
  bool allow_fallback = true;
  double margin = sdp::kDefaultMargin;
};

struct GainDesign {
  Matrix K;
  Matrix G_hat;
  double objective = 0.0;
  ConstraintMode mode = ConstraintMode::primary;
  sdp::SolveStatus status = sdp::SolveStatus::optimal;
  double residual_norm = 0.0;  // ||(I - K C_i(k)) A_i(k-1)||
  int iterations = 0;
};

/// Solves min Tr(G) subject to the covariance LMI and the mode's stability
/// constraints, walking the fallback chain on infeasibility.
GainDesign design_gain(const InterconnectedModel& model, std::size_t i, Step k, const Matrix& P_hat_pred,
                       const ModelSnapshot& now, const ModelSnapshot& prev, const GainContext& ctx);

/// Builds the gain SDP for one constraint set (exposed for debugging dumps).
sdp::SdpProblem build_gain_problem(const InterconnectedModel& model, std::size_t i, const Matrix& P_hat_pred,
                                   const ModelSnapshot& now, const ModelSnapshot& prev, const GainContext& ctx,
                                   ConstraintMode mode);

struct DesignRecord {
  Step k = 0;
  std::size_t subsystem = 0;
  double objective = 0.0;
  ConstraintMode mode = ConstraintMode::primary;
  sdp::SolveStatus status = sdp::SolveStatus::optimal;
  double residual_norm = 0.0;
  int iterations = 0;
};

struct StepContext {
  StabilityParams params;
  const BetaAssignment* beta = nullptr;
  sdp::SolveOptions solver;
  bool allow_fallback = true;
  /// When set, these gains (one per subsystem) are used instead of solving SDPs.
  const std::vector<Matrix>* fixed_gains = nullptr;
};

/// Advances every subsystem from k-1 to k. Ideal mode runs subsystems in
/// decreasing index order so the gains of Sigma_i are known when i designs.
EstimatorState step_all(Step k, const InterconnectedModel& model, Mailbox& mailbox, const EstimatorState& previous,
                        const std::vector<Vector>& measurements, const StepContext& ctx,
                        std::vector<DesignRecord>* records = nullptr);

/// Convenience owner of the state and the mailbox.
class DistributedEstimator {
 public:
  DistributedEstimator(const InterconnectedModel& model, StepContext ctx, double p0 = 1.0);

  const EstimatorState& state() const { return state_; }
  /// Consumes y(k) for k = state().k + 1.
  const EstimatorState& step(const std::vector<Vector>& measurements, std::vector<DesignRecord>* records = nullptr);
  /// Same with externally supplied gains (no SDP).
  const EstimatorState& step_with_gains(const std::vector<Vector>& measurements, const std::vector<Matrix>& gains);

 private:
  const InterconnectedModel* model_;
  StepContext ctx_;
  Mailbox mailbox_;
  EstimatorState state_;
};

// ---------------------------------------------------------------------------
// Centralized oracles

/// gains[k-1] holds the per-subsystem gains used at step k.
using GainHistory = std::vector<std::vector<Matrix>>;

struct OracleState {
  Step k = 0;
  Matrix P;
};

/// Exact error covariance of the augmented system driven by recorded gains;
/// returns P(0) = P0 followed by P(1..H).
std::vector<OracleState> oracle_exact_covariance(const InterconnectedModel& model, const GainHistory& gains,
                                                 const Matrix& P0);

/// Augmented iteration x(k) = A x(k-1) + K [y(k) - C A x(k-1)] with block-diagonal K.
/// measurements[k-1] holds the stacked y(k). Returns x(0..H).
std::vector<Vector> oracle_centralized_estimator(const InterconnectedModel& model, const GainHistory& gains,
                                                 const std::vector<Vector>& measurements, const Vector& x0);

}  // namespace estnet
