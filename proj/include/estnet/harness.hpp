#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "estnet/estimator.hpp"
#include "estnet/model.hpp"
#include "estnet/sdp.hpp"
#include "estnet/stability.hpp"

namespace estnet {

enum class InitPolicy { zero, gaussian };

struct SimulationConfig {
  Step horizon = 100;
  int runs = 1;
  std::uint64_t seed = 0;
  Mode mode = Mode::delayed;
  double lambda = 0.6;
  double eta = 100.0;
  double rho = 0.4;
  double p0 = 1.0;
  InitPolicy init = InitPolicy::zero;
  /// Covariance of the Gaussian initial true state; empty means p0 * I.
  Matrix init_cov;
  sdp::SolveOptions solver;
  /// Worker threads for Monte Carlo replays; 0 picks the hardware count.
  int threads = 0;

  void validate() const;
  StabilityParams stability() const { return StabilityParams{lambda, eta, mode}; }
};

/// Per-step, per-subsystem vectors; index k runs over 0..horizon.
/// Measurements at k = 0 are empty.
struct SimulationTrace {
  std::vector<std::vector<Vector>> x;
  std::vector<std::vector<Vector>> y;
  std::vector<std::vector<Vector>> xhat;

  Step horizon() const { return static_cast<Step>(x.size()) - 1; }
  /// Stacked x(k) - xhat(k).
  Vector error(Step k) const;
};

/// True states and measurements only (xhat left empty).
SimulationTrace simulate_truth(const InterconnectedModel& model, Step horizon, std::uint64_t seed,
                               InitPolicy init = InitPolicy::zero, const Matrix& init_cov = Matrix());

struct RunFailure {
  enum class Kind { infeasible, solver } kind = Kind::infeasible;
  std::string message;
};

struct RunResult {
  SimulationTrace trace;
  std::vector<DesignRecord> records;
  GainHistory gains;
  /// P_hat[k][i] for k = 0..(steps completed).
  std::vector<std::vector<Matrix>> P_hat;
  NormBounds bounds;
  std::optional<BetaAssignment> beta;
  /// Set when gain design aborted the run; the trace then stops early.
  std::optional<RunFailure> failure;
};

/// Offline beta (delayed mode; attempted in ideal mode for the fallback chain),
/// then truth plus distributed estimation for config.horizon steps.
/// Throws InfeasibleBeta in delayed mode.
RunResult run(const InterconnectedModel& model, const SimulationConfig& config);

/// Estimation on a fresh noise realization with recorded gains (no SDP).
SimulationTrace replay(const InterconnectedModel& model, const SimulationConfig& config, const GainHistory& gains,
                       std::uint64_t seed);

struct MseReport {
  /// mse[k-1] = MSE(k) for k = 1..horizon.
  std::vector<double> mse;
  double amse = 0.0;
  /// Largest ||e(k)|| of each run.
  std::vector<double> max_error;
};

MseReport mse(const std::vector<SimulationTrace>& runs);

/// Gains are designed once (seed = config.seed) and replayed for seeds
/// config.seed + s, s = 0..runs-1. Design failures are rethrown.
MseReport monte_carlo(const InterconnectedModel& model, const SimulationConfig& config,
                      RunResult* design_run = nullptr);

struct SweepRow {
  double g = 0.0;
  double amse = 0.0;
  std::vector<double> alpha;
  std::vector<double> beta;
};

std::vector<SweepRow> sweep_g(const std::vector<double>& g_values, const SimulationConfig& config);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// CSV and report output (exact headers, shortest round-trip numbers).
void write_trace_csv(std::ostream& out, const InterconnectedModel& model, const SimulationTrace& trace);
void write_mse_csv(std::ostream& out, const MseReport& report);
void write_amse_csv(std::ostream& out, const std::vector<SweepRow>& rows);
void write_beta_csv(std::ostream& out, const InterconnectedModel& model, const BetaAssignment& beta);
void write_gains_csv(std::ostream& out, const InterconnectedModel& model, const GainHistory& gains);
/// Parses `k,subsystem,row,col,value`; subsystem is a name. Every step 1..K must be complete.
GainHistory read_gains_csv(std::istream& in, const InterconnectedModel& model);
std::string format_number(double v);

std::string run_report_json(const InterconnectedModel& model, const SimulationConfig& config, const RunResult& result);

}  // namespace estnet
