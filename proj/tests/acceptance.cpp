// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "estnet/errors.hpp"
#include "estnet/estimator.hpp"
#include "estnet/harness.hpp"
#include "estnet/sdp.hpp"
#include "estnet/stability.hpp"
#include "support.hpp"

using namespace estnet;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.pass) ++failures;
  std::printf("AC%d %s  %s (%s) [%.1fs]\n", id, o.pass ? "PASS" : "FAIL", title, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const std::vector<double> kG = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0};

// Values printed in the reference table for lambda unknown.
const std::vector<double> kTableBeta2 = {1.21, 1.01, 0.90, 0.81, 0.75, 0.70, 0.66, 0.63};
const std::vector<double> kTableBeta3 = {1.84, 1.57, 1.36, 1.19, 1.05, 0.94, 0.86, 0.78};

Outcome decomposition_soundness() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> scale(0.05, 1.0);
  std::uniform_real_distribution<double> lam(0.3, 0.95);
  int instances = 0, passing = 0, counter = 0;
  std::vector<int> by_l(5, 0);
  for (int trial = 0; trial < 240; ++trial) {
    const auto m = testing::random_model(rng, {2, 4, 3, scale(rng), 0.3 * scale(rng), false});
    ++by_l[m.size()];
    const StabilityParams params{lam(rng), 10.0, Mode::ideal};
    for (Step k = 1; k <= 3; ++k) {
      std::vector<Matrix> gains;
      for (const auto& s : m.subsystems())
        gains.push_back(testing::random_matrix(rng, s.state_dim(), s.measurement_dim(), 0.4 * scale(rng)));
      ++instances;
      if (!check_distributed(k, gains, m, params, epsilon_feasible(m, k)).passes()) continue;
      ++passing;
      if (!centralized_condition(k, gains, m, params.lambda, params.eta, 1e-8).passes) ++counter;
    }
  }
  const bool pass = counter == 0 && passing > 0 && by_l[2] > 0 && by_l[3] > 0 && by_l[4] > 0;
  return {pass, std::to_string(instances) + " instances, " + std::to_string(passing) + " distributed passes, " +
                    std::to_string(counter) + " counterexamples"};
}

Outcome corollary_chain() {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> scale(0.05, 0.6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double lambda = 0.6;
  const double eta = 1e6;
  int models = 0, assigned = 0, gain_sets = 0, failed = 0;

  auto exercise = [&](const InterconnectedModel& m, Step horizon) {
    ++models;
    const auto bounds = compute_bounds(m, horizon + 1);
    const auto eps = epsilon_bar(m, bounds);
    BetaAssignment beta;
    try {
      beta = compute_beta(m, bounds, lambda, eps);
    } catch (const InfeasibleBeta&) {
      return;
    }
    ++assigned;
    const StabilityParams params{lambda, eta, Mode::delayed};
    for (Step k = 1; k <= horizon; ++k) {
      const auto snap = evaluate(m, k);
      for (int rep = 0; rep < 4; ++rep) {
        std::vector<Matrix> gains;
        bool realizable = true;
        for (std::size_t i = 0; i < m.size(); ++i) {
          const Matrix& c = snap.C[i];
          if (c.rows() != c.cols()) {
            realizable = false;
            break;
          }
          // K = (I - R) C^{-1} gives I - K C = R; the last draw sits on the cap.
          Matrix r = testing::random_matrix(rng, c.rows(), c.rows(), 1.0);
          const double u = rep == 3 ? 1.0 : unit(rng);
          r *= beta.beta[i] * u / std::max(spectral_norm(r), 1e-300);
          gains.push_back((Matrix::Identity(c.rows(), c.rows()) - r) * c.inverse());
        }
        if (!realizable) return;
        bool ok = true;
        for (std::size_t i = 0; i < m.size(); ++i)
          ok = ok && check_corollary(gains[i], snap.C[i], beta.beta[i], eta);
        if (!ok) continue;
        ++gain_sets;
        if (!check_distributed(k, gains, m, params, beta.eps_bar).passes() ||
            !centralized_condition(k, gains, m, lambda, eta, 1e-8).passes)
          ++failed;
      }
    }
  };

  for (int trial = 0; trial < 50; ++trial) {
    testing::RandomModelOptions opt{2, 4, 3, scale(rng), 0.3 * scale(rng), true};
    exercise(testing::random_model(rng, opt), 10);
  }
  // The example's first subsystem has a 1x2 C, so ||I - K C|| >= 1 > beta_1 and
  // no gain set satisfies the corollary there; the implication holds vacuously.
  const auto ex = example_system(4.0);
  const auto exb = compute_bounds(ex, 100);
  const auto exbeta = compute_beta(ex, exb, lambda, epsilon_bar(ex, exb));
  const Matrix c1 = evaluate(ex, 1).C[0];
  const Matrix pinv = c1.completeOrthogonalDecomposition().pseudoInverse();
  const double floor1 = spectral_norm(Matrix::Identity(2, 2) - pinv * c1);
  const bool example_vacuous = floor1 > exbeta.beta[0];

  const bool pass = failed == 0 && gain_sets > 0 && example_vacuous;
  return {pass, std::to_string(assigned) + "/" + std::to_string(models) + " models assigned, " +
                    std::to_string(gain_sets) + " corollary gain sets, " + std::to_string(failed) +
                    " failures; example vacuous (min ||K_C1|| = " + fmt("%.3g", floor1) + ")"};
}

Outcome table_trend() {
  const double lambda = 0.6;
  std::vector<BetaAssignment> rows;
  bool linear = true;
  for (double g : kG) {
    const auto m = example_system(g);
    const auto bounds = compute_bounds(m, 100);
    const auto eps = epsilon_bar(m, bounds);
    rows.push_back(compute_beta(m, bounds, lambda, eps));
    // Every beta inequality is homogeneous in (lambda, beta).
    const auto half = compute_beta(m, bounds, 0.5 * lambda, eps);
    for (std::size_t i = 0; i < 3; ++i)
      linear = linear && std::abs(2.0 * half.beta[i] - rows.back().beta[i]) <= 1e-9 * rows.back().beta[i];
  }
  bool trend = true;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    trend = trend && rows[r].beta[0] == rows[0].beta[0];
    trend = trend && rows[r].beta[1] < rows[r - 1].beta[1] && rows[r].beta[2] < rows[r - 1].beta[2];
  }

  // Calibration: lambda_c puts beta_1 at 1.08. lambda_c exceeds 1, so the
  // values are extrapolated through the homogeneity checked above.
  const double lambda_c = 1.08 / rows[0].beta[0] * lambda;
  int within = 0;
  std::printf("  calibrated lambda = %.4f\n  g, beta2, table, beta3, table\n", lambda_c);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double b2 = rows[r].beta[1] * lambda_c / lambda;
    const double b3 = rows[r].beta[2] * lambda_c / lambda;
    within += std::abs(b2 / kTableBeta2[r] - 1.0) <= 0.15;
    within += std::abs(b3 / kTableBeta3[r] - 1.0) <= 0.15;
    std::printf("  %.1f, %.4f, %.2f, %.4f, %.2f\n", kG[r], b2, kTableBeta2[r], b3, kTableBeta3[r]);
  }
  return {trend && linear, std::string("trend ") + (trend ? "holds" : "broken") + ", calibrated match " +
                               std::to_string(within) + "/16 within 15% (discrepancy documented)"};
}

struct CovarianceRuns {
  double worst_dominance = INFINITY;
  double worst_holder = -INFINITY;
  double worst_certificate = -INFINITY;
  int runs = 0;
  int certified_runs = 0;
  int failed_runs = 0;
};

const CovarianceRuns& covariance_runs() {
  static const CovarianceRuns out = [] {
    CovarianceRuns res;
    for (double g : {0.5, 4.0}) {
      const auto m = example_system(g);
      for (Mode mode : {Mode::ideal, Mode::delayed}) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
          SimulationConfig cfg;
          cfg.horizon = 50;
          cfg.mode = mode;
          cfg.seed = seed;
          const auto r = run(m, cfg);
          ++res.runs;
          if (r.failure) {
            ++res.failed_runs;
            continue;
          }
          const Index n = 6;
          const auto exact = oracle_exact_covariance(m, r.gains, cfg.p0 * Matrix::Identity(n, n));
          bool centralized = true;
          for (Step k = 1; k <= cfg.horizon; ++k)
            centralized = centralized &&
                          centralized_condition(k, r.gains[static_cast<std::size_t>(k - 1)], m, cfg.lambda, cfg.eta).passes;
          const auto aug = augment(m, 0);
          const auto cert = boundedness_certificate(r.bounds, cfg.lambda, cfg.eta, aug.Qw, aug.Qv, cfg.p0);
          if (centralized) ++res.certified_runs;

          for (Step k = 0; k <= cfg.horizon; ++k) {
            const Matrix& P = exact[static_cast<std::size_t>(k)].P;
            for (std::size_t i = 0; i < 3; ++i) {
              const Index oi = 2 * static_cast<Index>(i);
              const Matrix diff = r.P_hat[static_cast<std::size_t>(k)][i] - P.block(oi, oi, 2, 2);
              res.worst_dominance = std::min(res.worst_dominance, testing::oracle_min_eig(diff));
              for (std::size_t j = 0; j < 3; ++j) {
                const Index oj = 2 * static_cast<Index>(j);
                for (Index a = 0; a < 2; ++a)
                  for (Index b = 0; b < 2; ++b) {
                    const double d = std::sqrt(std::max(P(oi + a, oi + a), 0.0)) *
                                     std::sqrt(std::max(P(oj + b, oj + b), 0.0));
                    res.worst_holder = std::max(res.worst_holder, std::abs(P(oi + a, oj + b)) - d);
                  }
              }
            }
            if (centralized)
              res.worst_certificate =
                  std::max(res.worst_certificate, testing::oracle_spectral_norm(P) - cert.bound);
          }
        }
      }
    }
    return res;
  }();
  return out;
}

// Prediction-stage gap from the model alone: with P(0) = I the true
// cross-covariances vanish, while the bound inserts sqrt-diagonal outer products.
double first_step_prediction_gap(double g) {
  const auto m = example_system(g);
  const auto snap = evaluate(m, 0);
  double worst = INFINITY;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const Matrix& A = snap.A[i];
    const Vector d = Vector::Ones(A.cols());
    Vector s = Vector::Zero(A.rows());
    Matrix truth = A * A.transpose();
    for (std::size_t j : m.neighbors(i)) {
      const Matrix aij = snap.coupling_or_zero(i, j);
      s += aij * Vector::Ones(aij.cols());
      truth += aij * aij.transpose();
    }
    const Matrix bound = A * A.transpose() + A * d * s.transpose() + s * d.transpose() * A.transpose() +
                         s * s.transpose();
    worst = std::min(worst, testing::oracle_min_eig(bound - truth));
  }
  return worst;
}

Outcome covariance_dominance() {
  const auto& r = covariance_runs();
  std::printf("  prediction bound minus true prediction covariance at k = 1: min eig %.3e (g = 0.5), %.3e (g = 4)\n",
              first_step_prediction_gap(0.5), first_step_prediction_gap(4.0));
  return {r.failed_runs == 0 && r.worst_dominance >= -1e-8,
          std::to_string(r.runs) + " runs, min eig(P_hat_i - P_i) = " + fmt("%.3e", r.worst_dominance)};
}

Outcome holder_bound() {
  const auto& r = covariance_runs();
  return {r.failed_runs == 0 && r.worst_holder <= 1e-9,
          "max |P_ij| - D_i D_j = " + fmt("%.3e", r.worst_holder)};
}

Outcome certificate() {
  const auto& r = covariance_runs();
  return {r.failed_runs == 0 && r.certified_runs > 0 && r.worst_certificate <= 1e-6,
          std::to_string(r.certified_runs) + " runs with centralized condition at all steps, max ||P|| - bound = " +
              fmt("%.3e", r.worst_certificate)};
}

Outcome kalman_reduction() {
  auto s = [](double v) { return TimeVaryingMatrix::constant(Matrix::Constant(1, 1, v)); };
  const InterconnectedModel m(
      {SubsystemSpec{"s", s(0.5), s(1.0), s(1.0), s(1.0), Matrix::Identity(1, 1), Matrix::Identity(1, 1)}}, {});
  StepContext ctx;
  ctx.params = StabilityParams{0.9, 100.0, Mode::ideal};
  DistributedEstimator est(m, ctx, 1.0);
  double p = 1.0;
  double worst = 0.0;
  bool primary = true;
  for (int k = 1; k <= 20; ++k) {
    std::vector<DesignRecord> rec;
    const auto& st = est.step({Vector::Zero(1)}, &rec);
    const double pp = 0.25 * p + 1.0;
    const double kk = pp / (pp + 1.0);
    p = (1.0 - kk) * pp;
    const auto& sub = st.sub[0];
    const double from_state = sub.P_hat_pred(0, 0) / (sub.P_hat_pred(0, 0) + 1.0);
    worst = std::max({worst, std::abs(sub.K(0, 0) - kk), std::abs(sub.K(0, 0) - from_state)});
    primary = primary && rec.size() == 1 && rec[0].mode == ConstraintMode::primary;
  }
  return {primary && worst <= 1e-5, "max |K - Kalman| over 20 steps = " + fmt("%.3e", worst)};
}

Outcome mse_boundedness() {
  const auto m = example_system(4.0);
  double amse[2] = {0.0, 0.0};
  bool bounded = true;
  std::string detail;
  for (Mode mode : {Mode::ideal, Mode::delayed}) {
    SimulationConfig cfg;
    cfg.horizon = 100;
    cfg.runs = 100;
    cfg.mode = mode;
    cfg.seed = 1;
    const auto rep = monte_carlo(m, cfg);
    std::vector<double> tail(rep.mse.end() - 50, rep.mse.end());
    std::nth_element(tail.begin(), tail.begin() + 25, tail.end());
    const double hi = tail[25];
    std::nth_element(tail.begin(), tail.begin() + 24, tail.end());
    const double median = 0.5 * (hi + tail[24]);
    double peak = 0.0;
    for (double v : rep.mse) {
      bounded = bounded && std::isfinite(v);
      peak = std::max(peak, v);
    }
    bounded = bounded && peak <= 10.0 * median;
    amse[mode == Mode::delayed] = rep.amse;
    detail += std::string(to_string(mode)) + " amse " + fmt("%.4g", rep.amse) + " peak/median " +
              fmt("%.3g", peak / median) + ", ";
  }
  const double ratio = amse[1] / amse[0];
  detail += "delayed/ideal " + fmt("%.3g", ratio);
  return {bounded && ratio <= 2.0 && ratio >= 0.5, detail};
}

Outcome amse_trend() {
  SimulationConfig cfg;
  cfg.horizon = 100;
  cfg.runs = 100;
  cfg.seed = 1;
  const auto rows = sweep_g(kG, cfg);
  std::vector<double> amse;
  std::string curve;
  for (const auto& r : rows) {
    amse.push_back(r.amse);
    curve += fmt(" %.4g", r.amse);
  }
  const double rho = spearman(kG, amse);
  return {rho >= 0.8, "spearman " + fmt("%.3f", rho) + ", amse" + curve};
}

Outcome solver_oracle() {
  std::mt19937_64 rng(1010);
  int optimal = 0, infeasible = 0, mismatched = 0, unconfirmed = 0, other = 0;
  double worst_rel = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + static_cast<std::size_t>(trial % 3);
    const auto prob = testing::random_scalar_sdp(rng, d, trial % 4 != 0);
    const auto sol = sdp::solve(prob.to_problem());
    if (sol.status == sdp::SolveStatus::optimal) {
      ++optimal;
      const auto o = testing::convex_oracle(prob, prob.margin);
      if (!o.feasible) {
        ++mismatched;
        continue;
      }
      const double rel = std::abs(sol.objective - o.objective) / std::max(1.0, std::abs(o.objective));
      worst_rel = std::max(worst_rel, rel);
      if (rel > 1e-4) ++mismatched;
    } else if (sol.status == sdp::SolveStatus::infeasible) {
      ++infeasible;
      if (testing::convex_oracle(prob, 1e-6).best_worst <= -1e-6) ++unconfirmed;
    } else {
      ++other;
    }
  }
  return {mismatched == 0 && unconfirmed == 0 && other == 0,
          std::to_string(optimal) + " optimal (max rel diff " + fmt("%.2e", worst_rel) + "), " +
              std::to_string(infeasible) + " infeasible, " + std::to_string(mismatched) + " mismatches, " +
              std::to_string(unconfirmed) + " unconfirmed, " + std::to_string(other) + " other"};
}

}  // namespace

int main() {
  report(1, "decomposition soundness", decomposition_soundness);
  report(2, "corollary implies distributed and centralized", corollary_chain);
  report(3, "beta table trend", table_trend);
  report(4, "covariance dominance", covariance_dominance);
  report(5, "entrywise cross-covariance bound", holder_bound);
  report(6, "boundedness certificate", certificate);
  report(7, "Kalman reduction", kalman_reduction);
  report(8, "MSE boundedness and delay robustness", mse_boundedness);
  report(9, "AMSE grows with coupling", amse_trend);
  report(10, "SDP solver against oracle", solver_oracle);
  std::printf("%s\n", failures == 0 ? "ALL PASS" : (std::to_string(failures) + " FAILED").c_str());
  return failures == 0 ? 0 : 1;
}
