#include "estnet/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "estnet/errors.hpp"

namespace estnet {

const char* to_string(Mode mode) { return mode == Mode::ideal ? "ideal" : "delayed"; }

Mode parse_mode(std::string_view text) {
  if (text == "ideal") return Mode::ideal;
  if (text == "delayed") return Mode::delayed;
  throw ConfigError("unknown mode '" + std::string(text) + "' (expected ideal or delayed)");
}

void StabilityParams::validate() const {
  if (!(lambda > 0.0 && lambda < 1.0)) throw ParameterError("lambda must lie in (0, 1)");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ParameterError("eta must be finite and positive");
}

double EpsilonWeights::at(std::size_t i, std::size_t j) const {
  auto it = eps_.find({i, j});
  if (it == eps_.end())
    throw TopologyError("no epsilon weight for pair (" + std::to_string(i) + ", " + std::to_string(j) + ")");
  return it->second;
}

Matrix residual_matrix(const Matrix& K, const Matrix& C) {
  if (K.cols() != C.rows()) throw DimensionError("gain columns must match measurement rows");
  return Matrix::Identity(C.cols(), C.cols()) - K * C;
}

Matrix build_N_local(const Matrix& K, const Matrix& A, const Matrix& C, double lambda) {
  const Matrix kc = residual_matrix(K, C);
  if (K.rows() != A.rows() || A.rows() != A.cols()) throw DimensionError("build_N_local: shape mismatch");
  return schur_norm_block(kc * A, lambda);
}

Matrix build_N_pair(const Matrix& K_i, const Matrix& K_j, const Matrix& A_ij, const Matrix& A_ji,
                    const Matrix& C_i, const Matrix& C_j) {
  const Matrix kci = residual_matrix(K_i, C_i);
  const Matrix kcj = residual_matrix(K_j, C_j);
  const Index ni = kci.rows();
  const Index nj = kcj.rows();
  if (A_ij.rows() != ni || A_ij.cols() != nj || A_ji.rows() != nj || A_ji.cols() != ni)
    throw DimensionError("build_N_pair: coupling blocks do not match the subsystem sizes");
  Matrix n = Matrix::Zero(2 * ni, 2 * nj);
  n.block(0, nj, ni, nj) = kci * A_ij;
  n.block(ni, 0, ni, nj) = A_ji.transpose() * kcj.transpose();
  return n;
}

Matrix assemble_M(double eps_ij, const Matrix& N_i, const Matrix& N_ij, double eps_ji, const Matrix& N_j) {
  const Index a = N_i.rows();
  const Index b = N_j.rows();
  if (N_ij.rows() != a || N_ij.cols() != b) throw DimensionError("assemble_M: N_ij shape mismatch");
  Matrix m(a + b, a + b);
  m.topLeftCorner(a, a) = eps_ij * N_i;
  m.topRightCorner(a, b) = N_ij;
  m.bottomLeftCorner(b, a) = N_ij.transpose();
  m.bottomRightCorner(b, b) = eps_ji * N_j;
  return m;
}

namespace {

void require_gains(const InterconnectedModel& model, const std::vector<Matrix>& gains) {
  if (gains.size() != model.size()) throw InputError("expected one gain per subsystem");
  for (std::size_t i = 0; i < gains.size(); ++i) {
    const auto& s = model.subsystem(i);
    if (gains[i].size() == 0) throw InputError("missing gain for subsystem " + s.name);
    if (gains[i].rows() != s.state_dim() || gains[i].cols() != s.measurement_dim())
      throw DimensionError("gain of subsystem " + s.name + " has the wrong shape");
  }
}

Matrix M_from_snapshots(const ModelSnapshot& prev, const ModelSnapshot& now, std::size_t i, std::size_t j,
                        const std::vector<Matrix>& gains, const EpsilonWeights& eps, double lambda) {
  const Matrix ni = build_N_local(gains[i], prev.A[i], now.C[i], lambda);
  const Matrix nj = build_N_local(gains[j], prev.A[j], now.C[j], lambda);
  const Matrix nij = build_N_pair(gains[i], gains[j], prev.coupling_or_zero(i, j), prev.coupling_or_zero(j, i),
                                  now.C[i], now.C[j]);
  return assemble_M(eps.at(i, j), ni, nij, eps.at(j, i), nj);
}

EpsilonWeights normalize_rows(const InterconnectedModel& model, const std::map<std::pair<std::size_t, std::size_t>, double>& w) {
  EpsilonWeights eps;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const auto& nb = model.neighbors(i);
    if (nb.empty()) continue;
    double total = 0.0;
    for (auto j : nb) total += w.at({i, j});
    if (!(total > 0.0)) {
      for (auto j : nb) eps.set(i, j, 1.0 / static_cast<double>(nb.size()));
      continue;
    }
    // A pair whose coupling vanishes at this step contributes nothing to
    // N_ij; it still gets a small positive weight so every weight stays > 0.
    const double floor = 1e-9 * total;
    double floored_total = 0.0;
    for (auto j : nb) floored_total += std::max(w.at({i, j}), floor);
    for (auto j : nb) eps.set(i, j, std::max(w.at({i, j}), floor) / floored_total);
  }
  return eps;
}

}  // namespace

Matrix build_M_pair(const InterconnectedModel& model, Step k, std::size_t i, std::size_t j,
                    const std::vector<Matrix>& gains, const EpsilonWeights& eps, double lambda) {
  if (k < 1) throw ParameterError("build_M_pair needs k >= 1");
  if (i >= model.size() || j >= model.size() || !model.are_neighbors(i, j))
    throw TopologyError("subsystems " + std::to_string(i) + " and " + std::to_string(j) + " are not neighbors");
  require_gains(model, gains);
  return M_from_snapshots(evaluate(model, k - 1), evaluate(model, k), i, j, gains, eps, lambda);
}

EpsilonWeights epsilon_feasible(const InterconnectedModel& model, Step k) {
  if (k < 1) throw ParameterError("epsilon_feasible needs k >= 1");
  const auto prev = evaluate(model, k - 1);
  std::map<std::pair<std::size_t, std::size_t>, double> w;
  for (std::size_t i = 0; i < model.size(); ++i)
    for (auto j : model.neighbors(i))
      w[{i, j}] = spectral_norm(prev.coupling_or_zero(i, j)) + spectral_norm(prev.coupling_or_zero(j, i));
  return normalize_rows(model, w);
}

EpsilonWeights epsilon_bar(const InterconnectedModel& model, const NormBounds& bounds) {
  std::map<std::pair<std::size_t, std::size_t>, double> w;
  for (std::size_t i = 0; i < model.size(); ++i)
    for (auto j : model.neighbors(i)) w[{i, j}] = bounds.coupling_bound(i, j) + bounds.coupling_bound(j, i);
  return normalize_rows(model, w);
}

bool DistributedReport::passes() const {
  return std::all_of(local.begin(), local.end(), [](const auto& v) { return v.passes; }) &&
         std::all_of(pairs.begin(), pairs.end(), [](const auto& v) { return v.passes; });
}

DistributedReport check_distributed(Step k, const std::vector<Matrix>& gains, const InterconnectedModel& model,
                                    const StabilityParams& params, const EpsilonWeights& eps, double tol) {
  params.validate();
  if (k < 1) throw ParameterError("check_distributed needs k >= 1");
  require_gains(model, gains);
  const auto prev = evaluate(model, k - 1);
  const auto now = evaluate(model, k);

  DistributedReport report;
  for (std::size_t i = 0; i < model.size(); ++i) {
    LocalVerdict v;
    v.subsystem = i;
    v.residual_norm = spectral_norm(residual_matrix(gains[i], now.C[i]) * prev.A[i]);
    v.gain_norm = spectral_norm(gains[i]);
    v.passes = v.residual_norm <= params.lambda + tol && v.gain_norm <= params.eta + tol;
    report.local.push_back(v);
  }
  for (std::size_t i = 0; i < model.size(); ++i) {
    for (auto j : model.neighbors(i)) {
      if (j <= i) continue;
      PairVerdict v;
      v.i = i;
      v.j = j;
      const auto check = is_nsd(M_from_snapshots(prev, now, i, j, gains, eps, params.lambda), tol);
      v.max_eigenvalue = check.max_eigenvalue;
      v.passes = check.is_nsd;
      report.pairs.push_back(v);
    }
  }
  return report;
}

bool check_corollary(const Matrix& K, const Matrix& C, double beta, double eta, double tol) {
  if (!(beta > 0.0)) throw ParameterError("beta must be positive");
  const bool residual_ok = std::isinf(beta) || spectral_norm(residual_matrix(K, C)) <= beta + tol;
  return residual_ok && spectral_norm(K) <= eta + tol;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Largest b >= 0 with qa b^2 + qb b - qc <= 0 (qa, qb, qc >= 0, qc > 0).
double quadratic_root(double qa, double qb, double qc) {
  if (qa == 0.0) return qb > 0.0 ? qc / qb : kInf;
  return 2.0 * qc / (qb + std::sqrt(qb * qb + 4.0 * qa * qc));
}

}  // namespace

BetaAssignment compute_beta(const InterconnectedModel& model, const NormBounds& bounds, double lambda,
                            const EpsilonWeights& eps_bar, double rho) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw ParameterError("lambda must lie in (0, 1)");
  if (!(rho > 0.0 && rho < 1.0)) throw ParameterError("rho must lie in (0, 1)");
  const std::size_t l = model.size();
  if (bounds.alpha.size() != l) throw InputError("norm bounds do not match the model");

  BetaAssignment out;
  out.alpha = bounds.alpha;
  out.lambda = lambda;
  out.rho = rho;
  out.eps_bar = eps_bar;
  out.beta.assign(l, 0.0);

  for (std::size_t i = 0; i < l; ++i) {
    const double ai = bounds.alpha[i];
    double best = ai > 0.0 ? lambda / ai : kInf;
    std::size_t binding = i;
    bool has_later = false;
    for (auto j : model.neighbors(i)) {
      if (j > i) {
        has_later = true;
        continue;
      }
      const double bj = out.beta[j];
      const double slack_j = lambda - bounds.alpha[j] * bj;
      const double e = eps_bar.at(i, j) * eps_bar.at(j, i);
      if (!(slack_j > 0.0)) {
        throw InfeasibleBeta(i, j, "beta: neighbor " + model.subsystem(j).name + " leaves no margin for subsystem " +
                                       model.subsystem(i).name);
      }
      // i's orientation: (lambda - a_i b)(slack_j) e >= b^2 a_ij^2.
      const double aij = bounds.coupling_bound(i, j);
      const double own = quadratic_root(aij * aij, e * slack_j * ai, e * slack_j * lambda);
      // j's orientation: (lambda - a_i b)(slack_j) e >= b_j^2 a_ji^2.
      const double aji = bounds.coupling_bound(j, i);
      const double rhs = lambda - bj * bj * aji * aji / (e * slack_j);
      if (!(rhs > 0.0)) {
        throw InfeasibleBeta(i, j, "beta: no positive value for subsystem " + model.subsystem(i).name +
                                       " satisfies the pair condition with " + model.subsystem(j).name);
      }
      const double theirs = ai > 0.0 ? rhs / ai : kInf;
      const double pair = std::min(own, theirs);
      if (pair < best) {
        best = pair;
        binding = j;
      }
    }
    if (!(best > 0.0)) {
      throw InfeasibleBeta(i, binding, "beta: no positive value exists for subsystem " + model.subsystem(i).name);
    }
    out.beta[i] = has_later && std::isfinite(best) ? rho * best : best;
  }

  const double violation = beta_violation(model, bounds, out);
  if (violation > 1e-9) {
    std::ostringstream msg;
    msg << "beta assignment failed its own re-check (violation " << violation << ")";
    throw NumericalError(msg.str());
  }
  return out;
}

double beta_violation(const InterconnectedModel& model, const NormBounds& bounds, const BetaAssignment& beta) {
  const double lambda = beta.lambda;
  double worst = -kInf;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const double ai = bounds.alpha[i];
    const double bi = beta.beta[i];
    if (!(bi > 0.0)) return kInf;
    if (ai > 0.0) worst = std::max(worst, (ai * bi - lambda) / lambda);
    for (auto j : model.neighbors(i)) {
      if (j < i) continue;
      const double bj = beta.beta[j];
      if (std::isinf(bi) || std::isinf(bj)) {
        // Only possible for alpha = 0 with vanishing couplings on that side.
        continue;
      }
      const double lhs = (lambda - ai * bi) * (lambda - bounds.alpha[j] * bj) * beta.eps_bar.at(i, j) *
                         beta.eps_bar.at(j, i);
      const double aij = bounds.coupling_bound(i, j);
      const double aji = bounds.coupling_bound(j, i);
      const double rhs = std::max(bi * bi * aij * aij, bj * bj * aji * aji);
      worst = std::max(worst, (rhs - lhs) / (lambda * lambda));
    }
  }
  return worst;
}

CentralizedReport centralized_condition(Step k, const std::vector<Matrix>& gains, const InterconnectedModel& model,
                                        double lambda, double eta, double tol) {
  if (k < 1) throw ParameterError("centralized_condition needs k >= 1");
  require_gains(model, gains);
  const auto prev = augment(model, k - 1);
  const auto now = augment(model, k);
  const Matrix K = block_diagonal(gains);
  const Matrix kc = Matrix::Identity(model.total_state_dim(), model.total_state_dim()) - K * now.C;
  CentralizedReport r;
  r.residual_norm = spectral_norm(kc * prev.A);
  r.gain_norm = spectral_norm(K);
  r.passes = r.residual_norm <= lambda + tol && r.gain_norm <= eta + tol;
  return r;
}

BoundednessCertificate boundedness_certificate(const NormBounds& bounds, double lambda, double eta, const Matrix& Qw,
                                               const Matrix& Qv, double delta_p0) {
  if (!(lambda >= 0.0 && lambda < 1.0)) throw ParameterError("the certificate needs 0 <= lambda < 1");
  if (!(eta >= 0.0) || !(delta_p0 >= 0.0)) throw ParameterError("eta and delta_p0 must be >= 0");
  const double qv = Qv.size() == 0 ? 0.0 : spectral_norm(Qv);
  const double qw = Qw.size() == 0 ? 0.0 : spectral_norm(Qw);
  const double gain_part = eta * eta * bounds.delta_d * bounds.delta_d * qv;
  const double residual = 1.0 + eta * bounds.delta_c;
  const double noise = gain_part + residual * residual * bounds.delta_gamma * bounds.delta_gamma * qw;
  BoundednessCertificate c;
  c.delta_p1 = noise / (1.0 - lambda * lambda);
  c.f_p = lambda * lambda * c.delta_p1 + noise;
  c.delta_p0 = delta_p0;
  c.bound = std::max({c.delta_p1, c.f_p, c.delta_p0});
  return c;
}

}  // namespace estnet
