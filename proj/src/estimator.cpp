#include "estnet/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "estnet/errors.hpp"

namespace estnet {

const char* to_string(ConstraintMode mode) {
  switch (mode) {
    case ConstraintMode::primary: return "primary";
    case ConstraintMode::fallback_corollary: return "fallback-1";
    case ConstraintMode::fallback_stability_priority: return "fallback-2";
  }
  return "unknown";
}

EstimatorState initial_state(const InterconnectedModel& model, double p0) {
  if (!(p0 >= 0.0) || !std::isfinite(p0)) throw ParameterError("p0 must be finite and >= 0");
  EstimatorState st;
  for (const auto& s : model.subsystems()) {
    const Index n = s.state_dim();
    SubsystemEstimate e;
    e.xhat = Vector::Zero(n);
    e.xhat_pred = Vector::Zero(n);
    e.P_hat = p0 * Matrix::Identity(n, n);
    e.P_hat_pred = e.P_hat;
    st.sub.push_back(std::move(e));
  }
  return st;
}

// ---------------------------------------------------------------------------
// Mailbox

Mailbox::Mailbox(const InterconnectedModel& model, int gain_delay) : model_(&model), gain_delay_(gain_delay) {
  if (gain_delay != 0 && gain_delay != 1) throw ParameterError("gain delay must be 0 or 1");
}

void Mailbox::check_edge(std::size_t receiver, std::size_t sender) const {
  if (receiver >= model_->size() || sender >= model_->size() || !model_->are_neighbors(receiver, sender))
    throw ProtocolError("no communication edge " + std::to_string(sender) + " -> " + std::to_string(receiver));
}

void Mailbox::post_state(std::size_t sender, Step step, const Vector& xhat, const Matrix& P_hat) {
  states_[{sender, step}] = StateMessage{sender, step, xhat, P_hat};
}

void Mailbox::post_gain(std::size_t sender, Step step, const Matrix& K) { gains_[{sender, step}] = K; }

const StateMessage& Mailbox::read_state(std::size_t receiver, std::size_t sender, Step step, Step now) const {
  check_edge(receiver, sender);
  auto it = states_.find({sender, step});
  if (it == states_.end() || step >= now) {
    throw ProtocolError("estimate of step " + std::to_string(step) + " on edge " + std::to_string(sender) + " -> " +
                        std::to_string(receiver) + " is not available at step " + std::to_string(now));
  }
  return it->second;
}

const Matrix& Mailbox::read_gain(std::size_t receiver, std::size_t sender, Step step, Step now) const {
  check_edge(receiver, sender);
  auto it = gains_.find({sender, step});
  if (it == gains_.end() || now < step + gain_delay_) {
    throw ProtocolError("gain of step " + std::to_string(step) + " on edge " + std::to_string(sender) + " -> " +
                        std::to_string(receiver) + " is not readable at step " + std::to_string(now));
  }
  return it->second;
}

void Mailbox::prune_before(Step step) {
  std::erase_if(states_, [step](const auto& kv) { return kv.first.second < step; });
  std::erase_if(gains_, [step](const auto& kv) { return kv.first.second < step; });
}

// ---------------------------------------------------------------------------
// Local recursions

Vector sqrt_diag(const Matrix& P) {
  if (P.rows() != P.cols()) throw DimensionError("sqrt_diag needs a square matrix");
  Vector d(P.rows());
  for (Index t = 0; t < P.rows(); ++t) {
    const double v = P(t, t);
    if (v < -1e-9 || !std::isfinite(v)) throw NumericalError("covariance diagonal entry is negative");
    d(t) = v > 0.0 ? std::sqrt(v) : 0.0;
  }
  return d;
}

namespace {

// In-neighbors of i: j in Omega_i with a present coupling block i <- j.
std::vector<std::size_t> in_neighbors(const InterconnectedModel& model, std::size_t i) {
  std::vector<std::size_t> out;
  for (auto j : model.neighbors(i))
    if (model.coupling(i, j) != nullptr) out.push_back(j);
  return out;
}

template <class T>
const T& neighbor_value(const std::map<std::size_t, T>& values, std::size_t i, std::size_t j, const char* what) {
  auto it = values.find(j);
  if (it == values.end())
    throw ProtocolError(std::string("missing ") + what + " on edge " + std::to_string(j) + " -> " + std::to_string(i));
  return it->second;
}

}  // namespace

Vector predict(const InterconnectedModel& model, std::size_t i, const ModelSnapshot& prev, const Vector& own,
               const std::map<std::size_t, Vector>& neighbor_xhat) {
  Vector x = prev.A.at(i) * own;
  for (auto j : in_neighbors(model, i)) x.noalias() += prev.coupling.at({i, j}) * neighbor_value(neighbor_xhat, i, j, "estimate");
  return x;
}

Matrix bound_prediction_covariance(const InterconnectedModel& model, std::size_t i, const ModelSnapshot& prev,
                                   const Matrix& own_P_hat, const std::map<std::size_t, Matrix>& neighbor_P_hat) {
  const Matrix& A = prev.A.at(i);
  const Vector di = sqrt_diag(own_P_hat);
  const Vector adi = A * di;
  // The double sum over neighbor pairs is the outer product of s with itself.
  Vector s = Vector::Zero(A.rows());
  for (auto j : in_neighbors(model, i))
    s.noalias() += prev.coupling.at({i, j}) * sqrt_diag(neighbor_value(neighbor_P_hat, i, j, "covariance bound"));

  const Matrix& G = prev.Gamma.at(i);
  Matrix p = A * own_P_hat * A.transpose() + adi * s.transpose() + s * adi.transpose() + s * s.transpose() +
             G * model.subsystem(i).Qw * G.transpose();
  p = 0.5 * (p + p.transpose());
  const double floor = -1e-9 * std::max(1.0, p.cwiseAbs().maxCoeff());
  if (min_eigenvalue_sym(p) < floor)
    throw NumericalError("prediction covariance bound of subsystem " + model.subsystem(i).name + " is indefinite");
  return p;
}

Vector update(const Vector& xhat_pred, const Vector& y, const Matrix& K, const Matrix& C) {
  if (C.cols() != xhat_pred.size() || C.rows() != y.size() || K.rows() != xhat_pred.size() || K.cols() != y.size())
    throw DimensionError("update: shape mismatch");
  return xhat_pred + K * (y - C * xhat_pred);
}

Matrix update_covariance_bound(const Matrix& P_hat_pred, const Matrix& K, const Matrix& C, const Matrix& D,
                               const Matrix& Qv) {
  const Matrix kc = residual_matrix(K, C);
  const Matrix kd = K * D;
  Matrix p = kc * P_hat_pred * kc.transpose() + kd * Qv * kd.transpose();
  return 0.5 * (p + p.transpose());
}

// ---------------------------------------------------------------------------
// Gain design

namespace {

// ||(I - K C) A|| <= bound as [[-bound I, A - K C A], [*, -bound I]].
sdp::LmiConstraint residual_cap(sdp::VariableId K, const Matrix& C, const Matrix& A, double bound, double margin,
                                std::string label) {
  const Index n = A.rows();
  sdp::LmiConstraint con({n, A.cols()}, margin, std::move(label));
  con.set_block(0, 0, sdp::AffineBlock::fixed(-bound * Matrix::Identity(n, n)));
  con.set_block(0, 1, sdp::AffineBlock{A, {}}.add(K, -Matrix::Identity(n, n), C * A));
  con.set_block(1, 1, sdp::AffineBlock::fixed(-bound * Matrix::Identity(A.cols(), A.cols())));
  return con;
}

double beta_of(const GainContext& ctx, std::size_t i) {
  if (ctx.beta == nullptr) throw InputError("corollary constraints need a beta assignment");
  return ctx.beta->beta.at(i);
}

}  // namespace

sdp::SdpProblem build_gain_problem(const InterconnectedModel& model, std::size_t i, const Matrix& P_hat_pred,
                                   const ModelSnapshot& now, const ModelSnapshot& prev, const GainContext& ctx,
                                   ConstraintMode mode) {
  const auto& sub = model.subsystem(i);
  const Matrix& C = now.C.at(i);
  const Matrix& D = now.D.at(i);
  const Matrix& A = prev.A.at(i);
  const Index n = sub.state_dim();
  const Index m = sub.measurement_dim();
  const Index p = sub.Qv.rows();
  const Matrix I = Matrix::Identity(n, n);

  Matrix P = symmetrized(P_hat_pred);
  if (min_eigenvalue_sym(P) < 1e-9) P += 1e-9 * I;

  sdp::SdpProblem prob;
  const auto K = prob.add_variable("K", n, m);
  const auto G = prob.add_variable("G", n, n, true);
  prob.add_objective(G, I);

  sdp::LmiConstraint cov({n, n, p}, ctx.margin, "covariance");
  cov.set_block(0, 0, sdp::AffineBlock{Matrix::Zero(n, n), {}}.add(G, -I, I));
  cov.set_block(0, 1, sdp::AffineBlock{P, {}}.add(K, I, -C * P));
  cov.set_block(0, 2, sdp::AffineBlock{Matrix::Zero(n, p), {}}.add(K, I, D * sub.Qv));
  cov.set_block(1, 1, sdp::AffineBlock::fixed(-P));
  cov.set_block(2, 2, sdp::AffineBlock::fixed(-sub.Qv));
  prob.add_constraint(std::move(cov));
  prob.add_constraint(sdp::norm_cap_constraint(K, ctx.params.eta, n, m, ctx.margin));

  const double lambda = ctx.params.lambda;
  const bool corollary =
      mode == ConstraintMode::fallback_corollary || (mode == ConstraintMode::primary && ctx.params.mode == Mode::delayed);
  if (corollary) {
    const double beta = beta_of(ctx, i);
    if (std::isfinite(beta)) prob.add_constraint(residual_cap(K, C, I, beta, ctx.margin, "corollary"));
    return prob;
  }
  prob.add_constraint(residual_cap(K, C, A, lambda, ctx.margin, "local"));
  if (mode == ConstraintMode::fallback_stability_priority) return prob;

  // Pair conditions M_ij <= 0 for j in Sigma_i with K_j(k) fixed.
  for (auto j : model.later_neighbors(i)) {
    if (ctx.eps == nullptr) throw InputError("ideal-mode design needs epsilon weights");
    auto it = ctx.later_gains.find(j);
    if (it == ctx.later_gains.end())
      throw ProtocolError("gain of subsystem " + model.subsystem(j).name + " is not available to " + sub.name);
    const Matrix& Kj = it->second;
    const Matrix& Aj = prev.A.at(j);
    const Matrix& Cj = now.C.at(j);
    const Index nj = model.subsystem(j).state_dim();
    const Matrix Aij = prev.coupling_or_zero(i, j);
    const Matrix Aji = prev.coupling_or_zero(j, i);
    const double eij = ctx.eps->at(i, j);
    const double eji = ctx.eps->at(j, i);
    const Matrix kcj = residual_matrix(Kj, Cj);

    sdp::LmiConstraint mc({n, n, nj, nj}, ctx.margin, "pair " + sub.name + "-" + model.subsystem(j).name);
    mc.set_block(0, 0, sdp::AffineBlock::fixed(-eij * lambda * I));
    mc.set_block(0, 1, sdp::AffineBlock{eij * A, {}}.add(K, -I, eij * C * A));
    mc.set_block(0, 3, sdp::AffineBlock{Aij, {}}.add(K, -I, C * Aij));
    mc.set_block(1, 1, sdp::AffineBlock::fixed(-eij * lambda * I));
    mc.set_block(1, 2, sdp::AffineBlock::fixed(Aji.transpose() * kcj.transpose()));
    mc.set_block(2, 2, sdp::AffineBlock::fixed(-eji * lambda * Matrix::Identity(nj, nj)));
    mc.set_block(2, 3, sdp::AffineBlock::fixed(eji * kcj * Aj));
    mc.set_block(3, 3, sdp::AffineBlock::fixed(-eji * lambda * Matrix::Identity(nj, nj)));
    prob.add_constraint(std::move(mc));
  }
  return prob;
}

namespace {

// Independent re-check of a returned gain; empty string means it passed.
std::string verify_gain(const InterconnectedModel& model, std::size_t i, const Matrix& K, const Matrix& G,
                        const Matrix& P_hat_pred, const ModelSnapshot& now, const ModelSnapshot& prev,
                        const GainContext& ctx, ConstraintMode mode) {
  constexpr double tol = 1e-8;
  const auto& sub = model.subsystem(i);
  const Matrix& C = now.C.at(i);
  if (!all_finite(K) || !all_finite(G)) return "non-finite solution";
  if (spectral_norm(K) > ctx.params.eta + tol) return "gain norm cap";

  const bool corollary =
      mode == ConstraintMode::fallback_corollary || (mode == ConstraintMode::primary && ctx.params.mode == Mode::delayed);
  if (corollary) {
    if (!check_corollary(K, C, beta_of(ctx, i), ctx.params.eta, tol)) return "corollary cap";
  } else {
    if (spectral_norm(residual_matrix(K, C) * prev.A.at(i)) > ctx.params.lambda + tol) return "local cap";
    if (mode == ConstraintMode::primary) {
      for (auto j : model.later_neighbors(i)) {
        const Matrix& Kj = ctx.later_gains.at(j);
        const Matrix ni = build_N_local(K, prev.A.at(i), C, ctx.params.lambda);
        const Matrix nj = build_N_local(Kj, prev.A.at(j), now.C.at(j), ctx.params.lambda);
        const Matrix nij = build_N_pair(K, Kj, prev.coupling_or_zero(i, j), prev.coupling_or_zero(j, i), C, now.C.at(j));
        if (!is_nsd(assemble_M(ctx.eps->at(i, j), ni, nij, ctx.eps->at(j, i), nj), tol).is_nsd) return "pair condition";
      }
    }
  }
  const Matrix closed = update_covariance_bound(P_hat_pred, K, C, now.D.at(i), sub.Qv);
  if (min_eigenvalue_sym(0.5 * (G + G.transpose()) - closed) < -1e-7) return "objective bound";
  return {};
}

}  // namespace

GainDesign design_gain(const InterconnectedModel& model, std::size_t i, Step k, const Matrix& P_hat_pred,
                       const ModelSnapshot& now, const ModelSnapshot& prev, const GainContext& ctx) {
  ctx.params.validate();
  std::vector<ConstraintMode> chain{ConstraintMode::primary};
  if (ctx.allow_fallback) {
    if (ctx.params.mode == Mode::ideal && ctx.beta != nullptr) chain.push_back(ConstraintMode::fallback_corollary);
    chain.push_back(ConstraintMode::fallback_stability_priority);
  }

  std::string failures;
  bool solver_trouble = false;
  for (auto mode : chain) {
    const auto prob = build_gain_problem(model, i, P_hat_pred, now, prev, ctx, mode);
    const auto sol = sdp::solve(prob, ctx.solver);
    const bool usable = sol.status == sdp::SolveStatus::optimal ||
                        (sol.status == sdp::SolveStatus::iteration_limit && sol.worst_residual <= ctx.solver.feas_tol);
    if (!failures.empty()) failures += "; ";
    failures += std::string(to_string(mode)) + ": " + sdp::to_string(sol.status);
    if (!usable) {
      if (sol.status != sdp::SolveStatus::infeasible) solver_trouble = true;
      continue;
    }
    GainDesign d;
    d.K = sol.value(0);
    d.G_hat = 0.5 * (sol.value(1) + sol.value(1).transpose());
    const auto problem = verify_gain(model, i, d.K, d.G_hat, P_hat_pred, now, prev, ctx, mode);
    if (!problem.empty()) {
      failures += " (re-check failed: " + problem + ")";
      solver_trouble = true;
      continue;
    }
    d.objective = d.G_hat.trace();
    d.mode = mode;
    d.status = sol.status;
    d.residual_norm = spectral_norm(residual_matrix(d.K, now.C.at(i)) * prev.A.at(i));
    d.iterations = sol.iterations;
    return d;
  }
  const std::string what = "gain design for subsystem " + model.subsystem(i).name + " at step " + std::to_string(k) +
                           " failed (" + failures + ")";
  if (solver_trouble) throw SolverFailure(what);
  throw GainInfeasible(i, k, what);
}

// ---------------------------------------------------------------------------
// Orchestration

EstimatorState step_all(Step k, const InterconnectedModel& model, Mailbox& mailbox, const EstimatorState& previous,
                        const std::vector<Vector>& measurements, const StepContext& ctx,
                        std::vector<DesignRecord>* records) {
  const std::size_t l = model.size();
  if (k < 1 || previous.k != k - 1) throw InputError("step_all must advance exactly one step");
  if (measurements.size() != l) throw InputError("expected one measurement vector per subsystem");
  if (ctx.fixed_gains != nullptr && ctx.fixed_gains->size() != l) throw InputError("expected one gain per subsystem");
  ctx.params.validate();

  const auto prev = evaluate(model, k - 1);
  const auto now = evaluate(model, k);
  const bool ideal = ctx.params.mode == Mode::ideal;
  EpsilonWeights eps;
  if (ideal && ctx.fixed_gains == nullptr) eps = epsilon_feasible(model, k);

  EstimatorState next;
  next.k = k;
  next.sub.resize(l);
  std::vector<std::size_t> order(l);
  for (std::size_t i = 0; i < l; ++i) order[i] = ideal ? l - 1 - i : i;

  for (auto i : order) {
    const auto& sub = model.subsystem(i);
    if (measurements[i].size() != sub.measurement_dim())
      throw DimensionError("measurement of subsystem " + sub.name + " has the wrong length");
    const auto& own = previous.sub.at(i);

    std::map<std::size_t, Vector> nx;
    std::map<std::size_t, Matrix> np;
    for (auto j : in_neighbors(model, i)) {
      const auto& msg = mailbox.read_state(i, j, k - 1, k);
      nx.emplace(j, msg.xhat);
      np.emplace(j, msg.P_hat);
    }

    auto& out = next.sub[i];
    out.P_hat_pred = bound_prediction_covariance(model, i, prev, own.P_hat, np);
    if (ctx.fixed_gains != nullptr) {
      out.K = (*ctx.fixed_gains)[i];
      if (out.K.rows() != sub.state_dim() || out.K.cols() != sub.measurement_dim())
        throw DimensionError("supplied gain of subsystem " + sub.name + " has the wrong shape");
    } else {
      GainContext gctx;
      gctx.params = ctx.params;
      gctx.beta = ctx.beta;
      gctx.solver = ctx.solver;
      gctx.allow_fallback = ctx.allow_fallback;
      if (ideal) {
        gctx.eps = &eps;
        for (auto j : model.later_neighbors(i)) gctx.later_gains.emplace(j, mailbox.read_gain(i, j, k, k));
      }
      auto d = design_gain(model, i, k, out.P_hat_pred, now, prev, gctx);
      if (records != nullptr)
        records->push_back(DesignRecord{k, i, d.objective, d.mode, d.status, d.residual_norm, d.iterations});
      out.K = std::move(d.K);
      out.G_hat = std::move(d.G_hat);
    }
    out.P_hat = update_covariance_bound(out.P_hat_pred, out.K, now.C[i], now.D[i], sub.Qv);
    if (out.G_hat.size() == 0) out.G_hat = out.P_hat;
    out.xhat_pred = predict(model, i, prev, own.xhat, nx);
    out.xhat = update(out.xhat_pred, measurements[i], out.K, now.C[i]);
    mailbox.post_gain(i, k, out.K);
  }
  for (std::size_t i = 0; i < l; ++i) mailbox.post_state(i, k, next.sub[i].xhat, next.sub[i].P_hat);
  mailbox.prune_before(k - 1);
  return next;
}

DistributedEstimator::DistributedEstimator(const InterconnectedModel& model, StepContext ctx, double p0)
    : model_(&model),
      ctx_(ctx),
      mailbox_(model, ctx.params.mode == Mode::ideal ? 0 : 1),
      state_(initial_state(model, p0)) {
  ctx_.fixed_gains = nullptr;
  for (std::size_t i = 0; i < model.size(); ++i) mailbox_.post_state(i, 0, state_.sub[i].xhat, state_.sub[i].P_hat);
}

const EstimatorState& DistributedEstimator::step(const std::vector<Vector>& measurements,
                                                 std::vector<DesignRecord>* records) {
  state_ = step_all(state_.k + 1, *model_, mailbox_, state_, measurements, ctx_, records);
  return state_;
}

const EstimatorState& DistributedEstimator::step_with_gains(const std::vector<Vector>& measurements,
                                                            const std::vector<Matrix>& gains) {
  StepContext fixed = ctx_;
  fixed.fixed_gains = &gains;
  state_ = step_all(state_.k + 1, *model_, mailbox_, state_, measurements, fixed, nullptr);
  return state_;
}

}  // namespace estnet
