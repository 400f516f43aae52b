#include "estnet/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "estnet/errors.hpp"

namespace estnet {

void SimulationConfig::validate() const {
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (runs < 1) throw ConfigError("runs must be >= 1");
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
  if (!(p0 >= 0.0) || !std::isfinite(p0)) throw ConfigError("p0 must be finite and >= 0");
  if (threads < 0) throw ConfigError("threads must be >= 0");
  try {
    stability().validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
}

Vector SimulationTrace::error(Step k) const {
  const auto& xs = x.at(static_cast<std::size_t>(k));
  const auto& xh = xhat.at(static_cast<std::size_t>(k));
  Index n = 0;
  for (const auto& v : xs) n += v.size();
  Vector e(n);
  Index off = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    e.segment(off, xs[i].size()) = xs[i] - xh.at(i);
    off += xs[i].size();
  }
  return e;
}

namespace {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t kind) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(kind)};
  return std::mt19937_64(seq);
}

Vector gaussian(std::mt19937_64& eng, const Matrix& factor) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vector z(factor.cols());
  for (Index t = 0; t < z.size(); ++t) z(t) = nd(eng);
  return factor * z;
}

}  // namespace

SimulationTrace simulate_truth(const InterconnectedModel& model, Step horizon, std::uint64_t seed, InitPolicy init,
                               const Matrix& init_cov) {
  if (horizon < 1) throw ParameterError("horizon must be >= 1");
  const std::size_t l = model.size();
  const Index n = model.total_state_dim();

  std::vector<std::mt19937_64> w_eng, v_eng;
  std::vector<Matrix> w_fac, v_fac;
  for (std::size_t i = 0; i < l; ++i) {
    w_eng.push_back(make_engine(seed, i, 0));
    v_eng.push_back(make_engine(seed, i, 1));
    w_fac.push_back(psd_sqrt(model.subsystem(i).Qw));
    v_fac.push_back(psd_sqrt(model.subsystem(i).Qv));
  }

  SimulationTrace tr;
  std::vector<Vector> x0(l), y0(l);
  Vector stacked = Vector::Zero(n);
  if (init == InitPolicy::gaussian) {
    const Matrix cov = init_cov.size() == 0 ? Matrix::Identity(n, n) : init_cov;
    if (cov.rows() != n || cov.cols() != n) throw DimensionError("initial-state covariance has the wrong size");
    auto eng = make_engine(seed, l, 2);
    stacked = gaussian(eng, psd_sqrt(cov));
  }
  for (std::size_t i = 0; i < l; ++i) {
    x0[i] = stacked.segment(model.state_offset(i), model.subsystem(i).state_dim());
    y0[i] = Vector();
  }
  tr.x.push_back(std::move(x0));
  tr.y.push_back(std::move(y0));

  for (Step k = 1; k <= horizon; ++k) {
    const auto prev = evaluate(model, k - 1);
    const auto now = evaluate(model, k);
    const auto& xp = tr.x.back();
    std::vector<Vector> xk(l), yk(l);
    for (std::size_t i = 0; i < l; ++i) {
      const Vector w = gaussian(w_eng[i], w_fac[i]);
      const Vector v = gaussian(v_eng[i], v_fac[i]);
      Vector xi = prev.A[i] * xp[i] + prev.Gamma[i] * w;
      for (const auto& [key, blk] : prev.coupling)
        if (key.first == i) xi.noalias() += blk * xp[key.second];
      yk[i] = now.C[i] * xi + now.D[i] * v;
      xk[i] = std::move(xi);
    }
    tr.x.push_back(std::move(xk));
    tr.y.push_back(std::move(yk));
  }
  return tr;
}

namespace {

std::vector<Vector> zero_estimates(const InterconnectedModel& model) {
  std::vector<Vector> out;
  for (const auto& s : model.subsystems()) out.push_back(Vector::Zero(s.state_dim()));
  return out;
}

Matrix init_covariance(const InterconnectedModel& model, const SimulationConfig& config) {
  if (config.init_cov.size() != 0) return config.init_cov;
  const Index n = model.total_state_dim();
  return config.p0 * Matrix::Identity(n, n);
}

}  // namespace

RunResult run(const InterconnectedModel& model, const SimulationConfig& config) {
  config.validate();
  RunResult r;
  r.bounds = compute_bounds(model, config.horizon + 1);
  const auto eps_bar = epsilon_bar(model, r.bounds);
  if (config.mode == Mode::delayed) {
    r.beta = compute_beta(model, r.bounds, config.lambda, eps_bar, config.rho);
  } else {
    try {
      r.beta = compute_beta(model, r.bounds, config.lambda, eps_bar, config.rho);
    } catch (const InfeasibleBeta&) {
      // Ideal mode only uses beta as a fallback.
    }
  }

  const auto truth =
      simulate_truth(model, config.horizon, config.seed, config.init, init_covariance(model, config));
  StepContext ctx;
  ctx.params = config.stability();
  ctx.beta = r.beta ? &*r.beta : nullptr;
  ctx.solver = config.solver;
  DistributedEstimator est(model, ctx, config.p0);

  r.trace.x.push_back(truth.x[0]);
  r.trace.y.push_back(truth.y[0]);
  r.trace.xhat.push_back(zero_estimates(model));
  auto collect_P = [&](const EstimatorState& st) {
    std::vector<Matrix> ps;
    for (const auto& s : st.sub) ps.push_back(s.P_hat);
    r.P_hat.push_back(std::move(ps));
  };
  collect_P(est.state());

  for (Step k = 1; k <= config.horizon; ++k) {
    const auto& yk = truth.y[static_cast<std::size_t>(k)];
    try {
      const auto& st = est.step(yk, &r.records);
      std::vector<Vector> xh;
      std::vector<Matrix> ks;
      for (const auto& s : st.sub) {
        xh.push_back(s.xhat);
        ks.push_back(s.K);
      }
      r.trace.x.push_back(truth.x[static_cast<std::size_t>(k)]);
      r.trace.y.push_back(yk);
      r.trace.xhat.push_back(std::move(xh));
      r.gains.push_back(std::move(ks));
      collect_P(st);
    } catch (const GainInfeasible& e) {
      r.failure = RunFailure{RunFailure::Kind::infeasible, e.what()};
      break;
    } catch (const SolverFailure& e) {
      r.failure = RunFailure{RunFailure::Kind::solver, e.what()};
      break;
    }
  }
  return r;
}

SimulationTrace replay(const InterconnectedModel& model, const SimulationConfig& config, const GainHistory& gains,
                       std::uint64_t seed) {
  config.validate();
  if (static_cast<Step>(gains.size()) != config.horizon) throw InputError("gain history length must equal the horizon");
  auto tr = simulate_truth(model, config.horizon, seed, config.init, init_covariance(model, config));
  StepContext ctx;
  ctx.params = config.stability();
  DistributedEstimator est(model, ctx, config.p0);
  tr.xhat.push_back(zero_estimates(model));
  for (Step k = 1; k <= config.horizon; ++k) {
    const auto& st = est.step_with_gains(tr.y[static_cast<std::size_t>(k)], gains[static_cast<std::size_t>(k - 1)]);
    std::vector<Vector> xh;
    for (const auto& s : st.sub) xh.push_back(s.xhat);
    tr.xhat.push_back(std::move(xh));
  }
  return tr;
}

MseReport mse(const std::vector<SimulationTrace>& runs) {
  if (runs.empty()) throw InputError("mse needs at least one run");
  const Step h = runs.front().horizon();
  for (const auto& r : runs)
    if (r.horizon() != h || r.xhat.size() != r.x.size()) throw InputError("all runs must share one complete horizon");
  MseReport rep;
  rep.mse.assign(static_cast<std::size_t>(h), 0.0);
  for (const auto& r : runs) {
    double worst = 0.0;
    for (Step k = 0; k <= h; ++k) {
      const double e2 = r.error(k).squaredNorm();
      worst = std::max(worst, std::sqrt(e2));
      if (k >= 1) rep.mse[static_cast<std::size_t>(k - 1)] += e2;
    }
    rep.max_error.push_back(worst);
  }
  const double s = static_cast<double>(runs.size());
  for (auto& v : rep.mse) v /= s;
  rep.amse = h > 0 ? std::accumulate(rep.mse.begin(), rep.mse.end(), 0.0) / static_cast<double>(h) : 0.0;
  return rep;
}

MseReport monte_carlo(const InterconnectedModel& model, const SimulationConfig& config, RunResult* design_run) {
  config.validate();
  RunResult design = run(model, config);
  if (design.failure) {
    if (design.failure->kind == RunFailure::Kind::solver) throw SolverFailure(design.failure->message);
    throw GainInfeasible(0, static_cast<long long>(design.gains.size()) + 1, design.failure->message);
  }

  std::vector<SimulationTrace> traces(static_cast<std::size_t>(config.runs));
  traces[0] = design.trace;
  const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const int workers = std::min(config.runs - 1, config.threads > 0 ? config.threads : hw);
  std::atomic<int> next{1};
  auto work = [&] {
    for (int s = next++; s < config.runs; s = next++)
      traces[static_cast<std::size_t>(s)] = replay(model, config, design.gains, config.seed + static_cast<std::uint64_t>(s));
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  auto report = mse(traces);
  if (design_run != nullptr) *design_run = std::move(design);
  return report;
}

std::vector<SweepRow> sweep_g(const std::vector<double>& g_values, const SimulationConfig& config) {
  std::vector<SweepRow> rows;
  for (double g : g_values) {
    const auto model = example_system(g);
    RunResult design;
    const auto rep = monte_carlo(model, config, &design);
    SweepRow row;
    row.g = g;
    row.amse = rep.amse;
    row.alpha = design.bounds.alpha;
    if (design.beta) row.beta = design.beta->beta;
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t a = 0; a < idx.size();) {
    std::size_t b = a;
    while (b + 1 < idx.size() && v[idx[b + 1]] == v[idx[a]]) ++b;
    const double avg = 0.5 * static_cast<double>(a + b) + 1.0;
    for (std::size_t t = a; t <= b; ++t) r[idx[t]] = avg;
    a = b + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw InputError("spearman needs two equal-length samples of size >= 2");
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t t = 0; t < ra.size(); ++t) {
    sab += (ra[t] - ma) * (rb[t] - mb);
    saa += (ra[t] - ma) * (ra[t] - ma);
    sbb += (rb[t] - mb) * (rb[t] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nan("");
  return sab / std::sqrt(saa * sbb);
}

}  // namespace estnet
