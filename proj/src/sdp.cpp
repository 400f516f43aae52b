#include "estnet/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "estnet/errors.hpp"

namespace estnet::sdp {

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::iteration_limit: return "iteration_limit";
    case SolveStatus::unbounded: return "unbounded";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Problem description

LmiConstraint::LmiConstraint(std::vector<Index> block_sizes, double margin, std::string label)
    : sizes_(std::move(block_sizes)), margin_(margin), label_(std::move(label)) {
  if (sizes_.empty()) throw DimensionError("LMI constraint needs at least one block");
  for (auto s : sizes_)
    if (s < 1) throw DimensionError("LMI block sizes must be >= 1");
  set_margin(margin);
  blocks_.resize(sizes_.size() * sizes_.size());
}

void LmiConstraint::set_margin(double margin) {
  if (!(margin >= 0.0)) throw ParameterError("LMI margin must be >= 0");
  margin_ = margin;
}

Index LmiConstraint::dimension() const {
  Index d = 0;
  for (auto s : sizes_) d += s;
  return d;
}

void LmiConstraint::set_block(std::size_t row, std::size_t col, AffineBlock block) {
  if (row >= sizes_.size() || col >= sizes_.size()) throw DimensionError("LMI block index out of range");
  if (row > col) throw ShapeError("only blocks on or above the diagonal may be set");
  const Index r = sizes_[row];
  const Index c = sizes_[col];
  if (block.constant.size() == 0) block.constant = Matrix::Zero(r, c);
  if (block.constant.rows() != r || block.constant.cols() != c)
    throw DimensionError("LMI block constant has the wrong shape");
  for (const auto& t : block.terms)
    if (t.left.rows() != r || t.right.cols() != c) throw DimensionError("LMI affine term has the wrong shape");
  blocks_[row * sizes_.size() + col] = std::move(block);
}

const std::optional<AffineBlock>& LmiConstraint::block(std::size_t row, std::size_t col) const {
  return blocks_.at(row * sizes_.size() + col);
}

VariableId SdpProblem::add_variable(std::string id, Index rows, Index cols, bool symmetric) {
  if (rows < 1 || cols < 1) throw DimensionError("SDP variable needs rows, cols >= 1");
  if (symmetric && rows != cols) throw DimensionError("symmetric SDP variable must be square");
  for (const auto& v : variables_)
    if (v.id == id) throw InputError("duplicate SDP variable id '" + id + "'");
  variables_.push_back(MatrixVariable{std::move(id), rows, cols, symmetric});
  objective_.emplace_back();
  initial_.emplace_back();
  return variables_.size() - 1;
}

void SdpProblem::add_constraint(LmiConstraint constraint) {
  const auto nb = constraint.block_sizes().size();
  for (std::size_t r = 0; r < nb; ++r) {
    for (std::size_t c = r; c < nb; ++c) {
      const auto& blk = constraint.block(r, c);
      if (!blk) continue;
      for (const auto& t : blk->terms) {
        if (t.variable >= variables_.size()) throw InputError("LMI term refers to an unknown variable");
        const auto& v = variables_[t.variable];
        const Index xr = t.transpose_variable ? v.cols : v.rows;
        const Index xc = t.transpose_variable ? v.rows : v.cols;
        if (t.left.cols() != xr || t.right.rows() != xc)
          throw DimensionError("LMI term factors do not match variable '" + v.id + "'");
      }
    }
  }
  constraints_.push_back(std::move(constraint));
}

void SdpProblem::add_objective(VariableId v, Matrix weight) {
  const auto& var = variables_.at(v);
  if (weight.rows() != var.cols || weight.cols() != var.rows)
    throw DimensionError("objective weight must be cols x rows of its variable");
  if (objective_[v]) {
    *objective_[v] += weight;
  } else {
    objective_[v] = std::move(weight);
  }
}

void SdpProblem::set_initial_value(VariableId v, Matrix value) {
  const auto& var = variables_.at(v);
  if (value.rows() != var.rows || value.cols() != var.cols) throw DimensionError("initial value has the wrong shape");
  initial_[v] = std::move(value);
}

namespace {

Matrix block_value(const AffineBlock& blk, const std::vector<Matrix>& values, bool with_constant) {
  Matrix out = with_constant ? blk.constant : Matrix::Zero(blk.constant.rows(), blk.constant.cols());
  for (const auto& t : blk.terms) {
    const Matrix& x = values[t.variable];
    if (x.size() == 0) continue;
    if (t.transpose_variable) {
      out.noalias() += t.left * x.transpose() * t.right;
    } else {
      out.noalias() += t.left * x * t.right;
    }
  }
  return out;
}

// Full symmetric matrix of an LMI. Diagonal blocks must come out symmetric.
Matrix assemble(const LmiConstraint& con, const std::vector<Matrix>& values, bool with_constant) {
  const auto& sizes = con.block_sizes();
  std::vector<Index> off(sizes.size(), 0);
  for (std::size_t b = 1; b < sizes.size(); ++b) off[b] = off[b - 1] + sizes[b - 1];
  const Index n = con.dimension();
  Matrix f = Matrix::Zero(n, n);
  for (std::size_t r = 0; r < sizes.size(); ++r) {
    for (std::size_t c = r; c < sizes.size(); ++c) {
      const auto& blk = con.block(r, c);
      if (!blk) continue;
      Matrix v = block_value(*blk, values, with_constant);
      if (r == c) {
        const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
        if ((v - v.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
          throw ShapeError("diagonal block " + std::to_string(r) + " of LMI '" + con.label() + "' is not symmetric");
        f.block(off[r], off[r], sizes[r], sizes[r]) = 0.5 * (v + v.transpose());
      } else {
        f.block(off[r], off[c], sizes[r], sizes[c]) = v;
        f.block(off[c], off[r], sizes[c], sizes[r]) = v.transpose();
      }
    }
  }
  return f;
}

}  // namespace

Matrix SdpProblem::evaluate_constraint(std::size_t index, const std::vector<Matrix>& values) const {
  if (values.size() != variables_.size()) throw InputError("wrong number of variable values");
  return assemble(constraints_.at(index), values, true);
}

double SdpProblem::evaluate_objective(const std::vector<Matrix>& values) const {
  double obj = 0.0;
  for (std::size_t v = 0; v < variables_.size(); ++v)
    if (objective_[v]) obj += (*objective_[v] * values[v]).trace();
  return obj;
}

LmiConstraint norm_cap_constraint(VariableId x, double bound, Index rows, Index cols, double margin) {
  if (!(bound > 0.0)) throw ParameterError("norm cap bound must be positive");
  LmiConstraint con({rows, cols}, margin, "norm_cap");
  con.set_block(0, 0, AffineBlock::fixed(-bound * Matrix::Identity(rows, rows)));
  con.set_block(0, 1, AffineBlock{Matrix::Zero(rows, cols), {}}.add(x, Matrix::Identity(rows, rows),
                                                                     Matrix::Identity(cols, cols)));
  con.set_block(1, 1, AffineBlock::fixed(-bound * Matrix::Identity(cols, cols)));
  return con;
}

// ---------------------------------------------------------------------------
// Solver

namespace {

struct CompiledConstraint {
  Matrix base;  // F0 + margin * I
  std::vector<std::pair<int, Matrix>> terms;  // (scalar index, F_k)
  Index dim = 0;
};

struct Compiled {
  int n = 0;
  std::vector<int> offset;               // first scalar of each variable
  std::vector<std::vector<Matrix>> basis;  // per variable
  Vector c;
  std::vector<CompiledConstraint> cons;
  Index barrier_dim = 0;
};

std::vector<Matrix> unpack(const Compiled& cp, const std::vector<MatrixVariable>& vars, const Vector& x) {
  std::vector<Matrix> out;
  for (std::size_t v = 0; v < vars.size(); ++v) {
    Matrix m = Matrix::Zero(vars[v].rows, vars[v].cols);
    for (std::size_t b = 0; b < cp.basis[v].size(); ++b) m += x(cp.offset[v] + static_cast<int>(b)) * cp.basis[v][b];
    out.push_back(std::move(m));
  }
  return out;
}

Vector pack(const Compiled& cp, const std::vector<MatrixVariable>& vars, const std::vector<Matrix>& values) {
  Vector x = Vector::Zero(cp.n);
  for (std::size_t v = 0; v < vars.size(); ++v) {
    const auto& var = vars[v];
    int k = cp.offset[v];
    if (var.symmetric) {
      const Matrix s = 0.5 * (values[v] + values[v].transpose());
      for (Index r = 0; r < var.rows; ++r)
        for (Index c = r; c < var.cols; ++c) x(k++) = s(r, c);
    } else {
      for (Index r = 0; r < var.rows; ++r)
        for (Index c = 0; c < var.cols; ++c) x(k++) = values[v](r, c);
    }
  }
  return x;
}

Compiled compile(const SdpProblem& problem) {
  Compiled cp;
  const auto& vars = problem.variables();
  for (const auto& var : vars) {
    cp.offset.push_back(cp.n);
    std::vector<Matrix> basis;
    if (var.symmetric) {
      for (Index r = 0; r < var.rows; ++r)
        for (Index c = r; c < var.cols; ++c) {
          Matrix e = Matrix::Zero(var.rows, var.cols);
          e(r, c) = 1.0;
          e(c, r) = 1.0;
          basis.push_back(std::move(e));
        }
    } else {
      for (Index r = 0; r < var.rows; ++r)
        for (Index c = 0; c < var.cols; ++c) {
          Matrix e = Matrix::Zero(var.rows, var.cols);
          e(r, c) = 1.0;
          basis.push_back(std::move(e));
        }
    }
    cp.n += static_cast<int>(basis.size());
    cp.basis.push_back(std::move(basis));
  }

  cp.c = Vector::Zero(cp.n);
  for (std::size_t v = 0; v < vars.size(); ++v) {
    const auto& w = problem.objective()[v];
    if (!w) continue;
    for (std::size_t b = 0; b < cp.basis[v].size(); ++b) cp.c(cp.offset[v] + static_cast<int>(b)) = (*w * cp.basis[v][b]).trace();
  }

  std::vector<Matrix> zeros;
  for (const auto& var : vars) zeros.push_back(Matrix::Zero(var.rows, var.cols));
  for (const auto& con : problem.constraints()) {
    CompiledConstraint cc;
    cc.dim = con.dimension();
    cc.base = assemble(con, zeros, true) + con.margin() * Matrix::Identity(cc.dim, cc.dim);
    for (std::size_t v = 0; v < vars.size(); ++v) {
      for (std::size_t b = 0; b < cp.basis[v].size(); ++b) {
        std::vector<Matrix> vals(vars.size());
        vals[v] = cp.basis[v][b];
        Matrix fk = assemble(con, vals, false);
        if (fk.cwiseAbs().maxCoeff() > 0.0) cc.terms.emplace_back(cp.offset[v] + static_cast<int>(b), std::move(fk));
      }
    }
    cp.barrier_dim += cc.dim;
    cp.cons.push_back(std::move(cc));
  }
  return cp;
}

Matrix constraint_value(const CompiledConstraint& cc, const Vector& x) {
  Matrix g = cc.base;
  for (const auto& [k, fk] : cc.terms) g += x(k) * fk;
  return g;
}

double max_eig(const Matrix& g) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

// Barrier: minimize t * obj - sum log det(S_j) - sum log(box^2 - x_k^2), with
// S_j = shift * I - G_j(x). In phase one the shift is the extra variable s
// (last entry of z) and obj = s. The wide box keeps every centering problem
// bounded when the feasible set is unbounded.
class Barrier {
 public:
  Barrier(const Compiled& cp, bool phase_one, double tau, double box)
      : cp_(cp), phase_one_(phase_one), tau_(tau), box_(box) {}

  int dim() const { return cp_.n + (phase_one_ ? 1 : 0); }

  double objective(const Vector& z) const { return phase_one_ ? z(cp_.n) : cp_.c.dot(z.head(cp_.n)); }

  // Barrier part only; +inf when z is outside the domain.
  double barrier(const Vector& z) const {
    double phi = 0.0;
    for (int k = 0; k < cp_.n; ++k) {
      const double lo = box_ + z(k);
      const double hi = box_ - z(k);
      if (!(lo > 0.0 && hi > 0.0)) return std::numeric_limits<double>::infinity();
      phi -= std::log(lo) + std::log(hi);
    }
    for (const auto& cc : cp_.cons) {
      Matrix s = shift(z) * Matrix::Identity(cc.dim, cc.dim) - constraint_value(cc, z.head(cp_.n));
      Eigen::LLT<Matrix> llt(s);
      if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
      const Vector d = llt.matrixLLT().diagonal();
      if ((d.array() <= 0.0).any()) return std::numeric_limits<double>::infinity();
      phi -= 2.0 * d.array().log().sum();
    }
    return phi;
  }

  void derivatives(const Vector& z, double t, Vector& grad, Matrix& hess) const {
    const int p = dim();
    grad = Vector::Zero(p);
    hess = Matrix::Zero(p, p);
    if (phase_one_) grad(cp_.n) = t;
    else grad.head(cp_.n) = t * cp_.c;
    for (int k = 0; k < cp_.n; ++k) {
      const double lo = 1.0 / (box_ + z(k));
      const double hi = 1.0 / (box_ - z(k));
      grad(k) += hi - lo;
      hess(k, k) += lo * lo + hi * hi;
    }

    for (const auto& cc : cp_.cons) {
      const Matrix s = shift(z) * Matrix::Identity(cc.dim, cc.dim) - constraint_value(cc, z.head(cp_.n));
      const Matrix sinv = s.llt().solve(Matrix::Identity(cc.dim, cc.dim));
      // Directions dS/dz_d: -F_k for the x scalars, I for the phase-one shift.
      std::vector<std::pair<int, Matrix>> w;
      w.reserve(cc.terms.size() + 1);
      for (const auto& [k, fk] : cc.terms) w.emplace_back(k, -(sinv * fk));
      if (phase_one_) w.emplace_back(cp_.n, sinv);
      for (std::size_t a = 0; a < w.size(); ++a) {
        grad(w[a].first) -= w[a].second.trace();
        for (std::size_t b = a; b < w.size(); ++b) {
          const double h = (w[a].second.array() * w[b].second.transpose().array()).sum();
          hess(w[a].first, w[b].first) += h;
          if (a != b) hess(w[b].first, w[a].first) += h;
        }
      }
    }
  }

 private:
  double shift(const Vector& z) const { return phase_one_ ? z(cp_.n) : tau_; }

  const Compiled& cp_;
  bool phase_one_;
  double tau_;
  double box_;
};

enum class CenterResult { centered, partial, budget, stalled, early_exit };

// Damped Newton centering. `stop` may request an early exit after any step.
template <class StopFn>
CenterResult center(const Barrier& bar, Vector& z, double t, int& iters, int max_iter, StopFn&& stop,
                    int max_steps = std::numeric_limits<int>::max()) {
  Vector grad;
  Matrix hess;
  for (int taken = 0;; ++taken) {
    if (iters >= max_iter) return CenterResult::budget;
    if (taken >= max_steps) return CenterResult::partial;
    bar.derivatives(z, t, grad, hess);
    const double reg = 1e-14 * std::max(1.0, hess.diagonal().cwiseAbs().maxCoeff());
    hess.diagonal().array() += reg;
    Eigen::LDLT<Matrix> ldlt(hess);
    Vector dz = -ldlt.solve(grad);
    if (!dz.allFinite()) return CenterResult::stalled;
    const double dec2 = -grad.dot(dz);
    if (dec2 < 0.0) dz = -grad / std::max(1.0, hess.diagonal().maxCoeff());
    if (dec2 >= 0.0 && dec2 * 0.5 <= 1e-10) return CenterResult::centered;
    ++iters;

    // Compare differences so that the large t * objective term does not swamp the test.
    const double bar0 = bar.barrier(z);
    const double obj_slope = t * (bar.objective(z + dz) - bar.objective(z));
    const double slope = grad.dot(dz);
    double step = 1.0;
    Vector trial;
    bool accepted = false;
    while (step > 1e-16) {
      trial = z + step * dz;
      const double diff = step * obj_slope + (bar.barrier(trial) - bar0);
      if (std::isfinite(diff) && diff <= 0.25 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    // A tiny decrement the line search cannot realize is rounding noise.
    if (!accepted) return dec2 >= 0.0 && dec2 < 1e-6 ? CenterResult::centered : CenterResult::stalled;
    z = trial;
    // Inside the quadratic region Newton takes full steps; a damped step there
    // means the Hessian is too ill-conditioned to make further progress.
    if (step < 1.0 && dec2 >= 0.0 && dec2 < 1e-6) return CenterResult::centered;
    if (stop(z)) return CenterResult::early_exit;
  }
}

struct Residual {
  double worst = -std::numeric_limits<double>::infinity();
  std::size_t index = 0;
};

constexpr double kBoxScale = 1e8;

Residual residual(const Compiled& cp, const Vector& x) {
  Residual r;
  for (std::size_t j = 0; j < cp.cons.size(); ++j) {
    const double m = max_eig(constraint_value(cp.cons[j], x));
    if (m > r.worst) {
      r.worst = m;
      r.index = j;
    }
  }
  if (cp.cons.empty()) r.worst = 0.0;
  return r;
}

}  // namespace

SdpSolution solve(const SdpProblem& problem, const SolveOptions& options) {
  if (!(options.feas_tol > 0.0) || !(options.opt_tol > 0.0) || options.max_iter < 1)
    throw ParameterError("invalid SDP solve options");
  const auto& vars = problem.variables();
  if (vars.empty()) throw InputError("SDP problem has no variables");

  const Compiled cp = compile(problem);
  if (cp.cons.empty()) throw InputError("SDP problem has no constraints");

  std::vector<Matrix> init;
  for (std::size_t v = 0; v < vars.size(); ++v)
    init.push_back(problem.initial_values()[v] ? *problem.initial_values()[v] : Matrix::Zero(vars[v].rows, vars[v].cols));
  Vector x = pack(cp, vars, init);
  const double box = kBoxScale * std::max(1.0, x.cwiseAbs().maxCoeff());

  SdpSolution sol;
  int iters = 0;
  auto finish = [&](SolveStatus status, const Vector& xs) {
    sol.values = unpack(cp, vars, xs);
    sol.objective = cp.c.dot(xs);
    const auto r = residual(cp, xs);
    sol.worst_residual = r.worst;
    sol.worst_constraint = r.index;
    sol.status = status;
    sol.iterations = iters;
    return sol;
  };

  // Phase one: minimize s subject to G_j(x) <= s I.
  double tau = 0.0;
  {
    const auto r0 = residual(cp, x);
    if (r0.worst >= 0.0) {
      Vector z(cp.n + 1);
      z.head(cp.n) = x;
      z(cp.n) = r0.worst + 1.0 + 0.1 * std::abs(r0.worst);
      const Barrier bar(cp, true, 0.0, box);
      const double m = static_cast<double>(cp.barrier_dim + 2 * cp.n);
      const double gap_target = 0.05 * options.feas_tol;
      double t = 1.0;
      bool found = false;
      for (;;) {
        // Far from the certification gap only a few Newton steps are spent
        // per t: the search just needs some point with s < 0.
        const bool final_stage = m / t <= gap_target;
        const auto res = center(
            bar, z, t, iters, options.max_iter, [&](const Vector& zz) { return zz(cp.n) < 0.0; },
            final_stage ? std::numeric_limits<int>::max() : 8);
        if (res == CenterResult::early_exit || z(cp.n) < 0.0) {
          found = true;
          break;
        }
        if (res == CenterResult::budget) return finish(SolveStatus::iteration_limit, z.head(cp.n));
        if (final_stage || res == CenterResult::stalled) break;
        t *= 20.0;
      }
      x = z.head(cp.n);
      if (!found) {
        const double s = z(cp.n);
        sol.phase_one_value = s;
        if (s - m / t > options.feas_tol) return finish(SolveStatus::infeasible, x);
        if (s > options.feas_tol) return finish(SolveStatus::iteration_limit, x);
        tau = std::max(0.0, 0.5 * (s + options.feas_tol));
        if (s >= 0.0 && tau <= s) tau = s + 0.5 * options.feas_tol;
      }
    }
  }

  // Phase two: barrier path on the objective.
  const Barrier bar(cp, false, tau, box);
  const double m = static_cast<double>(cp.barrier_dim + 2 * cp.n);
  double t = 1.0;
  for (;;) {
    const auto res = center(bar, x, t, iters, options.max_iter, [](const Vector&) { return false; });
    if (res == CenterResult::budget) return finish(SolveStatus::iteration_limit, x);
    const double obj = cp.c.dot(x);
    const double target = 1e-3 * options.opt_tol * std::max(1.0, std::abs(obj));
    if (m / t <= target || (res == CenterResult::stalled && m / t <= 1e3 * target)) break;
    if (res == CenterResult::stalled) return finish(SolveStatus::iteration_limit, x);
    t *= 20.0;
  }
  sol.gap_bound = m / t;
  // An optimum pressed against the artificial box means the objective is unbounded below.
  if (x.size() > 0 && x.cwiseAbs().maxCoeff() > 0.5 * box) return finish(SolveStatus::unbounded, x);
  finish(SolveStatus::optimal, x);
  if (sol.worst_residual > options.feas_tol) sol.status = SolveStatus::iteration_limit;
  return sol;
}

// ---------------------------------------------------------------------------
// Debug dump

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::string dump_json(const SdpProblem& problem) {
  using nlohmann::json;
  json doc;
  doc["variables"] = json::array();
  for (std::size_t v = 0; v < problem.variables().size(); ++v) {
    const auto& var = problem.variables()[v];
    json jv = {{"id", var.id}, {"rows", var.rows}, {"cols", var.cols}, {"symmetric", var.symmetric}};
    if (problem.objective()[v]) jv["objective_weight"] = matrix_json(*problem.objective()[v]);
    doc["variables"].push_back(std::move(jv));
  }
  doc["constraints"] = json::array();
  for (const auto& con : problem.constraints()) {
    json jc = {{"label", con.label()}, {"margin", con.margin()}, {"block_sizes", con.block_sizes()}};
    jc["blocks"] = json::array();
    const auto nb = con.block_sizes().size();
    for (std::size_t r = 0; r < nb; ++r) {
      for (std::size_t c = r; c < nb; ++c) {
        const auto& blk = con.block(r, c);
        if (!blk) continue;
        json jb = {{"row", r}, {"col", c}, {"constant", matrix_json(blk->constant)}};
        jb["terms"] = json::array();
        for (const auto& t : blk->terms) {
          jb["terms"].push_back({{"variable", problem.variables()[t.variable].id},
                                 {"left", matrix_json(t.left)},
                                 {"right", matrix_json(t.right)},
                                 {"transpose", t.transpose_variable}});
        }
        jc["blocks"].push_back(std::move(jb));
      }
    }
    doc["constraints"].push_back(std::move(jc));
  }
  return doc.dump(2);
}

}  // namespace estnet::sdp
