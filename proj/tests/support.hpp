#pragma once

// Test-only helpers: seeded random models and brute-force oracles that do not
// go through Eigen's decompositions or the library solver.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "estnet/model.hpp"
#include "estnet/numerics.hpp"
#include "estnet/sdp.hpp"

namespace estnet::testing {

inline Matrix random_matrix(std::mt19937_64& rng, Index rows, Index cols, double scale) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = scale * u(rng);
  return m;
}

inline Matrix random_symmetric(std::mt19937_64& rng, Index n, double scale) {
  const Matrix m = random_matrix(rng, n, n, scale);
  return 0.5 * (m + m.transpose());
}

/// Cyclic Jacobi rotations on a copy; returns the eigenvalues unsorted.
inline std::vector<double> jacobi_eigenvalues(const Matrix& s) {
  const Index n = s.rows();
  std::vector<std::vector<double>> a(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n)));
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c) a[r][c] = 0.5 * (s(r, c) + s(c, r));
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (Index k = 0; k < n; ++k) {
          const double akp = a[k][p];
          const double akq = a[k][q];
          a[k][p] = c * akp - sn * akq;
          a[k][q] = sn * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const double apk = a[p][k];
          const double aqk = a[q][k];
          a[p][k] = c * apk - sn * aqk;
          a[q][k] = sn * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev;
  for (Index i = 0; i < n; ++i) ev.push_back(a[i][i]);
  return ev;
}

inline double oracle_max_eig(const Matrix& s) {
  const auto ev = jacobi_eigenvalues(s);
  return *std::max_element(ev.begin(), ev.end());
}

inline double oracle_min_eig(const Matrix& s) {
  const auto ev = jacobi_eigenvalues(s);
  return *std::min_element(ev.begin(), ev.end());
}

inline double oracle_spectral_norm(const Matrix& m) {
  return std::sqrt(std::max(0.0, oracle_max_eig(m.transpose() * m)));
}

/// A small SDP over scalar variables x: minimize c^T x subject to
/// F0 + sum x_k F_k <= -margin I for each LMI, with a box |x_k| <= box.
struct ScalarSdp {
  std::vector<double> c;
  struct Lmi {
    Matrix f0;
    std::vector<Matrix> fk;
  };
  std::vector<Lmi> lmis;
  double box = 2.0;
  double margin = 1e-9;

  std::size_t dof() const { return c.size(); }

  double worst(const std::vector<double>& x) const {
    double w = -std::numeric_limits<double>::infinity();
    for (const auto& l : lmis) {
      Matrix f = l.f0;
      for (std::size_t k = 0; k < x.size(); ++k) f += x[k] * l.fk[k];
      w = std::max(w, oracle_max_eig(f));
    }
    for (double v : x) w = std::max(w, std::abs(v) - box);
    return w;
  }

  double objective(const std::vector<double>& x) const {
    double o = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) o += c[k] * x[k];
    return o;
  }

  sdp::SdpProblem to_problem() const {
    sdp::SdpProblem p;
    std::vector<sdp::VariableId> ids;
    for (std::size_t k = 0; k < dof(); ++k) {
      ids.push_back(p.add_variable("x" + std::to_string(k), 1, 1));
      p.add_objective(ids.back(), Matrix::Constant(1, 1, c[k]));
    }
    for (const auto& l : lmis) {
      sdp::LmiConstraint con({l.f0.rows()}, margin);
      con.set_block(0, 0, expand(l, ids));
      p.add_constraint(std::move(con));
    }
    for (std::size_t k = 0; k < dof(); ++k) {
      sdp::LmiConstraint box_con({2}, margin);
      Matrix f0 = Matrix::Zero(2, 2);
      f0(0, 0) = -box;
      f0(1, 1) = -box;
      sdp::AffineBlock b = sdp::AffineBlock::fixed(f0);
      Matrix left(2, 1);
      left << 1.0, 0.0;
      Matrix right(1, 2);
      right << 1.0, 0.0;
      b.add(ids[k], left, right);
      Matrix left2(2, 1);
      left2 << 0.0, 1.0;
      Matrix right2(1, 2);
      right2 << 0.0, -1.0;
      b.add(ids[k], left2, right2);
      box_con.set_block(0, 0, std::move(b));
      p.add_constraint(std::move(box_con));
    }
    return p;
  }

 private:
  // x_k F_k = sum_r e_r x_k (row r of F_k).
  static sdp::AffineBlock expand(const Lmi& l, const std::vector<sdp::VariableId>& ids) {
    sdp::AffineBlock b = sdp::AffineBlock::fixed(l.f0);
    const Index n = l.f0.rows();
    for (std::size_t k = 0; k < ids.size(); ++k) {
      for (Index r = 0; r < n; ++r) {
        Matrix e = Matrix::Zero(n, 1);
        e(r, 0) = 1.0;
        b.add(ids[k], e, l.fk[k].row(r));
      }
    }
    return b;
  }
};

struct OracleResult {
  bool feasible = false;
  std::vector<double> x;
  double objective = std::numeric_limits<double>::infinity();
  /// Global minimum of worst() over the box; decides infeasibility.
  double best_worst = std::numeric_limits<double>::infinity();
};

/// Golden-section minimization of a convex h over [-r, r]^m by nesting one
/// search per coordinate (partial minima of a convex function stay convex).
inline double golden_min(const std::function<double(const std::vector<double>&)>& h, std::size_t m, double r,
                         std::vector<double>& arg, int iters = 70) {
  std::vector<double> s(m, 0.0);
  std::function<double(std::size_t, std::vector<double>&)> level = [&](std::size_t a, std::vector<double>& best) {
    if (a == m) {
      best = s;
      return h(s);
    }
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double lo = -r, hi = r;
    std::vector<double> b1, b2;
    auto eval = [&](double v, std::vector<double>& b) {
      s[a] = v;
      return level(a + 1, b);
    };
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = eval(x1, b1), f2 = eval(x2, b2);
    for (int it = 0; it < iters; ++it) {
      if (f1 <= f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        b2 = b1;
        x1 = hi - phi * (hi - lo);
        f1 = eval(x1, b1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        b1 = b2;
        x2 = lo + phi * (hi - lo);
        f2 = eval(x2, b2);
      }
    }
    if (f1 <= f2) {
      best = b1;
      return f1;
    }
    best = b2;
    return f2;
  };
  return level(0, arg);
}

/// Exact reference for small ScalarSdp instances. worst() is convex, so the
/// smallest objective level t whose slice {c.x = t} still reaches
/// worst <= -margin is found by bisection on t, with the slice minimum from
/// golden_min over an orthonormal basis of the slice.
inline OracleResult convex_oracle(const ScalarSdp& p, double margin) {
  const std::size_t d = p.dof();
  const double reach = p.box * std::sqrt(static_cast<double>(d)) * 1.01;
  OracleResult res;

  std::vector<double> xg;
  res.best_worst = golden_min([&](const std::vector<double>& x) { return p.worst(x); }, d, reach, xg);
  if (res.best_worst > -margin) return res;

  Vector c(static_cast<Index>(d));
  for (std::size_t k = 0; k < d; ++k) c(static_cast<Index>(k)) = p.c[k];
  const double cn = c.norm();
  if (cn < 1e-12) {
    res.feasible = true;
    res.x = xg;
    res.objective = p.objective(xg);
    return res;
  }
  // Columns 1.. of a Householder Q span the complement of c.
  const Matrix q = Eigen::HouseholderQR<Matrix>(c).householderQ() * Matrix::Identity(c.size(), c.size());
  auto point = [&](double t, const std::vector<double>& s) {
    Vector x = (t / (cn * cn)) * c;
    for (std::size_t j = 0; j < s.size(); ++j) x += s[j] * q.col(static_cast<Index>(j + 1));
    return std::vector<double>(x.data(), x.data() + x.size());
  };
  auto slice = [&](double t, std::vector<double>& x) {
    std::vector<double> s;
    const double w = golden_min([&](const std::vector<double>& v) { return p.worst(point(t, v)); }, d - 1, reach, s);
    x = point(t, s);
    return w;
  };

  double hi = p.objective(xg);
  double lo = -cn * reach;
  std::vector<double> xhi = xg, x;
  for (int it = 0; it < 60 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (slice(mid, x) <= -margin) {
      hi = mid;
      xhi = x;
    } else {
      lo = mid;
    }
  }
  res.feasible = true;
  res.x = xhi;
  res.objective = hi;
  return res;
}

/// d scalar unknowns, one or two LMIs of size 2..3. `strict` problems have x = 0
/// strictly feasible; the others shift F0 upward and are often infeasible.
inline ScalarSdp random_scalar_sdp(std::mt19937_64& rng, std::size_t d, bool strict) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> lmi_count(1, 2);
  std::uniform_int_distribution<Index> lmi_dim(2, 3);
  ScalarSdp p;
  for (std::size_t k = 0; k < d; ++k) p.c.push_back(u(rng));
  const int count = lmi_count(rng);
  for (int j = 0; j < count; ++j) {
    const Index n = lmi_dim(rng);
    ScalarSdp::Lmi l;
    if (strict) {
      const Matrix r = random_matrix(rng, n, n, 0.7);
      l.f0 = -(r * r.transpose() + 0.2 * Matrix::Identity(n, n));
    } else {
      l.f0 = random_symmetric(rng, n, 1.0) + (0.5 + u(rng)) * Matrix::Identity(n, n);
    }
    for (std::size_t k = 0; k < d; ++k) l.fk.push_back(random_symmetric(rng, n, 1.0));
    p.lmis.push_back(std::move(l));
  }
  return p;
}

/// Random connected-ish interconnected model with constant or sinusoidal blocks.
struct RandomModelOptions {
  std::size_t min_subsystems = 2;
  std::size_t max_subsystems = 4;
  Index max_dim = 3;
  double a_scale = 0.5;
  double coupling_scale = 0.2;
  bool square_c = false;
};

inline InterconnectedModel random_model(std::mt19937_64& rng, const RandomModelOptions& opt = {}) {
  std::uniform_int_distribution<std::size_t> nsub(opt.min_subsystems, opt.max_subsystems);
  std::uniform_int_distribution<Index> dim(1, opt.max_dim);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t l = nsub(rng);

  auto tv = [&](const Matrix& base) {
    if (u(rng) < 0.5) return TimeVaryingMatrix::constant(base);
    std::vector<EntryCoeffs> entries;
    for (Index r = 0; r < base.rows(); ++r)
      for (Index c = 0; c < base.cols(); ++c) {
        EntryCoeffs e{0.7 * base(r, c), {}, {}};
        e.sin_terms.push_back(Harmonic{0.3 * base(r, c), 0.5 + u(rng), u(rng)});
        entries.push_back(std::move(e));
      }
    return TimeVaryingMatrix::from_entries(base.rows(), base.cols(), std::move(entries));
  };

  std::vector<SubsystemSpec> subs;
  for (std::size_t i = 0; i < l; ++i) {
    const Index n = dim(rng);
    const Index m = opt.square_c ? n : dim(rng);
    Matrix c = random_matrix(rng, m, n, 1.0);
    if (opt.square_c) c += 2.0 * Matrix::Identity(n, n);
    subs.push_back(SubsystemSpec{"s" + std::to_string(i + 1), tv(random_matrix(rng, n, n, opt.a_scale)),
                                 TimeVaryingMatrix::constant(Matrix::Identity(n, n)),
                                 opt.square_c ? TimeVaryingMatrix::constant(c) : tv(c),
                                 TimeVaryingMatrix::constant(Matrix::Identity(m, m)),
                                 Matrix::Identity(n, n) * (0.05 + 0.1 * u(rng)),
                                 Matrix::Identity(m, m) * (0.05 + 0.1 * u(rng))});
  }
  std::vector<CouplingSpec> couplings;
  for (std::size_t t = 0; t < l; ++t)
    for (std::size_t s = 0; s < l; ++s)
      if (s != t && u(rng) < 0.6)
        couplings.push_back(CouplingSpec{s, t,
                                         tv(random_matrix(rng, subs[t].state_dim(), subs[s].state_dim(),
                                                          opt.coupling_scale))});
  return InterconnectedModel(std::move(subs), std::move(couplings));
}

}  // namespace estnet::testing
