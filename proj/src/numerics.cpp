#include "estnet/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "estnet/errors.hpp"

namespace estnet {

namespace {

void require_finite(const Matrix& m, const char* what) {
  if (!all_finite(m)) {
    throw NumericalError(std::string(what) + ": matrix has non-finite entries");
  }
}

}  // namespace

bool all_finite(const Matrix& m) { return m.allFinite(); }

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) throw DimensionError("spectral_norm: empty matrix");
  require_finite(m, "spectral_norm");
  if (m.rows() == 1 || m.cols() == 1) return m.norm();
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

Matrix symmetrized(const Matrix& s) {
  if (s.rows() != s.cols()) {
    std::ostringstream os;
    os << "expected a square matrix, got " << s.rows() << "x" << s.cols();
    throw DimensionError(os.str());
  }
  if (s.size() == 0) throw DimensionError("expected a nonempty matrix");
  require_finite(s, "symmetrized");
  const double scale = std::max(1.0, s.cwiseAbs().rowwise().sum().maxCoeff());
  const double asym = (s - s.transpose()).cwiseAbs().rowwise().sum().maxCoeff();
  if (asym > kSymmetryTolerance * scale) {
    std::ostringstream os;
    os << "matrix asymmetry " << asym << " exceeds tolerance";
    throw ShapeError(os.str());
  }
  return 0.5 * (s + s.transpose());
}

Vector eigenvalues_sym(const Matrix& s) {
  const Matrix sym = symmetrized(s);
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolver did not converge");
  return es.eigenvalues();
}

double max_eigenvalue_sym(const Matrix& s) { return eigenvalues_sym(s).maxCoeff(); }

double min_eigenvalue_sym(const Matrix& s) { return eigenvalues_sym(s).minCoeff(); }

SymCheckReport is_nsd(const Matrix& s, double tol) {
  if (tol < 0.0) throw ParameterError("is_nsd: tolerance must be nonnegative");
  SymCheckReport report;
  report.max_eigenvalue = max_eigenvalue_sym(s);
  report.tolerance_used = tol;
  report.is_nsd = report.max_eigenvalue <= tol;
  return report;
}

Matrix schur_norm_block(const Matrix& t, double lam) {
  if (!(lam > 0.0)) throw ParameterError("schur_norm_block: lambda must be positive");
  const Index r = t.rows();
  const Index c = t.cols();
  Matrix out = Matrix::Zero(r + c, r + c);
  out.topLeftCorner(r, r).diagonal().setConstant(-lam);
  out.bottomRightCorner(c, c).diagonal().setConstant(-lam);
  out.topRightCorner(r, c) = t;
  out.bottomLeftCorner(c, r) = t.transpose();
  return out;
}

Matrix psd_sqrt(const Matrix& s) {
  const Matrix sym = symmetrized(s);
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success) throw NumericalError("psd_sqrt: eigensolver did not converge");
  Vector ev = es.eigenvalues();
  const double floor = -1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < floor) throw NumericalError("psd_sqrt: matrix is not positive semidefinite");
  ev = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Matrix block_diagonal(std::span<const Matrix> blocks) {
  Index rows = 0;
  Index cols = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
  }
  Matrix out = Matrix::Zero(rows, cols);
  Index r = 0;
  Index c = 0;
  for (const auto& b : blocks) {
    out.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return out;
}

}  // namespace estnet
