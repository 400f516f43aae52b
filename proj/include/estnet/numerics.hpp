#pragma once

#include <span>

#include <Eigen/Dense>

namespace estnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Absolute threshold for the asymmetry accepted by the symmetric routines.
inline constexpr double kSymmetryTolerance = 1e-9;
/// Default absolute tolerance for negative-semidefinite verdicts.
inline constexpr double kNsdTolerance = 1e-8;

struct SymCheckReport {
  bool is_nsd = false;
  double max_eigenvalue = 0.0;
  double tolerance_used = 0.0;
};

/// Largest singular value of `m`. Throws DimensionError on an empty matrix.
double spectral_norm(const Matrix& m);

/// Returns (S + S^T)/2 after checking that S is square and that its asymmetry
/// (infinity norm of S - S^T) stays below kSymmetryTolerance * max(1, ||S||_inf).
Matrix symmetrized(const Matrix& s);

double max_eigenvalue_sym(const Matrix& s);
double min_eigenvalue_sym(const Matrix& s);
Vector eigenvalues_sym(const Matrix& s);

SymCheckReport is_nsd(const Matrix& s, double tol = kNsdTolerance);

/// [[-lam I, T], [T^T, -lam I]]; NSD exactly when ||T||_2 <= lam.
Matrix schur_norm_block(const Matrix& t, double lam);

/// Symmetric PSD square root via eigendecomposition; tiny negative
/// eigenvalues (>= -1e-12 relative) are clamped to zero.
Matrix psd_sqrt(const Matrix& s);

Matrix block_diagonal(std::span<const Matrix> blocks);

bool all_finite(const Matrix& m);

}  // namespace estnet
