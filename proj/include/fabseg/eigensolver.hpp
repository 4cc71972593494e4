#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "fabseg/error.hpp"
#include "fabseg/rng.hpp"

namespace fabseg {

template <typename Scalar>
struct EigenPairs {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Vector values;   // ascending
  Matrix vectors;  // unit columns
  Scalar max_residual = 0;
  int restarts = 0;
};

struct LanczosOptions {
  std::uint64_t seed = 0;
  double tolerance = 1e-8;   // on ||A v - lambda v|| for unit v
  int max_restarts = 0;      // 0 means 10 * count
  int block_size = 8;
  double shift = 1e-3;       // factorizes A + shift * I; A must be positive semidefinite
};

namespace detail {

/// Flips each column so its largest-magnitude entry (lowest index on ties) is positive.
template <typename Derived>
void canonicalize_signs(Eigen::MatrixBase<Derived>& vectors) {
  for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
    Eigen::Index arg = 0;
    typename Derived::Scalar best = -1;
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
      const auto mag = std::abs(vectors(i, j));
      if (mag > best * (1 + 1e-9)) {
        best = mag;
        arg = i;
      }
    }
    if (vectors(arg, j) < 0) vectors.col(j) *= -1;
  }
}

/// Orthonormalizes block against basis (first `used` columns) and itself with
/// two passes of classical Gram-Schmidt. Dependent columns are replaced by
/// random vectors; returns the number of columns written into basis.
template <typename Scalar>
int append_orthonormal(Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& basis, int used,
                       Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> block, int max_new, Rng& rng) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index n = basis.rows();
  int added = 0;
  for (Eigen::Index j = 0; j < block.cols() && added < max_new; ++j) {
    Vector v = block.col(j);
    for (int attempt = 0; attempt < 4; ++attempt) {
      const Scalar before = v.norm();
      for (int pass = 0; pass < 2; ++pass) {
        const int width = used + added;
        if (width > 0) v -= basis.leftCols(width) * (basis.leftCols(width).transpose() * v);
      }
      const Scalar after = v.norm();
      if (after > Scalar(1e-8) * std::max(before, Scalar(1e-300)) && after > Scalar(1e-200)) {
        basis.col(used + added) = v / after;
        ++added;
        break;
      }
      for (Eigen::Index i = 0; i < n; ++i) v[i] = static_cast<Scalar>(standard_normal(rng));
    }
  }
  return added;
}

}  // namespace detail

/// Smallest `count` eigenpairs of a symmetric matrix via a dense solve.
template <typename Scalar>
EigenPairs<Scalar> dense_smallest_eigenpairs(const Eigen::SparseMatrix<Scalar>& A, int count) {
  using Matrix = typename EigenPairs<Scalar>::Matrix;
  if (A.rows() != A.cols()) throw InvalidArgument("matrix must be square");
  if (count < 1 || count > A.rows()) throw InvalidArgument("eigenpair count out of range");
  const Matrix dense = Matrix(A);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(dense);
  if (solver.info() != Eigen::Success) throw Error("dense eigensolver failed");
  EigenPairs<Scalar> out;
  out.values = solver.eigenvalues().head(count);
  out.vectors = solver.eigenvectors().leftCols(count);
  detail::canonicalize_signs(out.vectors);
  out.max_residual = 0;
  for (int i = 0; i < count; ++i)
    out.max_residual =
        std::max(out.max_residual, (A * out.vectors.col(i) - out.values[i] * out.vectors.col(i)).norm());
  return out;
}

/// Smallest `count` eigenpairs of a sparse symmetric positive semidefinite
/// matrix. Thick-restarted block Lanczos on the shift-inverted operator
/// (A + shift I)^-1 with full reorthogonalization. Blocks let the solver pick
/// up repeated eigenvalues that a single Krylov vector would miss.
template <typename Scalar>
EigenPairs<Scalar> lanczos_smallest_eigenpairs(const Eigen::SparseMatrix<Scalar>& A, int count,
                                               const LanczosOptions& options = {}) {
  using Matrix = typename EigenPairs<Scalar>::Matrix;
  using Vector = typename EigenPairs<Scalar>::Vector;
  const Eigen::Index n = A.rows();
  if (A.rows() != A.cols()) throw InvalidArgument("matrix must be square");
  if (count < 1 || count > n) throw InvalidArgument("eigenpair count out of range");

  Eigen::SparseMatrix<Scalar> shifted = A;
  for (Eigen::Index i = 0; i < n; ++i) shifted.coeffRef(i, i) += static_cast<Scalar>(options.shift);
  shifted.makeCompressed();
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<Scalar>> factor(shifted);
  if (factor.info() != Eigen::Success) throw Error("factorization of the shifted operator failed");

  const int block = static_cast<int>(std::clamp<Eigen::Index>(options.block_size, 1, n));
  const int keep = static_cast<int>(std::min<Eigen::Index>(n, count + block));
  const int max_dim = static_cast<int>(std::min<Eigen::Index>(n, std::max(2 * count + 2 * block, keep + 4 * block)));
  const int max_restarts = options.max_restarts > 0 ? options.max_restarts : 10 * count;
  const Scalar tol = static_cast<Scalar>(options.tolerance);

  Rng rng(options.seed);
  Matrix basis(n, max_dim);  // V
  Matrix image(n, max_dim);  // (A + shift I)^-1 V
  Matrix start(n, block);
  for (Eigen::Index j = 0; j < start.cols(); ++j)
    for (Eigen::Index i = 0; i < n; ++i) start(i, j) = static_cast<Scalar>(standard_normal(rng));

  int used = 0;
  auto expand = [&](const Matrix& raw) {
    const int added = detail::append_orthonormal<Scalar>(basis, used, raw, max_dim - used, rng);
    if (added > 0) image.middleCols(used, added) = factor.solve(Matrix(basis.middleCols(used, added)));
    const int first = used;
    used += added;
    return std::pair{first, added};
  };

  auto [first, added] = expand(start);
  Scalar worst = std::numeric_limits<Scalar>::infinity();
  for (int restart = 0; restart <= max_restarts; ++restart) {
    while (used < max_dim) {
      if (added > 0) {
        std::tie(first, added) = expand(Matrix(image.middleCols(first, added)));
        continue;
      }
      // invariant subspace reached: restart the recurrence from random directions
      Matrix fresh(n, std::min(block, max_dim - used));
      for (Eigen::Index j = 0; j < fresh.cols(); ++j)
        for (Eigen::Index i = 0; i < n; ++i) fresh(i, j) = static_cast<Scalar>(standard_normal(rng));
      std::tie(first, added) = expand(fresh);
      if (added == 0) break;
    }

    Matrix projected = basis.leftCols(used).transpose() * image.leftCols(used);
    projected = Scalar(0.5) * (projected + projected.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> ritz(projected);
    // largest Ritz values of the inverse are the smallest eigenvalues of A
    const Matrix coeffs = ritz.eigenvectors().rowwise().reverse();
    const int wanted = std::min(count, used);
    const int retained = std::min(keep, used);

    Matrix vectors = basis.leftCols(used) * coeffs.leftCols(retained);
    Vector values(retained);
    Vector residuals(retained);
    for (int i = 0; i < retained; ++i) {
      vectors.col(i).normalize();
      const Vector av = A * vectors.col(i);
      values[i] = vectors.col(i).dot(av);
      residuals[i] = (av - values[i] * vectors.col(i)).norm();
    }
    worst = wanted > 0 ? residuals.head(wanted).maxCoeff() : Scalar(0);
    if (wanted == count && (worst <= tol || used == n)) {
      std::vector<int> order(count);
      for (int i = 0; i < count; ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return values[x] < values[y]; });
      EigenPairs<Scalar> out;
      out.values.resize(count);
      out.vectors.resize(n, count);
      for (int i = 0; i < count; ++i) {
        out.values[i] = values[order[i]];
        out.vectors.col(i) = vectors.col(order[i]);
      }
      detail::canonicalize_signs(out.vectors);
      out.max_residual = worst;
      out.restarts = restart;
      return out;
    }
    if (restart == max_restarts) break;

    // Thick restart: keep the leading Ritz vectors and carry on the Krylov
    // recurrence from the image of the newest block.
    Matrix tail = image.middleCols(first, added);
    for (int pass = 0; pass < 2; ++pass) tail -= basis.leftCols(used) * (basis.leftCols(used).transpose() * tail);
    Matrix kept_image = image.leftCols(used) * coeffs.leftCols(retained);
    basis.leftCols(retained) = basis.leftCols(used) * coeffs.leftCols(retained);
    image.leftCols(retained) = kept_image;
    used = retained;
    std::tie(first, added) = expand(tail);
  }
  throw ConvergenceError("Lanczos did not converge after " + std::to_string(max_restarts) + " restarts",
                         static_cast<double>(worst));
}

}  // namespace fabseg
