#pragma once

#include <Eigen/Dense>

#include <cstddef>

namespace mfh {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A dense symmetric k x k matrix. The constructor replaces its input by
/// (A + A^T) / 2, so entries (i, j) and (j, i) are always bit-identical.
class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(const Matrix& entries);

    static SymMatrix identity(Eigen::Index dim);
    static SymMatrix zero(Eigen::Index dim);
    static SymMatrix scalar(double value) { return SymMatrix(Matrix::Constant(1, 1, value)); }

    Eigen::Index dim() const noexcept { return entries_.rows(); }
    double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }
    const Matrix& matrix() const noexcept { return entries_; }
    double trace() const { return entries_.trace(); }

    friend SymMatrix operator+(const SymMatrix& a, const SymMatrix& b);
    friend SymMatrix operator-(const SymMatrix& a, const SymMatrix& b);
    friend SymMatrix operator*(double c, const SymMatrix& a);
    friend bool operator==(const SymMatrix& a, const SymMatrix& b) { return a.entries_ == b.entries_; }

private:
    Matrix entries_;
};

struct EigenDecomp {
    Vector eigenvalues;   // descending
    Matrix eigenvectors;  // orthogonal, one eigenvector per column
};

/// Symmetric eigendecomposition with eigenvalues sorted descending. Each
/// eigenvector is sign-normalized so that its largest-magnitude component
/// is positive, which makes the output a deterministic function of A.
EigenDecomp sym_eigen(const SymMatrix& a);

/// Inverse of a symmetric positive-definite matrix via Cholesky.
/// Throws NotPositiveDefinite when the factorization fails.
SymMatrix spd_inverse(const SymMatrix& a);

/// Solves A x = b for SPD A (one Cholesky solve, no explicit inverse).
Vector spd_solve(const SymMatrix& a, const Vector& b);

/// Symmetric PSD square root. Eigenvalues in [-1e-10, 0) are clamped to 0;
/// anything more negative throws NotPSD.
SymMatrix spd_sqrt(const SymMatrix& a);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const SymMatrix& a);

bool is_positive_definite(const SymMatrix& a);

struct Chi2Point {
    double cdf;
    double pdf;
};

/// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);

/// CDF and density of the chi-squared distribution with df degrees of freedom.
Chi2Point chi2_cdf_pdf(int df, double x);

/// Lower-tail quantile: returns x with F_df(x) = p, 0 < p < 1.
double chi2_quantile(int df, double p);

}  // namespace mfh
