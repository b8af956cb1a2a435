#include "mfh/numkernel.hpp"

#include "mfh/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace mfh {

namespace {

void require_finite(const Matrix& m, const char* what)
{
    if (!m.allFinite()) {
        throw Error(ErrorCode::InvalidInput, std::string(what) + ": non-finite entries");
    }
}

}  // namespace

SymMatrix::SymMatrix(const Matrix& entries)
{
    if (entries.rows() != entries.cols() || entries.rows() < 1) {
        throw Error(ErrorCode::DimensionMismatch,
                    "symmetric matrix must be square with dim >= 1, got " +
                        std::to_string(entries.rows()) + "x" + std::to_string(entries.cols()));
    }
    entries_ = 0.5 * (entries + entries.transpose());
}

SymMatrix SymMatrix::identity(Eigen::Index dim)
{
    return SymMatrix(Matrix::Identity(dim, dim));
}

SymMatrix SymMatrix::zero(Eigen::Index dim)
{
    return SymMatrix(Matrix::Zero(dim, dim));
}

SymMatrix operator+(const SymMatrix& a, const SymMatrix& b)
{
    return SymMatrix(a.entries_ + b.entries_);
}

SymMatrix operator-(const SymMatrix& a, const SymMatrix& b)
{
    return SymMatrix(a.entries_ - b.entries_);
}

SymMatrix operator*(double c, const SymMatrix& a)
{
    return SymMatrix(c * a.entries_);
}

EigenDecomp sym_eigen(const SymMatrix& a)
{
    require_finite(a.matrix(), "sym_eigen");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(a.matrix());
    if (solver.info() != Eigen::Success) {
        throw Error(ErrorCode::InvalidInput, "sym_eigen: eigensolver did not converge");
    }
    const Eigen::Index k = a.dim();
    // Eigen returns ascending order; reverse it.
    EigenDecomp out{Vector(k), Matrix(k, k)};
    for (Eigen::Index j = 0; j < k; ++j) {
        out.eigenvalues(j) = solver.eigenvalues()(k - 1 - j);
        Vector v = solver.eigenvectors().col(k - 1 - j);
        Eigen::Index pivot = 0;
        v.cwiseAbs().maxCoeff(&pivot);
        if (v(pivot) < 0.0) {
            v = -v;
        }
        out.eigenvectors.col(j) = v;
    }
    return out;
}

SymMatrix spd_inverse(const SymMatrix& a)
{
    require_finite(a.matrix(), "spd_inverse");
    Eigen::LLT<Matrix> llt(a.matrix());
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorCode::NotPositiveDefinite, "spd_inverse: Cholesky factorization failed");
    }
    return SymMatrix(llt.solve(Matrix::Identity(a.dim(), a.dim())));
}

Vector spd_solve(const SymMatrix& a, const Vector& b)
{
    if (b.size() != a.dim()) {
        throw Error(ErrorCode::DimensionMismatch, "spd_solve: right-hand side has wrong length");
    }
    Eigen::LLT<Matrix> llt(a.matrix());
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorCode::NotPositiveDefinite, "spd_solve: Cholesky factorization failed");
    }
    return llt.solve(b);
}

SymMatrix spd_sqrt(const SymMatrix& a)
{
    const EigenDecomp e = sym_eigen(a);
    Vector root(a.dim());
    for (Eigen::Index i = 0; i < a.dim(); ++i) {
        const double l = e.eigenvalues(i);
        if (l < -1e-10) {
            throw Error(ErrorCode::NotPSD, "spd_sqrt: eigenvalue " + std::to_string(l) + " < -1e-10");
        }
        root(i) = std::sqrt(std::max(l, 0.0));
    }
    return SymMatrix(e.eigenvectors * root.asDiagonal() * e.eigenvectors.transpose());
}

double min_eigenvalue(const SymMatrix& a)
{
    require_finite(a.matrix(), "min_eigenvalue");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(a.matrix(), Eigen::EigenvaluesOnly);
    return solver.eigenvalues()(0);
}

bool is_positive_definite(const SymMatrix& a)
{
    if (!a.matrix().allFinite()) {
        return false;
    }
    Eigen::LLT<Matrix> llt(a.matrix());
    return llt.info() == Eigen::Success;
}

// ---------------------------------------------------------------------------
// Chi-squared distribution

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Power series for P(a, x), good for x < a + 1.
double gamma_p_series(double a, double x)
{
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 10000; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * kEps) {
            break;
        }
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction (modified Lentz) for Q(a, x), good for x >= a + 1.
double gamma_q_fraction(double a, double x)
{
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 10000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) {
            break;
        }
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

double chi2_pdf(int df, double x)
{
    const double a = 0.5 * df;
    if (x == 0.0) {
        if (df == 1) return std::numeric_limits<double>::infinity();
        if (df == 2) return 0.5;
        return 0.0;
    }
    return std::exp((a - 1.0) * std::log(x) - 0.5 * x - a * std::log(2.0) - std::lgamma(a));
}

}  // namespace

double regularized_gamma_p(double a, double x)
{
    if (!(a > 0.0) || !(x >= 0.0)) {
        throw Error(ErrorCode::InvalidInput, "regularized_gamma_p: need a > 0 and x >= 0");
    }
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    if (x < a + 1.0) {
        return gamma_p_series(a, x);
    }
    return 1.0 - gamma_q_fraction(a, x);
}

Chi2Point chi2_cdf_pdf(int df, double x)
{
    if (df < 1) {
        throw Error(ErrorCode::InvalidInput, "chi2_cdf_pdf: df must be >= 1");
    }
    if (!(x >= 0.0)) {
        throw Error(ErrorCode::InvalidInput, "chi2_cdf_pdf: x must be >= 0");
    }
    return {regularized_gamma_p(0.5 * df, 0.5 * x), chi2_pdf(df, x)};
}

double chi2_quantile(int df, double p)
{
    if (df < 1) {
        throw Error(ErrorCode::InvalidInput, "chi2_quantile: df must be >= 1");
    }
    if (!(p > 0.0 && p < 1.0)) {
        throw Error(ErrorCode::InvalidInput, "chi2_quantile: p must lie in (0, 1)");
    }

    // Bracket [lo, hi] with F(lo) < p <= F(hi).
    double lo = 0.0;
    double hi = std::max(1.0, 2.0 * df);
    while (chi2_cdf_pdf(df, hi).cdf < p) {
        lo = hi;
        hi *= 2.0;
    }

    // Start at the mean; Newton steps that leave the bracket fall back to bisection.
    double x = static_cast<double>(df);
    if (!(x > lo && x < hi)) {
        x = 0.5 * (lo + hi);
    }

    for (int iter = 0; iter < 500; ++iter) {
        const Chi2Point pt = chi2_cdf_pdf(df, x);
        const double f = pt.cdf - p;
        if (f < 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        double next = (pt.pdf > 0.0 && std::isfinite(pt.pdf)) ? x - f / pt.pdf : lo - 1.0;
        if (!(next > lo && next < hi)) {
            next = 0.5 * (lo + hi);
        }
        const double change = std::abs(next - x);
        x = next;
        if (change <= 1e-13 * x || hi - lo <= 4.0 * kEps * x) {
            break;
        }
    }
    return x;
}

}  // namespace mfh
