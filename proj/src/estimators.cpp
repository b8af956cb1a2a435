#include "mfh/estimators.hpp"

#include "mfh/error.hpp"

#include <cmath>

namespace mfh {

namespace {

// (X^T X)^{-1} for the stacked design.
Matrix xtx_inverse(const Dataset& data)
{
    Matrix xtx = Matrix::Zero(data.s(), data.s());
    for (const AreaData& a : data.areas()) {
        xtx.noalias() += a.X.transpose() * a.X;
    }
    Eigen::LLT<Matrix> llt(xtx);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorCode::RankDeficientDesign, "X^T X is not positive definite");
    }
    return llt.solve(Matrix::Identity(data.s(), data.s()));
}

}  // namespace

GlsFit fit_gls(const Dataset& data, const SymMatrix& psi)
{
    if (psi.dim() != data.k()) {
        throw Error(ErrorCode::DimensionMismatch, "psi must be k x k");
    }
    GlsFit fit;
    fit.psi = psi;
    fit.sigma.reserve(data.m());
    fit.sigma_inv.reserve(data.m());
    Matrix info = Matrix::Zero(data.s(), data.s());
    Vector score = Vector::Zero(data.s());
    for (const AreaData& a : data.areas()) {
        SymMatrix sigma = psi + a.D;
        SymMatrix sigma_inv = spd_inverse(sigma);
        const Matrix xt_si = a.X.transpose() * sigma_inv.matrix();
        info.noalias() += xt_si * a.X;
        score.noalias() += xt_si * a.y;
        fit.sigma.push_back(std::move(sigma));
        fit.sigma_inv.push_back(std::move(sigma_inv));
    }
    fit.info_inv = spd_inverse(SymMatrix(info));
    fit.beta = fit.info_inv.matrix() * score;
    return fit;
}

Vector ols_beta(const Dataset& data)
{
    Vector xty = Vector::Zero(data.s());
    for (const AreaData& a : data.areas()) {
        xty.noalias() += a.X.transpose() * a.y;
    }
    return xtx_inverse(data) * xty;
}

Vector gls_beta(const Dataset& data, const SymMatrix& psi)
{
    return fit_gls(data, psi).beta;
}

SymMatrix psi_pr_raw(const Dataset& data)
{
    const Vector beta = ols_beta(data);
    Matrix acc = Matrix::Zero(data.k(), data.k());
    for (const AreaData& a : data.areas()) {
        const Vector r = a.y - a.X * beta;
        acc.noalias() += r * r.transpose();
        acc -= a.D.matrix();
    }
    return SymMatrix(acc / static_cast<double>(data.m()));
}

SymMatrix psi_pr_bias(const Dataset& data, const SymMatrix& psi)
{
    if (psi.dim() != data.k()) {
        throw Error(ErrorCode::DimensionMismatch, "psi must be k x k");
    }
    const double m = static_cast<double>(data.m());
    const Matrix xtx_inv = xtx_inverse(data);

    Matrix middle = Matrix::Zero(data.s(), data.s());
    for (const AreaData& a : data.areas()) {
        middle.noalias() += a.X.transpose() * (psi.matrix() + a.D.matrix()) * a.X;
    }
    const Matrix sandwich = xtx_inv * middle * xtx_inv;

    Matrix first = Matrix::Zero(data.k(), data.k());
    Matrix cross = Matrix::Zero(data.k(), data.k());
    for (const AreaData& a : data.areas()) {
        first.noalias() += a.X * sandwich * a.X.transpose();
        const Matrix leverage = a.X * xtx_inv * a.X.transpose();
        cross.noalias() += (psi.matrix() + a.D.matrix()) * leverage;
    }
    return SymMatrix((first - cross - cross.transpose()) / m);
}

SymMatrix psi_pr(const Dataset& data)
{
    const SymMatrix raw = psi_pr_raw(data);
    return raw - psi_pr_bias(data, raw);
}

CovarianceEstimate adjust_to_pd(const SymMatrix& bias_corrected, std::size_t m)
{
    if (m == 0) {
        throw Error(ErrorCode::InvalidInput, "adjust_to_pd: m must be positive");
    }
    const Eigen::Index k = bias_corrected.dim();
    const double inv_m = 1.0 / static_cast<double>(m);

    CovarianceEstimate out;
    out.bias_corrected = bias_corrected;
    out.eigen = sym_eigen(bias_corrected);
    out.a_hat = bias_corrected.trace() * inv_m / static_cast<double>(k);
    out.b_hat.resize(k);
    out.adjusted_eigenvalues.resize(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const double shifted = out.eigen.eigenvalues(i) - out.a_hat;
        const double b = std::max(4.0 * out.a_hat * shifted, inv_m);
        out.b_hat(i) = b;
        // (shifted + sqrt(shifted^2 + b)) / 2, rationalized when shifted < 0
        const double root = std::hypot(shifted, std::sqrt(b));
        out.adjusted_eigenvalues(i) = shifted >= 0.0 ? 0.5 * (shifted + root) : 0.5 * b / (root - shifted);
    }
    // Equals (Psi - a I + U L_A U^T) / 2 since Psi - a I = U (L - a I) U^T.
    const Matrix& u = out.eigen.eigenvectors;
    out.adjusted = SymMatrix(u * out.adjusted_eigenvalues.asDiagonal() * u.transpose());
    return out;
}

CovarianceEstimate psi_adjusted(const Dataset& data)
{
    const SymMatrix raw = psi_pr_raw(data);
    CovarianceEstimate out = adjust_to_pd(raw - psi_pr_bias(data, raw), data.m());
    out.raw_pr = raw;
    return out;
}

}  // namespace mfh
