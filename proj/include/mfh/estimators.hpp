#pragma once

#include "mfh/model.hpp"
#include "mfh/numkernel.hpp"

#include <vector>

namespace mfh {

/// Estimates of the random-effect covariance Psi.
struct CovarianceEstimate {
    SymMatrix raw_pr;          // moment estimator from OLS residuals (may be indefinite)
    SymMatrix bias_corrected;  // raw_pr minus its bias evaluated at raw_pr
    SymMatrix adjusted;        // positive-definite adjustment of bias_corrected
    double a_hat = 0.0;
    Vector b_hat;
    EigenDecomp eigen;         // of bias_corrected
    Vector adjusted_eigenvalues;  // eigenvalues of `adjusted` in eigen.eigenvectors' basis
};

/// Quantities that depend on (dataset, Psi) and are shared by GLS, EBLUP,
/// the G-matrices and the B-terms. Sigma_i = Psi + D_i.
struct GlsFit {
    SymMatrix psi;
    std::vector<SymMatrix> sigma;
    std::vector<SymMatrix> sigma_inv;
    SymMatrix info_inv;  // {sum_i X_i^T Sigma_i^{-1} X_i}^{-1}
    Vector beta;
};

/// Throws NotPositiveDefinite if some Psi + D_i is not PD.
GlsFit fit_gls(const Dataset& data, const SymMatrix& psi);

Vector ols_beta(const Dataset& data);
Vector gls_beta(const Dataset& data, const SymMatrix& psi);

SymMatrix psi_pr_raw(const Dataset& data);

/// Exact bias E[raw_pr] - Psi of the moment estimator when the true
/// covariance is `psi`.
SymMatrix psi_pr_bias(const Dataset& data, const SymMatrix& psi);

SymMatrix psi_pr(const Dataset& data);

/// Positive-definite adjustment of a (possibly indefinite) estimate computed
/// from m areas. Exposed separately so it can be applied to any symmetric input.
CovarianceEstimate adjust_to_pd(const SymMatrix& bias_corrected, std::size_t m);

CovarianceEstimate psi_adjusted(const Dataset& data);

}  // namespace mfh
