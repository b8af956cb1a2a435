#pragma once

#include "mfh/estimators.hpp"
#include "mfh/model.hpp"

#include <cstddef>

namespace mfh {

/// EBLUP of one area together with its MSE-matrix decomposition.
struct Prediction {
    std::size_t area_index = 0;
    Vector theta_eb;
    SymMatrix g1;
    SymMatrix g2;
    SymMatrix g3;
    SymMatrix msem;   // g1 + g2 + 2 g3
    SymMatrix h_mat;  // g1 + g2
};

/// Posterior mean y - D (Psi + D)^{-1} (y - X beta) for known (beta, Psi).
Vector bayes_estimator(const AreaData& area, const Vector& beta, const SymMatrix& psi);

Vector eblup(const Dataset& data, std::size_t a, const SymMatrix& psi);
Vector eblup(const Dataset& data, const GlsFit& fit, std::size_t a);

/// (Psi^{-1} + D^{-1})^{-1}, computed as D - D (Psi + D)^{-1} D.
SymMatrix g1_matrix(const SymMatrix& psi, const SymMatrix& d);

SymMatrix g2_matrix(const Dataset& data, const SymMatrix& psi, std::size_t a);
SymMatrix g2_matrix(const Dataset& data, const GlsFit& fit, std::size_t a);

SymMatrix g3_matrix(const Dataset& data, const SymMatrix& psi, std::size_t a);
SymMatrix g3_matrix(const Dataset& data, const GlsFit& fit, std::size_t a);

/// Cross term G_2ab: covariance of the regression-estimation error shared by
/// areas a and b, symmetrized (both orders summed).
SymMatrix g2_cross_matrix(const Dataset& data, const GlsFit& fit, std::size_t a, std::size_t b);

/// Second-order unbiased MSE-matrix estimate with every G evaluated at
/// cov.adjusted.
Prediction msem_estimate(const Dataset& data, std::size_t a, const CovarianceEstimate& cov);

/// Same, with an explicit covariance plugged in.
Prediction predict_at(const Dataset& data, std::size_t a, const SymMatrix& psi);
Prediction predict_at(const Dataset& data, const GlsFit& fit, std::size_t a);

/// Shrinkage factor D_a (Psi + D_a)^{-1}.
Matrix shrinkage_factor(const Dataset& data, const GlsFit& fit, std::size_t a);

}  // namespace mfh
