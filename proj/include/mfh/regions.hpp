#pragma once

#include "mfh/estimators.hpp"
#include "mfh/model.hpp"
#include "mfh/prediction.hpp"

#include <cstddef>

namespace mfh {

/// Second-order coefficients of the coverage expansion
///   P(stat <= x) = F_k(x) + 2 (b1 - b3 - b2) f_{k+2}(x) + 2 b2 f_{k+4}(x) + o(1/m).
struct BTerms {
    double b1 = 0.0;
    double b2 = 0.0;
    double b3 = 0.0;
};

/// Ellipsoid {theta : (theta - center)^T shape^{-1} (theta - center) <= radius_sq}.
struct Region {
    Vector center;
    SymMatrix shape;
    double radius_sq = 0.0;
    double h_star = 0.0;
    double chi2_cutoff = 0.0;  // chi^2_{k, 1 - alpha}
    double alpha = 0.05;
    BTerms bterms;
};

BTerms b_terms(const Dataset& data, const SymMatrix& psi, std::size_t a);
BTerms b_terms(const Dataset& data, const GlsFit& fit, std::size_t a);

/// Bartlett factor h* = -2 {(b1 - b3 - b2)/k + b2 x / (k (k + 2))}.
double bartlett_h(const BTerms& b, int k, double x);

/// Corrected region around the EBLUP of area a, with every quantity
/// evaluated at cov.adjusted. Throws DegenerateCorrection if 1 + h* <= 0.
Region corrected_region(const Dataset& data, std::size_t a, const CovarianceEstimate& cov, double alpha);
Region naive_region(const Dataset& data, std::size_t a, const CovarianceEstimate& cov, double alpha);

/// Same constructions at an explicit covariance.
Region corrected_region_at(const Dataset& data, const GlsFit& fit, std::size_t a, double alpha);
Region naive_region_at(const Dataset& data, const GlsFit& fit, std::size_t a, double alpha);

/// Quadratic form (theta - center)^T shape^{-1} (theta - center) via one SPD solve.
double mahalanobis(const Region& region, const Vector& theta);
bool contains(const Region& region, const Vector& theta);

/// Shape matrix of the difference region: H_a + H_b - G_2ab.
SymMatrix diff_shape(const Dataset& data, const GlsFit& fit, std::size_t a, std::size_t b);

BTerms diff_b_terms(const Dataset& data, const SymMatrix& psi, std::size_t a, std::size_t b);
BTerms diff_b_terms(const Dataset& data, const GlsFit& fit, std::size_t a, std::size_t b);

/// Region for theta_a - theta_b. Throws SameArea when a == b.
Region diff_region(const Dataset& data, std::size_t a, std::size_t b, const CovarianceEstimate& cov,
                   double alpha);
Region naive_diff_region(const Dataset& data, std::size_t a, std::size_t b,
                         const CovarianceEstimate& cov, double alpha);
Region diff_region_at(const Dataset& data, const GlsFit& fit, std::size_t a, std::size_t b,
                      double alpha, bool corrected);

}  // namespace mfh
