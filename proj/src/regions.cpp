#include "mfh/regions.hpp"

#include "mfh/error.hpp"

#include <cmath>
#include <string>

namespace mfh {

namespace {

// Leading-order E[(Psi_hat - Psi) A (Psi_hat - Psi)] for the moment estimator:
//   (1/m^2) sum_i { Sigma_i A Sigma_i + tr(A Sigma_i) Sigma_i }.
Matrix second_moment(const GlsFit& fit, const Matrix& a)
{
    const Eigen::Index k = fit.psi.dim();
    Matrix acc = Matrix::Zero(k, k);
    for (const SymMatrix& sigma : fit.sigma) {
        const Matrix a_sigma = a * sigma.matrix();
        acc.noalias() += sigma.matrix() * a_sigma;
        acc += a_sigma.trace() * sigma.matrix();
    }
    const double m = static_cast<double>(fit.sigma.size());
    return acc / (m * m);
}

void check_alpha(double alpha)
{
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw Error(ErrorCode::InvalidInput, "alpha must lie in (0, 1)");
    }
}

Region build_region(Vector center, SymMatrix shape, const BTerms& bt, double alpha, bool corrected)
{
    check_alpha(alpha);
    const int k = static_cast<int>(shape.dim());
    Region r;
    r.center = std::move(center);
    r.shape = std::move(shape);
    r.alpha = alpha;
    r.bterms = bt;
    r.chi2_cutoff = chi2_quantile(k, 1.0 - alpha);
    r.h_star = corrected ? bartlett_h(bt, k, r.chi2_cutoff) : 0.0;
    if (1.0 + r.h_star <= 0.0) {
        throw Error(ErrorCode::DegenerateCorrection,
                    "1 + h* = " + std::to_string(1.0 + r.h_star) + " <= 0");
    }
    r.radius_sq = (1.0 + r.h_star) * r.chi2_cutoff;
    return r;
}

void check_pair(const Dataset& data, std::size_t a, std::size_t b)
{
    data.area(a);
    data.area(b);
    if (a == b) {
        throw Error(ErrorCode::SameArea, "difference region needs two distinct areas");
    }
}

}  // namespace

BTerms b_terms(const Dataset& data, const SymMatrix& psi, std::size_t a)
{
    data.area(a);
    return b_terms(data, fit_gls(data, psi), a);
}

BTerms b_terms(const Dataset& data, const GlsFit& fit, std::size_t a)
{
    const Matrix w = shrinkage_factor(data, fit, a);
    const SymMatrix h = g1_matrix(fit.psi, data.area(a).D) + g2_matrix(data, fit, a);
    const Matrix h_inv = spd_inverse(h).matrix();
    const Matrix n = w.transpose() * h_inv * w;
    const Matrix mm = w.transpose() * h_inv * h_inv * w;

    double s1 = 0.0;
    double s2 = 0.0;
    for (const SymMatrix& sigma : fit.sigma) {
        const Matrix ns = n * sigma.matrix();
        const Matrix ms = mm * sigma.matrix();
        const double tr_ns = ns.trace();
        s1 += (ms * ns).trace() + ms.trace() * tr_ns;
        // Two identical tr((N Sigma_i)^2) terms plus tr^2(N Sigma_i).
        const double tr_ns2 = (ns * ns).trace();
        s2 += tr_ns2 + tr_ns2 + tr_ns * tr_ns;
    }
    const double m = static_cast<double>(data.m());
    BTerms bt;
    bt.b1 = -s1 / (2.0 * m * m);
    bt.b2 = -s2 / (4.0 * m * m);
    bt.b3 = (h_inv * g3_matrix(data, fit, a).matrix()).trace();
    return bt;
}

double bartlett_h(const BTerms& b, int k, double x)
{
    const double kk = static_cast<double>(k);
    return -2.0 * ((b.b1 - b.b3 - b.b2) / kk + b.b2 * x / (kk * (kk + 2.0)));
}

Region corrected_region_at(const Dataset& data, const GlsFit& fit, std::size_t a, double alpha)
{
    const Prediction p = predict_at(data, fit, a);
    return build_region(p.theta_eb, p.h_mat, b_terms(data, fit, a), alpha, true);
}

Region naive_region_at(const Dataset& data, const GlsFit& fit, std::size_t a, double alpha)
{
    const Prediction p = predict_at(data, fit, a);
    return build_region(p.theta_eb, p.h_mat, b_terms(data, fit, a), alpha, false);
}

Region corrected_region(const Dataset& data, std::size_t a, const CovarianceEstimate& cov, double alpha)
{
    check_alpha(alpha);
    data.area(a);
    return corrected_region_at(data, fit_gls(data, cov.adjusted), a, alpha);
}

Region naive_region(const Dataset& data, std::size_t a, const CovarianceEstimate& cov, double alpha)
{
    check_alpha(alpha);
    data.area(a);
    return naive_region_at(data, fit_gls(data, cov.adjusted), a, alpha);
}

double mahalanobis(const Region& region, const Vector& theta)
{
    if (theta.size() != region.center.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "theta has length " + std::to_string(theta.size()) + ", region has k=" +
                        std::to_string(region.center.size()));
    }
    const Vector diff = theta - region.center;
    return diff.dot(spd_solve(region.shape, diff));
}

bool contains(const Region& region, const Vector& theta)
{
    return mahalanobis(region, theta) <= region.radius_sq;
}

SymMatrix diff_shape(const Dataset& data, const GlsFit& fit, std::size_t a, std::size_t b)
{
    check_pair(data, a, b);
    const SymMatrix ha = g1_matrix(fit.psi, data.area(a).D) + g2_matrix(data, fit, a);
    const SymMatrix hb = g1_matrix(fit.psi, data.area(b).D) + g2_matrix(data, fit, b);
    return ha + hb - g2_cross_matrix(data, fit, a, b);
}

BTerms diff_b_terms(const Dataset& data, const SymMatrix& psi, std::size_t a, std::size_t b)
{
    check_pair(data, a, b);
    return diff_b_terms(data, fit_gls(data, psi), a, b);
}

BTerms diff_b_terms(const Dataset& data, const GlsFit& fit, std::size_t a, std::size_t b)
{
    check_pair(data, a, b);
    const SymMatrix g_ab = diff_shape(data, fit, a, b);
    const Matrix g_inv = spd_inverse(g_ab).matrix();
    const Matrix w[2] = {shrinkage_factor(data, fit, a), shrinkage_factor(data, fit, b)};

    // tr(V_1cd) and tr(V_2cd) summed over (c, d) in {a, b}^2. Both have the form
    // tr(G^{-1} W_c E[(Psi_hat - Psi) A_cd (Psi_hat - Psi)] W_d^T).
    double tr_v1 = 0.0;
    double tr_v2 = 0.0;
    for (int c = 0; c < 2; ++c) {
        for (int d = 0; d < 2; ++d) {
            const Matrix a1 = w[c].transpose() * g_inv * g_inv * w[d];
            const Matrix a2 = w[c].transpose() * g_inv * w[d];
            tr_v1 += (g_inv * w[c] * second_moment(fit, a1) * w[d].transpose()).trace();
            tr_v2 += (g_inv * w[c] * second_moment(fit, a2) * w[d].transpose()).trace();
        }
    }

    const Matrix n = w[0].transpose() * g_inv * w[0] + w[1].transpose() * g_inv * w[1];
    double s = 0.0;
    for (const SymMatrix& sigma : fit.sigma) {
        const Matrix ns = n * sigma.matrix();
        s += (ns * ns).trace();
    }
    const double m = static_cast<double>(data.m());

    const SymMatrix g3_sum = g3_matrix(data, fit, a) + g3_matrix(data, fit, b);
    BTerms bt;
    bt.b1 = -0.5 * tr_v1;
    bt.b2 = -s / (4.0 * m * m) - 0.25 * tr_v2;
    bt.b3 = (g_inv * (g3_sum - g2_cross_matrix(data, fit, a, b)).matrix()).trace();
    return bt;
}

Region diff_region_at(const Dataset& data, const GlsFit& fit, std::size_t a, std::size_t b,
                      double alpha, bool corrected)
{
    check_pair(data, a, b);
    Vector center = eblup(data, fit, a) - eblup(data, fit, b);
    return build_region(std::move(center), diff_shape(data, fit, a, b), diff_b_terms(data, fit, a, b),
                        alpha, corrected);
}

Region diff_region(const Dataset& data, std::size_t a, std::size_t b, const CovarianceEstimate& cov,
                   double alpha)
{
    check_alpha(alpha);
    check_pair(data, a, b);
    return diff_region_at(data, fit_gls(data, cov.adjusted), a, b, alpha, true);
}

Region naive_diff_region(const Dataset& data, std::size_t a, std::size_t b,
                         const CovarianceEstimate& cov, double alpha)
{
    check_alpha(alpha);
    check_pair(data, a, b);
    return diff_region_at(data, fit_gls(data, cov.adjusted), a, b, alpha, false);
}

}  // namespace mfh
