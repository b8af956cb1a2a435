#include "mfh/prediction.hpp"

#include "mfh/error.hpp"

namespace mfh {

namespace {

void check_psi(const Dataset& data, const SymMatrix& psi)
{
    if (psi.dim() != data.k()) {
        throw Error(ErrorCode::DimensionMismatch, "psi must be k x k");
    }
}

}  // namespace

Vector bayes_estimator(const AreaData& area, const Vector& beta, const SymMatrix& psi)
{
    if (psi.dim() != area.D.dim() || beta.size() != area.X.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "bayes_estimator: dimension mismatch");
    }
    const Vector resid = area.y - area.X * beta;
    return area.y - area.D.matrix() * spd_solve(psi + area.D, resid);
}

Vector eblup(const Dataset& data, std::size_t a, const SymMatrix& psi)
{
    check_psi(data, psi);
    data.area(a);
    return eblup(data, fit_gls(data, psi), a);
}

Vector eblup(const Dataset& data, const GlsFit& fit, std::size_t a)
{
    const AreaData& area = data.area(a);
    const Vector resid = area.y - area.X * fit.beta;
    return area.y - area.D.matrix() * (fit.sigma_inv[a].matrix() * resid);
}

Matrix shrinkage_factor(const Dataset& data, const GlsFit& fit, std::size_t a)
{
    return data.area(a).D.matrix() * fit.sigma_inv[a].matrix();
}

SymMatrix g1_matrix(const SymMatrix& psi, const SymMatrix& d)
{
    if (psi.dim() != d.dim()) {
        throw Error(ErrorCode::DimensionMismatch, "g1_matrix: dimension mismatch");
    }
    const SymMatrix sigma_inv = spd_inverse(psi + d);
    return SymMatrix(d.matrix() - d.matrix() * sigma_inv.matrix() * d.matrix());
}

SymMatrix g2_matrix(const Dataset& data, const SymMatrix& psi, std::size_t a)
{
    check_psi(data, psi);
    data.area(a);
    return g2_matrix(data, fit_gls(data, psi), a);
}

SymMatrix g2_matrix(const Dataset& data, const GlsFit& fit, std::size_t a)
{
    const Matrix wx = shrinkage_factor(data, fit, a) * data.area(a).X;
    return SymMatrix(wx * fit.info_inv.matrix() * wx.transpose());
}

SymMatrix g2_cross_matrix(const Dataset& data, const GlsFit& fit, std::size_t a, std::size_t b)
{
    const Matrix wxa = shrinkage_factor(data, fit, a) * data.area(a).X;
    const Matrix wxb = shrinkage_factor(data, fit, b) * data.area(b).X;
    const Matrix one_way = wxa * fit.info_inv.matrix() * wxb.transpose();
    return SymMatrix(one_way + one_way.transpose());
}

SymMatrix g3_matrix(const Dataset& data, const SymMatrix& psi, std::size_t a)
{
    check_psi(data, psi);
    data.area(a);
    return g3_matrix(data, fit_gls(data, psi), a);
}

SymMatrix g3_matrix(const Dataset& data, const GlsFit& fit, std::size_t a)
{
    data.area(a);
    const Matrix& sigma_a_inv = fit.sigma_inv[a].matrix();
    Matrix bracket = Matrix::Zero(data.k(), data.k());
    for (const SymMatrix& sigma_i : fit.sigma) {
        const Matrix si_ainv = sigma_i.matrix() * sigma_a_inv;
        bracket.noalias() += si_ainv * sigma_i.matrix();
        bracket += si_ainv.trace() * sigma_i.matrix();
    }
    const double m = static_cast<double>(data.m());
    const Matrix w = shrinkage_factor(data, fit, a);
    return SymMatrix(w * bracket * w.transpose() / (m * m));
}

Prediction predict_at(const Dataset& data, const GlsFit& fit, std::size_t a)
{
    Prediction p;
    p.area_index = a;
    p.theta_eb = eblup(data, fit, a);
    p.g1 = g1_matrix(fit.psi, data.area(a).D);
    p.g2 = g2_matrix(data, fit, a);
    p.g3 = g3_matrix(data, fit, a);
    p.h_mat = p.g1 + p.g2;
    p.msem = p.h_mat + 2.0 * p.g3;
    return p;
}

Prediction predict_at(const Dataset& data, std::size_t a, const SymMatrix& psi)
{
    check_psi(data, psi);
    data.area(a);
    return predict_at(data, fit_gls(data, psi), a);
}

Prediction msem_estimate(const Dataset& data, std::size_t a, const CovarianceEstimate& cov)
{
    return predict_at(data, a, cov.adjusted);
}

}  // namespace mfh
