#include "prc/lmm.hpp"

#include <cmath>

#include "prc/errors.hpp"
#include "prc/optim.hpp"

namespace prc {

namespace {

constexpr double kSigmaFloor = 1e-8;
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct Theta {
    Eigen::Vector2d beta;
    Eigen::Matrix2d L;       // lower-triangular Cholesky factor of D
    double sigma2;
    double exp_t;            // σ² - floor, the actual exp(t)
};

Theta decode(const Eigen::VectorXd& theta) {
    Theta p;
    p.beta << theta[0], theta[1];
    p.L.setZero();
    p.L(0, 0) = std::exp(theta[2]);
    p.L(1, 0) = theta[3];
    p.L(1, 1) = std::exp(theta[4]);
    p.exp_t = std::exp(theta[5]);
    p.sigma2 = kSigmaFloor + p.exp_t;
    return p;
}

} // namespace

LmmStats lmm_stats(const LongitudinalDataset& data, std::size_t item) {
    if (item >= data.items.size()) throw DomainError("item index out of range");
    LmmStats stats(data.n_subjects());
    for (std::size_t i = 0; i < data.n_subjects(); ++i) {
        LmmSubjectStats& s = stats[i];
        for (std::size_t r = data.row_begin[i]; r < data.row_begin[i + 1]; ++r) {
            const double y = data.values(static_cast<Eigen::Index>(r),
                                         static_cast<Eigen::Index>(item));
            if (std::isnan(y)) continue;
            const double a = data.ages[r];
            Eigen::Vector2d z(1.0, a);
            s.C += z * z.transpose();
            s.h += z * y;
            s.yy += y * y;
            s.m += 1;
        }
    }
    return stats;
}

Eigen::VectorXd lmm_pack(const LmmFit& fit) {
    Eigen::LLT<Eigen::Matrix2d> llt(fit.D);
    if (llt.info() != Eigen::Success) {
        throw DomainError("random-effects covariance is not positive definite");
    }
    Eigen::Matrix2d L = llt.matrixL();
    Eigen::VectorXd theta(6);
    theta << fit.beta0, fit.beta1, std::log(L(0, 0)), L(1, 0), std::log(L(1, 1)),
        std::log(std::max(fit.sigma2_eps - kSigmaFloor, 1e-300));
    return theta;
}

void lmm_unpack(const Eigen::VectorXd& theta, LmmFit& fit) {
    Theta p = decode(theta);
    fit.beta0 = p.beta[0];
    fit.beta1 = p.beta[1];
    fit.D = p.L * p.L.transpose();
    fit.sigma2_eps = p.sigma2;
}

// Marginal likelihood via the 2x2 Woodbury core: with V = σ²I + Z L Lᵀ Zᵀ,
// K = LᵀCL, W = I + K/σ², everything reduces to subject-level 2-vectors.
double lmm_negloglik(const Eigen::VectorXd& theta, const LmmStats& stats,
                     Eigen::VectorXd* grad) {
    const Theta p = decode(theta);
    const double s2 = p.sigma2;
    const double inv_s2 = 1.0 / s2;

    double loglik = 0.0;
    Eigen::Vector2d d_beta = Eigen::Vector2d::Zero();
    Eigen::Matrix2d G = Eigen::Matrix2d::Zero();   // Σ (aaᵀ - ZᵀV⁻¹Z)
    double d_t_core = 0.0;                         // Σ (uᵀu - tr V⁻¹)

    for (const LmmSubjectStats& s : stats) {
        if (s.m == 0) continue;
        const Eigen::Vector2d zr = s.h - s.C * p.beta;
        const double rr = s.yy - 2.0 * p.beta.dot(s.h) + p.beta.dot(s.C * p.beta);
        const Eigen::Matrix2d K = p.L.transpose() * s.C * p.L;
        Eigen::Matrix2d W = Eigen::Matrix2d::Identity() + inv_s2 * K;
        const double det_w = W(0, 0) * W(1, 1) - W(0, 1) * W(1, 0);
        Eigen::Matrix2d W_inv;
        W_inv << W(1, 1), -W(0, 1), -W(1, 0), W(0, 0);
        W_inv /= det_w;

        const Eigen::Vector2d g = p.L.transpose() * zr;
        const Eigen::Vector2d wg = W_inv * g;
        const double quad = inv_s2 * (rr - inv_s2 * g.dot(wg));
        loglik -= 0.5 * (s.m * (kLog2Pi + std::log(s2)) + std::log(det_w) + quad);

        if (grad) {
            const Eigen::Vector2d a = inv_s2 * (zr - inv_s2 * (s.C * (p.L * wg)));
            const Eigen::Matrix2d CL = s.C * p.L;
            const Eigen::Matrix2d B = inv_s2 * (s.C - inv_s2 * CL * W_inv * CL.transpose());
            d_beta += a;
            G += a * a.transpose() - B;
            const double uu = inv_s2 * inv_s2 *
                (rr - 2.0 * inv_s2 * g.dot(wg) + inv_s2 * inv_s2 * wg.dot(K * wg));
            const double tr_vinv = inv_s2 * (s.m - inv_s2 * (W_inv * K).trace());
            d_t_core += uu - tr_vinv;
        }
    }

    if (grad) {
        grad->resize(6);
        (*grad)[0] = -d_beta[0];
        (*grad)[1] = -d_beta[1];
        // chain rule through D = LLᵀ for each Cholesky coordinate
        const double l11 = p.L(0, 0), l22 = p.L(1, 1);
        Eigen::Matrix2d dL;
        auto d_from_dl = [&](const Eigen::Matrix2d& dl) {
            Eigen::Matrix2d dD = dl * p.L.transpose() + p.L * dl.transpose();
            return -0.5 * dD.cwiseProduct(G).sum();
        };
        dL << l11, 0, 0, 0;
        (*grad)[2] = d_from_dl(dL);
        dL << 0, 0, 1, 0;
        (*grad)[3] = d_from_dl(dL);
        dL << 0, 0, 0, l22;
        (*grad)[4] = d_from_dl(dL);
        (*grad)[5] = -0.5 * p.exp_t * d_t_core;
    }
    return -loglik;
}

LmmFit fit_lmm(const LongitudinalDataset& data, std::size_t item) {
    LmmStats stats = lmm_stats(data, item);

    Eigen::Matrix2d C_sum = Eigen::Matrix2d::Zero();
    Eigen::Vector2d h_sum = Eigen::Vector2d::Zero();
    double yy_sum = 0.0;
    long m_sum = 0;
    for (const auto& s : stats) {
        C_sum += s.C;
        h_sum += s.h;
        yy_sum += s.yy;
        m_sum += s.m;
    }
    if (m_sum == 0) {
        throw FitError("item " + data.items[item] + " has no observed values");
    }

    // pooled OLS start; residual variance split between the random intercept,
    // random slope, and measurement noise
    Eigen::Vector2d beta0;
    if (std::abs(C_sum(0, 0) * C_sum(1, 1) - C_sum(0, 1) * C_sum(1, 0)) < 1e-12 * C_sum(0, 0)) {
        beta0 << h_sum[0] / C_sum(0, 0), 0.0;   // constant ages: intercept only
    } else {
        beta0 = C_sum.ldlt().solve(h_sum);
    }
    double rss = yy_sum - 2.0 * beta0.dot(h_sum) + beta0.dot(C_sum * beta0);
    double v = std::max(rss / static_cast<double>(m_sum), 1e-6);

    Eigen::VectorXd theta(6);
    theta << beta0[0], beta0[1], 0.5 * std::log(0.5 * v), 0.0, 0.5 * std::log(0.5 * v),
        std::log(0.5 * v);

    OptimResult opt = minimize_bfgs(
        [&stats](const Eigen::VectorXd& t, Eigen::VectorXd* g) {
            return lmm_negloglik(t, stats, g);
        },
        theta);

    LmmFit fit;
    fit.item = data.items[item];
    lmm_unpack(opt.x, fit);
    fit.loglik = -opt.value;
    fit.converged = opt.converged;
    fit.iterations = opt.iterations;
    return fit;
}

RanefPrediction predict_ranef_lmm(const LmmFit& fit, const LongitudinalDataset& data,
                                  std::size_t item) {
    LmmStats stats = lmm_stats(data, item);
    const double s2 = fit.sigma2_eps;
    if (!(s2 > 0.0)) throw DomainError("residual variance must be positive");
    const double inv_s2 = 1.0 / s2;
    Eigen::LLT<Eigen::Matrix2d> llt(fit.D);
    Eigen::Matrix2d L = Eigen::Matrix2d::Zero();
    if (llt.info() == Eigen::Success) {
        L = llt.matrixL();
    } else {
        // semi-definite D: fall back to an eigendecomposition square root
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(fit.D);
        Eigen::Vector2d ev = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        L = eig.eigenvectors() * ev.asDiagonal();
    }
    const Eigen::Vector2d beta(fit.beta0, fit.beta1);

    RanefPrediction out;
    out.effects = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(stats.size()), 2);
    out.informed.assign(stats.size(), 0);
    for (std::size_t i = 0; i < stats.size(); ++i) {
        const LmmSubjectStats& s = stats[i];
        if (s.m == 0) continue;
        const Eigen::Vector2d zr = s.h - s.C * beta;
        const Eigen::Matrix2d K = L.transpose() * s.C * L;
        Eigen::Matrix2d W = Eigen::Matrix2d::Identity() + inv_s2 * K;
        const double det_w = W(0, 0) * W(1, 1) - W(0, 1) * W(1, 0);
        Eigen::Matrix2d W_inv;
        W_inv << W(1, 1), -W(0, 1), -W(1, 0), W(0, 0);
        W_inv /= det_w;
        const Eigen::Vector2d a =
            inv_s2 * (zr - inv_s2 * (s.C * (L * (W_inv * (L.transpose() * zr)))));
        out.effects.row(static_cast<Eigen::Index>(i)) = (fit.D * a).transpose();
        out.informed[i] = 1;
    }
    return out;
}

} // namespace prc
