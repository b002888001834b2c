#include "prc/mlpmm.hpp"

#include <cmath>
#include <limits>

#include "prc/errors.hpp"
#include "prc/optim.hpp"

namespace prc {

namespace {

constexpr double kSigmaFloor = 1e-8;
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct Theta {
    Eigen::VectorXd beta0, beta1;   // per item
    Eigen::VectorXd s2b, s2e;       // variances (s2e includes the floor)
    Eigen::VectorXd exp_tb, exp_te;
    Eigen::Matrix2d L;              // Cholesky factor of Σ_u, L(0,0) ≡ 1
};

Theta decode(const Eigen::VectorXd& theta, std::size_t r) {
    Theta p;
    p.beta0.resize(r);
    p.beta1.resize(r);
    p.s2b.resize(r);
    p.s2e.resize(r);
    p.exp_tb.resize(r);
    p.exp_te.resize(r);
    for (std::size_t q = 0; q < r; ++q) {
        p.beta0[q] = theta[2 * q];
        p.beta1[q] = theta[2 * q + 1];
        p.exp_tb[q] = std::exp(theta[2 * r + q]);
        p.s2b[q] = p.exp_tb[q];
        p.exp_te[q] = std::exp(theta[3 * r + q]);
        p.s2e[q] = kSigmaFloor + p.exp_te[q];
    }
    p.L << 1.0, 0.0, theta[4 * r], std::exp(theta[4 * r + 1]);
    return p;
}

// Builds the subject covariance Σ_y = ZΣ_uZᵀ + Σ_q σ²_bq J_q + Σ_q σ²_εq I_q.
Eigen::MatrixXd subject_cov(const MlpmmSubjectData& s, const Eigen::Matrix2d& su,
                            const Eigen::VectorXd& s2b, const Eigen::VectorXd& s2e) {
    const int M = s.M;
    const std::size_t r = s.offset.size() - 1;
    Eigen::MatrixXd V(M, M);
    for (int a = 0; a < M; ++a) {
        for (int b = 0; b <= a; ++b) {
            double v = su(0, 0) + su(0, 1) * (s.age[a] + s.age[b]) +
                       su(1, 1) * s.age[a] * s.age[b];
            V(a, b) = v;
            V(b, a) = v;
        }
    }
    for (std::size_t q = 0; q < r; ++q) {
        for (int a = s.offset[q]; a < s.offset[q + 1]; ++a) {
            for (int b = s.offset[q]; b < s.offset[q + 1]; ++b) V(a, b) += s2b[q];
            V(a, a) += s2e[q];
        }
    }
    return V;
}

Eigen::MatrixXd subject_cov(const MlpmmSubjectData& s, const Theta& p) {
    return subject_cov(s, Eigen::Matrix2d(p.L * p.L.transpose()), p.s2b, p.s2e);
}

} // namespace

MlpmmStats mlpmm_stats(const LongitudinalDataset& data, const ItemMap& map,
                       std::size_t process) {
    if (process >= map.n_processes()) throw DomainError("process index out of range");
    MlpmmStats stats;
    for (std::size_t q : map.items_of(process)) {
        stats.item_names.push_back(map.items()[q]);
        // items are addressed by name so the dataset column order is free
        bool found = false;
        for (std::size_t c = 0; c < data.items.size(); ++c) {
            if (data.items[c] == map.items()[q]) {
                stats.item_index.push_back(c);
                found = true;
                break;
            }
        }
        if (!found) throw SchemaError("item " + map.items()[q] + " absent from dataset");
    }
    const std::size_t r = stats.item_index.size();
    stats.subjects.resize(data.n_subjects());
    for (std::size_t i = 0; i < data.n_subjects(); ++i) {
        MlpmmSubjectData& s = stats.subjects[i];
        s.offset.assign(r + 1, 0);
        std::vector<double> ys, ages;
        for (std::size_t q = 0; q < r; ++q) {
            s.offset[q] = static_cast<int>(ys.size());
            const auto col = static_cast<Eigen::Index>(stats.item_index[q]);
            for (std::size_t row = data.row_begin[i]; row < data.row_begin[i + 1]; ++row) {
                const double y = data.values(static_cast<Eigen::Index>(row), col);
                if (std::isnan(y)) continue;
                ys.push_back(y);
                ages.push_back(data.ages[row]);
            }
        }
        s.offset[r] = static_cast<int>(ys.size());
        s.M = static_cast<int>(ys.size());
        if (s.M > 0) {
            s.y = Eigen::Map<Eigen::VectorXd>(ys.data(), s.M);
            s.age = Eigen::Map<Eigen::VectorXd>(ages.data(), s.M);
        }
    }
    return stats;
}

Eigen::VectorXd mlpmm_pack(const MlpmmFit& fit) {
    const std::size_t r = fit.r();
    if (fit.Sigma_u(0, 0) != 1.0) {
        throw DomainError("Sigma_u[0,0] must be 1");
    }
    Eigen::VectorXd theta(4 * r + 2);
    for (std::size_t q = 0; q < r; ++q) {
        theta[2 * q] = fit.beta0[static_cast<Eigen::Index>(q)];
        theta[2 * q + 1] = fit.beta1[static_cast<Eigen::Index>(q)];
        theta[2 * r + q] = std::log(std::max(fit.sigma2_b[static_cast<Eigen::Index>(q)], 1e-300));
        theta[3 * r + q] =
            std::log(std::max(fit.sigma2_eps[static_cast<Eigen::Index>(q)] - kSigmaFloor, 1e-300));
    }
    const double l21 = fit.Sigma_u(0, 1);
    const double resid = fit.Sigma_u(1, 1) - l21 * l21;
    if (!(resid > 0.0)) throw DomainError("Sigma_u is not positive definite");
    theta[4 * r] = l21;
    theta[4 * r + 1] = 0.5 * std::log(resid);
    return theta;
}

void mlpmm_unpack(const Eigen::VectorXd& theta, MlpmmFit& fit) {
    const std::size_t r = fit.r();
    if (theta.size() != static_cast<Eigen::Index>(4 * r + 2)) {
        throw DomainError("parameter vector has wrong length");
    }
    Theta p = decode(theta, r);
    fit.beta0 = p.beta0;
    fit.beta1 = p.beta1;
    fit.sigma2_b = p.s2b;
    fit.sigma2_eps = p.s2e;
    fit.Sigma_u = p.L * p.L.transpose();
    fit.Sigma_u(0, 0) = 1.0;   // exact, not just up to rounding
}

double mlpmm_negloglik(const Eigen::VectorXd& theta, const MlpmmStats& stats,
                       Eigen::VectorXd* grad) {
    const std::size_t r = stats.item_names.size();
    const Theta p = decode(theta, r);
    double loglik = 0.0;
    Eigen::VectorXd g;
    Eigen::Matrix2d Gu = Eigen::Matrix2d::Zero();   // Σ (aaᵀ - ZᵀV⁻¹Z)
    if (grad) g.setZero(4 * r + 2);

    for (const MlpmmSubjectData& s : stats.subjects) {
        if (s.M == 0) continue;
        const int M = s.M;
        Eigen::MatrixXd V = subject_cov(s, p);
        Eigen::LLT<Eigen::MatrixXd> llt(V);
        if (llt.info() != Eigen::Success) {
            if (grad) grad->setZero(4 * r + 2);
            return std::numeric_limits<double>::infinity();
        }
        Eigen::VectorXd resid(M);
        for (std::size_t q = 0; q < r; ++q) {
            for (int a = s.offset[q]; a < s.offset[q + 1]; ++a) {
                resid[a] = s.y[a] - p.beta0[q] - p.beta1[q] * s.age[a];
            }
        }
        double logdet = 0.0;
        for (int a = 0; a < M; ++a) logdet += 2.0 * std::log(llt.matrixL()(a, a));
        Eigen::VectorXd u = llt.solve(resid);
        loglik -= 0.5 * (M * kLog2Pi + logdet + resid.dot(u));

        if (!grad) continue;
        Eigen::MatrixXd A = llt.solve(Eigen::MatrixXd::Identity(M, M));   // V⁻¹
        // fixed effects: ∂ℓ/∂β_q = Σ_{rows of q} u (intercept) or u·age (slope)
        for (std::size_t q = 0; q < r; ++q) {
            double su = 0.0, sau = 0.0, suu = 0.0, tr_block = 0.0, tr_diag = 0.0;
            for (int a = s.offset[q]; a < s.offset[q + 1]; ++a) {
                su += u[a];
                sau += s.age[a] * u[a];
                suu += u[a] * u[a];
                tr_diag += A(a, a);
                for (int b = s.offset[q]; b < s.offset[q + 1]; ++b) tr_block += A(a, b);
            }
            g[2 * q] -= su;
            g[2 * q + 1] -= sau;
            g[2 * r + q] -= 0.5 * p.exp_tb[q] * (su * su - tr_block);
            g[3 * r + q] -= 0.5 * p.exp_te[q] * (suu - tr_diag);
        }
        // shared-effect covariance: collapse to the 2x2 statistics
        Eigen::Vector2d a2(u.sum(), s.age.dot(u));
        Eigen::Matrix2d B;
        const Eigen::VectorXd A_row = A.rowwise().sum();
        B(0, 0) = A.sum();
        B(0, 1) = s.age.dot(A_row);
        B(1, 0) = B(0, 1);
        B(1, 1) = s.age.dot(A * s.age);
        Gu += a2 * a2.transpose() - B;
    }

    if (grad) {
        Eigen::Matrix2d dL;
        dL << 0, 0, 1, 0;
        Eigen::Matrix2d dS = dL * p.L.transpose() + p.L * dL.transpose();
        g[4 * r] = -0.5 * dS.cwiseProduct(Gu).sum();
        dL << 0, 0, 0, p.L(1, 1);
        dS = dL * p.L.transpose() + p.L * dL.transpose();
        g[4 * r + 1] = -0.5 * dS.cwiseProduct(Gu).sum();
        *grad = g;
    }
    return -loglik;
}

MlpmmFit fit_mlpmm(const LongitudinalDataset& data, const ItemMap& map, std::size_t process) {
    MlpmmStats stats = mlpmm_stats(data, map, process);
    const std::size_t r = stats.item_names.size();

    // per-item pooled OLS start, residual variance split across b, ε
    Eigen::VectorXd theta(4 * r + 2);
    for (std::size_t q = 0; q < r; ++q) {
        Eigen::Matrix2d C = Eigen::Matrix2d::Zero();
        Eigen::Vector2d h = Eigen::Vector2d::Zero();
        double yy = 0.0;
        long m = 0;
        for (const auto& s : stats.subjects) {
            for (int a = s.offset[q]; a < s.offset[q + 1]; ++a) {
                Eigen::Vector2d z(1.0, s.age[a]);
                C += z * z.transpose();
                h += z * s.y[a];
                yy += s.y[a] * s.y[a];
                ++m;
            }
        }
        if (m == 0) {
            throw FitError("item " + stats.item_names[q] + " has no observed values");
        }
        Eigen::Vector2d beta;
        if (std::abs(C(0, 0) * C(1, 1) - C(0, 1) * C(1, 0)) < 1e-12 * C(0, 0)) {
            beta << h[0] / C(0, 0), 0.0;
        } else {
            beta = C.ldlt().solve(h);
        }
        double rss = yy - 2.0 * beta.dot(h) + beta.dot(C * beta);
        double v = std::max(rss / static_cast<double>(m), 1e-6);
        theta[2 * q] = beta[0];
        theta[2 * q + 1] = beta[1];
        theta[2 * r + q] = std::log(0.25 * v);
        theta[3 * r + q] = std::log(0.5 * v);
    }
    theta[4 * r] = 0.0;
    theta[4 * r + 1] = 0.5 * std::log(0.25);

    OptimResult opt = minimize_bfgs(
        [&stats](const Eigen::VectorXd& t, Eigen::VectorXd* grad) {
            return mlpmm_negloglik(t, stats, grad);
        },
        theta);

    MlpmmFit fit;
    fit.items = stats.item_names;
    fit.beta0.resize(r);
    fit.beta1.resize(r);
    fit.sigma2_b.resize(r);
    fit.sigma2_eps.resize(r);
    mlpmm_unpack(opt.x, fit);
    fit.loglik = -opt.value;
    fit.converged = opt.converged;
    fit.iterations = opt.iterations;
    return fit;
}

RanefPrediction predict_ranef_mlpmm(const MlpmmFit& fit, const LongitudinalDataset& data,
                                    const ItemMap& map, std::size_t process) {
    MlpmmStats stats = mlpmm_stats(data, map, process);
    const std::size_t r = stats.item_names.size();
    if (stats.item_names != fit.items) {
        throw SchemaError("item map does not match the fitted process");
    }
    // works straight from the covariances so semi-definite Σ_u and σ²_b = 0
    // (legal fits) predict correctly; only σ²_ε > 0 is required
    for (std::size_t q = 0; q < r; ++q) {
        if (!(fit.sigma2_eps[static_cast<Eigen::Index>(q)] > 0.0)) {
            throw DomainError("residual variance must be positive");
        }
        if (fit.sigma2_b[static_cast<Eigen::Index>(q)] < 0.0) {
            throw DomainError("item intercept variance must be non-negative");
        }
    }

    RanefPrediction out;
    out.effects = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(stats.subjects.size()),
                                        static_cast<Eigen::Index>(2 + r));
    out.informed.assign(stats.subjects.size(), 0);

    for (std::size_t i = 0; i < stats.subjects.size(); ++i) {
        const MlpmmSubjectData& s = stats.subjects[i];
        if (s.M == 0) continue;
        Eigen::MatrixXd V = subject_cov(s, fit.Sigma_u, fit.sigma2_b, fit.sigma2_eps);
        Eigen::VectorXd resid(s.M);
        for (std::size_t q = 0; q < r; ++q) {
            for (int a = s.offset[q]; a < s.offset[q + 1]; ++a) {
                resid[a] = s.y[a] - fit.beta0[static_cast<Eigen::Index>(q)] -
                           fit.beta1[static_cast<Eigen::Index>(q)] * s.age[a];
            }
        }
        Eigen::VectorXd u = V.llt().solve(resid);
        Eigen::Vector2d zu(u.sum(), s.age.dot(u));
        Eigen::Vector2d uhat = fit.Sigma_u * zu;
        out.effects(static_cast<Eigen::Index>(i), 0) = uhat[0];
        out.effects(static_cast<Eigen::Index>(i), 1) = uhat[1];
        for (std::size_t q = 0; q < r; ++q) {
            double sum_u = 0.0;
            for (int a = s.offset[q]; a < s.offset[q + 1]; ++a) sum_u += u[a];
            out.effects(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(2 + q)) =
                fit.sigma2_b[static_cast<Eigen::Index>(q)] * sum_u;
        }
        out.informed[i] = 1;
    }
    return out;
}

} // namespace prc
