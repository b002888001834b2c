#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "prc/data.hpp"

namespace prc {

// Linear mixed model for one item: y_ij = (β0 + b0_i) + (β1 + b1_i) a_ij + ε_ij
// with (b0, b1) ~ N(0, D), ε ~ N(0, σ²), fitted by marginal maximum likelihood.
struct LmmFit {
    std::string item;   // name of the modeled item
    double beta0 = 0.0;
    double beta1 = 0.0;
    Eigen::Matrix2d D = Eigen::Matrix2d::Zero();
    double sigma2_eps = 1.0;
    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;
};

// Sufficient statistics of one subject's observed series for one item, with
// design Z = [1, a] per visit: everything the marginal likelihood needs.
struct LmmSubjectStats {
    Eigen::Matrix2d C = Eigen::Matrix2d::Zero();   // ZᵀZ
    Eigen::Vector2d h = Eigen::Vector2d::Zero();   // Zᵀy
    double yy = 0.0;                               // yᵀy
    int m = 0;                                     // observed visit count
};

using LmmStats = std::vector<LmmSubjectStats>;   // aligned with dataset subjects

// Predicted random effects, one row per dataset subject. Subjects without any
// observed value get the prior mean (zero) and informed = 0.
struct RanefPrediction {
    Eigen::MatrixXd effects;
    std::vector<std::uint8_t> informed;
};

LmmStats lmm_stats(const LongitudinalDataset& data, std::size_t item);

// Unconstrained parameterization (β0, β1, c11, c21, c22, t):
// D = LLᵀ with L = [[exp(c11), 0], [c21, exp(c22)]], σ² = 1e-8 + exp(t).
Eigen::VectorXd lmm_pack(const LmmFit& fit);
void lmm_unpack(const Eigen::VectorXd& theta, LmmFit& fit);

// Negative marginal log-likelihood (2π constant included) and its gradient.
double lmm_negloglik(const Eigen::VectorXd& theta, const LmmStats& stats,
                     Eigen::VectorXd* grad);

LmmFit fit_lmm(const LongitudinalDataset& data, std::size_t item);

// Empirical Bayes prediction b̂_i = D Zᵢᵀ Vᵢ⁻¹ (yᵢ - Xᵢβ); works for subjects
// unseen at fit time because it only uses the subject's own rows.
RanefPrediction predict_ranef_lmm(const LmmFit& fit, const LongitudinalDataset& data,
                                  std::size_t item);

} // namespace prc
