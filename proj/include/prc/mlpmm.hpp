#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "prc/data.hpp"
#include "prc/lmm.hpp"

namespace prc {

// Multivariate latent process mixed model for one process s with items q:
//   y_qij = β_q0 + u_0i + b_qi + (β_q1 + u_1i) a_ij + ε_qij
// u_i ~ N(0, Σ_u) shared by all items, Var(u_0) fixed to 1 (identifiability),
// b_qi ~ N(0, σ²_bq) item-specific intercept, ε ~ N(0, σ²_εq).
struct MlpmmFit {
    std::vector<std::string> items;   // item names within the process
    Eigen::VectorXd beta0;            // per item
    Eigen::VectorXd beta1;
    Eigen::VectorXd sigma2_b;
    Eigen::VectorXd sigma2_eps;
    Eigen::Matrix2d Sigma_u = Eigen::Matrix2d::Identity();
    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;

    std::size_t r() const { return items.size(); }
};

// One subject's observed rows for the process, stacked item-major then
// visit-minor; missing cells are dropped.
struct MlpmmSubjectData {
    Eigen::VectorXd y;
    Eigen::VectorXd age;
    std::vector<int> offset;   // size r+1; rows of local item q are [offset[q], offset[q+1])
    int M = 0;                 // total observed rows
};

struct MlpmmStats {
    std::vector<MlpmmSubjectData> subjects;   // aligned with dataset subjects
    std::vector<std::size_t> item_index;      // dataset column per local item
    std::vector<std::string> item_names;
};

MlpmmStats mlpmm_stats(const LongitudinalDataset& data, const ItemMap& map,
                       std::size_t process);

// Unconstrained parameter vector, dimension 4r+2:
// (β_10, β_11, ..., β_r0, β_r1, log σ²_b1..r, t_1..r, l21, c22) with
// σ²_εq = 1e-8 + exp(t_q) and Σ_u = L Lᵀ, L = [[1, 0], [l21, exp(c22)]].
Eigen::VectorXd mlpmm_pack(const MlpmmFit& fit);
void mlpmm_unpack(const Eigen::VectorXd& theta, MlpmmFit& fit);

double mlpmm_negloglik(const Eigen::VectorXd& theta, const MlpmmStats& stats,
                       Eigen::VectorXd* grad);

MlpmmFit fit_mlpmm(const LongitudinalDataset& data, const ItemMap& map, std::size_t process);

// Posterior means of (u_0, u_1, b_1, ..., b_r) per subject; columns in that
// order. Subjects with no observed rows get zeros and informed = 0.
RanefPrediction predict_ranef_mlpmm(const MlpmmFit& fit, const LongitudinalDataset& data,
                                    const ItemMap& map, std::size_t process);

} // namespace prc
