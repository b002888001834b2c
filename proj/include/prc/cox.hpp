#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "prc/data.hpp"

namespace prc {

// Elasticnet configuration for the survival step. The objective is
//   negloglik(β)/n + λ Σ_j pf_j (α|β_j| + (1-α) β_j²)
// on internally standardized penalized columns. penalty_factors may be empty
// (all ones); entries of 0 mark unpenalized columns (centered, not scaled).
struct PenaltyConfig {
    double alpha = 1.0;
    double lambda = -1.0;                // a fit requires λ ≥ 0; negative = unresolved
    int path_size = 100;
    double min_ratio = -1.0;             // λ_min/λ_max; <0 = 1e-3, or 1e-2 when n < d
    Eigen::VectorXd penalty_factors;
};

// Cumulative-hazard step function: H(t) = Σ_{times ≤ t} increments.
struct StepFunction {
    std::vector<double> times;           // ascending distinct event times
    std::vector<double> increments;      // non-negative

    double cumulative(double t) const;
};

struct PenalizedCoxFit {
    std::vector<std::string> columns;
    Eigen::VectorXd coef;                // original covariate scale
    double alpha = 1.0;
    double lambda = 0.0;
    Eigen::VectorXd center;              // training column means
    Eigen::VectorXd scale;               // 1 for unpenalized or zero-variance columns
    std::vector<std::uint8_t> locked;    // zero-variance columns, coefficient fixed at 0
    double kkt = 0.0;                    // max stationarity violation at the solution
    StepFunction baseline;               // Breslow cumulative baseline hazard
    Eigen::VectorXd train_lp;            // (x - center)ᵀ coef per training subject

    double lp(const Eigen::VectorXd& x_row) const { return (x_row - center).dot(coef); }
};

struct CoxPathResult {
    std::vector<double> lambdas;         // descending
    Eigen::MatrixXd coefs;               // d × L, original scale
    std::vector<double> kkt;             // per path point
    Eigen::VectorXd center;              // standardization used internally
    Eigen::VectorXd scale;
};

struct CvResult {
    double lambda = 0.0;                 // argmin of mean deviance; ties to the largest λ
    double alpha = 1.0;
    std::vector<double> lambdas;         // full-data path the folds were scored on
    std::vector<double> mean_deviance;   // cross-validated partial-likelihood deviance
    int folds = 0;
};

struct NestedCvResult {
    double alpha = 1.0;
    double lambda = 0.0;
    std::vector<double> alpha_grid;
    std::vector<double> outer_deviance;  // mean held-out deviance per α
    std::vector<CvResult> inner;         // outer-fold-major, then α: K·|grid| entries
    CvResult final_cv;                   // λ selection on the full data at α*
};

// Negative log partial likelihood, Breslow tie handling, original scale,
// no penalty, no /n scaling. 0 when there are no events.
double cox_negloglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& coef,
                     const SurvivalDataset& surv);

// Fit at one (λ, α); requires config.lambda ≥ 0 (resolve "auto" with cv_lambda
// or nested_cv first). X rows follow surv subject order.
PenalizedCoxFit fit_penalized_cox(const Eigen::MatrixXd& X,
                                  const std::vector<std::string>& columns,
                                  const SurvivalDataset& surv, const PenaltyConfig& config);

// Warm-started descending-λ path. If `lambdas` is empty the path is derived
// from the data (λ_max annihilating all penalized coefficients).
CoxPathResult fit_cox_path(const Eigen::MatrixXd& X, const SurvivalDataset& surv,
                           const PenaltyConfig& config,
                           const std::vector<double>& lambdas = {});

// K-fold event-stratified cross-validation of λ along a common full-data path,
// scored with the deviance difference ℓ_full(β) - ℓ_without-fold(β).
CvResult cv_lambda(const Eigen::MatrixXd& X, const SurvivalDataset& surv,
                   const PenaltyConfig& config, int folds, std::uint64_t seed);

// Outer folds score each α with inner λ selection; α* minimizes mean held-out
// deviance, then λ* is chosen on the full data at α*.
NestedCvResult nested_cv(const Eigen::MatrixXd& X, const SurvivalDataset& surv,
                         const PenaltyConfig& config, const std::vector<double>& alpha_grid,
                         int folds, std::uint64_t seed);

// Breslow increments d_k / Σ_{risk set} e^lp at each distinct event time.
StepFunction breslow_baseline(const Eigen::VectorXd& lp, const SurvivalDataset& surv);

// Ŝ(t | x) = exp(-H0(t) e^lp) for every row of X_new at every time; columns
// must equal the fit's columns (verified by name).
Eigen::MatrixXd predict_survival(const PenalizedCoxFit& fit, const Eigen::MatrixXd& X_new,
                                 const std::vector<std::string>& columns,
                                 const std::vector<double>& times);

} // namespace prc
