#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "prc/cox.hpp"
#include "prc/data.hpp"
#include "prc/ranef.hpp"

namespace prc {

// End-to-end model configuration: variant, penalty policy, tuning scheme.
struct PipelineConfig {
    Variant variant = Variant::PRC_LMM;
    PenaltyConfig penalty;           // lambda < 0 -> selected by cross-validation
    std::vector<double> alpha_grid;  // non-empty -> alpha selected by nested CV
    int cv_folds = 5;
    unsigned workers = 1;
};

// Fitted three-step model. Single-item processes carry linear mixed models
// (lmm_fits, in map order of those processes); multi-item processes carry
// latent-process fits (mlpmm_fits, same convention). BASELINE_PCOX carries
// neither and keeps per-item imputation means for missing baseline values.
struct PipelineFit {
    Variant variant = Variant::PRC_LMM;
    ItemMap map;
    std::vector<LmmFit> lmm_fits;
    std::vector<MlpmmFit> mlpmm_fits;
    bool include_age = false;         // training baseline ages varied
    Eigen::VectorXd baseline_impute;  // BASELINE_PCOX: mean observed first-visit value per item
    std::vector<std::string> columns; // survival design columns
    PenalizedCoxFit cox;
    bool used_nested = false;
    CvResult cv;                      // lambda selection trace (fixed alpha)
    NestedCvResult nested;            // alpha selection trace (alpha_grid given)
};

// Survival design for a dataset under a fit's recipe: re-predicted random
// effects (or first-visit item values for BASELINE_PCOX), plus the baseline
// age column when the recipe includes it.
struct PipelineDesign {
    Eigen::MatrixXd matrix;
    std::vector<std::string> columns;
    std::vector<int> uninformed_units;    // per subject: units with no observed rows
    std::vector<int> shrunk_slope_units;  // per subject: units with < 2 observed rows
};

// Steps: fit one mixed model per unit (item or process), build the
// random-effect design, select the penalty by (nested) cross-validation unless
// config.penalty.lambda is already resolved, and fit the penalized Cox model.
// Throws FitError when a mixed-model unit fails to converge.
PipelineFit fit_pipeline(const AlignedData& data, const ItemMap& map,
                         const PipelineConfig& config, std::uint64_t seed);

// Rebuilds the design for the scoring subjects (sorted unique ids with one
// baseline age each). Random effects come from each subject's own rows in
// `longit`; subjects without rows get prior-mean effects and a full
// uninformed-unit count. Every longitudinal subject must be in the scoring
// list.
PipelineDesign pipeline_design(const PipelineFit& fit, const LongitudinalDataset& longit,
                               const std::vector<std::string>& subjects,
                               const std::vector<double>& baseline_age);
PipelineDesign pipeline_design(const PipelineFit& fit, const AlignedData& data);

// Linear predictor per design row under the fitted penalized Cox model.
Eigen::VectorXd pipeline_lp(const PipelineFit& fit, const PipelineDesign& design);
Eigen::VectorXd pipeline_lp(const PipelineFit& fit, const AlignedData& data);

// Survival curves S(t | subject) over `times`, one row per design row.
Eigen::MatrixXd pipeline_survival(const PipelineFit& fit, const PipelineDesign& design,
                                  const std::vector<double>& times);
Eigen::MatrixXd pipeline_survival(const PipelineFit& fit, const AlignedData& data,
                                  const std::vector<double>& times);

} // namespace prc
