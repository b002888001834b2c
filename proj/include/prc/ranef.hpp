#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "prc/data.hpp"
#include "prc/lmm.hpp"
#include "prc/mlpmm.hpp"

namespace prc {

// Modeling strategies: baseline covariates only, one mixed model per item, or
// the latent-process model keeping shared effects (U) or shared plus
// item-specific intercepts (U+B).
enum class Variant { BASELINE_PCOX, PRC_LMM, PRC_MLPMM_U, PRC_MLPMM_UB };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// Per-subject predicted-random-effect design block for the survival step.
struct RanefSummary {
    Variant variant = Variant::PRC_LMM;
    std::vector<std::string> columns;
    Eigen::MatrixXd matrix;               // n_subjects × d, dataset subject order
    std::vector<int> uninformed_units;    // per subject: fit units with no data
};

// One fit per item, in the given order; columns b0_<item>, b1_<item>.
RanefSummary build_ranef_summary(const std::vector<LmmFit>& fits,
                                 const LongitudinalDataset& data);

// One fit per map process, in map order. Columns per process s:
// u0_<s>, u1_<s>, and for the U+B variant the item intercepts b_<item> for
// every item except the first of the process. The first item's intercept is an
// exact linear combination of the kept columns, so keeping it would make the
// design singular by construction.
RanefSummary build_ranef_summary(const std::vector<MlpmmFit>& fits,
                                 const LongitudinalDataset& data, const ItemMap& map,
                                 Variant variant);

// Latent-process summary with single-item processes routed to per-item linear
// mixed models (a one-item latent process reduces to exactly that model):
// lmm_fits[j] covers the j-th single-item process in map order, mlpmm_fits[k]
// the k-th multi-item process. Column layout stays process-major; a routed
// process contributes u0_<process>, u1_<process> and no item intercept column.
RanefSummary build_ranef_summary(const std::vector<LmmFit>& lmm_fits,
                                 const std::vector<MlpmmFit>& mlpmm_fits,
                                 const LongitudinalDataset& data, const ItemMap& map,
                                 Variant variant);

} // namespace prc
