#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "prc/data.hpp"
#include "prc/metrics.hpp"
#include "prc/pipeline.hpp"
#include "prc/rng.hpp"

namespace prc {

// Draw source for one replicate: n subject indices in [0, n), with replacement.
// Injectable for diagnostics and tests; the default is the uniform cluster
// bootstrap. The replicate index is informational (the rng is already an
// independent substream per replicate).
using Resampler =
    std::function<std::vector<std::size_t>(std::size_t n, std::uint64_t replicate, Rng& rng)>;

// Cluster bootstrap validation plan: B replicates, a master seed from which
// every replicate derives an independent substream, and the full pipeline
// configuration to re-run inside each replicate (tuning re-selected per
// replicate, never inherited from the original fit).
struct BootstrapPlan {
    int replicates = 50;
    std::uint64_t seed = 0;
    PipelineConfig pipeline;
    Resampler resampler;  // empty -> cluster_bootstrap_draw
};

// One bootstrap replicate. `stream` is the substream id the replicate was run
// under, so it can be reproduced in isolation (see replicate_seeds). Scores are
// per metric, in request order; empty when the replicate failed.
struct ReplicateRecord {
    std::uint64_t replicate = 0;  // 1-based index, also the substream id
    std::uint64_t stream = 0;
    bool ok = false;
    std::string error;
    std::vector<double> boot_score;  // metric on the replicate's own data
    std::vector<double> orig_score;  // metric on the original data, replicate model
};

// Optimism-corrected performance. For each requested metric m:
//   optimism[m]  = mean over successful replicates of (boot - orig)
//   corrected[m] = naive[m] - optimism[m]
struct ValidationReport {
    std::vector<MetricRequest> metrics;
    std::vector<double> naive;
    std::vector<double> optimism;
    std::vector<double> corrected;
    std::vector<ReplicateRecord> replicates;  // in replicate order, failures included
    std::size_t n_failed = 0;
};

// Derived seeds for one replicate: the draw rng seed and the pipeline fit seed.
// Exposed so a single replicate can be reproduced outside run_cbocp.
struct ReplicateSeeds {
    std::uint64_t draw = 0;
    std::uint64_t fit = 0;
};
ReplicateSeeds replicate_seeds(std::uint64_t master, std::uint64_t replicate);

// n subject indices drawn uniformly with replacement.
std::vector<std::size_t> cluster_bootstrap_draw(std::size_t n, Rng& rng);

// Expands a draw into a dataset: each drawn subject contributes its entire
// longitudinal block and survival row under a fresh id ("<id>#<k>", k the
// zero-padded draw ordinal), so repeated draws count as distinct clusters in
// risk sets and folds downstream.
AlignedData cluster_bootstrap_sample(const AlignedData& data, const std::vector<std::size_t>& draw);

// Full optimism correction: scores `original_fit` on the original data (naive),
// then for each replicate re-runs the entire pipeline (mixed models, tuning
// selection, penalized Cox) on resampled data and scores it on both the
// replicate data and the original data. Replicate scoring never reads
// `original_fit`. Replicate failures are logged and skipped; more than 20%
// failures raise ValidationError. Replicates run concurrently under
// plan.pipeline.workers (each replicate's internal fits are serial) and the
// result is identical for any worker count.
ValidationReport run_cbocp(const AlignedData& data, const ItemMap& map, const BootstrapPlan& plan,
                           const std::vector<MetricRequest>& metrics,
                           const PipelineFit& original_fit);

// Convenience overload: fits the pipeline on the original data first.
ValidationReport run_cbocp(const AlignedData& data, const ItemMap& map, const BootstrapPlan& plan,
                           const std::vector<MetricRequest>& metrics);

// Report as a JSON document (summary plus every replicate record).
std::string report_to_json(const ValidationReport& report);

// Successful replicates as CSV rows: replicate,metric,horizon,boot,original.
// The horizon column carries the tdAUC horizon, or the concordance truncation
// (-1 = none) for the concordance index.
std::string report_to_csv(const ValidationReport& report);

} // namespace prc
