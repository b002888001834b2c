#include "prc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prc/errors.hpp"
#include "prc/parallel.hpp"

namespace prc {

namespace {

// Dataset column index of every map item, by name.
std::vector<std::size_t> map_item_columns(const ItemMap& map, const LongitudinalDataset& data) {
    std::vector<std::size_t> cols;
    cols.reserve(map.n_items());
    for (const std::string& item : map.items()) {
        auto it = std::find(data.items.begin(), data.items.end(), item);
        if (it == data.items.end()) throw SchemaError("item " + item + " absent from dataset");
        cols.push_back(static_cast<std::size_t>(it - data.items.begin()));
    }
    return cols;
}

// First-visit value per (scoring subject, map item); NaN when the subject has
// no rows or the first row misses the item.
Eigen::MatrixXd first_visit_values(const ItemMap& map, const LongitudinalDataset& longit,
                                   const std::vector<int>& row_of_subject) {
    const std::vector<std::size_t> cols = map_item_columns(map, longit);
    const auto n = static_cast<Eigen::Index>(row_of_subject.size());
    Eigen::MatrixXd values = Eigen::MatrixXd::Constant(
        n, static_cast<Eigen::Index>(map.n_items()), std::numeric_limits<double>::quiet_NaN());
    for (Eigen::Index i = 0; i < n; ++i) {
        const int s = row_of_subject[static_cast<std::size_t>(i)];
        if (s < 0) continue;
        const auto first = static_cast<Eigen::Index>(longit.row_begin[static_cast<std::size_t>(s)]);
        for (std::size_t j = 0; j < cols.size(); ++j) {
            values(i, static_cast<Eigen::Index>(j)) = longit.values(first, static_cast<Eigen::Index>(cols[j]));
        }
    }
    return values;
}

// Position of each scoring subject inside longit.subjects, -1 when absent.
// Also rejects longitudinal subjects that are not scored.
std::vector<int> locate_subjects(const LongitudinalDataset& longit,
                                 const std::vector<std::string>& subjects) {
    for (std::size_t i = 1; i < subjects.size(); ++i) {
        if (!(subjects[i - 1] < subjects[i])) {
            throw SchemaError("scoring subjects must be sorted and unique");
        }
    }
    std::vector<int> row(subjects.size(), -1);
    std::size_t found = 0;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        auto it = std::lower_bound(longit.subjects.begin(), longit.subjects.end(), subjects[i]);
        if (it != longit.subjects.end() && *it == subjects[i]) {
            row[i] = static_cast<int>(it - longit.subjects.begin());
            ++found;
        }
    }
    if (found < longit.subjects.size()) {
        throw SchemaError("longitudinal data contains subjects outside the scoring list");
    }
    return row;
}

// Observed-row count per (longitudinal subject, unit). Units are items for
// per-item variants, processes for latent-process variants.
std::vector<std::vector<int>> unit_row_counts(const PipelineFit& fit,
                                              const LongitudinalDataset& longit) {
    const ItemMap& map = fit.map;
    const std::vector<std::size_t> cols = map_item_columns(map, longit);
    const bool per_item =
        fit.variant == Variant::BASELINE_PCOX || fit.variant == Variant::PRC_LMM;
    const std::size_t units = per_item ? map.n_items() : map.n_processes();
    std::vector<std::vector<int>> counts(longit.n_subjects(), std::vector<int>(units, 0));
    for (std::size_t i = 0; i < longit.n_subjects(); ++i) {
        for (std::size_t row = longit.row_begin[i]; row < longit.row_begin[i + 1]; ++row) {
            for (std::size_t j = 0; j < map.n_items(); ++j) {
                const double v = longit.values(static_cast<Eigen::Index>(row),
                                               static_cast<Eigen::Index>(cols[j]));
                if (std::isnan(v)) continue;
                const std::size_t unit = per_item ? j : static_cast<std::size_t>(map.process_of(j));
                counts[i][unit] += 1;
            }
        }
    }
    return counts;
}

void append_age_column(PipelineDesign& design, const std::vector<double>& baseline_age) {
    for (double a : baseline_age) {
        if (!std::isfinite(a)) throw DomainError("baseline age must be finite");
    }
    design.matrix.conservativeResize(Eigen::NoChange, design.matrix.cols() + 1);
    design.matrix.col(design.matrix.cols() - 1) =
        Eigen::VectorXd::Map(baseline_age.data(), static_cast<Eigen::Index>(baseline_age.size()));
    design.columns.push_back("baseline_age");
}

} // namespace

PipelineDesign pipeline_design(const PipelineFit& fit, const LongitudinalDataset& longit,
                               const std::vector<std::string>& subjects,
                               const std::vector<double>& baseline_age) {
    if (subjects.empty()) throw SchemaError("no scoring subjects");
    if (baseline_age.size() != subjects.size()) {
        throw SchemaError("one baseline age per scoring subject required");
    }
    const std::vector<int> row_of_subject = locate_subjects(longit, subjects);
    const auto n = static_cast<Eigen::Index>(subjects.size());
    const ItemMap& map = fit.map;

    PipelineDesign design;
    design.uninformed_units.assign(subjects.size(), 0);
    design.shrunk_slope_units.assign(subjects.size(), 0);

    if (fit.variant == Variant::BASELINE_PCOX) {
        if (fit.baseline_impute.size() != static_cast<Eigen::Index>(map.n_items())) {
            throw SchemaError("baseline imputation means missing from the fit");
        }
        Eigen::MatrixXd values = first_visit_values(map, longit, row_of_subject);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < values.cols(); ++j) {
                if (std::isnan(values(i, j))) {
                    values(i, j) = fit.baseline_impute[j];
                    design.uninformed_units[static_cast<std::size_t>(i)] += 1;
                }
            }
        }
        design.matrix = std::move(values);
        design.columns = map.items();
    } else {
        RanefSummary summary;
        if (fit.variant == Variant::PRC_LMM) {
            summary = build_ranef_summary(fit.lmm_fits, longit);
        } else {
            summary = build_ranef_summary(fit.lmm_fits, fit.mlpmm_fits, longit, map, fit.variant);
        }
        const std::vector<std::vector<int>> counts = unit_row_counts(fit, longit);
        const std::size_t units =
            fit.variant == Variant::PRC_LMM ? map.n_items() : map.n_processes();
        design.matrix = Eigen::MatrixXd::Zero(n, summary.matrix.cols());
        design.columns = summary.columns;
        for (Eigen::Index i = 0; i < n; ++i) {
            const int s = row_of_subject[static_cast<std::size_t>(i)];
            if (s < 0) {
                design.uninformed_units[static_cast<std::size_t>(i)] = static_cast<int>(units);
                design.shrunk_slope_units[static_cast<std::size_t>(i)] = static_cast<int>(units);
                continue;
            }
            design.matrix.row(i) = summary.matrix.row(s);
            design.uninformed_units[static_cast<std::size_t>(i)] =
                summary.uninformed_units[static_cast<std::size_t>(s)];
            int shrunk = 0;
            for (int c : counts[static_cast<std::size_t>(s)]) shrunk += c < 2 ? 1 : 0;
            design.shrunk_slope_units[static_cast<std::size_t>(i)] = shrunk;
        }
    }

    if (fit.include_age) append_age_column(design, baseline_age);
    return design;
}

PipelineDesign pipeline_design(const PipelineFit& fit, const AlignedData& data) {
    return pipeline_design(fit, data.longit, data.surv.subjects, data.surv.baseline_age);
}

Eigen::VectorXd pipeline_lp(const PipelineFit& fit, const PipelineDesign& design) {
    if (design.columns != fit.cox.columns) {
        throw SchemaError("design columns do not match the fitted model");
    }
    return (design.matrix.rowwise() - fit.cox.center.transpose()) * fit.cox.coef;
}

Eigen::VectorXd pipeline_lp(const PipelineFit& fit, const AlignedData& data) {
    return pipeline_lp(fit, pipeline_design(fit, data));
}

Eigen::MatrixXd pipeline_survival(const PipelineFit& fit, const PipelineDesign& design,
                                  const std::vector<double>& times) {
    return predict_survival(fit.cox, design.matrix, design.columns, times);
}

Eigen::MatrixXd pipeline_survival(const PipelineFit& fit, const AlignedData& data,
                                  const std::vector<double>& times) {
    return pipeline_survival(fit, pipeline_design(fit, data), times);
}

PipelineFit fit_pipeline(const AlignedData& data, const ItemMap& map,
                         const PipelineConfig& config, std::uint64_t seed) {
    if (map.n_items() == 0) throw SchemaError("item map is empty");
    map_item_columns(map, data.longit);  // every map item must be present

    PipelineFit fit;
    fit.variant = config.variant;
    fit.map = map;

    const std::vector<double>& ages = data.surv.baseline_age;
    fit.include_age =
        std::any_of(ages.begin(), ages.end(), [&](double a) { return a != ages.front(); });

    if (config.variant == Variant::BASELINE_PCOX) {
        const std::vector<int> row_of_subject =
            locate_subjects(data.longit, data.surv.subjects);
        const Eigen::MatrixXd values = first_visit_values(map, data.longit, row_of_subject);
        fit.baseline_impute = Eigen::VectorXd::Zero(values.cols());
        for (Eigen::Index j = 0; j < values.cols(); ++j) {
            double sum = 0.0;
            int seen = 0;
            for (Eigen::Index i = 0; i < values.rows(); ++i) {
                if (std::isnan(values(i, j))) continue;
                sum += values(i, j);
                ++seen;
            }
            fit.baseline_impute[j] = seen > 0 ? sum / seen : 0.0;
        }
    } else if (config.variant == Variant::PRC_LMM) {
        const std::vector<std::size_t> cols = map_item_columns(map, data.longit);
        fit.lmm_fits.resize(map.n_items());
        parallel_for(map.n_items(), config.workers, [&](std::size_t j) {
            fit.lmm_fits[j] = fit_lmm(data.longit, cols[j]);
        });
        for (const LmmFit& m : fit.lmm_fits) {
            if (!m.converged) throw FitError("mixed model for item " + m.item + " did not converge");
        }
    } else {
        std::vector<std::size_t> single, multi;
        for (std::size_t s = 0; s < map.n_processes(); ++s) {
            (map.r(s) == 1 ? single : multi).push_back(s);
        }
        fit.lmm_fits.resize(single.size());
        fit.mlpmm_fits.resize(multi.size());
        const std::vector<std::size_t> cols = map_item_columns(map, data.longit);
        parallel_for(single.size() + multi.size(), config.workers, [&](std::size_t k) {
            if (k < single.size()) {
                const std::size_t item = map.items_of(single[k])[0];
                fit.lmm_fits[k] = fit_lmm(data.longit, cols[item]);
            } else {
                fit.mlpmm_fits[k - single.size()] = fit_mlpmm(data.longit, map, multi[k - single.size()]);
            }
        });
        for (const LmmFit& m : fit.lmm_fits) {
            if (!m.converged) throw FitError("mixed model for item " + m.item + " did not converge");
        }
        for (const MlpmmFit& m : fit.mlpmm_fits) {
            if (!m.converged) {
                throw FitError("latent-process model for item group starting at " +
                               (m.items.empty() ? std::string("?") : m.items.front()) +
                               " did not converge");
            }
        }
    }

    const PipelineDesign design = pipeline_design(fit, data);
    fit.columns = design.columns;

    PenaltyConfig penalty = config.penalty;
    if (penalty.lambda < 0.0) {
        if (!config.alpha_grid.empty()) {
            fit.nested = nested_cv(design.matrix, data.surv, penalty, config.alpha_grid,
                                   config.cv_folds, seed);
            fit.used_nested = true;
            penalty.alpha = fit.nested.alpha;
            penalty.lambda = fit.nested.lambda;
        } else {
            fit.cv = cv_lambda(design.matrix, data.surv, penalty, config.cv_folds, seed);
            penalty.lambda = fit.cv.lambda;
        }
    }
    fit.cox = fit_penalized_cox(design.matrix, design.columns, data.surv, penalty);
    return fit;
}

} // namespace prc
