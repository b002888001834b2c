#include "prc/validation.hpp"

#include <cmath>
#include <cstddef>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "prc/csv.hpp"
#include "prc/errors.hpp"
#include "prc/parallel.hpp"

namespace prc {

namespace {

using nlohmann::json;

const char* metric_name(MetricKind kind) {
    return kind == MetricKind::c_index ? "c_index" : "td_auc";
}

std::vector<double> score_fit(const PipelineFit& fit, const AlignedData& data,
                              const std::vector<MetricRequest>& metrics) {
    const Eigen::VectorXd lp = pipeline_lp(fit, data);
    std::vector<double> out;
    out.reserve(metrics.size());
    for (const MetricRequest& req : metrics) {
        if (req.metric == MetricKind::c_index) {
            out.push_back(c_index(lp, data.surv, req.tau));
        } else {
            out.push_back(td_auc(lp, data.surv, req.horizon));
        }
    }
    return out;
}

double checked(double value) {
    if (!std::isfinite(value)) throw DomainError("non-finite value in validation report");
    return value;
}

json scores_json(const std::vector<double>& values) {
    json arr = json::array();
    for (double v : values) arr.push_back(checked(v));
    return arr;
}

} // namespace

ReplicateSeeds replicate_seeds(std::uint64_t master, std::uint64_t replicate) {
    const std::uint64_t stream = Rng::substream_seed(master, replicate);
    ReplicateSeeds seeds;
    seeds.draw = Rng::substream_seed(stream, 1);
    seeds.fit = Rng::substream_seed(stream, 2);
    return seeds;
}

std::vector<std::size_t> cluster_bootstrap_draw(std::size_t n, Rng& rng) {
    if (n == 0) throw DomainError("cannot resample an empty subject list");
    std::vector<std::size_t> draw(n);
    for (std::size_t k = 0; k < n; ++k) {
        draw[k] = static_cast<std::size_t>(rng.below(n));
    }
    return draw;
}

AlignedData cluster_bootstrap_sample(const AlignedData& data,
                                     const std::vector<std::size_t>& draw) {
    const std::size_t n = data.surv.n();
    if (draw.empty()) throw DomainError("empty bootstrap draw");
    std::size_t width = 1;
    for (std::size_t rest = draw.size() - 1; rest >= 10; rest /= 10) ++width;

    std::size_t total_rows = 0;
    for (std::size_t idx : draw) {
        if (idx >= n) throw DomainError("bootstrap draw index out of range");
        total_rows += data.longit.visits(idx);
    }

    std::vector<std::string> surv_ids(draw.size());
    std::vector<double> baseline_age(draw.size());
    std::vector<double> time(draw.size());
    std::vector<int> status(draw.size());

    std::vector<std::string> row_subject;
    std::vector<double> row_age;
    row_subject.reserve(total_rows);
    row_age.reserve(total_rows);
    Eigen::MatrixXd row_values(total_rows, data.longit.values.cols());

    std::size_t out_row = 0;
    for (std::size_t k = 0; k < draw.size(); ++k) {
        const std::size_t idx = draw[k];
        std::string ordinal = std::to_string(k);
        ordinal.insert(0, width - ordinal.size(), '0');
        const std::string id = data.longit.subjects[idx] + "#" + ordinal;

        surv_ids[k] = id;
        baseline_age[k] = data.surv.baseline_age[idx];
        time[k] = data.surv.time[idx];
        status[k] = data.surv.status[idx];

        for (std::size_t r = data.longit.row_begin[idx]; r < data.longit.row_begin[idx + 1];
             ++r) {
            row_subject.push_back(id);
            row_age.push_back(data.longit.ages[r]);
            row_values.row(static_cast<Eigen::Index>(out_row++)) =
                data.longit.values.row(static_cast<Eigen::Index>(r));
        }
    }

    LongitudinalDataset longit = make_longitudinal(data.longit.items, std::move(row_subject),
                                                   std::move(row_age), std::move(row_values));
    SurvivalDataset surv = make_survival(std::move(surv_ids), std::move(baseline_age),
                                         std::move(time), std::move(status));
    return align(std::move(longit), std::move(surv));
}

ValidationReport run_cbocp(const AlignedData& data, const ItemMap& map, const BootstrapPlan& plan,
                           const std::vector<MetricRequest>& metrics,
                           const PipelineFit& original_fit) {
    if (plan.replicates < 1) throw DomainError("bootstrap replicate count must be positive");
    if (metrics.empty()) throw DomainError("no metrics requested");

    ValidationReport report;
    report.metrics = metrics;
    report.naive = score_fit(original_fit, data, metrics);

    const std::size_t B = static_cast<std::size_t>(plan.replicates);
    report.replicates.resize(B);
    parallel_for(B, plan.pipeline.workers, [&](std::size_t i) {
        const std::uint64_t b = static_cast<std::uint64_t>(i) + 1;
        ReplicateRecord rec;
        rec.replicate = b;
        rec.stream = b;
        const ReplicateSeeds seeds = replicate_seeds(plan.seed, b);
        try {
            Rng rng(seeds.draw);
            const std::vector<std::size_t> draw =
                plan.resampler ? plan.resampler(data.surv.n(), b, rng)
                               : cluster_bootstrap_draw(data.surv.n(), rng);
            const AlignedData boot = cluster_bootstrap_sample(data, draw);
            PipelineConfig config = plan.pipeline;
            config.workers = 1;  // parallelism lives at the replicate level
            const PipelineFit fit = fit_pipeline(boot, map, config, seeds.fit);
            rec.boot_score = score_fit(fit, boot, metrics);
            rec.orig_score = score_fit(fit, data, metrics);
            rec.ok = true;
        } catch (const Error& e) {
            rec.ok = false;
            rec.error = e.what();
            rec.boot_score.clear();
            rec.orig_score.clear();
        }
        report.replicates[i] = std::move(rec);
    });

    std::size_t n_ok = 0;
    std::string first_error;
    for (const ReplicateRecord& rec : report.replicates) {
        if (rec.ok) ++n_ok;
        else if (first_error.empty()) first_error = rec.error;
    }
    report.n_failed = B - n_ok;
    if (5 * report.n_failed > B) {
        throw ValidationError("bootstrap validation failed: " + std::to_string(report.n_failed) +
                              " of " + std::to_string(B) + " replicates errored (first: " +
                              first_error + ")");
    }

    // Eq. over successful replicates, accumulated in replicate order so the
    // result does not depend on execution interleaving.
    report.optimism.assign(metrics.size(), 0.0);
    for (const ReplicateRecord& rec : report.replicates) {
        if (!rec.ok) continue;
        for (std::size_t m = 0; m < metrics.size(); ++m) {
            report.optimism[m] += rec.boot_score[m] - rec.orig_score[m];
        }
    }
    report.corrected.resize(metrics.size());
    for (std::size_t m = 0; m < metrics.size(); ++m) {
        report.optimism[m] /= static_cast<double>(n_ok);
        report.corrected[m] = report.naive[m] - report.optimism[m];
    }
    return report;
}

ValidationReport run_cbocp(const AlignedData& data, const ItemMap& map, const BootstrapPlan& plan,
                           const std::vector<MetricRequest>& metrics) {
    const PipelineFit fit =
        fit_pipeline(data, map, plan.pipeline, Rng::substream_seed(plan.seed, 0));
    return run_cbocp(data, map, plan, metrics, fit);
}

std::string report_to_json(const ValidationReport& report) {
    json j;
    j["kind"] = "prc_validation_report";
    j["schema_version"] = 1;
    json reqs = json::array();
    for (const MetricRequest& req : report.metrics) {
        reqs.push_back({{"metric", metric_name(req.metric)},
                        {"horizon", checked(req.horizon)},
                        {"tau", checked(req.tau)}});
    }
    j["metrics"] = std::move(reqs);
    j["naive"] = scores_json(report.naive);
    j["optimism"] = scores_json(report.optimism);
    j["corrected"] = scores_json(report.corrected);
    j["replicates"] = report.replicates.size();
    j["failed"] = report.n_failed;
    json records = json::array();
    for (const ReplicateRecord& rec : report.replicates) {
        json r;
        r["replicate"] = rec.replicate;
        r["stream"] = rec.stream;
        r["ok"] = rec.ok;
        if (rec.ok) {
            r["boot"] = scores_json(rec.boot_score);
            r["original"] = scores_json(rec.orig_score);
        } else {
            r["error"] = rec.error;
        }
        records.push_back(std::move(r));
    }
    j["records"] = std::move(records);
    return j.dump(2);
}

std::string report_to_csv(const ValidationReport& report) {
    std::string out = "replicate,metric,horizon,boot,original\n";
    for (const ReplicateRecord& rec : report.replicates) {
        if (!rec.ok) continue;
        for (std::size_t m = 0; m < report.metrics.size(); ++m) {
            const MetricRequest& req = report.metrics[m];
            const double horizon = req.metric == MetricKind::td_auc ? req.horizon : req.tau;
            out += std::to_string(rec.replicate);
            out += ',';
            out += metric_name(req.metric);
            out += ',';
            out += csv::format_double(horizon);
            out += ',';
            out += csv::format_double(rec.boot_score[m]);
            out += ',';
            out += csv::format_double(rec.orig_score[m]);
            out += '\n';
        }
    }
    return out;
}

} // namespace prc
