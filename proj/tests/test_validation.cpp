#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "prc/data.hpp"
#include "prc/errors.hpp"
#include "prc/metrics.hpp"
#include "prc/pipeline.hpp"
#include "prc/rng.hpp"
#include "prc/simulation.hpp"
#include "prc/validation.hpp"

using namespace prc;

namespace {

AlignedData study_data(const SimulatedStudy& study) {
    AlignedData data;
    data.longit = study.longitudinal;
    data.surv = study.survival;
    return data;
}

std::vector<std::size_t> identity_draw(std::size_t n) {
    std::vector<std::size_t> draw(n);
    std::iota(draw.begin(), draw.end(), std::size_t{0});
    return draw;
}

std::string suffixed(const std::string& id, std::size_t k, std::size_t count) {
    std::size_t width = 1;
    for (std::size_t rest = count - 1; rest >= 10; rest /= 10) ++width;
    std::string ordinal = std::to_string(k);
    ordinal.insert(0, width - ordinal.size(), '0');
    return id + "#" + ordinal;
}

std::vector<MetricRequest> two_metrics() {
    MetricRequest concordance;
    MetricRequest auc;
    auc.metric = MetricKind::td_auc;
    auc.horizon = 2.5;
    return {concordance, auc};
}

// Fixed-penalty ridge plan: no tuning randomness inside replicates.
BootstrapPlan fixed_plan(int replicates, std::uint64_t seed) {
    BootstrapPlan plan;
    plan.replicates = replicates;
    plan.seed = seed;
    plan.pipeline.variant = Variant::PRC_LMM;
    plan.pipeline.penalty.alpha = 0.0;
    plan.pipeline.penalty.lambda = 0.1;
    return plan;
}

SimulatedStudy small_study(std::uint64_t seed, int n = 60, int p = 8, int active = 3) {
    ScenarioSpec spec = scenario_spec(1, n, VisitDesign::few);
    spec.p = p;
    spec.active = active;
    return generate_lmm_study(spec, seed);
}

bool records_equal(const ReplicateRecord& a, const ReplicateRecord& b) {
    return a.replicate == b.replicate && a.stream == b.stream && a.ok == b.ok &&
           a.error == b.error && a.boot_score == b.boot_score && a.orig_score == b.orig_score;
}

} // namespace

TEST_CASE("bootstrap draws cover the index range with replacement") {
    const std::size_t n = 500;
    double mean_unique = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng rng(Rng::substream_seed(4242, s));
        const std::vector<std::size_t> draw = cluster_bootstrap_draw(n, rng);
        REQUIRE(draw.size() == n);
        for (std::size_t idx : draw) CHECK(idx < n);
        const std::set<std::size_t> unique(draw.begin(), draw.end());
        mean_unique += static_cast<double>(unique.size()) / static_cast<double>(n);
    }
    mean_unique /= 20.0;
    // expected distinct fraction 1 - (1 - 1/n)^n = 0.632
    CHECK(mean_unique > 0.602);
    CHECK(mean_unique < 0.662);

    Rng rng(5);
    const std::vector<std::size_t> single = cluster_bootstrap_draw(1, rng);
    CHECK(single == std::vector<std::size_t>{0});
    CHECK_THROWS_AS(cluster_bootstrap_draw(0, rng), DomainError);
}

TEST_CASE("resampling replicates whole subject blocks under fresh ids") {
    const SimulatedStudy study = small_study(301, 40);
    const AlignedData data = study_data(study);
    const std::size_t n = data.surv.n();

    // duplicate subject 5, drop others deterministically
    std::vector<std::size_t> draw(n);
    for (std::size_t k = 0; k < n; ++k) draw[k] = (k < 2) ? 5 : (k % n);
    const AlignedData sample = cluster_bootstrap_sample(data, draw);

    CHECK(sample.surv.n() == n);
    std::size_t expected_rows = 0;
    for (std::size_t idx : draw) expected_rows += data.longit.visits(idx);
    CHECK(sample.longit.n_rows() == expected_rows);
    CHECK(sample.longit.items == data.longit.items);
    CHECK(sample.longit.subjects == sample.surv.subjects);

    const std::set<std::string> ids(sample.surv.subjects.begin(), sample.surv.subjects.end());
    CHECK(ids.size() == n);  // replicated draws get distinct ids

    // both copies of subject 5 carry its full block, bit for bit
    const std::string src = data.longit.subjects[5];
    for (std::size_t k : {std::size_t{0}, std::size_t{1}}) {
        const std::string id = suffixed(src, k, draw.size());
        const auto pos = std::find(sample.longit.subjects.begin(), sample.longit.subjects.end(), id);
        REQUIRE(pos != sample.longit.subjects.end());
        const std::size_t i = static_cast<std::size_t>(pos - sample.longit.subjects.begin());
        REQUIRE(sample.longit.visits(i) == data.longit.visits(5));
        for (std::size_t v = 0; v < data.longit.visits(5); ++v) {
            const std::size_t rs = sample.longit.row_begin[i] + v;
            const std::size_t rd = data.longit.row_begin[5] + v;
            CHECK(sample.longit.ages[rs] == data.longit.ages[rd]);
            const Eigen::VectorXd diff =
                (sample.longit.values.row(static_cast<Eigen::Index>(rs)) -
                 data.longit.values.row(static_cast<Eigen::Index>(rd)))
                    .transpose();
            bool same = true;
            for (Eigen::Index c = 0; c < diff.size(); ++c) {
                const double a = sample.longit.values(static_cast<Eigen::Index>(rs), c);
                const double b = data.longit.values(static_cast<Eigen::Index>(rd), c);
                if (a != b && !(std::isnan(a) && std::isnan(b))) same = false;
            }
            CHECK(same);
        }
        const std::size_t j = static_cast<std::size_t>(
            std::find(sample.surv.subjects.begin(), sample.surv.subjects.end(), id) -
            sample.surv.subjects.begin());
        CHECK(sample.surv.time[j] == data.surv.time[5]);
        CHECK(sample.surv.status[j] == data.surv.status[5]);
        CHECK(sample.surv.baseline_age[j] == data.surv.baseline_age[5]);
    }

    CHECK_THROWS_AS(cluster_bootstrap_sample(data, {}), DomainError);
    CHECK_THROWS_AS(cluster_bootstrap_sample(data, {n}), DomainError);
}

TEST_CASE("identity draw reproduces the study content exactly") {
    const SimulatedStudy study = small_study(302, 45);
    const AlignedData data = study_data(study);
    const AlignedData sample = cluster_bootstrap_sample(data, identity_draw(data.surv.n()));

    REQUIRE(sample.longit.n_rows() == data.longit.n_rows());
    CHECK(sample.longit.row_begin == data.longit.row_begin);
    CHECK(sample.longit.ages == data.longit.ages);
    bool values_same = true;
    for (Eigen::Index r = 0; r < data.longit.values.rows(); ++r) {
        for (Eigen::Index c = 0; c < data.longit.values.cols(); ++c) {
            const double a = sample.longit.values(r, c);
            const double b = data.longit.values(r, c);
            if (a != b && !(std::isnan(a) && std::isnan(b))) values_same = false;
        }
    }
    CHECK(values_same);
    CHECK(sample.surv.time == data.surv.time);
    CHECK(sample.surv.status == data.surv.status);
    CHECK(sample.surv.baseline_age == data.surv.baseline_age);
}

TEST_CASE("degenerate resampler yields zero optimism exactly") {
    const SimulatedStudy study = small_study(303);
    const AlignedData data = study_data(study);

    BootstrapPlan plan = fixed_plan(3, 77);
    plan.resampler = [](std::size_t n, std::uint64_t, Rng&) { return identity_draw(n); };
    const std::vector<MetricRequest> metrics = two_metrics();
    const ValidationReport report = run_cbocp(data, study.map, plan, metrics);

    CHECK(report.n_failed == 0);
    REQUIRE(report.replicates.size() == 3);
    for (std::size_t m = 0; m < metrics.size(); ++m) {
        CHECK(report.optimism[m] == 0.0);
        CHECK(report.corrected[m] == report.naive[m]);
        for (const ReplicateRecord& rec : report.replicates) {
            REQUIRE(rec.ok);
            CHECK(rec.boot_score[m] == report.naive[m]);
            CHECK(rec.orig_score[m] == report.naive[m]);
        }
    }
}

TEST_CASE("fixed seed reproduces the report bit-identically for any worker count") {
    const SimulatedStudy study = small_study(304, 50, 6, 3);
    const AlignedData data = study_data(study);

    BootstrapPlan plan;
    plan.replicates = 2;
    plan.seed = 99;
    plan.pipeline.variant = Variant::PRC_LMM;
    plan.pipeline.penalty.alpha = 0.0;   // lambda < 0: selected by CV inside each replicate
    plan.pipeline.penalty.path_size = 15;
    plan.pipeline.cv_folds = 3;

    const std::vector<MetricRequest> metrics = two_metrics();
    const ValidationReport a = run_cbocp(data, study.map, plan, metrics);
    const ValidationReport b = run_cbocp(data, study.map, plan, metrics);
    BootstrapPlan wide = plan;
    wide.pipeline.workers = 4;
    const ValidationReport c = run_cbocp(data, study.map, wide, metrics);

    CHECK(report_to_json(a) == report_to_json(b));
    CHECK(report_to_json(a) == report_to_json(c));
    CHECK(report_to_csv(a) == report_to_csv(c));
    REQUIRE(a.replicates.size() == 2);
    for (std::size_t i = 0; i < a.replicates.size(); ++i) {
        CHECK(records_equal(a.replicates[i], b.replicates[i]));
        CHECK(records_equal(a.replicates[i], c.replicates[i]));
    }
}

TEST_CASE("replicates rebuild from their recorded stream and ignore the original fit") {
    const SimulatedStudy study = small_study(305, 50, 6, 3);
    const AlignedData data = study_data(study);
    BootstrapPlan plan = fixed_plan(2, 1234);
    const std::vector<MetricRequest> metrics = two_metrics();

    const PipelineFit original =
        fit_pipeline(data, study.map, plan.pipeline, Rng::substream_seed(plan.seed, 0));
    const ValidationReport report = run_cbocp(data, study.map, plan, metrics, original);
    REQUIRE(report.replicates.size() == 2);
    REQUIRE(report.replicates[1].ok);

    // replicate 2 recomputed in isolation from its seed stream
    const ReplicateSeeds seeds = replicate_seeds(plan.seed, 2);
    CHECK(report.replicates[1].stream == 2);
    Rng rng(seeds.draw);
    const AlignedData boot =
        cluster_bootstrap_sample(data, cluster_bootstrap_draw(data.surv.n(), rng));
    const PipelineFit refit = fit_pipeline(boot, study.map, plan.pipeline, seeds.fit);
    const Eigen::VectorXd lp_boot = pipeline_lp(refit, boot);
    const Eigen::VectorXd lp_orig = pipeline_lp(refit, data);
    CHECK(c_index(lp_boot, boot.surv) == report.replicates[1].boot_score[0]);
    CHECK(td_auc(lp_boot, boot.surv, 2.5) == report.replicates[1].boot_score[1]);
    CHECK(c_index(lp_orig, data.surv) == report.replicates[1].orig_score[0]);
    CHECK(td_auc(lp_orig, data.surv, 2.5) == report.replicates[1].orig_score[1]);

    // corrupting the original fit moves the naive value but no replicate record
    PipelineFit corrupt = original;
    corrupt.cox.coef = -3.0 * corrupt.cox.coef;
    const ValidationReport tainted = run_cbocp(data, study.map, plan, metrics, corrupt);
    CHECK(tainted.naive[0] != report.naive[0]);
    REQUIRE(tainted.replicates.size() == report.replicates.size());
    for (std::size_t i = 0; i < report.replicates.size(); ++i) {
        CHECK(records_equal(tainted.replicates[i], report.replicates[i]));
    }
    CHECK(tainted.optimism == report.optimism);
}

TEST_CASE("failed replicates are logged, skipped, and capped") {
    const SimulatedStudy study = small_study(306);
    const AlignedData data = study_data(study);
    const std::vector<MetricRequest> metrics = two_metrics();

    // a draw of one censored subject repeated n times cannot be scored
    std::size_t censored = data.surv.n();
    for (std::size_t i = 0; i < data.surv.n(); ++i) {
        if (data.surv.status[i] == 0) {
            censored = i;
            break;
        }
    }
    REQUIRE(censored < data.surv.n());
    const std::vector<std::size_t> bad_draw(data.surv.n(), censored);

    BootstrapPlan plan = fixed_plan(8, 55);
    plan.resampler = [&](std::size_t n, std::uint64_t b, Rng&) {
        return b == 3 ? bad_draw : identity_draw(n);
    };
    const ValidationReport report = run_cbocp(data, study.map, plan, metrics);
    CHECK(report.n_failed == 1);
    REQUIRE(report.replicates.size() == 8);
    CHECK(!report.replicates[2].ok);
    CHECK(!report.replicates[2].error.empty());
    CHECK(report.replicates[2].boot_score.empty());
    for (std::size_t i = 0; i < 8; ++i) {
        if (i != 2) CHECK(report.replicates[i].ok);
    }
    // identity draws elsewhere: optimism still exactly zero over the survivors
    CHECK(report.optimism[0] == 0.0);
    CHECK(report.corrected[1] == report.naive[1]);

    // exactly 20% failures is tolerated
    BootstrapPlan boundary = fixed_plan(5, 56);
    boundary.resampler = [&](std::size_t n, std::uint64_t b, Rng&) {
        return b == 1 ? bad_draw : identity_draw(n);
    };
    const ValidationReport edge = run_cbocp(data, study.map, boundary, metrics);
    CHECK(edge.n_failed == 1);

    // more than 20% aborts the run
    BootstrapPlan doomed = fixed_plan(8, 57);
    doomed.resampler = [&](std::size_t n, std::uint64_t b, Rng&) {
        return b <= 3 ? bad_draw : identity_draw(n);
    };
    CHECK_THROWS_AS(run_cbocp(data, study.map, doomed, metrics), ValidationError);
}

TEST_CASE("overfit model shows positive optimism under real resampling") {
    const SimulatedStudy study = small_study(307, 50, 12, 4);
    const AlignedData data = study_data(study);

    BootstrapPlan plan = fixed_plan(12, 2026);
    plan.pipeline.penalty.lambda = 0.01;  // near-unpenalized: optimistic on purpose
    const std::vector<MetricRequest> metrics = two_metrics();
    const ValidationReport report = run_cbocp(data, study.map, plan, metrics);

    CHECK(report.n_failed == 0);
    for (std::size_t m = 0; m < metrics.size(); ++m) {
        CHECK(report.optimism[m] > 0.0);
        CHECK(report.corrected[m] < report.naive[m]);
        CHECK(report.corrected[m] == report.naive[m] - report.optimism[m]);
    }
}

TEST_CASE("latent-process pipelines run through the bootstrap unchanged") {
    ScenarioSpec spec = scenario_spec(7, 60, VisitDesign::few);
    spec.p = 4;
    const SimulatedStudy study = generate_mlpmm_study(spec, 308);
    const AlignedData data = study_data(study);

    BootstrapPlan plan = fixed_plan(4, 11);
    plan.pipeline.variant = Variant::PRC_MLPMM_U;
    const std::vector<MetricRequest> metrics = {MetricRequest{}};
    const ValidationReport report = run_cbocp(data, study.map, plan, metrics);

    CHECK(report.n_failed == 0);
    for (const ReplicateRecord& rec : report.replicates) {
        REQUIRE(rec.ok);
        CHECK(rec.boot_score[0] > 0.0);
        CHECK(rec.boot_score[0] < 1.0);
        CHECK(rec.orig_score[0] > 0.0);
        CHECK(rec.orig_score[0] < 1.0);
    }
    CHECK(report.corrected[0] == report.naive[0] - report.optimism[0]);
}

TEST_CASE("report serializes to JSON and a per-replicate table") {
    const SimulatedStudy study = small_study(309);
    const AlignedData data = study_data(study);
    BootstrapPlan plan = fixed_plan(3, 21);
    const std::vector<MetricRequest> metrics = two_metrics();
    const ValidationReport report = run_cbocp(data, study.map, plan, metrics);

    const nlohmann::json j = nlohmann::json::parse(report_to_json(report));
    CHECK(j.at("kind") == "prc_validation_report");
    CHECK(j.at("schema_version") == 1);
    CHECK(j.at("metrics").size() == 2);
    CHECK(j.at("metrics")[0].at("metric") == "c_index");
    CHECK(j.at("metrics")[1].at("metric") == "td_auc");
    CHECK(j.at("metrics")[1].at("horizon") == 2.5);
    CHECK(j.at("naive").size() == 2);
    CHECK(j.at("replicates") == 3);
    CHECK(j.at("failed") == 0);
    REQUIRE(j.at("records").size() == 3);
    CHECK(j.at("records")[0].at("replicate") == 1);
    CHECK(j.at("records")[0].at("ok") == true);
    CHECK(j.at("records")[0].at("boot").size() == 2);
    for (std::size_t m = 0; m < 2; ++m) {
        CHECK(j.at("corrected")[m].get<double>() ==
              j.at("naive")[m].get<double>() - j.at("optimism")[m].get<double>());
    }

    const std::string csv = report_to_csv(report);
    std::istringstream lines(csv);
    std::string line;
    REQUIRE(std::getline(lines, line));
    CHECK(line == "replicate,metric,horizon,boot,original");
    std::size_t rows = 0;
    std::vector<std::string> first;
    while (std::getline(lines, line)) {
        if (rows == 0) {
            std::istringstream fields(line);
            std::string f;
            while (std::getline(fields, f, ',')) first.push_back(f);
        }
        ++rows;
    }
    CHECK(rows == 3 * 2);  // every successful replicate x metric
    REQUIRE(first.size() == 5);
    CHECK(first[0] == "1");
    CHECK(first[1] == "c_index");
    CHECK(std::stod(first[3]) == report.replicates[0].boot_score[0]);
    CHECK(std::stod(first[4]) == report.replicates[0].orig_score[0]);
}

TEST_CASE("plan validation rejects degenerate requests") {
    const SimulatedStudy study = small_study(310, 30, 4, 2);
    const AlignedData data = study_data(study);
    const PipelineFit fit = fit_pipeline(data, study.map, fixed_plan(1, 0).pipeline, 1);

    BootstrapPlan empty_b = fixed_plan(0, 1);
    CHECK_THROWS_AS(run_cbocp(data, study.map, empty_b, two_metrics(), fit), DomainError);
    BootstrapPlan ok = fixed_plan(1, 1);
    CHECK_THROWS_AS(run_cbocp(data, study.map, ok, {}, fit), DomainError);
}
