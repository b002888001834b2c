#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <nlohmann/json.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "prc/errors.hpp"
#include "prc/pipeline.hpp"
#include "prc/serialize.hpp"
#include "prc/simulation.hpp"

using namespace prc;

namespace {

AlignedData study_data(const SimulatedStudy& study) {
    AlignedData data;
    data.longit = study.longitudinal;
    data.surv = study.survival;
    return data;
}

double inf_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    REQUIRE(a.size() == b.size());
    if (a.size() == 0) return 0.0;
    return (a - b).lpNorm<Eigen::Infinity>();
}

PipelineFit fit_lmm_bundle() {
    ScenarioSpec spec = scenario_spec(1, 80, VisitDesign::few);
    spec.p = 12;
    spec.active = 4;
    const SimulatedStudy study = generate_lmm_study(spec, 3101);
    PipelineConfig config;
    config.variant = Variant::PRC_LMM;
    config.penalty.alpha = 0.5;
    config.penalty.lambda = 0.05;
    return fit_pipeline(study_data(study), study.map, config, 77);
}

void check_cv_equal(const CvResult& a, const CvResult& b) {
    CHECK(a.lambda == b.lambda);
    CHECK(a.alpha == b.alpha);
    CHECK(a.lambdas == b.lambdas);
    CHECK(a.mean_deviance == b.mean_deviance);
    CHECK(a.folds == b.folds);
}

} // namespace

TEST_CASE("per-item bundle round-trips bit-identically") {
    const PipelineFit fit = fit_lmm_bundle();
    save_bundle(fit, "tmp_bundle_lmm.json");
    const PipelineFit back = load_bundle("tmp_bundle_lmm.json");

    CHECK(back.variant == fit.variant);
    CHECK(back.include_age == fit.include_age);
    CHECK(back.columns == fit.columns);
    CHECK(back.map.items() == fit.map.items());
    CHECK(back.map.processes() == fit.map.processes());
    CHECK(inf_diff(back.baseline_impute, fit.baseline_impute) == 0.0);

    REQUIRE(back.lmm_fits.size() == fit.lmm_fits.size());
    for (std::size_t q = 0; q < fit.lmm_fits.size(); ++q) {
        const LmmFit& a = fit.lmm_fits[q];
        const LmmFit& b = back.lmm_fits[q];
        CHECK(b.item == a.item);
        CHECK(b.beta0 == a.beta0);
        CHECK(b.beta1 == a.beta1);
        CHECK((b.D - a.D).lpNorm<Eigen::Infinity>() == 0.0);
        CHECK(b.sigma2_eps == a.sigma2_eps);
        CHECK(b.loglik == a.loglik);
        CHECK(b.converged == a.converged);
        CHECK(b.iterations == a.iterations);
    }
    CHECK(back.mlpmm_fits.empty());

    CHECK(back.cox.columns == fit.cox.columns);
    CHECK(inf_diff(back.cox.coef, fit.cox.coef) == 0.0);
    CHECK(back.cox.alpha == fit.cox.alpha);
    CHECK(back.cox.lambda == fit.cox.lambda);
    CHECK(inf_diff(back.cox.center, fit.cox.center) == 0.0);
    CHECK(inf_diff(back.cox.scale, fit.cox.scale) == 0.0);
    CHECK(back.cox.locked == fit.cox.locked);
    CHECK(back.cox.kkt == fit.cox.kkt);
    CHECK(back.cox.baseline.times == fit.cox.baseline.times);
    CHECK(back.cox.baseline.increments == fit.cox.baseline.increments);
    CHECK(inf_diff(back.cox.train_lp, fit.cox.train_lp) == 0.0);
}

TEST_CASE("reloaded bundle reproduces predictions bit-identically") {
    const PipelineFit fit = fit_lmm_bundle();
    save_bundle(fit, "tmp_bundle_pred.json");
    const PipelineFit back = load_bundle("tmp_bundle_pred.json");

    ScenarioSpec spec = scenario_spec(1, 40, VisitDesign::few);
    spec.p = 12;
    spec.active = 4;
    const SimulatedStudy fresh = generate_lmm_study(spec, 3102);

    CHECK(inf_diff(pipeline_lp(fit, study_data(fresh)), pipeline_lp(back, study_data(fresh))) == 0.0);
    const std::vector<double> times = {0.5, 1.0, 2.0, 4.0};
    const Eigen::MatrixXd sa = pipeline_survival(fit, study_data(fresh), times);
    const Eigen::MatrixXd sb = pipeline_survival(back, study_data(fresh), times);
    CHECK((sa - sb).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("bundle text is stable through a reload cycle") {
    const PipelineFit fit = fit_lmm_bundle();
    const std::string text1 = bundle_to_json(fit);
    const std::string text2 = bundle_to_json(bundle_from_json(text1));
    CHECK(text1 == text2);
}

TEST_CASE("latent-process bundle keeps tuning traces") {
    ScenarioSpec spec = scenario_spec(7, 60, VisitDesign::few);
    const SimulatedStudy study = generate_mlpmm_study(spec, 3107);
    PipelineConfig config;
    config.variant = Variant::PRC_MLPMM_U;
    config.penalty.alpha = 0.5;
    config.penalty.path_size = 12;
    config.alpha_grid = {0.5};
    config.cv_folds = 3;
    const PipelineFit fit = fit_pipeline(study_data(study), study.map, config, 78);
    REQUIRE(fit.used_nested);

    save_bundle(fit, "tmp_bundle_mlpmm.json");
    const PipelineFit back = load_bundle("tmp_bundle_mlpmm.json");

    REQUIRE(back.mlpmm_fits.size() == fit.mlpmm_fits.size());
    for (std::size_t s = 0; s < fit.mlpmm_fits.size(); ++s) {
        const MlpmmFit& a = fit.mlpmm_fits[s];
        const MlpmmFit& b = back.mlpmm_fits[s];
        CHECK(b.items == a.items);
        CHECK(inf_diff(b.beta0, a.beta0) == 0.0);
        CHECK(inf_diff(b.beta1, a.beta1) == 0.0);
        CHECK(inf_diff(b.sigma2_b, a.sigma2_b) == 0.0);
        CHECK(inf_diff(b.sigma2_eps, a.sigma2_eps) == 0.0);
        CHECK((b.Sigma_u - a.Sigma_u).lpNorm<Eigen::Infinity>() == 0.0);
        CHECK(b.loglik == a.loglik);
        CHECK(b.converged == a.converged);
        CHECK(b.iterations == a.iterations);
    }

    CHECK(back.used_nested);
    check_cv_equal(back.cv, fit.cv);
    CHECK(back.nested.alpha == fit.nested.alpha);
    CHECK(back.nested.lambda == fit.nested.lambda);
    CHECK(back.nested.alpha_grid == fit.nested.alpha_grid);
    CHECK(back.nested.outer_deviance == fit.nested.outer_deviance);
    REQUIRE(back.nested.inner.size() == fit.nested.inner.size());
    for (std::size_t k = 0; k < fit.nested.inner.size(); ++k)
        check_cv_equal(back.nested.inner[k], fit.nested.inner[k]);
    check_cv_equal(back.nested.final_cv, fit.nested.final_cv);

    const std::vector<double> times = {1.0, 2.5};
    const Eigen::MatrixXd sa = pipeline_survival(fit, study_data(study), times);
    const Eigen::MatrixXd sb = pipeline_survival(back, study_data(study), times);
    CHECK((sa - sb).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("baseline-variant bundle keeps the imputation vector") {
    ScenarioSpec spec = scenario_spec(1, 50, VisitDesign::few);
    spec.p = 8;
    spec.active = 3;
    const SimulatedStudy study = generate_lmm_study(spec, 3103);
    PipelineConfig config;
    config.variant = Variant::BASELINE_PCOX;
    config.penalty.alpha = 0.0;
    config.penalty.lambda = 0.1;
    const PipelineFit fit = fit_pipeline(study_data(study), study.map, config, 79);
    REQUIRE(fit.baseline_impute.size() == 8);

    save_bundle(fit, "tmp_bundle_base.json");
    const PipelineFit back = load_bundle("tmp_bundle_base.json");
    CHECK(back.variant == Variant::BASELINE_PCOX);
    CHECK(inf_diff(back.baseline_impute, fit.baseline_impute) == 0.0);
    CHECK(inf_diff(pipeline_lp(fit, study_data(study)), pipeline_lp(back, study_data(study))) == 0.0);
}

TEST_CASE("unknown bundle keys are ignored") {
    const PipelineFit fit = fit_lmm_bundle();
    nlohmann::json j = nlohmann::json::parse(bundle_to_json(fit));
    j["config"] = {{"seed", 7}, {"note", "audit echo"}};
    j["future_field"] = nlohmann::json::array({1, 2, 3});
    const PipelineFit back = bundle_from_json(j.dump());
    CHECK(inf_diff(back.cox.coef, fit.cox.coef) == 0.0);
}

TEST_CASE("load rejects malformed documents") {
    CHECK_THROWS_AS(load_bundle("tmp_no_such_bundle.json"), ParseError);
    CHECK_THROWS_AS(bundle_from_json("{ this is not json"), ParseError);
    CHECK_THROWS_AS(bundle_from_json("[1, 2, 3]"), SchemaError);

    const PipelineFit fit = fit_lmm_bundle();
    const nlohmann::json good = nlohmann::json::parse(bundle_to_json(fit));

    {
        nlohmann::json j = good;
        j["kind"] = "something_else";
        CHECK_THROWS_AS(bundle_from_json(j.dump()), SchemaError);
    }
    {
        nlohmann::json j = good;
        j["schema_version"] = 99;
        CHECK_THROWS_AS(bundle_from_json(j.dump()), SchemaError);
    }
    {
        nlohmann::json j = good;
        j.erase("cox");
        CHECK_THROWS_AS(bundle_from_json(j.dump()), SchemaError);
    }
    {
        nlohmann::json j = good;
        j["cox"]["coef"].erase(0);
        CHECK_THROWS_AS(bundle_from_json(j.dump()), SchemaError);
    }
    {
        nlohmann::json j = good;
        j["cox"]["locked"][0] = 2;
        CHECK_THROWS_AS(bundle_from_json(j.dump()), SchemaError);
    }
    {
        nlohmann::json j = good;
        j["cox"]["lambda"] = "cheap";
        CHECK_THROWS_AS(bundle_from_json(j.dump()), SchemaError);
    }
    {
        nlohmann::json j = good;
        j["cox"]["baseline"]["increments"].erase(0);
        CHECK_THROWS_AS(bundle_from_json(j.dump()), SchemaError);
    }
    {
        nlohmann::json j = good;
        j["columns"][0] = "mismatched";
        CHECK_THROWS_AS(bundle_from_json(j.dump()), SchemaError);
    }
    {
        nlohmann::json j = good;
        j["variant"] = "prc_unknown";
        CHECK_THROWS_AS(bundle_from_json(j.dump()), DomainError);
    }
    {
        nlohmann::json j = good;
        j["lmm_fits"][0]["d"] = nlohmann::json::array({1.0, 0.0, 0.0});
        CHECK_THROWS_AS(bundle_from_json(j.dump()), SchemaError);
    }
}

TEST_CASE("save refuses non-finite parameters") {
    PipelineFit fit = fit_lmm_bundle();
    fit.cox.coef[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(bundle_to_json(fit), DomainError);
}
