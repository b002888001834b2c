#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "prc/data.hpp"
#include "prc/errors.hpp"
#include "prc/lmm.hpp"
#include "prc/rng.hpp"

using namespace prc;

namespace {

struct SimData {
    LongitudinalDataset data;
    std::vector<Eigen::MatrixXd> Z;   // observed design rows per subject
    std::vector<Eigen::VectorXd> y;   // observed values per subject
};

// One-item longitudinal sample from the exact LMM generative model.
SimData simulate(Rng& rng, int n_subjects, const std::vector<double>& schedule,
                 const Eigen::Vector2d& beta, const Eigen::Matrix2d& D, double sigma2,
                 double missing_prob = 0.0) {
    Eigen::LLT<Eigen::Matrix2d> llt(D);
    Eigen::Matrix2d L = llt.matrixL();
    std::vector<std::string> subj;
    std::vector<double> age;
    std::vector<double> val;
    SimData out;
    for (int i = 0; i < n_subjects; ++i) {
        Eigen::Vector2d b = L * Eigen::Vector2d(rng.normal(), rng.normal());
        std::vector<double> za, zy;
        for (double a : schedule) {
            if (missing_prob > 0.0 && rng.uniform() < missing_prob) continue;
            double y = (beta[0] + b[0]) + (beta[1] + b[1]) * a + std::sqrt(sigma2) * rng.normal();
            subj.push_back("s" + std::to_string(1000 + i));
            age.push_back(a);
            val.push_back(y);
            za.push_back(a);
            zy.push_back(y);
        }
        if (za.empty()) {   // keep every subject present with one visit
            double a = schedule.front();
            double y = (beta[0] + b[0]) + (beta[1] + b[1]) * a + std::sqrt(sigma2) * rng.normal();
            subj.push_back("s" + std::to_string(1000 + i));
            age.push_back(a);
            val.push_back(y);
            za.push_back(a);
            zy.push_back(y);
        }
        Eigen::MatrixXd Z(za.size(), 2);
        Eigen::VectorXd yv(zy.size());
        for (std::size_t r = 0; r < za.size(); ++r) {
            Z(static_cast<Eigen::Index>(r), 0) = 1.0;
            Z(static_cast<Eigen::Index>(r), 1) = za[r];
            yv[static_cast<Eigen::Index>(r)] = zy[r];
        }
        out.Z.push_back(Z);
        out.y.push_back(yv);
    }
    Eigen::MatrixXd values(val.size(), 1);
    for (std::size_t r = 0; r < val.size(); ++r) values(static_cast<Eigen::Index>(r), 0) = val[r];
    out.data = make_longitudinal({"y"}, subj, age, values);
    return out;
}

Eigen::Matrix2d example_D() {
    Eigen::Matrix2d D;
    D << 1.3, -0.4, -0.4, 0.7;
    return D;
}

} // namespace

TEST_CASE("marginal log-likelihood equals the dense multivariate normal") {
    Rng rng(11);
    SimData sim = simulate(rng, 7, {0.0, 0.8, 1.6, 2.4}, {1.0, -0.5}, example_D(), 0.35, 0.3);
    LmmFit fit;
    fit.beta0 = 0.9;
    fit.beta1 = -0.3;
    fit.D = example_D();
    fit.sigma2_eps = 0.5;
    Eigen::VectorXd theta = lmm_pack(fit);
    LmmStats stats = lmm_stats(sim.data, 0);
    double ours = -lmm_negloglik(theta, stats, nullptr);

    double expected = 0.0;
    Eigen::Vector2d beta(fit.beta0, fit.beta1);
    for (std::size_t i = 0; i < sim.Z.size(); ++i) {
        const Eigen::MatrixXd& Z = sim.Z[i];
        Eigen::MatrixXd V = Z * fit.D * Z.transpose();
        V.diagonal().array() += fit.sigma2_eps;
        expected += oracle::mvn_logpdf(sim.y[i], Z * beta, V);
    }
    CHECK(std::abs(ours - expected) <= 1e-10 * std::abs(expected));
}

TEST_CASE("analytic gradient matches finite differences") {
    Rng rng(17);
    SimData sim = simulate(rng, 12, {0.0, 0.5, 1.0, 2.0, 3.5}, {0.3, 0.8}, example_D(), 0.6, 0.2);
    LmmStats stats = lmm_stats(sim.data, 0);
    auto f = [&stats](const Eigen::VectorXd& t) { return lmm_negloglik(t, stats, nullptr); };

    for (int rep = 0; rep < 5; ++rep) {
        Eigen::VectorXd theta(6);
        theta << rng.normal(), rng.normal(), 0.3 * rng.normal(), 0.3 * rng.normal(),
            0.3 * rng.normal(), 0.5 * rng.normal();
        Eigen::VectorXd grad;
        lmm_negloglik(theta, stats, &grad);
        Eigen::VectorXd fd = oracle::finite_diff_grad(f, theta);
        for (int j = 0; j < 6; ++j) {
            CHECK(std::abs(grad[j] - fd[j]) <= 1e-4 * (1.0 + std::abs(fd[j])));
        }
    }
}

TEST_CASE("maximum likelihood recovers the generating parameters") {
    Rng rng(23);
    Eigen::Matrix2d D;
    D << 1.0, 0.3, 0.3, 0.5;
    SimData sim = simulate(rng, 400, {0.0, 1.0, 2.0, 3.0, 4.0}, {2.0, -1.0}, D, 0.25);
    LmmFit fit = fit_lmm(sim.data, 0);
    CHECK(fit.converged);
    CHECK(std::abs(fit.beta0 - 2.0) < 0.2);
    CHECK(std::abs(fit.beta1 + 1.0) < 0.1);
    CHECK(std::abs(fit.D(0, 0) - 1.0) < 0.25);
    CHECK(std::abs(fit.D(0, 1) - 0.3) < 0.15);
    CHECK(std::abs(fit.D(1, 1) - 0.5) < 0.15);
    CHECK(std::abs(fit.sigma2_eps - 0.25) < 0.05);
}

TEST_CASE("fitting is deterministic") {
    Rng rng(29);
    SimData sim = simulate(rng, 40, {0.0, 1.0, 2.0}, {0.0, 0.0}, example_D(), 0.4, 0.1);
    LmmFit a = fit_lmm(sim.data, 0);
    LmmFit b = fit_lmm(sim.data, 0);
    CHECK(a.beta0 == b.beta0);
    CHECK(a.beta1 == b.beta1);
    CHECK(a.D == b.D);
    CHECK(a.sigma2_eps == b.sigma2_eps);
    CHECK(a.loglik == b.loglik);
}

TEST_CASE("cloning every subject leaves the estimate unchanged") {
    Rng rng(31);
    SimData sim = simulate(rng, 60, {0.0, 1.0, 2.5}, {1.0, 0.5}, example_D(), 0.5);
    LmmFit base = fit_lmm(sim.data, 0);

    std::vector<std::string> subj;
    std::vector<double> age, val;
    for (std::size_t i = 0; i < sim.data.n_subjects(); ++i) {
        for (std::size_t r = sim.data.row_begin[i]; r < sim.data.row_begin[i + 1]; ++r) {
            for (const char* tag : {"a", "b"}) {
                subj.push_back(sim.data.subjects[i] + tag);
                age.push_back(sim.data.ages[r]);
                val.push_back(sim.data.values(static_cast<Eigen::Index>(r), 0));
            }
        }
    }
    Eigen::MatrixXd values(val.size(), 1);
    for (std::size_t r = 0; r < val.size(); ++r) values(static_cast<Eigen::Index>(r), 0) = val[r];
    LongitudinalDataset doubled = make_longitudinal({"y"}, subj, age, values);
    LmmFit dup = fit_lmm(doubled, 0);
    CHECK(std::abs(dup.beta0 - base.beta0) < 1e-5);
    CHECK(std::abs(dup.beta1 - base.beta1) < 1e-5);
    CHECK((dup.D - base.D).lpNorm<Eigen::Infinity>() < 1e-4);
    CHECK(std::abs(dup.sigma2_eps - base.sigma2_eps) < 1e-5);
    CHECK(std::abs(dup.loglik - 2.0 * base.loglik) < 1e-5 * std::abs(base.loglik));
}

TEST_CASE("predicted random effects equal the joint-gaussian conditional mean") {
    Rng rng(37);
    for (int rep = 0; rep < 20; ++rep) {
        SimData sim = simulate(rng, 6, {0.0, 0.7, 1.9, 3.1}, {0.2, 0.1}, example_D(), 0.3, 0.25);
        LmmFit fit;
        fit.beta0 = 0.2 + 0.1 * rng.normal();
        fit.beta1 = 0.1 * rng.normal();
        Eigen::Matrix2d root;
        root << 1.0 + 0.2 * rng.uniform(), 0.0, 0.4 * rng.normal(), 0.8 + 0.2 * rng.uniform();
        fit.D = root * root.transpose();
        fit.sigma2_eps = 0.2 + rng.uniform();
        RanefPrediction pred = predict_ranef_lmm(fit, sim.data, 0);
        Eigen::Vector2d beta(fit.beta0, fit.beta1);
        for (std::size_t i = 0; i < sim.Z.size(); ++i) {
            Eigen::VectorXd resid_var =
                Eigen::VectorXd::Constant(sim.y[i].size(), fit.sigma2_eps);
            Eigen::VectorXd want = oracle::conditional_mean(
                sim.y[i], sim.Z[i], beta, sim.Z[i], fit.D, resid_var);
            Eigen::Vector2d got = pred.effects.row(static_cast<Eigen::Index>(i));
            CHECK((got - Eigen::Vector2d(want)).lpNorm<Eigen::Infinity>() < 1e-10);
        }
    }
}

TEST_CASE("prediction covers subjects unseen during fitting") {
    Rng rng(41);
    SimData train = simulate(rng, 80, {0.0, 1.0, 2.0, 3.0}, {1.5, -0.4}, example_D(), 0.4);
    LmmFit fit = fit_lmm(train.data, 0);
    SimData fresh = simulate(rng, 10, {0.0, 1.0, 2.0, 3.0}, {1.5, -0.4}, example_D(), 0.4);
    RanefPrediction pred = predict_ranef_lmm(fit, fresh.data, 0);
    REQUIRE(pred.effects.rows() == 10);
    Eigen::Vector2d beta(fit.beta0, fit.beta1);
    for (std::size_t i = 0; i < 10; ++i) {
        Eigen::VectorXd resid_var = Eigen::VectorXd::Constant(fresh.y[i].size(), fit.sigma2_eps);
        Eigen::VectorXd want = oracle::conditional_mean(fresh.y[i], fresh.Z[i], beta,
                                                        fresh.Z[i], fit.D, resid_var);
        Eigen::Vector2d got = pred.effects.row(static_cast<Eigen::Index>(i));
        CHECK((got - Eigen::Vector2d(want)).lpNorm<Eigen::Infinity>() < 1e-10);
        CHECK(pred.informed[i] == 1);
    }
}

TEST_CASE("subject without data for the item gets the prior mean and a flag") {
    // two items: subject s2 observes only item x
    std::vector<std::string> subj{"s1", "s1", "s2"};
    std::vector<double> age{0.0, 1.0, 0.5};
    Eigen::MatrixXd values(3, 2);
    values << 1.0, 0.5, 2.0, 1.5, std::numeric_limits<double>::quiet_NaN(), 2.5;
    LongitudinalDataset data = make_longitudinal({"y", "x"}, subj, age, values);
    LmmFit fit;
    fit.beta0 = 0.0;
    fit.beta1 = 0.0;
    fit.D = example_D();
    fit.sigma2_eps = 0.3;
    RanefPrediction pred = predict_ranef_lmm(fit, data, 0);
    CHECK(pred.informed[0] == 1);
    CHECK(pred.informed[1] == 0);
    CHECK(pred.effects.row(1).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("adding a constant to the item shifts only the intercept") {
    Rng rng(43);
    SimData sim = simulate(rng, 80, {0.0, 1.0, 2.0, 3.0}, {0.7, -0.2}, example_D(), 0.4, 0.1);
    LmmFit base = fit_lmm(sim.data, 0);
    RanefPrediction base_pred = predict_ranef_lmm(base, sim.data, 0);

    const double c = -4.25;
    LongitudinalDataset shifted = sim.data;
    shifted.values.col(0).array() += c;
    LmmFit moved = fit_lmm(shifted, 0);
    RanefPrediction moved_pred = predict_ranef_lmm(moved, shifted, 0);

    CHECK(std::abs(moved.beta0 - base.beta0 - c) < 1e-3);
    CHECK(std::abs(moved.beta1 - base.beta1) < 1e-3);
    CHECK((moved.D - base.D).lpNorm<Eigen::Infinity>() < 1e-3);
    CHECK(std::abs(moved.sigma2_eps - base.sigma2_eps) < 1e-4);
    CHECK((moved_pred.effects - base_pred.effects).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("item with no observations cannot be fitted") {
    std::vector<std::string> subj{"s1"};
    std::vector<double> age{0.0};
    Eigen::MatrixXd values(1, 2);
    values << std::numeric_limits<double>::quiet_NaN(), 1.0;
    LongitudinalDataset data = make_longitudinal({"y", "x"}, subj, age, values);
    CHECK_THROWS_AS(fit_lmm(data, 0), FitError);
}
