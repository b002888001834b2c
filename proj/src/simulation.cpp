#include "prc/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "prc/errors.hpp"

namespace prc {

namespace {

std::string padded(const char* prefix, int index, int width) {
    std::ostringstream os;
    os << prefix << std::setw(width) << std::setfill('0') << index;
    return os.str();
}

void validate_spec(const ScenarioSpec& spec) {
    if (spec.n < 2) throw DomainError("scenario requires at least 2 subjects");
    if (spec.p < 1) throw DomainError("scenario requires at least 1 process");
    if (spec.r < 1) throw DomainError("items per process must be >= 1");
    if (spec.active < 0 || spec.active > spec.p)
        throw DomainError("active process count out of range");
    const double v0 = spec.var_intercept;
    const double v1 = spec.var_slope;
    const double c01 = spec.cov_intercept_slope;
    if (!std::isfinite(v0) || !std::isfinite(v1) || !std::isfinite(c01) || v0 < 0.0 || v1 < 0.0)
        throw DomainError("random-effect variances must be finite and non-negative");
    if (c01 * c01 > v0 * v1 + 1e-12)
        throw DomainError("random-effect covariance matrix is not positive semidefinite");
    if (!std::isfinite(spec.var_item_intercept) || spec.var_item_intercept < 0.0)
        throw DomainError("item intercept variance must be finite and non-negative");
    if (!std::isfinite(spec.var_residual) || spec.var_residual < 0.0)
        throw DomainError("residual variance must be finite and non-negative");
    if (!std::isfinite(spec.weibull_shape) || spec.weibull_shape <= 0.0)
        throw DomainError("weibull shape must be positive");
    if (!std::isfinite(spec.weibull_scale) || spec.weibull_scale <= 0.0)
        throw DomainError("weibull scale must be positive");
    if (!std::isfinite(spec.censor_max) || spec.censor_max <= 0.0)
        throw DomainError("censoring bound must be positive");
}

// Hazard coefficients for the leading `active` processes: magnitudes
// Uniform(0.5, 1) with independent random signs; intercept coefficients stay 0
// under slopes_only. One draw block per study.
void draw_coefficients(const ScenarioSpec& spec, Rng& rng, Eigen::VectorXd& gamma,
                       Eigen::VectorXd& delta) {
    gamma = Eigen::VectorXd::Zero(spec.p);
    delta = Eigen::VectorXd::Zero(spec.p);
    for (int s = 0; s < spec.active; ++s) {
        if (!spec.slopes_only) {
            const double mag = rng.uniform(0.5, 1.0);
            gamma[s] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * mag;
        }
        const double mag = rng.uniform(0.5, 1.0);
        delta[s] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * mag;
    }
}

struct EffectChol {
    double l11, l21, l22;
};

EffectChol effect_chol(const ScenarioSpec& spec) {
    EffectChol c;
    c.l11 = std::sqrt(spec.var_intercept);
    c.l21 = c.l11 > 0.0 ? spec.cov_intercept_slope / c.l11 : 0.0;
    c.l22 = std::sqrt(std::max(0.0, spec.var_slope - c.l21 * c.l21));
    return c;
}

// Shared generation core. Items are laid out process-major; with r == 1 the
// item is the process itself.
SimulatedStudy generate_study(const ScenarioSpec& spec, std::uint64_t seed, bool multi_item) {
    validate_spec(spec);
    Rng rng(seed);

    const int n = spec.n;
    const int p = spec.p;
    const int r = spec.r;
    const int n_items = p * r;

    std::vector<std::string> processes(static_cast<std::size_t>(p));
    std::vector<std::string> items;
    std::vector<std::string> item_process;
    items.reserve(static_cast<std::size_t>(n_items));
    for (int s = 0; s < p; ++s) {
        if (multi_item) {
            processes[static_cast<std::size_t>(s)] = padded("proc", s + 1, 3);
            for (int q = 0; q < r; ++q) {
                items.push_back(processes[static_cast<std::size_t>(s)] + "_i" +
                                std::to_string(q + 1));
                item_process.push_back(processes[static_cast<std::size_t>(s)]);
            }
        } else {
            processes[static_cast<std::size_t>(s)] = padded("m", s + 1, 3);
            items.push_back(processes[static_cast<std::size_t>(s)]);
            item_process.push_back(processes[static_cast<std::size_t>(s)]);
        }
    }

    SimulationTruth truth;
    draw_coefficients(spec, rng, truth.gamma, truth.delta);
    truth.effect_names.reserve(static_cast<std::size_t>(2 * p));
    for (int s = 0; s < p; ++s) {
        truth.effect_names.push_back(processes[static_cast<std::size_t>(s)] + "_b0");
        truth.effect_names.push_back(processes[static_cast<std::size_t>(s)] + "_b1");
    }

    const std::vector<double> schedule = visit_schedule(spec.design);
    const int n_visits = static_cast<int>(schedule.size());
    const EffectChol chol = effect_chol(spec);
    const double sd_item = std::sqrt(spec.var_item_intercept);
    const double sd_eps = std::sqrt(spec.var_residual);

    truth.random_effects.resize(n, 2 * p);
    truth.item_intercepts.resize(n, multi_item ? n_items : 0);
    Eigen::MatrixXd full_values(static_cast<Eigen::Index>(n) * n_visits, n_items);
    for (int i = 0; i < n; ++i) {
        for (int s = 0; s < p; ++s) {
            const double z1 = rng.normal();
            const double z2 = rng.normal();
            truth.random_effects(i, 2 * s) = chol.l11 * z1;
            truth.random_effects(i, 2 * s + 1) = chol.l21 * z1 + chol.l22 * z2;
            if (multi_item) {
                for (int q = 0; q < r; ++q)
                    truth.item_intercepts(i, s * r + q) = sd_item * rng.normal();
            }
        }
        for (int v = 0; v < n_visits; ++v) {
            const double age = schedule[static_cast<std::size_t>(v)];
            const Eigen::Index row = static_cast<Eigen::Index>(i) * n_visits + v;
            for (int j = 0; j < n_items; ++j) {
                const int s = j / r;
                const double mean = truth.random_effects(i, 2 * s) +
                                    truth.random_effects(i, 2 * s + 1) * age +
                                    (multi_item ? truth.item_intercepts(i, j) : 0.0);
                full_values(row, j) = mean + sd_eps * rng.normal();
            }
        }
    }

    truth.lp = Eigen::VectorXd::Zero(n);
    for (int s = 0; s < spec.active; ++s)
        truth.lp += truth.gamma[s] * truth.random_effects.col(2 * s) +
                    truth.delta[s] * truth.random_effects.col(2 * s + 1);

    truth.event_time = weibull_event_times(truth.lp, spec.weibull_shape, spec.weibull_scale, rng);
    FollowUp fu = apply_design_and_censoring(truth.event_time, spec.design, spec.censor_max, rng);
    truth.censor_time = fu.censor_time;

    const int id_width = std::max(5, static_cast<int>(std::to_string(n).size()));
    std::vector<std::string> subjects(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) subjects[static_cast<std::size_t>(i)] = padded("s", i + 1, id_width);

    std::size_t total_rows = 0;
    for (int i = 0; i < n; ++i) total_rows += fu.visit_ages[static_cast<std::size_t>(i)].size();
    std::vector<std::string> row_subject;
    std::vector<double> row_age;
    row_subject.reserve(total_rows);
    row_age.reserve(total_rows);
    Eigen::MatrixXd row_values(static_cast<Eigen::Index>(total_rows), n_items);
    Eigen::Index out = 0;
    for (int i = 0; i < n; ++i) {
        const std::size_t kept = fu.visit_ages[static_cast<std::size_t>(i)].size();
        for (std::size_t v = 0; v < kept; ++v) {
            row_subject.push_back(subjects[static_cast<std::size_t>(i)]);
            row_age.push_back(schedule[v]);
            row_values.row(out++) =
                full_values.row(static_cast<Eigen::Index>(i) * n_visits + static_cast<Eigen::Index>(v));
        }
    }

    LongitudinalDataset longit =
        make_longitudinal(items, row_subject, row_age, std::move(row_values));
    SurvivalDataset surv =
        make_survival(subjects, std::vector<double>(static_cast<std::size_t>(n), 0.0), fu.time,
                      fu.status);
    AlignedData aligned = align(std::move(longit), std::move(surv));

    SimulatedStudy study;
    study.longitudinal = std::move(aligned.longit);
    study.survival = std::move(aligned.surv);
    study.map = multi_item ? ItemMap(items, item_process) : ItemMap::identity(items);
    study.truth = std::move(truth);
    return study;
}

} // namespace

std::vector<double> visit_schedule(VisitDesign design) {
    if (design == VisitDesign::few) return {0.0, 1.0, 2.0};
    std::vector<double> ages(10);
    for (int v = 0; v < 10; ++v) ages[static_cast<std::size_t>(v)] = 0.5 * v;
    return ages;
}

std::vector<double> retained_visits(VisitDesign design, double observed_time) {
    if (!std::isfinite(observed_time) || observed_time < 0.0)
        throw DomainError("observed time must be finite and non-negative");
    std::vector<double> ages = visit_schedule(design);
    while (!ages.empty() && ages.back() > observed_time) ages.pop_back();
    return ages;
}

std::vector<double> weibull_event_times(const Eigen::VectorXd& lp, double shape, double scale,
                                        Rng& rng) {
    if (!std::isfinite(shape) || shape <= 0.0) throw DomainError("weibull shape must be positive");
    if (!std::isfinite(scale) || scale <= 0.0) throw DomainError("weibull scale must be positive");
    if (!lp.allFinite()) throw DomainError("linear predictor contains non-finite values");
    std::vector<double> times(static_cast<std::size_t>(lp.size()));
    for (Eigen::Index i = 0; i < lp.size(); ++i) {
        const double u = rng.uniform_pos();
        times[static_cast<std::size_t>(i)] =
            std::pow(-std::log(u) / (scale * std::exp(lp[i])), 1.0 / shape);
    }
    return times;
}

FollowUp apply_design_and_censoring(const std::vector<double>& event_times, VisitDesign design,
                                    double censor_max, Rng& rng) {
    if (!std::isfinite(censor_max) || censor_max <= 0.0)
        throw DomainError("censoring bound must be positive");
    for (double t : event_times)
        if (!std::isfinite(t) || t <= 0.0)
            throw DomainError("event times must be finite and positive");
    FollowUp fu;
    const std::size_t n = event_times.size();
    fu.time.resize(n);
    fu.status.resize(n);
    fu.censor_time.resize(n);
    fu.visit_ages.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double c = censor_max * rng.uniform_pos();
        fu.censor_time[i] = c;
        if (event_times[i] <= c) {
            fu.time[i] = event_times[i];
            fu.status[i] = 1;
        } else {
            fu.time[i] = c;
            fu.status[i] = 0;
        }
        fu.visit_ages[i] = retained_visits(design, fu.time[i]);
    }
    return fu;
}

SimulatedStudy generate_lmm_study(const ScenarioSpec& spec, std::uint64_t seed) {
    if (spec.r != 1) throw DomainError("single-item generator requires r == 1");
    return generate_study(spec, seed, false);
}

SimulatedStudy generate_mlpmm_study(const ScenarioSpec& spec, std::uint64_t seed) {
    if (spec.r < 2) throw DomainError("multi-item generator requires r >= 2");
    return generate_study(spec, seed, true);
}

ScenarioSpec scenario_spec(int id, int n, VisitDesign design) {
    if (id < 1 || id > 12) throw DomainError("scenario id must be in 1..12");
    if (n < 2) throw DomainError("scenario requires at least 2 subjects");
    ScenarioSpec s;
    s.id = id;
    s.n = n;
    s.design = design;
    const bool multi = id >= 7;
    s.r = multi ? 3 : 1;
    s.p = multi ? (id <= 9 ? 10 : 50) : (id <= 3 ? 30 : 150);
    s.active = multi ? (id <= 9 ? 4 : 10) : (id <= 3 ? 6 : 10);
    const int variant = (id - 1) % 3;  // 0: both effects; 1: slopes only; 2: uneven variances
    s.slopes_only = variant == 1;
    if (variant == 2) {
        s.var_intercept = 0.1;
        s.var_slope = 2.0;
    } else {
        s.var_intercept = 1.0;
        s.var_slope = 1.0;
    }
    s.cov_intercept_slope = multi ? 0.5 * std::sqrt(s.var_intercept * s.var_slope) : 0.0;
    s.var_item_intercept = 0.25;
    s.var_residual = 0.5;
    s.weibull_shape = 2.0;
    // Monte Carlo calibration, pinned: median event time 2.5, 30% censored.
    static const double kScale[12] = {0.092852, 0.096434, 0.094434, 0.092394, 0.094666, 0.092793,
                                      0.095495, 0.098273, 0.095389, 0.092723, 0.095979, 0.092736};
    static const double kCensorMax[12] = {15.4163, 12.6666, 15.6238, 18.7410, 14.4694, 18.9761,
                                          13.5096, 11.6370, 13.7868, 18.4542, 14.4487, 19.0229};
    s.weibull_scale = kScale[id - 1];
    s.censor_max = kCensorMax[id - 1];
    return s;
}

} // namespace prc
