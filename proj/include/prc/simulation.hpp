#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "prc/data.hpp"
#include "prc/rng.hpp"

namespace prc {

enum class VisitDesign { few, many };

// Planned measurement ages: few = {0, 1, 2}; many = {0, 0.5, ..., 4.5}.
std::vector<double> visit_schedule(VisitDesign design);

// Planned ages at or before the observed follow-up time (prefix of the
// schedule; the age-0 visit is always retained).
std::vector<double> retained_visits(VisitDesign design, double observed_time);

// Generating law for one synthetic study. Presets 1-12 fix every field via
// scenario_spec(); id 0 marks a custom configuration.
struct ScenarioSpec {
    int id = 0;
    int n = 100;                       // subjects
    int p = 1;                         // latent processes (markers when r == 1)
    int r = 1;                         // items measured per process
    VisitDesign design = VisitDesign::few;
    int active = 0;                    // leading processes entering the hazard
    bool slopes_only = false;          // intercept-effect coefficients forced to 0
    double var_intercept = 1.0;        // Var of the intercept effect
    double var_slope = 1.0;            // Var of the slope effect
    double cov_intercept_slope = 0.0;
    double var_item_intercept = 0.25;  // item-level intercept variance (r >= 2)
    double var_residual = 0.5;         // measurement noise variance
    double weibull_shape = 2.0;
    double weibull_scale = 1.0;
    double censor_max = 1.0;           // censoring ~ Uniform(0, censor_max)
};

// The twelve preset scenarios. Weibull scales and censoring bounds are pinned
// from a one-time Monte Carlo calibration targeting a median event time of 2.5
// and a 30% censored fraction.
ScenarioSpec scenario_spec(int id, int n, VisitDesign design);

// Generating quantities kept for oracle evaluation.
struct SimulationTruth {
    std::vector<std::string> effect_names;  // 2 per process: <name>_b0, <name>_b1
    Eigen::MatrixXd random_effects;         // n x 2p, columns as effect_names
    Eigen::MatrixXd item_intercepts;        // n x (p*r) when r >= 2, else 0 x 0
    Eigen::VectorXd gamma;                  // hazard coefficient on intercept effect
    Eigen::VectorXd delta;                  // hazard coefficient on slope effect
    Eigen::VectorXd lp;                     // true linear predictor
    std::vector<double> event_time;         // uncensored
    std::vector<double> censor_time;
};

struct SimulatedStudy {
    LongitudinalDataset longitudinal;
    SurvivalDataset survival;
    ItemMap map;
    SimulationTruth truth;
};

// Observed follow-up after the measurement design and censoring are applied.
struct FollowUp {
    std::vector<double> time;                    // min(event, censoring)
    std::vector<int> status;                     // 1 = event observed
    std::vector<double> censor_time;
    std::vector<std::vector<double>> visit_ages; // retained planned visits
};

// Inverse-transform event times under a Weibull proportional-hazards law with
// baseline hazard scale * shape * t^(shape-1):
//   T_i = (-log U_i / (scale * exp(lp_i)))^(1/shape), U_i ~ Uniform(0,1).
std::vector<double> weibull_event_times(const Eigen::VectorXd& lp, double shape, double scale,
                                        Rng& rng);

// Applies independent Uniform(0, censor_max) administrative censoring and the
// visit design; one censoring draw per subject, in subject order.
FollowUp apply_design_and_censoring(const std::vector<double>& event_times, VisitDesign design,
                                    double censor_max, Rng& rng);

// Single-item-per-marker study (requires r == 1). Draw order is fixed for
// reproducibility: hazard coefficients, then per subject the random effects
// followed by measurement noise over the full planned schedule, then all event
// times, then all censoring times.
SimulatedStudy generate_lmm_study(const ScenarioSpec& spec, std::uint64_t seed);

// Multi-item study (requires r >= 2): items of one process share its intercept
// and slope effects, plus an item-specific intercept; the hazard depends on the
// shared effects only. Same draw order as generate_lmm_study with the item
// intercepts drawn right after each subject's shared effects.
SimulatedStudy generate_mlpmm_study(const ScenarioSpec& spec, std::uint64_t seed);

} // namespace prc
