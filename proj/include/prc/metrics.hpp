#pragma once

#include <Eigen/Dense>
#include <vector>

#include "prc/data.hpp"

namespace prc {

enum class MetricKind { c_index, td_auc };

struct MetricRequest {
    MetricKind metric = MetricKind::c_index;
    double horizon = 0.0;                // td_auc evaluation time
    double tau = -1.0;                   // c_index truncation; <0 = max observed time
};

// Product-limit survival estimator with the risk/event table at every distinct
// observed time. Right-continuous; censoring at an event time counts the
// censored subject as still at risk for that event.
struct KaplanMeierCurve {
    std::vector<double> times;
    std::vector<int> n_risk;             // at risk just before the time
    std::vector<int> n_event;
    std::vector<int> n_censored;
    std::vector<double> survival;        // value at the time (post drop)

    double at(double t) const;           // 1 before the first observed time
};

// Truncated concordance over usable pairs: the earlier subject must be an
// observed event no later than tau; score ties count 1/2. tau < 0 means the
// maximum observed time.
double c_index(const Eigen::VectorXd& lp, const SurvivalDataset& surv, double tau = -1.0);

// Cumulative/dynamic time-dependent AUC with a nearest-neighbour smoothed
// bivariate survival estimate; span is the percentile half-width of the
// neighbourhood, defaulting to 0.25 * n^(-1/5). Invariant to strictly
// increasing transforms of the scores.
double td_auc(const Eigen::VectorXd& lp, const SurvivalDataset& surv, double horizon,
              double span = -1.0);

KaplanMeierCurve kaplan_meier(const SurvivalDataset& surv);

// Report grid for time-dependent AUC: every half year up to five years.
std::vector<double> tdauc_default_grid();

} // namespace prc
