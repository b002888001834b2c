#include "prc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prc/errors.hpp"

namespace prc {

namespace {

void check_scores(const Eigen::VectorXd& lp, const SurvivalDataset& surv) {
    if (lp.size() != static_cast<Eigen::Index>(surv.n()))
        throw DomainError("score vector length does not match the survival data");
    if (!lp.allFinite()) throw DomainError("scores contain non-finite values");
}

} // namespace

double KaplanMeierCurve::at(double t) const {
    // last recorded time <= t carries the current value
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 1.0;
    return survival[static_cast<std::size_t>(it - times.begin()) - 1];
}

double c_index(const Eigen::VectorXd& lp, const SurvivalDataset& surv, double tau) {
    check_scores(lp, surv);
    const int n = static_cast<int>(surv.n());
    if (tau < 0.0) {
        tau = 0.0;
        for (double t : surv.time) tau = std::max(tau, t);
    }
    if (!(tau > 0.0)) throw DomainError("concordance truncation must be positive");

    double usable = 0.0;
    double concordant = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            // orient the pair so `a` has the shorter observed time
            int a = i, b = j;
            if (surv.time[b] < surv.time[a]) std::swap(a, b);
            if (surv.time[a] == surv.time[b]) {
                // only an event/censored tie is orderable: the event goes first
                if (surv.status[a] == surv.status[b]) continue;
                if (surv.status[b] == 1) std::swap(a, b);
            }
            if (surv.status[a] != 1 || surv.time[a] > tau) continue;
            usable += 1.0;
            if (lp[a] > lp[b])
                concordant += 1.0;
            else if (lp[a] == lp[b])
                concordant += 0.5;
        }
    }
    if (usable == 0.0) throw MetricError("no usable pairs for the concordance index");
    return concordant / usable;
}

double td_auc(const Eigen::VectorXd& lp, const SurvivalDataset& surv, double horizon,
              double span) {
    check_scores(lp, surv);
    const int n = static_cast<int>(surv.n());
    if (!(horizon > 0.0) || !std::isfinite(horizon))
        throw DomainError("time-dependent AUC horizon must be positive and finite");
    if (span < 0.0) span = 0.25 * std::pow(static_cast<double>(n), -0.2);
    if (!(span > 0.0 && span <= 1.0)) throw DomainError("neighbourhood span must lie in (0, 1]");

    bool event_by_t = false;
    bool at_risk_past_t = false;
    for (int i = 0; i < n; ++i) {
        if (surv.status[i] == 1 && surv.time[i] <= horizon) event_by_t = true;
        if (surv.time[i] > horizon) at_risk_past_t = true;
    }
    if (!event_by_t) throw MetricError("no events before the AUC horizon");
    if (!at_risk_past_t) throw MetricError("no subjects at risk past the AUC horizon");

    // percentile of each score; ties share the upper percentile so the
    // neighbourhoods depend on ranks only
    std::vector<int> by_score(n);
    std::iota(by_score.begin(), by_score.end(), 0);
    std::stable_sort(by_score.begin(), by_score.end(),
                     [&](int a, int b) { return lp[a] < lp[b]; });
    std::vector<double> pct(n);
    for (int k = 0; k < n; ++k) {
        int m = k;
        while (m + 1 < n && lp[by_score[m + 1]] == lp[by_score[k]]) ++m;
        for (int q = k; q <= m; ++q) pct[by_score[q]] = static_cast<double>(m + 1) / n;
        k = m;
    }

    // smoothed conditional survival at the horizon for every subject: a
    // weighted Kaplan-Meier over the percentile neighbourhood
    std::vector<double> cond(n);
    std::vector<std::pair<double, int>> window;
    for (int k = 0; k < n; ++k) {
        window.clear();
        for (int j = 0; j < n; ++j)
            if (std::abs(pct[j] - pct[k]) <= span) window.emplace_back(surv.time[j], surv.status[j]);
        std::sort(window.begin(), window.end());
        double s = 1.0;
        std::size_t w = 0;
        int risk = static_cast<int>(window.size());
        while (w < window.size() && window[w].first <= horizon) {
            std::size_t v = w;
            int events = 0;
            while (v < window.size() && window[v].first == window[w].first) {
                events += window[v].second;
                ++v;
            }
            if (events > 0) s *= 1.0 - static_cast<double>(events) / risk;
            risk -= static_cast<int>(v - w);
            w = v;
        }
        cond[k] = s;
    }

    const double s_marg = std::accumulate(cond.begin(), cond.end(), 0.0) / n;
    if (!(s_marg < 1.0)) throw MetricError("smoothed survival shows no events before the horizon");
    if (!(s_marg > 0.0)) throw MetricError("smoothed survival vanishes at the horizon");

    // ROC over descending cutpoints: walk subjects from highest score down,
    // moving each tie group above the cutpoint together
    double auc = 0.0;
    double tpr_prev = 0.0, fpr_prev = 0.0;
    double above = 0.0;       // P(score > c)
    double s_above = 0.0;     // mean cond survival over scores > c
    for (int k = n - 1; k >= 0;) {
        int m = k;
        while (m - 1 >= 0 && lp[by_score[m - 1]] == lp[by_score[k]]) --m;
        for (int q = m; q <= k; ++q) {
            above += 1.0 / n;
            s_above += cond[by_score[q]] / n;
        }
        const double tpr = (above - s_above) / (1.0 - s_marg);
        const double fpr = s_above / s_marg;
        auc += 0.5 * (tpr + tpr_prev) * (fpr - fpr_prev);
        tpr_prev = tpr;
        fpr_prev = fpr;
        k = m - 1;
    }
    return std::min(1.0, std::max(0.0, auc));
}

KaplanMeierCurve kaplan_meier(const SurvivalDataset& surv) {
    const int n = static_cast<int>(surv.n());
    if (n < 1) throw DomainError("Kaplan-Meier needs at least one subject");
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return surv.time[a] < surv.time[b]; });

    KaplanMeierCurve km;
    double s = 1.0;
    int risk = n;
    for (int i = 0; i < n;) {
        int j = i;
        int events = 0, censored = 0;
        while (j < n && surv.time[order[j]] == surv.time[order[i]]) {
            (surv.status[order[j]] ? events : censored) += 1;
            ++j;
        }
        if (events > 0) s *= 1.0 - static_cast<double>(events) / risk;
        km.times.push_back(surv.time[order[i]]);
        km.n_risk.push_back(risk);
        km.n_event.push_back(events);
        km.n_censored.push_back(censored);
        km.survival.push_back(s);
        risk -= j - i;
        i = j;
    }
    return km;
}

std::vector<double> tdauc_default_grid() {
    std::vector<double> grid;
    for (int k = 1; k <= 10; ++k) grid.push_back(0.5 * k);
    return grid;
}

} // namespace prc
