#include "prc/cox.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <sstream>

#include "prc/errors.hpp"
#include "prc/rng.hpp"

namespace prc {

namespace {

constexpr double kKktTarget = 1e-9;   // solver aims below this
constexpr double kKktLimit = 1e-6;    // certificate bound enforced at return

// Subjects grouped by tied observation time, ascending; the risk set of an
// event time is the suffix of `order` starting at that block.
struct TieBlocks {
    std::vector<int> order;
    std::vector<int> block_start;     // size blocks+1, offsets into order
    std::vector<int> block_events;
    int n = 0;
    int n_events = 0;
};

TieBlocks make_blocks(const SurvivalDataset& surv) {
    TieBlocks tb;
    tb.n = static_cast<int>(surv.n());
    tb.n_events = static_cast<int>(surv.n_events());
    tb.order.resize(tb.n);
    std::iota(tb.order.begin(), tb.order.end(), 0);
    std::stable_sort(tb.order.begin(), tb.order.end(),
                     [&](int a, int b) { return surv.time[a] < surv.time[b]; });
    tb.block_start.push_back(0);
    for (int i = 0; i < tb.n;) {
        int j = i;
        int events = 0;
        while (j < tb.n && surv.time[tb.order[j]] == surv.time[tb.order[i]]) {
            events += surv.status[tb.order[j]];
            ++j;
        }
        tb.block_start.push_back(j);
        tb.block_events.push_back(events);
        i = j;
    }
    return tb;
}

struct EtaStats {
    double negloglik = 0.0;
    Eigen::VectorXd g;                // d(negloglik/n)/dη
    Eigen::VectorXd w;                // diagonal d²(negloglik/n)/dη², non-negative
};

// One pass over the tie blocks; η is shifted by its max so every exponential
// is bounded, which leaves the likelihood and all ratios unchanged.
void eta_stats(const TieBlocks& tb, const SurvivalDataset& surv, const Eigen::VectorXd& eta,
               bool want_gw, EtaStats& out) {
    const int n = tb.n;
    const int blocks = static_cast<int>(tb.block_events.size());
    const double shift = eta.maxCoeff();
    Eigen::VectorXd ex(n);
    for (int i = 0; i < n; ++i) ex[i] = std::exp(eta[i] - shift);

    // descending pass: risk-set exponential mass at each event block
    std::vector<double> s0(blocks, 0.0);
    double acc = 0.0;
    for (int b = blocks - 1; b >= 0; --b) {
        for (int j = tb.block_start[b]; j < tb.block_start[b + 1]; ++j) acc += ex[tb.order[j]];
        s0[b] = acc;
    }

    double nll = 0.0;
    for (int b = 0; b < blocks; ++b) {
        if (tb.block_events[b] == 0) continue;
        for (int j = tb.block_start[b]; j < tb.block_start[b + 1]; ++j) {
            const int i = tb.order[j];
            if (surv.status[i]) nll -= eta[i] - shift;
        }
        nll += tb.block_events[b] * std::log(s0[b]);
    }
    out.negloglik = nll;

    if (!want_gw) return;
    out.g.setZero(n);
    out.w.setZero(n);
    double cum_a = 0.0;
    double cum_b = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int b = 0; b < blocks; ++b) {
        if (tb.block_events[b] > 0) {
            cum_a += tb.block_events[b] / s0[b];
            cum_b += tb.block_events[b] / (s0[b] * s0[b]);
        }
        for (int j = tb.block_start[b]; j < tb.block_start[b + 1]; ++j) {
            const int i = tb.order[j];
            const double mu = ex[i] * cum_a;
            out.g[i] = inv_n * (mu - surv.status[i]);
            out.w[i] = std::max(0.0, inv_n * (mu - ex[i] * ex[i] * cum_b));
        }
    }
}

struct ResolvedPenalty {
    double alpha = 1.0;
    Eigen::VectorXd factors;
};

ResolvedPenalty resolve_penalty(const PenaltyConfig& config, Eigen::Index d) {
    if (!(config.alpha >= 0.0 && config.alpha <= 1.0))
        throw DomainError("elasticnet alpha must lie in [0, 1]");
    ResolvedPenalty rp;
    rp.alpha = config.alpha;
    if (config.penalty_factors.size() == 0) {
        rp.factors = Eigen::VectorXd::Ones(d);
    } else if (config.penalty_factors.size() == d) {
        rp.factors = config.penalty_factors;
        for (Eigen::Index j = 0; j < d; ++j)
            if (!(std::isfinite(rp.factors[j]) && rp.factors[j] >= 0.0))
                throw DomainError("penalty factors must be finite and non-negative");
    } else {
        throw SchemaError("penalty factor count does not match design width");
    }
    return rp;
}

void check_design(const Eigen::MatrixXd& X, const SurvivalDataset& surv) {
    if (X.rows() != static_cast<Eigen::Index>(surv.n()))
        throw DomainError("design has " + std::to_string(X.rows()) + " rows for " +
                          std::to_string(surv.n()) + " subjects");
    if (!X.allFinite()) throw DomainError("design contains non-finite values");
}

// Proximal Newton with cyclic coordinate descent on internally standardized
// columns. The instance carries the current solution so a descending lambda
// path warm-starts naturally.
class CoxSolver {
public:
    CoxSolver(const Eigen::MatrixXd& X, const SurvivalDataset& surv, const PenaltyConfig& config)
        : surv_(surv), tb_(make_blocks(surv)), n_(static_cast<int>(X.rows())),
          d_(static_cast<int>(X.cols())) {
        const ResolvedPenalty rp = resolve_penalty(config, X.cols());
        alpha_ = rp.alpha;
        pf_ = rp.factors;
        center_ = X.colwise().mean();
        scale_ = Eigen::VectorXd::Ones(d_);
        locked_.assign(d_, 0);
        Z_ = X.rowwise() - center_.transpose();
        for (int j = 0; j < d_; ++j) {
            const double var = Z_.col(j).squaredNorm() / n_;
            if (var <= 0.0) {
                locked_[j] = 1;
                Z_.col(j).setZero();
            } else if (pf_[j] > 0.0) {
                scale_[j] = std::sqrt(var);
                Z_.col(j) /= scale_[j];
            }
        }
        beta_ = Eigen::VectorXd::Zero(d_);
    }

    // Fits unpenalized coordinates with every penalized coordinate held at 0.
    void init_unpenalized() {
        beta_.setZero();
        solve_impl(0.0, true);
    }

    double lambda_max() {
        init_unpenalized();
        EtaStats st;
        eta_stats(tb_, surv_, Z_ * beta_, true, st);
        const Eigen::VectorXd score = Z_.transpose() * st.g;
        const double a = std::max(alpha_, 0.001);
        double lmax = 0.0;
        for (int j = 0; j < d_; ++j)
            if (pf_[j] > 0.0 && !locked_[j]) lmax = std::max(lmax, std::abs(score[j]) / (a * pf_[j]));
        return lmax;
    }

    void solve(double lambda) { solve_impl(lambda, false); }

    double kkt() const { return kkt_; }
    const Eigen::VectorXd& beta_std() const { return beta_; }
    const Eigen::VectorXd& center() const { return center_; }
    const Eigen::VectorXd& scale() const { return scale_; }
    const std::vector<std::uint8_t>& locked() const { return locked_; }
    bool any_penalized() const {
        for (int j = 0; j < d_; ++j)
            if (pf_[j] > 0.0 && !locked_[j]) return true;
        return false;
    }

    Eigen::VectorXd coef_original() const {
        Eigen::VectorXd coef(d_);
        for (int j = 0; j < d_; ++j) coef[j] = locked_[j] ? 0.0 : beta_[j] / scale_[j];
        return coef;
    }

private:
    double objective(double lambda, const Eigen::VectorXd& beta, double* negloglik_out) const {
        EtaStats st;
        eta_stats(tb_, surv_, Z_ * beta, false, st);
        if (negloglik_out) *negloglik_out = st.negloglik;
        double pen = 0.0;
        for (int j = 0; j < d_; ++j)
            if (pf_[j] > 0.0 && !locked_[j])
                pen += pf_[j] * (alpha_ * std::abs(beta[j]) + (1.0 - alpha_) * beta[j] * beta[j]);
        return st.negloglik / n_ + lambda * pen;
    }

    double kkt_violation(const Eigen::VectorXd& score, double lambda, bool unpenalized_only) const {
        double worst = 0.0;
        for (int j = 0; j < d_; ++j) {
            if (locked_[j]) continue;
            if (unpenalized_only && pf_[j] > 0.0) continue;
            const double ridge = 2.0 * lambda * (1.0 - alpha_) * pf_[j];
            const double sm = score[j] + ridge * beta_[j];
            const double kink = lambda * alpha_ * pf_[j];
            double viol;
            if (pf_[j] > 0.0 && beta_[j] == 0.0)
                viol = std::max(0.0, std::abs(sm) - kink);
            else
                viol = std::abs(sm + kink * (beta_[j] > 0.0 ? 1.0 : beta_[j] < 0.0 ? -1.0 : 0.0));
            worst = std::max(worst, viol);
        }
        return worst;
    }

    void solve_impl(double lambda, bool unpenalized_only) {
        // Near-saturated problems (tiny lambda, n < d) traverse a long shallow
        // valley at a slow linear rate, so the budget is generous; the stall
        // window cuts losses when the violation stops improving at all.
        const int max_outer = 5000;
        const int stall_window = 50;
        std::vector<double> kkt_hist;
        kkt_hist.reserve(max_outer);
        EtaStats st;
        double f_cur = std::numeric_limits<double>::quiet_NaN();
        // Damping for near-degenerate quadratic models (weights collapse when
        // the linear predictor saturates). The damping term (tau/2)|c - beta|^2
        // has zero gradient at the base point, so a zero step certifies
        // stationarity of the undamped problem at any tau.
        double tau = 0.0;
        for (int outer = 0; outer < max_outer; ++outer) {
            const Eigen::VectorXd eta = Z_ * beta_;
            eta_stats(tb_, surv_, eta, true, st);
            if (std::isnan(f_cur)) f_cur = penalized_value(lambda, st.negloglik);
            const Eigen::VectorXd score = Z_.transpose() * st.g;
            kkt_ = kkt_violation(score, lambda, unpenalized_only);
            if (kkt_ <= kKktTarget) return;
            kkt_hist.push_back(kkt_);
            const std::size_t h = kkt_hist.size();
            if (h > static_cast<std::size_t>(stall_window) &&
                kkt_ > 0.999 * kkt_hist[h - 1 - stall_window])
                return;  // violation no longer improving: honest kkt

            // quadratic model at beta_: coordinate descent over the update
            Eigen::VectorXd v(d_);
            for (int j = 0; j < d_; ++j)
                v[j] = locked_[j] ? 0.0 : Z_.col(j).cwiseAbs2().dot(st.w);
            const double tau_unit = std::max(1.0, v.maxCoeff());
            const double tau_cap = 1e10 * tau_unit;
            const Eigen::VectorXd base = beta_;
            while (true) {
                Eigen::VectorXd cand = base;
                Eigen::VectorXd u = Eigen::VectorXd::Zero(n_);   // w ⊙ Z (cand - base)
                const int max_pass = 400;
                for (int pass = 0; pass < max_pass; ++pass) {
                    double move = 0.0;
                    for (int j = 0; j < d_; ++j) {
                        if (locked_[j]) continue;
                        if (unpenalized_only && pf_[j] > 0.0) continue;
                        const double grad_j = score[j] + Z_.col(j).dot(u);
                        const double kink = lambda * alpha_ * pf_[j];
                        const double denom = v[j] + tau + 2.0 * lambda * (1.0 - alpha_) * pf_[j];
                        if (denom <= 0.0) continue;
                        const double rho = v[j] * cand[j] + tau * base[j] - grad_j;
                        double next = 0.0;
                        if (rho > kink)
                            next = (rho - kink) / denom;
                        else if (rho < -kink)
                            next = (rho + kink) / denom;
                        const double delta = next - cand[j];
                        if (delta != 0.0) {
                            u += delta * st.w.cwiseProduct(Z_.col(j));
                            cand[j] = next;
                            move = std::max(move, std::abs(delta));
                        }
                    }
                    if (move < 1e-12 * std::max(1.0, cand.cwiseAbs().maxCoeff())) break;
                }

                const Eigen::VectorXd step = cand - base;
                if (step.cwiseAbs().maxCoeff() == 0.0) return;  // model says stay: stationary
                // the diagonal model can overshoot; halve toward the current point
                double t = 1.0;
                bool accepted = false;
                for (int half = 0; half < 40; ++half) {
                    beta_ = base + t * step;
                    const double f_new = objective(lambda, beta_, nullptr);
                    if (f_new <= f_cur + 1e-14 * std::max(1.0, std::abs(f_cur))) {
                        f_cur = f_new;
                        accepted = true;
                        break;
                    }
                    t *= 0.5;
                }
                if (accepted) {
                    // a full step certifies the model curvature; a backtracked
                    // step means the model is too optimistic, so stiffen it
                    if (t == 1.0)
                        tau = tau > 1e-7 * tau_unit ? 0.25 * tau : 0.0;
                    else
                        tau = std::max({1e-8 * tau_unit, kkt_, 4.0 * tau});
                    break;
                }
                beta_ = base;
                if (tau >= tau_cap) return;  // no descent at floating precision: honest kkt
                tau = std::max({1e-8 * tau_unit, kkt_, 8.0 * tau});
            }
        }
        // iteration budget exhausted: certify the point actually returned
        eta_stats(tb_, surv_, Z_ * beta_, true, st);
        kkt_ = kkt_violation(Z_.transpose() * st.g, lambda, unpenalized_only);
    }

    double penalized_value(double lambda, double negloglik) const {
        double pen = 0.0;
        for (int j = 0; j < d_; ++j)
            if (pf_[j] > 0.0 && !locked_[j])
                pen += pf_[j] * (alpha_ * std::abs(beta_[j]) + (1.0 - alpha_) * beta_[j] * beta_[j]);
        return negloglik / n_ + lambda * pen;
    }

    const SurvivalDataset& surv_;
    TieBlocks tb_;
    int n_;
    int d_;
    double alpha_ = 1.0;
    Eigen::VectorXd pf_;
    Eigen::MatrixXd Z_;
    Eigen::VectorXd center_;
    Eigen::VectorXd scale_;
    std::vector<std::uint8_t> locked_;
    Eigen::VectorXd beta_;
    double kkt_ = 0.0;
};

std::vector<double> default_path(double lmax, int size, double min_ratio, int n, int d) {
    if (size < 1) throw DomainError("lambda path needs at least one point");
    double ratio = min_ratio;
    if (ratio <= 0.0) ratio = n < d ? 1e-2 : 1e-3;
    if (!(ratio > 0.0 && ratio <= 1.0)) throw DomainError("lambda path ratio must lie in (0, 1]");
    std::vector<double> lambdas(size);
    if (size == 1) {
        lambdas[0] = lmax;
        return lambdas;
    }
    const double log_max = std::log(lmax);
    const double log_min = std::log(lmax * ratio);
    for (int i = 0; i < size; ++i)
        lambdas[i] = std::exp(log_max + (log_min - log_max) * i / (size - 1.0));
    return lambdas;
}

// idx must be ascending so the subset stays sorted by subject id.
SurvivalDataset subset_survival(const SurvivalDataset& surv, const std::vector<int>& idx) {
    SurvivalDataset out;
    out.subjects.reserve(idx.size());
    out.baseline_age.reserve(idx.size());
    out.time.reserve(idx.size());
    out.status.reserve(idx.size());
    for (int i : idx) {
        out.subjects.push_back(surv.subjects[i]);
        out.baseline_age.push_back(surv.baseline_age[i]);
        out.time.push_back(surv.time[i]);
        out.status.push_back(surv.status[i]);
    }
    return out;
}

Eigen::MatrixXd subset_rows(const Eigen::MatrixXd& X, const std::vector<int>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), X.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = X.row(idx[r]);
    return out;
}

void shuffle_indices(std::vector<int>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

// Event-stratified fold ids per subject; every training complement must keep
// at least one event. Reshuffles with derived seeds before giving up.
std::vector<int> stratified_folds(const SurvivalDataset& surv, int folds, std::uint64_t seed) {
    const int n = static_cast<int>(surv.n());
    const int total_events = static_cast<int>(surv.n_events());
    if (folds < 2) throw DomainError("cross-validation needs at least 2 folds");
    if (folds > n) throw DomainError("more folds than subjects");
    for (int attempt = 0; attempt < 10; ++attempt) {
        Rng rng(Rng::substream_seed(seed, static_cast<std::uint64_t>(attempt)));
        std::vector<int> events;
        std::vector<int> censored;
        for (int i = 0; i < n; ++i) (surv.status[i] ? events : censored).push_back(i);
        shuffle_indices(events, rng);
        shuffle_indices(censored, rng);
        std::vector<int> fold_of(n, 0);
        int counter = 0;
        for (int i : events) fold_of[i] = counter++ % folds;
        for (int i : censored) fold_of[i] = counter++ % folds;
        std::vector<int> fold_events(folds, 0);
        std::vector<int> fold_size(folds, 0);
        for (int i = 0; i < n; ++i) {
            fold_events[fold_of[i]] += surv.status[i];
            fold_size[fold_of[i]] += 1;
        }
        bool ok = true;
        for (int k = 0; k < folds; ++k)
            if (fold_size[k] == 0 || total_events - fold_events[k] < 1) ok = false;
        if (ok) return fold_of;
    }
    throw FitError("could not build cross-validation folds with events in every training set");
}

// Cross-validation scoring fits run with strict=false: a fold subsample can
// be quasi-separated at the smallest path lambdas, where the optimum exists
// but sits beyond what is certifiable in reasonable time. Such points carry
// an honest kkt entry and contribute their (poor) deviance; only fits whose
// coefficients are handed back to callers demand the certificate.
CoxPathResult path_impl(const Eigen::MatrixXd& X, const SurvivalDataset& surv,
                        const PenaltyConfig& config, const std::vector<double>& lambdas,
                        bool strict) {
    check_design(X, surv);
    if (surv.n_events() == 0) throw FitError("survival data has no events");

    CoxSolver solver(X, surv, config);
    CoxPathResult path;
    if (!lambdas.empty()) {
        path.lambdas = lambdas;
        if (!std::is_sorted(path.lambdas.rbegin(), path.lambdas.rend()))
            throw DomainError("explicit lambda path must be non-increasing");
        for (double l : path.lambdas)
            if (!(l >= 0.0) || !std::isfinite(l)) throw DomainError("lambda path values must be finite and non-negative");
        solver.init_unpenalized();
    } else if (!solver.any_penalized()) {
        path.lambdas = {0.0};
        solver.init_unpenalized();
    } else {
        const double lmax = solver.lambda_max();
        path.lambdas = default_path(lmax, config.path_size, config.min_ratio,
                                    static_cast<int>(X.rows()), static_cast<int>(X.cols()));
    }

    const int L = static_cast<int>(path.lambdas.size());
    path.coefs.resize(X.cols(), L);
    path.kkt.resize(L);
    path.center = solver.center();
    path.scale = solver.scale();
    for (int l = 0; l < L; ++l) {
        solver.solve(path.lambdas[l]);
        if (strict && solver.kkt() > kKktLimit)
            throw FitError("penalized Cox path fit did not reach stationarity (kkt " +
                           std::to_string(solver.kkt()) + ")");
        path.coefs.col(l) = solver.coef_original();
        path.kkt[l] = solver.kkt();
    }
    return path;
}


} // namespace

double StepFunction::cumulative(double t) const {
    double h = 0.0;
    for (std::size_t k = 0; k < times.size() && times[k] <= t; ++k) h += increments[k];
    return h;
}

double cox_negloglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& coef,
                     const SurvivalDataset& surv) {
    check_design(X, surv);
    if (coef.size() != X.cols()) throw DomainError("coefficient length does not match design width");
    if (surv.n_events() == 0) return 0.0;
    const TieBlocks tb = make_blocks(surv);
    EtaStats st;
    eta_stats(tb, surv, X * coef, false, st);
    return st.negloglik;
}

PenalizedCoxFit fit_penalized_cox(const Eigen::MatrixXd& X, const std::vector<std::string>& columns,
                                  const SurvivalDataset& surv, const PenaltyConfig& config) {
    check_design(X, surv);
    if (static_cast<Eigen::Index>(columns.size()) != X.cols())
        throw SchemaError("column name count does not match design width");
    if (surv.n_events() == 0) throw FitError("survival data has no events");
    if (!(config.lambda >= 0.0) || !std::isfinite(config.lambda))
        throw DomainError("lambda must be a finite non-negative value; resolve it with cross-validation first");

    CoxSolver solver(X, surv, config);
    solver.init_unpenalized();
    solver.solve(config.lambda);
    if (solver.kkt() > kKktLimit)
        throw FitError("penalized Cox fit did not reach stationarity (kkt " +
                       std::to_string(solver.kkt()) + ")");

    PenalizedCoxFit fit;
    fit.columns = columns;
    fit.coef = solver.coef_original();
    fit.alpha = config.alpha;
    fit.lambda = config.lambda;
    fit.center = solver.center();
    fit.scale = solver.scale();
    fit.locked = solver.locked();
    fit.kkt = solver.kkt();
    fit.train_lp = (X.rowwise() - fit.center.transpose()) * fit.coef;
    fit.baseline = breslow_baseline(fit.train_lp, surv);
    return fit;
}

CoxPathResult fit_cox_path(const Eigen::MatrixXd& X, const SurvivalDataset& surv,
                           const PenaltyConfig& config, const std::vector<double>& lambdas) {
    return path_impl(X, surv, config, lambdas, true);
}

CvResult cv_lambda(const Eigen::MatrixXd& X, const SurvivalDataset& surv,
                   const PenaltyConfig& config, int folds, std::uint64_t seed) {
    check_design(X, surv);
    if (surv.n_events() == 0) throw FitError("survival data has no events");
    const CoxPathResult full_path = path_impl(X, surv, config, {}, false);
    const std::vector<int> fold_of = stratified_folds(surv, folds, seed);

    const int L = static_cast<int>(full_path.lambdas.size());
    std::vector<double> mean_dev(L, 0.0);
    for (int k = 0; k < folds; ++k) {
        std::vector<int> train_idx;
        for (int i = 0; i < static_cast<int>(surv.n()); ++i)
            if (fold_of[i] != k) train_idx.push_back(i);
        const SurvivalDataset surv_tr = subset_survival(surv, train_idx);
        const Eigen::MatrixXd X_tr = subset_rows(X, train_idx);
        const CoxPathResult sub = path_impl(X_tr, surv_tr, config, full_path.lambdas, false);
        for (int l = 0; l < L; ++l) {
            const Eigen::VectorXd coef = sub.coefs.col(l);
            const double nll_full = cox_negloglik(X, coef, surv);
            const double nll_train = cox_negloglik(X_tr, coef, surv_tr);
            mean_dev[l] += 2.0 * (nll_full - nll_train);
        }
    }
    for (double& d : mean_dev) d /= folds;

    int best = 0;
    for (int l = 1; l < L; ++l)
        if (mean_dev[l] < mean_dev[best]) best = l;  // ties keep the larger lambda

    CvResult cv;
    cv.lambda = full_path.lambdas[best];
    cv.alpha = config.alpha;
    cv.lambdas = full_path.lambdas;
    cv.mean_deviance = mean_dev;
    cv.folds = folds;
    return cv;
}

NestedCvResult nested_cv(const Eigen::MatrixXd& X, const SurvivalDataset& surv,
                         const PenaltyConfig& config, const std::vector<double>& alpha_grid,
                         int folds, std::uint64_t seed) {
    check_design(X, surv);
    if (alpha_grid.empty()) throw DomainError("alpha grid must not be empty");
    for (double a : alpha_grid)
        if (!(a >= 0.0 && a <= 1.0)) throw DomainError("alpha grid values must lie in [0, 1]");
    if (surv.n_events() == 0) throw FitError("survival data has no events");

    const std::vector<int> fold_of = stratified_folds(surv, folds, Rng::substream_seed(seed, 7001));
    const int grid = static_cast<int>(alpha_grid.size());

    NestedCvResult out;
    out.alpha_grid = alpha_grid;
    out.outer_deviance.assign(grid, 0.0);
    out.inner.reserve(static_cast<std::size_t>(folds) * grid);

    for (int k = 0; k < folds; ++k) {
        std::vector<int> train_idx;
        for (int i = 0; i < static_cast<int>(surv.n()); ++i)
            if (fold_of[i] != k) train_idx.push_back(i);
        const SurvivalDataset surv_tr = subset_survival(surv, train_idx);
        const Eigen::MatrixXd X_tr = subset_rows(X, train_idx);
        for (int a = 0; a < grid; ++a) {
            PenaltyConfig inner_cfg = config;
            inner_cfg.alpha = alpha_grid[a];
            const std::uint64_t inner_seed = Rng::substream_seed(seed, 20000 + 100ull * k + a);
            CvResult inner = cv_lambda(X_tr, surv_tr, inner_cfg, folds, inner_seed);
            inner_cfg.lambda = inner.lambda;
            const CoxPathResult at_inner =
                path_impl(X_tr, surv_tr, inner_cfg, {inner.lambda}, false);
            const Eigen::VectorXd coef = at_inner.coefs.col(0);
            const double nll_full = cox_negloglik(X, coef, surv);
            const double nll_train = cox_negloglik(X_tr, coef, surv_tr);
            out.outer_deviance[a] += 2.0 * (nll_full - nll_train);
            out.inner.push_back(std::move(inner));
        }
    }
    for (double& d : out.outer_deviance) d /= folds;

    int best = 0;
    for (int a = 1; a < grid; ++a)
        if (out.outer_deviance[a] < out.outer_deviance[best]) best = a;
    out.alpha = alpha_grid[best];

    PenaltyConfig final_cfg = config;
    final_cfg.alpha = out.alpha;
    out.final_cv = cv_lambda(X, surv, final_cfg, folds, seed);
    out.lambda = out.final_cv.lambda;
    return out;
}

StepFunction breslow_baseline(const Eigen::VectorXd& lp, const SurvivalDataset& surv) {
    if (lp.size() != static_cast<Eigen::Index>(surv.n())) throw DomainError("linear predictor length does not match subjects");
    StepFunction h0;
    if (surv.n_events() == 0) return h0;
    const TieBlocks tb = make_blocks(surv);
    const double shift = lp.maxCoeff();
    const int blocks = static_cast<int>(tb.block_events.size());
    std::vector<double> s0(blocks, 0.0);
    double acc = 0.0;
    for (int b = blocks - 1; b >= 0; --b) {
        for (int j = tb.block_start[b]; j < tb.block_start[b + 1]; ++j)
            acc += std::exp(lp[tb.order[j]] - shift);
        s0[b] = acc;
    }
    for (int b = 0; b < blocks; ++b) {
        if (tb.block_events[b] == 0) continue;
        h0.times.push_back(surv.time[tb.order[tb.block_start[b]]]);
        h0.increments.push_back(tb.block_events[b] / (s0[b] * std::exp(shift)));
    }
    return h0;
}

Eigen::MatrixXd predict_survival(const PenalizedCoxFit& fit, const Eigen::MatrixXd& X_new,
                                 const std::vector<std::string>& columns,
                                 const std::vector<double>& times) {
    if (columns != fit.columns) {
        std::ostringstream msg;
        msg << "prediction columns do not match the fitted model; expected [";
        for (std::size_t j = 0; j < fit.columns.size(); ++j)
            msg << (j ? ", " : "") << fit.columns[j];
        msg << "]";
        throw DomainError(msg.str());
    }
    if (X_new.cols() != fit.coef.size()) throw DomainError("prediction design width does not match the fit");
    if (!X_new.allFinite()) throw DomainError("prediction design contains non-finite values");
    for (double t : times)
        if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("prediction times must be finite and non-negative");

    const Eigen::VectorXd lp = (X_new.rowwise() - fit.center.transpose()) * fit.coef;
    Eigen::MatrixXd S(X_new.rows(), static_cast<Eigen::Index>(times.size()));
    for (std::size_t c = 0; c < times.size(); ++c) {
        const double h0 = fit.baseline.cumulative(times[c]);
        for (Eigen::Index i = 0; i < X_new.rows(); ++i)
            S(i, static_cast<Eigen::Index>(c)) = std::exp(-h0 * std::exp(lp[i]));
    }
    return S;
}

} // namespace prc
