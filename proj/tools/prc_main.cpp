#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "prc/csv.hpp"
#include "prc/data.hpp"
#include "prc/errors.hpp"
#include "prc/metrics.hpp"
#include "prc/pipeline.hpp"
#include "prc/ranef.hpp"
#include "prc/serialize.hpp"
#include "prc/simulation.hpp"
#include "prc/validation.hpp"

namespace {

using nlohmann::json;
using namespace prc;

// ---------------------------------------------------------------------------
// config document access (every violation is a SchemaError naming the field)

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot read file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    return j;
}

const json* find(const json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) return nullptr;
    return &*it;
}

double num_or(const json& j, const char* key, double dflt) {
    const json* v = find(j, key);
    if (!v) return dflt;
    if (!v->is_number()) throw SchemaError(std::string("config field '") + key + "' must be a number");
    return v->get<double>();
}

long long int_or(const json& j, const char* key, long long dflt) {
    const json* v = find(j, key);
    if (!v) return dflt;
    if (!v->is_number_integer()) {
        throw SchemaError(std::string("config field '") + key + "' must be an integer");
    }
    return v->get<long long>();
}

bool bool_or(const json& j, const char* key, bool dflt) {
    const json* v = find(j, key);
    if (!v) return dflt;
    if (!v->is_boolean()) throw SchemaError(std::string("config field '") + key + "' must be a boolean");
    return v->get<bool>();
}

std::string str_or(const json& j, const char* key, const std::string& dflt) {
    const json* v = find(j, key);
    if (!v) return dflt;
    if (!v->is_string()) throw SchemaError(std::string("config field '") + key + "' must be a string");
    return v->get<std::string>();
}

std::string str_req(const json& j, const char* key) {
    const json* v = find(j, key);
    if (!v) throw SchemaError(std::string("config field '") + key + "' is required");
    if (!v->is_string()) throw SchemaError(std::string("config field '") + key + "' must be a string");
    return v->get<std::string>();
}

std::vector<double> doubles_or(const json& j, const char* key, std::vector<double> dflt) {
    const json* v = find(j, key);
    if (!v) return dflt;
    if (!v->is_array()) throw SchemaError(std::string("config field '") + key + "' must be an array");
    std::vector<double> out;
    out.reserve(v->size());
    for (const json& e : *v) {
        if (!e.is_number()) {
            throw SchemaError(std::string("config field '") + key + "' must hold numbers");
        }
        out.push_back(e.get<double>());
    }
    return out;
}

const json& section(const json& cfg, const char* name) {
    const json* v = find(cfg, name);
    if (!v || !v->is_object()) {
        throw SchemaError(std::string("config section '") + name + "' is missing");
    }
    return *v;
}

// ---------------------------------------------------------------------------
// shared parsing

std::vector<MetricRequest> parse_metrics(const json& sec) {
    const json* v = find(sec, "metrics");
    if (!v) return {MetricRequest{}};
    if (!v->is_array() || v->empty()) {
        throw SchemaError("config field 'metrics' must be a non-empty array");
    }
    std::vector<MetricRequest> out;
    for (const json& e : *v) {
        if (!e.is_object()) throw SchemaError("each metric must be an object");
        MetricRequest req;
        const std::string kind = str_req(e, "metric");
        if (kind == "c_index") {
            req.metric = MetricKind::c_index;
            req.tau = num_or(e, "tau", -1.0);
        } else if (kind == "td_auc") {
            req.metric = MetricKind::td_auc;
            req.horizon = num_or(e, "horizon", 0.0);
            if (!(req.horizon > 0.0)) {
                throw SchemaError("metric td_auc needs a positive 'horizon'");
            }
        } else {
            throw DomainError("unknown metric: " + kind);
        }
        out.push_back(req);
    }
    return out;
}

PipelineConfig parse_pipeline(const json& sec, unsigned workers) {
    PipelineConfig cfg;
    cfg.variant = variant_from_name(str_or(sec, "variant", "prc_lmm"));
    if (const json* pen = find(sec, "penalty")) {
        if (!pen->is_object()) throw SchemaError("config field 'penalty' must be an object");
        cfg.penalty.alpha = num_or(*pen, "alpha", cfg.penalty.alpha);
        cfg.penalty.lambda = num_or(*pen, "lambda", cfg.penalty.lambda);
        cfg.penalty.path_size = static_cast<int>(int_or(*pen, "path_size", cfg.penalty.path_size));
        cfg.penalty.min_ratio = num_or(*pen, "min_ratio", cfg.penalty.min_ratio);
    }
    cfg.alpha_grid = doubles_or(sec, "alpha_grid", {});
    cfg.cv_folds = static_cast<int>(int_or(sec, "cv_folds", cfg.cv_folds));
    cfg.workers = workers;
    return cfg;
}

struct Inputs {
    ItemMap map;
    AlignedData data;
    std::string longitudinal_path;
    std::string survival_path;
    std::string item_map_path;  // empty when the identity map was derived
};

Inputs load_inputs(const json& sec) {
    Inputs in;
    in.longitudinal_path = str_req(sec, "longitudinal");
    in.survival_path = str_req(sec, "survival");
    in.item_map_path = str_or(sec, "item_map", "");
    if (!in.item_map_path.empty()) {
        in.map = load_item_map(in.item_map_path);
    } else {
        // identity map over the file's item columns (all but subject and age)
        csv::Table table = csv::read_file(in.longitudinal_path);
        std::vector<std::string> items;
        for (const std::string& h : table.header) {
            if (h != "subject" && h != "age") items.push_back(h);
        }
        in.map = ItemMap::identity(items);
    }
    LongitudinalDataset longit = load_longitudinal(in.longitudinal_path, in.map);
    in.map = in.map.restricted_to(longit.items);
    SurvivalDataset surv = load_survival(in.survival_path);
    in.data = align(std::move(longit), std::move(surv));
    return in;
}

// ---------------------------------------------------------------------------
// outputs

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write file: " + path.string());
    out << text;
    if (!out) throw Error("failed writing file: " + path.string());
    std::printf("wrote %s\n", path.string().c_str());
}

const char* metric_label(MetricKind kind) {
    return kind == MetricKind::c_index ? "c_index" : "td_auc";
}

// horizon column carries the tdAUC horizon, or the concordance truncation
double metric_horizon(const MetricRequest& req) {
    return req.metric == MetricKind::td_auc ? req.horizon : req.tau;
}

std::vector<double> score_metrics(const Eigen::VectorXd& lp, const SurvivalDataset& surv,
                                  const std::vector<MetricRequest>& metrics) {
    std::vector<double> values;
    values.reserve(metrics.size());
    for (const MetricRequest& req : metrics) {
        if (req.metric == MetricKind::c_index) {
            values.push_back(c_index(lp, surv, req.tau));
        } else {
            values.push_back(td_auc(lp, surv, req.horizon));
        }
    }
    return values;
}

json metrics_json(const std::vector<MetricRequest>& metrics, const std::vector<double>& values) {
    json j;
    j["kind"] = "prc_metrics";
    j["schema_version"] = 1;
    json arr = json::array();
    for (std::size_t m = 0; m < metrics.size(); ++m) {
        json e;
        e["metric"] = metric_label(metrics[m].metric);
        e["horizon"] = metric_horizon(metrics[m]);
        e["value"] = values[m];
        arr.push_back(std::move(e));
    }
    j["values"] = std::move(arr);
    return j;
}

std::string metrics_csv(const std::vector<MetricRequest>& metrics,
                        const std::vector<double>& values) {
    std::string out = "metric,horizon,value\n";
    for (std::size_t m = 0; m < metrics.size(); ++m) {
        out += metric_label(metrics[m].metric);
        out += ',';
        out += csv::format_double(metric_horizon(metrics[m]));
        out += ',';
        out += csv::format_double(values[m]);
        out += '\n';
    }
    return out;
}

json vector_json(const Eigen::VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

json matrix_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// subcommands

struct Options {
    std::string config;
    long long seed = -1;   // < 0: take the config value
    int workers = 0;       // 0: take the config value
    std::string out_dir = ".";
};

struct Resolved {
    json cfg;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    std::filesystem::path out;
};

Resolved resolve(const Options& opt) {
    Resolved r;
    r.cfg = load_json_file(opt.config);
    if (!r.cfg.is_object()) throw SchemaError("config root must be an object");
    if (int_or(r.cfg, "schema_version", 0) != 1) {
        throw SchemaError("config must declare \"schema_version\": 1");
    }
    const long long cfg_seed = int_or(r.cfg, "seed", 0);
    if (cfg_seed < 0) throw SchemaError("config field 'seed' must be non-negative");
    r.seed = opt.seed >= 0 ? static_cast<std::uint64_t>(opt.seed)
                           : static_cast<std::uint64_t>(cfg_seed);
    const long long cfg_workers =
        int_or(r.cfg, "workers", static_cast<long long>(std::thread::hardware_concurrency()));
    const long long workers = opt.workers > 0 ? opt.workers : cfg_workers;
    r.workers = workers > 0 ? static_cast<unsigned>(workers) : 1u;
    r.out = opt.out_dir;
    std::filesystem::create_directories(r.out);
    return r;
}

json config_echo(const Resolved& run, const char* command, const json& sec,
                 const PipelineConfig& cfg, const Inputs& in,
                 const std::vector<MetricRequest>& metrics) {
    // the worker count is deliberately absent: results do not depend on it,
    // so recording it would break byte-identical reruns across machines
    json e;
    e["schema_version"] = 1;
    e["command"] = command;
    e["seed"] = run.seed;
    e["variant"] = variant_name(cfg.variant);
    e["penalty"] = {{"alpha", cfg.penalty.alpha},
                    {"lambda", cfg.penalty.lambda},
                    {"path_size", cfg.penalty.path_size},
                    {"min_ratio", cfg.penalty.min_ratio}};
    e["alpha_grid"] = cfg.alpha_grid;
    e["cv_folds"] = cfg.cv_folds;
    e["longitudinal"] = in.longitudinal_path;
    e["survival"] = in.survival_path;
    if (!in.item_map_path.empty()) e["item_map"] = in.item_map_path;
    json reqs = json::array();
    for (const MetricRequest& req : metrics) {
        reqs.push_back({{"metric", metric_label(req.metric)},
                        {"horizon", req.horizon},
                        {"tau", req.tau}});
    }
    e["metrics"] = std::move(reqs);
    if (const json* rep = find(sec, "replicates")) e["replicates"] = *rep;
    return e;
}

int cmd_fit(const Options& opt) {
    const Resolved run = resolve(opt);
    const json& sec = section(run.cfg, "fit");
    const Inputs in = load_inputs(sec);
    const PipelineConfig cfg = parse_pipeline(sec, run.workers);
    const std::vector<MetricRequest> metrics = parse_metrics(sec);

    const PipelineFit fit = fit_pipeline(in.data, in.map, cfg, run.seed);
    const Eigen::VectorXd lp = pipeline_lp(fit, in.data);
    const std::vector<double> values = score_metrics(lp, in.data.surv, metrics);

    json bundle = json::parse(bundle_to_json(fit));
    bundle["config"] = config_echo(run, "fit", sec, cfg, in, metrics);
    write_text(run.out / "bundle.json", bundle.dump(2));
    write_text(run.out / "naive_metrics.json", metrics_json(metrics, values).dump(2));
    write_text(run.out / "naive_metrics.csv", metrics_csv(metrics, values));
    return 0;
}

int cmd_predict(const Options& opt) {
    const Resolved run = resolve(opt);
    const json& sec = section(run.cfg, "predict");
    const PipelineFit fit = load_bundle(str_req(sec, "bundle"));
    const LongitudinalDataset longit = load_longitudinal(str_req(sec, "longitudinal"), fit.map);

    // scoring roster: subject + baseline_age columns; other columns ignored
    const std::string baseline_path = str_req(sec, "baseline");
    csv::Table table = csv::read_file(baseline_path);
    const std::size_t subj_col = table.column_index("subject");
    const std::size_t age_col = table.column_index("baseline_age");
    std::vector<std::pair<std::string, double>> roster;
    roster.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string where = baseline_path + " line " + std::to_string(r + 2);
        roster.emplace_back(table.rows[r][subj_col],
                            csv::parse_double(table.rows[r][age_col], where));
        if (std::isnan(roster.back().second)) throw ParseError("missing baseline_age at " + where);
    }
    std::sort(roster.begin(), roster.end());
    for (std::size_t i = 1; i < roster.size(); ++i) {
        if (roster[i].first == roster[i - 1].first) {
            throw SchemaError("duplicate subject in baseline file: " + roster[i].first);
        }
    }
    std::vector<std::string> subjects(roster.size());
    std::vector<double> baseline(roster.size());
    for (std::size_t i = 0; i < roster.size(); ++i) {
        subjects[i] = roster[i].first;
        baseline[i] = roster[i].second;
    }

    const json* times_field = find(sec, "times");
    if (!times_field) throw SchemaError("config field 'times' is required");
    const std::vector<double> times = doubles_or(sec, "times", {});

    const PipelineDesign design = pipeline_design(fit, longit, subjects, baseline);
    const Eigen::VectorXd lp = pipeline_lp(fit, design);
    const Eigen::MatrixXd surv = pipeline_survival(fit, design, times);

    std::string curves = "subject,time,survival\n";
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        for (std::size_t k = 0; k < times.size(); ++k) {
            curves += csv::quote_if_needed(subjects[i]);
            curves += ',';
            curves += csv::format_double(times[k]);
            curves += ',';
            curves += csv::format_double(surv(static_cast<Eigen::Index>(i),
                                              static_cast<Eigen::Index>(k)));
            curves += '\n';
        }
    }
    write_text(run.out / "curves.csv", curves);

    std::string scores = "subject,lp,uninformed_units,shrunk_slope_units\n";
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        scores += csv::quote_if_needed(subjects[i]);
        scores += ',';
        scores += csv::format_double(lp[static_cast<Eigen::Index>(i)]);
        scores += ',';
        scores += std::to_string(design.uninformed_units[i]);
        scores += ',';
        scores += std::to_string(design.shrunk_slope_units[i]);
        scores += '\n';
    }
    write_text(run.out / "scores.csv", scores);
    return 0;
}

int cmd_validate(const Options& opt) {
    const Resolved run = resolve(opt);
    const json& sec = section(run.cfg, "validate");
    const Inputs in = load_inputs(sec);

    BootstrapPlan plan;
    plan.replicates = static_cast<int>(int_or(sec, "replicates", 50));
    plan.seed = run.seed;
    plan.pipeline = parse_pipeline(sec, run.workers);
    const std::vector<MetricRequest> metrics = parse_metrics(sec);

    const ValidationReport report = run_cbocp(in.data, in.map, plan, metrics);
    write_text(run.out / "validation.json", report_to_json(report));
    write_text(run.out / "replicates.csv", report_to_csv(report));
    return 0;
}

int cmd_simulate(const Options& opt) {
    const Resolved run = resolve(opt);
    const json& sec = section(run.cfg, "simulate");

    const std::string design_name = str_or(sec, "design", "few");
    VisitDesign design;
    if (design_name == "few") {
        design = VisitDesign::few;
    } else if (design_name == "many") {
        design = VisitDesign::many;
    } else {
        throw DomainError("unknown design: " + design_name + " (expected few or many)");
    }

    const int scenario = static_cast<int>(int_or(sec, "scenario", 0));
    const int n = static_cast<int>(int_or(sec, "n", 100));
    ScenarioSpec spec;
    if (scenario != 0) {
        spec = scenario_spec(scenario, n, design);
    } else {
        spec.id = 0;
        spec.n = n;
        spec.design = design;
    }
    // explicit fields override the preset (or fill the custom spec)
    spec.p = static_cast<int>(int_or(sec, "p", spec.p));
    spec.r = static_cast<int>(int_or(sec, "r", spec.r));
    spec.active = static_cast<int>(int_or(sec, "active", spec.active));
    spec.slopes_only = bool_or(sec, "slopes_only", spec.slopes_only);
    spec.var_intercept = num_or(sec, "var_intercept", spec.var_intercept);
    spec.var_slope = num_or(sec, "var_slope", spec.var_slope);
    spec.cov_intercept_slope = num_or(sec, "cov_intercept_slope", spec.cov_intercept_slope);
    spec.var_item_intercept = num_or(sec, "var_item_intercept", spec.var_item_intercept);
    spec.var_residual = num_or(sec, "var_residual", spec.var_residual);
    spec.weibull_shape = num_or(sec, "weibull_shape", spec.weibull_shape);
    spec.weibull_scale = num_or(sec, "weibull_scale", spec.weibull_scale);
    spec.censor_max = num_or(sec, "censor_max", spec.censor_max);

    const SimulatedStudy study = spec.r == 1 ? generate_lmm_study(spec, run.seed)
                                             : generate_mlpmm_study(spec, run.seed);

    write_longitudinal((run.out / "longitudinal.csv").string(), study.longitudinal);
    std::printf("wrote %s\n", (run.out / "longitudinal.csv").string().c_str());
    write_survival((run.out / "survival.csv").string(), study.survival);
    std::printf("wrote %s\n", (run.out / "survival.csv").string().c_str());
    write_item_map((run.out / "item_map.csv").string(), study.map);
    std::printf("wrote %s\n", (run.out / "item_map.csv").string().c_str());

    json truth;
    truth["kind"] = "prc_simulation_truth";
    truth["schema_version"] = 1;
    truth["seed"] = run.seed;
    truth["scenario"] = {{"id", spec.id},
                         {"n", spec.n},
                         {"p", spec.p},
                         {"r", spec.r},
                         {"design", design_name},
                         {"active", spec.active},
                         {"slopes_only", spec.slopes_only},
                         {"var_intercept", spec.var_intercept},
                         {"var_slope", spec.var_slope},
                         {"cov_intercept_slope", spec.cov_intercept_slope},
                         {"var_item_intercept", spec.var_item_intercept},
                         {"var_residual", spec.var_residual},
                         {"weibull_shape", spec.weibull_shape},
                         {"weibull_scale", spec.weibull_scale},
                         {"censor_max", spec.censor_max}};
    truth["effect_names"] = study.truth.effect_names;
    truth["gamma"] = vector_json(study.truth.gamma);
    truth["delta"] = vector_json(study.truth.delta);
    truth["lp"] = vector_json(study.truth.lp);
    truth["random_effects"] = matrix_json(study.truth.random_effects);
    if (study.truth.item_intercepts.size() > 0) {
        truth["item_intercepts"] = matrix_json(study.truth.item_intercepts);
    }
    truth["event_time"] = study.truth.event_time;
    truth["censor_time"] = study.truth.censor_time;
    write_text(run.out / "truth.json", truth.dump(2));
    return 0;
}

int cmd_evaluate(const Options& opt) {
    const Resolved run = resolve(opt);
    const json& sec = section(run.cfg, "evaluate");
    const std::vector<MetricRequest> metrics = parse_metrics(sec);

    SurvivalDataset surv;
    Eigen::VectorXd lp;
    if (find(sec, "scores")) {
        surv = load_survival(str_req(sec, "survival"));
        const std::string scores_path = str_req(sec, "scores");
        csv::Table table = csv::read_file(scores_path);
        const std::size_t subj_col = table.column_index("subject");
        const std::size_t lp_col = table.column_index("lp");
        std::unordered_map<std::string, double> by_id;
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            const std::string where = scores_path + " line " + std::to_string(r + 2);
            if (!by_id.emplace(table.rows[r][subj_col],
                               csv::parse_double(table.rows[r][lp_col], where))
                     .second) {
                throw SchemaError("duplicate subject in scores file: " + table.rows[r][subj_col]);
            }
        }
        lp.resize(static_cast<Eigen::Index>(surv.n()));
        for (std::size_t i = 0; i < surv.n(); ++i) {
            const auto it = by_id.find(surv.subjects[i]);
            if (it == by_id.end()) {
                throw SchemaError("scores file misses subject " + surv.subjects[i]);
            }
            lp[static_cast<Eigen::Index>(i)] = it->second;
        }
    } else {
        const PipelineFit fit = load_bundle(str_req(sec, "bundle"));
        LongitudinalDataset longit = load_longitudinal(str_req(sec, "longitudinal"), fit.map);
        SurvivalDataset sv = load_survival(str_req(sec, "survival"));
        const AlignedData data = align(std::move(longit), std::move(sv));
        surv = data.surv;
        lp = pipeline_lp(fit, data);
    }

    const std::vector<double> values = score_metrics(lp, surv, metrics);
    write_text(run.out / "metrics.json", metrics_json(metrics, values).dump(2));
    write_text(run.out / "metrics.csv", metrics_csv(metrics, values));

    const KaplanMeierCurve km = kaplan_meier(surv);
    std::string table = "time,n_risk,n_event,n_censored,survival\n";
    for (std::size_t k = 0; k < km.times.size(); ++k) {
        table += csv::format_double(km.times[k]);
        table += ',';
        table += std::to_string(km.n_risk[k]);
        table += ',';
        table += std::to_string(km.n_event[k]);
        table += ',';
        table += std::to_string(km.n_censored[k]);
        table += ',';
        table += csv::format_double(km.survival[k]);
        table += '\n';
    }
    write_text(run.out / "kaplan_meier.csv", table);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"penalized regression calibration for high-dimensional longitudinal predictors"};
    app.require_subcommand(1);

    Options opt;
    const auto add_common = [&opt](CLI::App* sub) {
        sub->add_option("--config", opt.config, "configuration file (JSON)")->required();
        sub->add_option("--seed", opt.seed, "seed override (non-negative integer)");
        sub->add_option("--workers", opt.workers, "worker thread cap override");
        sub->add_option("--out-dir", opt.out_dir, "output directory (created if missing)");
    };
    CLI::App* fit = app.add_subcommand("fit", "fit the three-step model and write the bundle");
    CLI::App* predict =
        app.add_subcommand("predict", "score new subjects with a fitted bundle");
    CLI::App* validate =
        app.add_subcommand("validate", "cluster bootstrap optimism correction");
    CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic study");
    CLI::App* evaluate = app.add_subcommand("evaluate", "compute survival metrics");
    for (CLI::App* sub : {fit, predict, validate, simulate, evaluate}) add_common(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (fit->parsed()) return cmd_fit(opt);
        if (predict->parsed()) return cmd_predict(opt);
        if (validate->parsed()) return cmd_validate(opt);
        if (simulate->parsed()) return cmd_simulate(opt);
        return cmd_evaluate(opt);
    } catch (const FitError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
