#include "prc/serialize.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "prc/errors.hpp"

namespace prc {
namespace {

using nlohmann::json;

constexpr int kSchemaVersion = 1;
constexpr const char* kKind = "prc_model_bundle";

json number(double x, const char* what) {
    if (!std::isfinite(x)) throw DomainError(std::string(what) + " is not finite");
    return json(x);
}

json vector_json(const Eigen::VectorXd& v, const char* what) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v[i], what));
    return a;
}

json doubles_json(const std::vector<double>& v, const char* what) {
    json a = json::array();
    for (double x : v) a.push_back(number(x, what));
    return a;
}

json matrix2_json(const Eigen::Matrix2d& m, const char* what) {
    json a = json::array();
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) a.push_back(number(m(r, c), what));
    return a;
}

json flags_json(const std::vector<std::uint8_t>& v) {
    json a = json::array();
    for (std::uint8_t x : v) a.push_back(static_cast<int>(x));
    return a;
}

json cv_json(const CvResult& cv) {
    json j;
    j["lambda"] = number(cv.lambda, "cv lambda");
    j["alpha"] = number(cv.alpha, "cv alpha");
    j["lambdas"] = doubles_json(cv.lambdas, "cv lambda path");
    j["mean_deviance"] = doubles_json(cv.mean_deviance, "cv deviance");
    j["folds"] = cv.folds;
    return j;
}

const json& field(const json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end()) throw SchemaError(std::string("bundle field missing: ") + key);
    return *it;
}

double read_number(const json& j, const char* key) {
    const json& f = field(j, key);
    if (!f.is_number()) throw SchemaError(std::string("bundle field ") + key + " must be a number");
    const double x = f.get<double>();
    if (!std::isfinite(x)) throw SchemaError(std::string("bundle field ") + key + " is not finite");
    return x;
}

int read_int(const json& j, const char* key) {
    const json& f = field(j, key);
    if (!f.is_number_integer()) throw SchemaError(std::string("bundle field ") + key + " must be an integer");
    return f.get<int>();
}

bool read_bool(const json& j, const char* key) {
    const json& f = field(j, key);
    if (!f.is_boolean()) throw SchemaError(std::string("bundle field ") + key + " must be a boolean");
    return f.get<bool>();
}

std::string read_string(const json& j, const char* key) {
    const json& f = field(j, key);
    if (!f.is_string()) throw SchemaError(std::string("bundle field ") + key + " must be a string");
    return f.get<std::string>();
}

const json& read_array(const json& j, const char* key) {
    const json& f = field(j, key);
    if (!f.is_array()) throw SchemaError(std::string("bundle field ") + key + " must be an array");
    return f;
}

std::vector<double> read_doubles(const json& j, const char* key) {
    const json& a = read_array(j, key);
    std::vector<double> out;
    out.reserve(a.size());
    for (const json& e : a) {
        if (!e.is_number()) throw SchemaError(std::string("bundle field ") + key + " must hold numbers");
        const double x = e.get<double>();
        if (!std::isfinite(x)) throw SchemaError(std::string("bundle field ") + key + " is not finite");
        out.push_back(x);
    }
    return out;
}

Eigen::VectorXd read_vector(const json& j, const char* key) {
    const std::vector<double> v = read_doubles(j, key);
    return Eigen::VectorXd::Map(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<std::string> read_strings(const json& j, const char* key) {
    const json& a = read_array(j, key);
    std::vector<std::string> out;
    out.reserve(a.size());
    for (const json& e : a) {
        if (!e.is_string()) throw SchemaError(std::string("bundle field ") + key + " must hold strings");
        out.push_back(e.get<std::string>());
    }
    return out;
}

std::vector<std::uint8_t> read_flags(const json& j, const char* key) {
    const json& a = read_array(j, key);
    std::vector<std::uint8_t> out;
    out.reserve(a.size());
    for (const json& e : a) {
        if (!e.is_number_integer() || (e.get<int>() != 0 && e.get<int>() != 1))
            throw SchemaError(std::string("bundle field ") + key + " must hold 0/1 flags");
        out.push_back(static_cast<std::uint8_t>(e.get<int>()));
    }
    return out;
}

Eigen::Matrix2d read_matrix2(const json& j, const char* key) {
    const std::vector<double> v = read_doubles(j, key);
    if (v.size() != 4) throw SchemaError(std::string("bundle field ") + key + " must hold 4 numbers");
    Eigen::Matrix2d m;
    m << v[0], v[1], v[2], v[3];
    return m;
}

CvResult cv_from(const json& f, const std::string& what) {
    if (!f.is_object()) throw SchemaError("bundle field " + what + " must be an object");
    CvResult cv;
    cv.lambda = read_number(f, "lambda");
    cv.alpha = read_number(f, "alpha");
    cv.lambdas = read_doubles(f, "lambdas");
    cv.mean_deviance = read_doubles(f, "mean_deviance");
    cv.folds = read_int(f, "folds");
    if (cv.mean_deviance.size() != cv.lambdas.size())
        throw SchemaError("cv deviance length does not match its lambda path");
    return cv;
}

CvResult read_cv(const json& j, const char* key) { return cv_from(field(j, key), key); }

} // namespace

std::string bundle_to_json(const PipelineFit& fit) {
    json j;
    j["kind"] = kKind;
    j["schema_version"] = kSchemaVersion;
    j["variant"] = variant_name(fit.variant);
    j["include_age"] = fit.include_age;
    j["baseline_impute"] = vector_json(fit.baseline_impute, "baseline imputation");
    j["columns"] = fit.columns;

    json map;
    map["items"] = fit.map.items();
    json procs = json::array();
    for (std::size_t q = 0; q < fit.map.n_items(); ++q)
        procs.push_back(fit.map.process_name_of(q));
    map["process"] = procs;
    j["item_map"] = map;

    json lmms = json::array();
    for (const LmmFit& f : fit.lmm_fits) {
        json e;
        e["item"] = f.item;
        e["beta0"] = number(f.beta0, "lmm beta0");
        e["beta1"] = number(f.beta1, "lmm beta1");
        e["d"] = matrix2_json(f.D, "lmm covariance");
        e["sigma2_eps"] = number(f.sigma2_eps, "lmm residual variance");
        e["loglik"] = number(f.loglik, "lmm loglik");
        e["converged"] = f.converged;
        e["iterations"] = f.iterations;
        e["constraints"] = json::array({"D positive semidefinite", "sigma2_eps >= 1e-8"});
        lmms.push_back(std::move(e));
    }
    j["lmm_fits"] = lmms;

    json mlpmms = json::array();
    for (const MlpmmFit& f : fit.mlpmm_fits) {
        json e;
        e["items"] = f.items;
        e["beta0"] = vector_json(f.beta0, "mlpmm beta0");
        e["beta1"] = vector_json(f.beta1, "mlpmm beta1");
        e["sigma2_b"] = vector_json(f.sigma2_b, "mlpmm item-intercept variance");
        e["sigma2_eps"] = vector_json(f.sigma2_eps, "mlpmm residual variance");
        e["sigma_u"] = matrix2_json(f.Sigma_u, "mlpmm shared-effect covariance");
        e["loglik"] = number(f.loglik, "mlpmm loglik");
        e["converged"] = f.converged;
        e["iterations"] = f.iterations;
        e["constraints"] = json::array(
            {"Sigma_u[0][0] = 1 (identifiability)", "variances >= 1e-8"});
        mlpmms.push_back(std::move(e));
    }
    j["mlpmm_fits"] = mlpmms;

    json cox;
    cox["columns"] = fit.cox.columns;
    cox["coef"] = vector_json(fit.cox.coef, "cox coefficients");
    cox["alpha"] = number(fit.cox.alpha, "cox alpha");
    cox["lambda"] = number(fit.cox.lambda, "cox lambda");
    cox["center"] = vector_json(fit.cox.center, "cox centers");
    cox["scale"] = vector_json(fit.cox.scale, "cox scales");
    cox["locked"] = flags_json(fit.cox.locked);
    cox["kkt"] = number(fit.cox.kkt, "cox kkt");
    json baseline;
    baseline["times"] = doubles_json(fit.cox.baseline.times, "baseline-hazard times");
    baseline["increments"] = doubles_json(fit.cox.baseline.increments, "baseline-hazard increments");
    cox["baseline"] = baseline;
    cox["train_lp"] = vector_json(fit.cox.train_lp, "training linear predictors");
    j["cox"] = cox;

    j["used_nested"] = fit.used_nested;
    j["cv"] = cv_json(fit.cv);
    json nested;
    nested["alpha"] = number(fit.nested.alpha, "nested alpha");
    nested["lambda"] = number(fit.nested.lambda, "nested lambda");
    nested["alpha_grid"] = doubles_json(fit.nested.alpha_grid, "alpha grid");
    nested["outer_deviance"] = doubles_json(fit.nested.outer_deviance, "outer deviance");
    json inner = json::array();
    for (const CvResult& cv : fit.nested.inner) inner.push_back(cv_json(cv));
    nested["inner"] = inner;
    nested["final_cv"] = cv_json(fit.nested.final_cv);
    j["nested"] = nested;

    return j.dump(2);
}

PipelineFit bundle_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("bundle is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw SchemaError("bundle root must be an object");
    if (read_string(j, "kind") != kKind)
        throw SchemaError("file is not a model bundle");
    if (read_int(j, "schema_version") != kSchemaVersion)
        throw SchemaError("unsupported bundle schema version " +
                          std::to_string(read_int(j, "schema_version")));

    PipelineFit fit;
    fit.variant = variant_from_name(read_string(j, "variant"));
    fit.include_age = read_bool(j, "include_age");
    fit.baseline_impute = read_vector(j, "baseline_impute");
    fit.columns = read_strings(j, "columns");

    const json& map = field(j, "item_map");
    if (!map.is_object()) throw SchemaError("bundle field item_map must be an object");
    fit.map = ItemMap(read_strings(map, "items"), read_strings(map, "process"));

    for (const json& e : read_array(j, "lmm_fits")) {
        if (!e.is_object()) throw SchemaError("bundle field lmm_fits must hold objects");
        LmmFit f;
        f.item = read_string(e, "item");
        f.beta0 = read_number(e, "beta0");
        f.beta1 = read_number(e, "beta1");
        f.D = read_matrix2(e, "d");
        f.sigma2_eps = read_number(e, "sigma2_eps");
        f.loglik = read_number(e, "loglik");
        f.converged = read_bool(e, "converged");
        f.iterations = read_int(e, "iterations");
        fit.lmm_fits.push_back(std::move(f));
    }

    for (const json& e : read_array(j, "mlpmm_fits")) {
        if (!e.is_object()) throw SchemaError("bundle field mlpmm_fits must hold objects");
        MlpmmFit f;
        f.items = read_strings(e, "items");
        f.beta0 = read_vector(e, "beta0");
        f.beta1 = read_vector(e, "beta1");
        f.sigma2_b = read_vector(e, "sigma2_b");
        f.sigma2_eps = read_vector(e, "sigma2_eps");
        f.Sigma_u = read_matrix2(e, "sigma_u");
        f.loglik = read_number(e, "loglik");
        f.converged = read_bool(e, "converged");
        f.iterations = read_int(e, "iterations");
        const Eigen::Index r = static_cast<Eigen::Index>(f.items.size());
        if (r == 0) throw SchemaError("mlpmm fit lists no items");
        if (f.beta0.size() != r || f.beta1.size() != r || f.sigma2_b.size() != r ||
            f.sigma2_eps.size() != r)
            throw SchemaError("mlpmm parameter lengths do not match its item count");
        fit.mlpmm_fits.push_back(std::move(f));
    }

    const json& cox = field(j, "cox");
    if (!cox.is_object()) throw SchemaError("bundle field cox must be an object");
    fit.cox.columns = read_strings(cox, "columns");
    fit.cox.coef = read_vector(cox, "coef");
    fit.cox.alpha = read_number(cox, "alpha");
    fit.cox.lambda = read_number(cox, "lambda");
    fit.cox.center = read_vector(cox, "center");
    fit.cox.scale = read_vector(cox, "scale");
    fit.cox.locked = read_flags(cox, "locked");
    fit.cox.kkt = read_number(cox, "kkt");
    const json& baseline = field(cox, "baseline");
    if (!baseline.is_object()) throw SchemaError("bundle field cox.baseline must be an object");
    fit.cox.baseline.times = read_doubles(baseline, "times");
    fit.cox.baseline.increments = read_doubles(baseline, "increments");
    fit.cox.train_lp = read_vector(cox, "train_lp");
    const Eigen::Index d = static_cast<Eigen::Index>(fit.cox.columns.size());
    if (fit.cox.coef.size() != d || fit.cox.center.size() != d || fit.cox.scale.size() != d ||
        static_cast<Eigen::Index>(fit.cox.locked.size()) != d)
        throw SchemaError("cox parameter lengths do not match its column count");
    if (fit.cox.baseline.times.size() != fit.cox.baseline.increments.size())
        throw SchemaError("baseline-hazard times and increments differ in length");

    fit.used_nested = read_bool(j, "used_nested");
    fit.cv = read_cv(j, "cv");
    const json& nested = field(j, "nested");
    if (!nested.is_object()) throw SchemaError("bundle field nested must be an object");
    fit.nested.alpha = read_number(nested, "alpha");
    fit.nested.lambda = read_number(nested, "lambda");
    fit.nested.alpha_grid = read_doubles(nested, "alpha_grid");
    fit.nested.outer_deviance = read_doubles(nested, "outer_deviance");
    for (const json& e : read_array(nested, "inner"))
        fit.nested.inner.push_back(cv_from(e, "nested.inner entry"));
    fit.nested.final_cv = read_cv(nested, "final_cv");

    if (fit.columns != fit.cox.columns)
        throw SchemaError("bundle columns do not match its cox fit columns");
    return fit;
}

void save_bundle(const PipelineFit& fit, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    out << bundle_to_json(fit) << '\n';
    if (!out) throw ParseError("failed writing " + path);
}

PipelineFit load_bundle(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return bundle_from_json(buf.str());
}

} // namespace prc
