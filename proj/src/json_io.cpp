#include "lmerepro/json_io.hpp"

#include "lmerepro/error.hpp"

#include <cstdio>

namespace lmerepro {

namespace {

Reliability parse_reliability(const std::string& s) {
    for (auto r : {Reliability::Poor, Reliability::Moderate, Reliability::Good, Reliability::Excellent}) {
        if (to_string(r) == s) return r;
    }
    throw DataError("unknown reliability band '" + s + "'");
}

template <class T>
std::optional<T> optional_field(const Json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

}  // namespace

Json to_json(const ColumnDef& c) {
    Json atoms = Json::array();
    for (const auto& a : c.atoms) {
        Json ja;
        ja["kind"] = a.kind == ColumnAtom::Kind::FactorLevel ? "factor" : "covariate";
        ja["variable"] = a.variable;
        if (a.kind == ColumnAtom::Kind::FactorLevel) ja["level"] = a.level;
        atoms.push_back(std::move(ja));
    }
    return Json{{"name", c.name}, {"atoms", std::move(atoms)}};
}

ColumnDef column_def_from_json(const Json& j) {
    ColumnDef c;
    c.name = j.at("name").get<std::string>();
    for (const auto& ja : j.at("atoms")) {
        ColumnAtom a;
        const auto kind = ja.at("kind").get<std::string>();
        if (kind == "factor") {
            a.kind = ColumnAtom::Kind::FactorLevel;
            a.level = ja.at("level").get<std::string>();
        } else if (kind == "covariate") {
            a.kind = ColumnAtom::Kind::Covariate;
        } else {
            throw DataError("unknown column atom kind '" + kind + "'");
        }
        a.variable = ja.at("variable").get<std::string>();
        c.atoms.push_back(std::move(a));
    }
    return c;
}

Json to_json(const FittedModel& fm) {
    Json j;
    j["criterion"] = to_string(fm.criterion);
    j["converged"] = fm.converged;
    j["iterations"] = fm.iterations;
    j["n_obs"] = fm.n_obs;
    j["n_params"] = fm.n_params;
    j["log_likelihood"] = fm.log_likelihood;
    j["deviance"] = fm.deviance;
    Json coefs = Json::object();
    for (std::size_t i = 0; i < fm.column_names.size(); ++i) {
        coefs[fm.column_names[i]] = fm.beta_hat[static_cast<Eigen::Index>(i)];
    }
    j["coefficients"] = std::move(coefs);
    Json vars = Json::object();
    for (const auto& c : fm.sigma2) vars[c.name] = c.variance;
    j["variance_components"] = std::move(vars);
    j["gamma"] = fm.gamma;
    j["dropped_columns"] = fm.dropped_columns;
    Json cols = Json::array();
    for (const auto& c : fm.columns) cols.push_back(to_json(c));
    j["columns"] = std::move(cols);
    return j;
}

FittedModel fitted_model_from_json(const Json& j) {
    FittedModel fm;
    fm.criterion = parse_criterion(j.at("criterion").get<std::string>());
    fm.converged = j.at("converged").get<bool>();
    fm.iterations = j.at("iterations").get<int>();
    fm.n_obs = j.at("n_obs").get<std::size_t>();
    fm.n_params = j.at("n_params").get<std::size_t>();
    fm.log_likelihood = j.at("log_likelihood").get<double>();
    fm.deviance = j.at("deviance").get<double>();
    const auto& coefs = j.at("coefficients");
    fm.beta_hat.resize(static_cast<Eigen::Index>(coefs.size()));
    Eigen::Index i = 0;
    for (auto it = coefs.begin(); it != coefs.end(); ++it, ++i) {
        fm.column_names.push_back(it.key());
        fm.beta_hat[i] = it.value().get<double>();
    }
    const auto& vars = j.at("variance_components");
    for (auto it = vars.begin(); it != vars.end(); ++it) fm.sigma2.push_back({it.key(), it.value().get<double>()});
    fm.gamma = j.at("gamma").get<std::vector<double>>();
    fm.dropped_columns = j.at("dropped_columns").get<std::vector<std::string>>();
    for (const auto& c : j.at("columns")) fm.columns.push_back(column_def_from_json(c));
    return fm;
}

Json to_json(const GlrtResult& r) {
    Json j;
    j["restricted_formula"] = r.restricted_formula;
    j["general_formula"] = r.general_formula;
    j["stat"] = r.stat;
    j["df"] = r.df;
    j["p_value"] = r.p_value ? Json(*r.p_value) : Json(nullptr);
    j["lambda_ratio"] = r.lambda_ratio;
    j["effect_size"] = r.effect_size ? Json(*r.effect_size) : Json(nullptr);
    j["converged_restricted"] = r.converged_restricted;
    j["converged_general"] = r.converged_general;
    j["dropped_columns"] = r.dropped_columns;
    j["restricted"] = to_json(r.restricted);
    j["general"] = to_json(r.general);
    return j;
}

GlrtResult glrt_from_json(const Json& j) {
    GlrtResult r;
    r.restricted_formula = j.at("restricted_formula").get<std::string>();
    r.general_formula = j.at("general_formula").get<std::string>();
    r.stat = j.at("stat").get<double>();
    r.df = j.at("df").get<int>();
    r.p_value = optional_field<double>(j, "p_value");
    r.lambda_ratio = j.at("lambda_ratio").get<double>();
    r.effect_size = optional_field<double>(j, "effect_size");
    r.converged_restricted = j.at("converged_restricted").get<bool>();
    r.converged_general = j.at("converged_general").get<bool>();
    r.dropped_columns = j.at("dropped_columns").get<std::vector<std::string>>();
    r.restricted = fitted_model_from_json(j.at("restricted"));
    r.general = fitted_model_from_json(j.at("general"));
    return r;
}

Json to_json(const VcaReport& r) {
    Json j;
    j["object_of_interest"] = r.object_of_interest;
    Json comps = Json::array();
    for (const auto& c : r.components) {
        comps.push_back(Json{{"name", c.name}, {"variance", c.variance}, {"percent", c.percent}});
    }
    j["components"] = std::move(comps);
    j["phi"] = r.phi;
    j["interpretation"] = to_string(r.interpretation);
    j["converged"] = r.converged;
    j["iterations"] = r.iterations;
    j["deviance"] = r.deviance;
    j["intercept"] = r.intercept;
    j["n_obs"] = r.n_obs;
    return j;
}

VcaReport vca_report_from_json(const Json& j) {
    VcaReport r;
    r.object_of_interest = j.at("object_of_interest").get<std::string>();
    for (const auto& c : j.at("components")) {
        r.components.push_back(
            {c.at("name").get<std::string>(), c.at("variance").get<double>(), c.at("percent").get<double>()});
    }
    r.phi = j.at("phi").get<double>();
    r.interpretation = parse_reliability(j.at("interpretation").get<std::string>());
    r.converged = j.at("converged").get<bool>();
    r.iterations = j.at("iterations").get<int>();
    r.deviance = j.at("deviance").get<double>();
    r.intercept = j.at("intercept").get<double>();
    r.n_obs = j.at("n_obs").get<std::size_t>();
    return r;
}

Json to_json(const ScalingRecord& s) {
    Json j = Json::object();
    for (const auto& [name, sc] : s.scales) j[name] = Json{{"mean", sc.mean}, {"sd", sc.sd}};
    return j;
}

ScalingRecord scaling_from_json(const Json& j) {
    ScalingRecord s;
    for (auto it = j.begin(); it != j.end(); ++it) {
        s.scales[it.key()] = {it.value().at("mean").get<double>(), it.value().at("sd").get<double>()};
    }
    return s;
}

Json to_json(const std::vector<GridRow>& rows) {
    Json j = Json::array();
    for (const auto& r : rows) {
        j.push_back(Json{{"covariate_value", r.covariate_value}, {"level", r.level}, {"predicted_score", r.predicted}});
    }
    return j;
}

std::vector<GridRow> grid_from_json(const Json& j) {
    std::vector<GridRow> rows;
    for (const auto& r : j) {
        rows.push_back({r.at("covariate_value").get<double>(), r.at("level").get<std::string>(),
                        r.at("predicted_score").get<double>()});
    }
    return rows;
}

Json to_json(const CrossingReport& r) {
    Json pairs = Json::array();
    for (const auto& p : r.pairs) {
        pairs.push_back(Json{{"first", p.first},
                             {"second", p.second},
                             {"observed_cells", p.observed_cells},
                             {"possible_cells", p.possible_cells},
                             {"fraction", p.fraction}});
    }
    return Json{{"fully_crossed", r.fully_crossed()}, {"pairs", std::move(pairs)}};
}

std::string fingerprint_hex(std::uint64_t fp) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
    return buf;
}

}  // namespace lmerepro
