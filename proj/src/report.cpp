#include "lmerepro/report.hpp"

#include "lmerepro/error.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace lmerepro {

namespace {

ModelSpec system_spec(const EvalDataset& ds, const std::string& system, const std::string& object, bool with_system) {
    ModelSpec s;
    s.response = ds.response_name();
    if (with_system) s.fixed_terms.push_back(FixedTerm{{system}});
    s.random_factors = {object};
    return s;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

void describe_glrt(std::ostringstream& os, const char* title, const GlrtResult& r) {
    os << title << ": " << r.general_formula << " vs " << r.restricted_formula << "\n";
    os << "  stat " << fmt("%.4f", r.stat) << ", df " << r.df << ", p "
       << (r.p_value ? fmt("%.4g", *r.p_value) : std::string("n/a (fit did not converge)"));
    if (r.effect_size) os << ", effect size " << fmt("%.3f", *r.effect_size);
    os << "\n";
}

}  // namespace

std::vector<ConfigChoice> select_best_configs(const EvalDataset& ds, const std::string& system_factor,
                                              const std::vector<std::string>& config_factors) {
    const auto& sys = ds.factor(system_factor);
    std::vector<const Factor*> cfg;
    for (const auto& name : config_factors) cfg.push_back(&ds.factor(name));

    // key: system code followed by config codes; lexicographic order of codes
    // is declaration order, which settles ties.
    std::map<std::vector<std::int32_t>, std::pair<double, std::size_t>> sums;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::vector<std::int32_t> key{sys.codes[i]};
        for (const auto* f : cfg) key.push_back(f->codes[i]);
        auto& [sum, n] = sums[key];
        sum += ds.response()[i];
        ++n;
    }
    std::vector<ConfigChoice> out;
    for (std::size_t s = 0; s < sys.levels.size(); ++s) {
        std::optional<ConfigChoice> best;
        for (const auto& [key, acc] : sums) {
            if (key[0] != static_cast<std::int32_t>(s)) continue;
            const double mean = acc.first / static_cast<double>(acc.second);
            if (best && !(mean > best->mean_score)) continue;
            ConfigChoice c;
            c.system = sys.levels[s];
            for (std::size_t k = 0; k < cfg.size(); ++k) {
                c.levels[cfg[k]->name] = cfg[k]->levels[static_cast<std::size_t>(key[k + 1])];
            }
            c.mean_score = mean;
            c.n_rows = acc.second;
            best = std::move(c);
        }
        if (best) out.push_back(std::move(*best));
    }
    return out;
}

EvalDataset filter_to_configs(const EvalDataset& ds, const std::string& system_factor,
                              const std::vector<ConfigChoice>& choices) {
    const auto& sys = ds.factor(system_factor);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& level = sys.label(i);
        const auto it = std::find_if(choices.begin(), choices.end(), [&](const auto& c) { return c.system == level; });
        if (it == choices.end()) continue;
        const bool match = std::all_of(it->levels.begin(), it->levels.end(),
                                       [&](const auto& kv) { return ds.factor(kv.first).label(i) == kv.second; });
        if (match) rows.push_back(i);
    }
    return ds.select_rows(rows);
}

ReproReport build_report(const EvalDataset& ds, const ReportConfig& config) {
    if (!ds.has_factor(config.system_factor)) throw SchemaError("unknown system factor '" + config.system_factor + "'");
    const auto& sys = ds.factor(config.system_factor);
    if (sys.levels.size() < 2) {
        throw DataError("a reproducibility report needs at least 2 systems; '" + config.system_factor + "' has " +
                        std::to_string(sys.levels.size()));
    }

    ReproReport r;
    r.fingerprint = fingerprint_hex(ds.fingerprint());
    r.response = ds.response_name();
    r.system_factor = config.system_factor;
    r.object = config.object.empty() ? ds.object_of_interest() : config.object;
    if (!ds.has_factor(r.object)) throw SchemaError("unknown object factor '" + r.object + "'");
    if (r.object == r.system_factor) throw SpecError("the system factor cannot be the object of interest");
    r.systems = sys.levels;
    r.config_factors = config.config_factors;
    if (r.config_factors.empty()) {
        for (const auto& f : ds.factors()) {
            if (f.name != r.system_factor && f.name != r.object) r.config_factors.push_back(f.name);
        }
    }

    const ModelSpec restricted = system_spec(ds, r.system_factor, r.object, false);
    const ModelSpec general = system_spec(ds, r.system_factor, r.object, true);

    r.best_configs = select_best_configs(ds, r.system_factor, r.config_factors);
    const EvalDataset best = filter_to_configs(ds, r.system_factor, r.best_configs);
    r.pairwise_best = glrt(best, restricted, general, config.fit);
    r.under_variation = glrt(ds, restricted, general, config.fit);

    if (config.run_vca) {
        EvalDataset vca_data = ds;
        std::vector<std::string> random = config.vca_random_factors;
        if (config.vca_system.empty()) {
            r.vca_scope = "all";
        } else {
            r.vca_scope = config.vca_system;
            std::vector<std::size_t> rows;
            for (std::size_t i = 0; i < ds.size(); ++i) {
                if (sys.label(i) == config.vca_system) rows.push_back(i);
            }
            if (rows.empty()) throw SpecError("system '" + config.vca_system + "' has no rows");
            vca_data = ds.select_rows(rows);
        }
        if (random.empty()) {
            random.push_back(r.object);
            for (const auto& f : r.config_factors) random.push_back(f);
            if (config.vca_system.empty()) random.push_back(r.system_factor);
        }
        VcaOptions vo;
        vo.fit = config.fit;
        vo.fit.criterion = Criterion::REML;
        r.vca = vca(vca_data, random, r.object, vo);
    }

    for (const auto& cov : config.covariates) {
        ConditionalOptions co;
        co.system_factor = r.system_factor;
        co.random_factors = {r.object};
        co.fit = config.fit;
        const auto cond = glrt_conditional(best, cov, co);
        ConditionalSection sec;
        sec.covariate = cov;
        sec.test = cond.test;
        sec.scaling = cond.scaling;
        const auto& values = best.covariate(cov).values;
        const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
        GridRequest req;
        req.covariate = cov;
        req.factor = r.system_factor;
        req.levels = best.factor(r.system_factor).levels;
        req.lower = *lo;
        req.upper = *hi;
        req.points = std::max<std::size_t>(2, config.grid_points);
        req.scaling = cond.scaling.scales.empty() ? nullptr : &sec.scaling;
        sec.grid = interaction_grid(cond.test.general, req);
        r.conditional.push_back(std::move(sec));
    }
    return r;
}

Json to_json(const ReproReport& r) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["fingerprint"] = r.fingerprint;
    j["response"] = r.response;
    j["system_factor"] = r.system_factor;
    j["object"] = r.object;
    j["systems"] = r.systems;
    j["config_factors"] = r.config_factors;
    Json choices = Json::array();
    for (const auto& c : r.best_configs) {
        Json levels = Json::object();
        for (const auto& [k, v] : c.levels) levels[k] = v;
        choices.push_back(
            Json{{"system", c.system}, {"levels", std::move(levels)}, {"mean_score", c.mean_score}, {"n_rows", c.n_rows}});
    }
    j["best_configs"] = std::move(choices);
    j["pairwise_best"] = to_json(r.pairwise_best);
    j["under_variation"] = to_json(r.under_variation);
    j["vca"] = r.vca ? to_json(*r.vca) : Json(nullptr);
    j["vca_scope"] = r.vca_scope;
    Json cond = Json::array();
    for (const auto& c : r.conditional) {
        cond.push_back(Json{{"covariate", c.covariate},
                            {"test", to_json(c.test)},
                            {"scaling", to_json(c.scaling)},
                            {"grid", to_json(c.grid)}});
    }
    j["conditional"] = std::move(cond);
    return j;
}

ReproReport report_from_json(const Json& j) {
    if (j.value("schema_version", 0) != kSchemaVersion) throw DataError("unsupported report schema version");
    ReproReport r;
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.response = j.at("response").get<std::string>();
    r.system_factor = j.at("system_factor").get<std::string>();
    r.object = j.at("object").get<std::string>();
    r.systems = j.at("systems").get<std::vector<std::string>>();
    r.config_factors = j.at("config_factors").get<std::vector<std::string>>();
    for (const auto& c : j.at("best_configs")) {
        ConfigChoice cc;
        cc.system = c.at("system").get<std::string>();
        for (auto it = c.at("levels").begin(); it != c.at("levels").end(); ++it) {
            cc.levels[it.key()] = it.value().get<std::string>();
        }
        cc.mean_score = c.at("mean_score").get<double>();
        cc.n_rows = c.at("n_rows").get<std::size_t>();
        r.best_configs.push_back(std::move(cc));
    }
    r.pairwise_best = glrt_from_json(j.at("pairwise_best"));
    r.under_variation = glrt_from_json(j.at("under_variation"));
    if (!j.at("vca").is_null()) r.vca = vca_report_from_json(j.at("vca"));
    r.vca_scope = j.at("vca_scope").get<std::string>();
    for (const auto& c : j.at("conditional")) {
        ConditionalSection s;
        s.covariate = c.at("covariate").get<std::string>();
        s.test = glrt_from_json(c.at("test"));
        s.scaling = scaling_from_json(c.at("scaling"));
        s.grid = grid_from_json(c.at("grid"));
        r.conditional.push_back(std::move(s));
    }
    return r;
}

std::string report_summary(const ReproReport& r) {
    std::ostringstream os;
    os << "dataset " << r.fingerprint << ", response " << r.response << ", systems";
    for (const auto& s : r.systems) os << " " << s;
    os << "\n\nbest configurations (max mean " << r.response << "):\n";
    for (const auto& c : r.best_configs) {
        os << "  " << c.system << ":";
        for (const auto& [k, v] : c.levels) os << " " << k << "=" << v;
        os << "  mean " << fmt("%.4f", c.mean_score) << " (" << c.n_rows << " rows)\n";
    }
    os << "\n";
    describe_glrt(os, "best configurations", r.pairwise_best);
    describe_glrt(os, "under meta-parameter variation", r.under_variation);
    if (r.vca) {
        os << "\nvariance components (" << r.vca_scope << "):\n";
        for (const auto& c : r.vca->components) {
            os << "  " << c.name << "  " << fmt("%.5g", c.variance) << "  " << fmt("%.1f", c.percent) << "%\n";
        }
        os << "  phi " << fmt("%.1f", 100.0 * r.vca->phi) << "% (" << to_string(r.vca->interpretation) << ")\n";
    }
    for (const auto& c : r.conditional) {
        os << "\n";
        describe_glrt(os, ("conditional on " + c.covariate).c_str(), c.test);
    }
    return os.str();
}

}  // namespace lmerepro
