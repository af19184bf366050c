#include "lmerepro/cli.hpp"

#include "lmerepro/error.hpp"
#include "lmerepro/json_io.hpp"
#include "lmerepro/report.hpp"
#include "lmerepro/simulate.hpp"
#include "lmerepro/text_props.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <unistd.h>

namespace lmerepro {

namespace {

// Options shared by every subcommand that reads a score table.
struct DataOptions {
    std::string data;
    std::string schema;
    std::string response;
    std::vector<std::string> factors;
    std::vector<std::string> covariates;
    std::string object;
    bool tab = false;
};

struct FitFlags {
    std::string criterion;
    int max_iter = 10000;
    double tol = 1e-10;
};

struct Output {
    std::string format;
    std::string out;
};

std::string read_text(const std::string& path) {
    if (!std::filesystem::exists(path)) throw DataError("file not found: '" + path + "'");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

void add_data_options(CLI::App* sub, DataOptions& d, bool data_required = true) {
    auto* opt = sub->add_option("--data", d.data, "score table (CSV)");
    if (data_required) opt->required();
    sub->add_option("--schema", d.schema, "schema JSON naming response, factors, covariates");
    sub->add_option("--response", d.response, "response column");
    sub->add_option("--factors", d.factors, "columns read as factors")->delimiter(',');
    sub->add_option("--covariates", d.covariates, "columns read as covariates")->delimiter(',');
    sub->add_option("--object", d.object, "object-of-interest factor");
    sub->add_flag("--tab", d.tab, "tab-separated input");
}

void add_fit_options(CLI::App* sub, FitFlags& f) {
    sub->add_option("--criterion", f.criterion, "ml or reml");
    sub->add_option("--max-iter", f.max_iter, "deviance evaluation budget")->check(CLI::PositiveNumber);
    sub->add_option("--tol", f.tol, "relative deviance tolerance")->check(CLI::PositiveNumber);
}

void add_output_options(CLI::App* sub, Output& o, const std::string& formats) {
    sub->add_option("--format", o.format, "output format")->check(CLI::IsMember(CLI::detail::split(formats, ',')));
    sub->add_option("--out", o.out, "output file (written atomically)");
}

FitOptions fit_options(const FitFlags& f, Criterion fallback) {
    FitOptions o;
    o.criterion = f.criterion.empty() ? fallback : parse_criterion(f.criterion);
    o.max_iter = f.max_iter;
    o.ftol_rel = f.tol;
    return o;
}

Json fit_json(const FitOptions& o) {
    return Json{{"criterion", to_string(o.criterion)}, {"max_iter", o.max_iter}, {"tol", o.ftol_rel}};
}

std::vector<std::string> merged(std::vector<std::string> a, const std::vector<std::string>& b) {
    for (const auto& x : b) {
        if (std::find(a.begin(), a.end(), x) == a.end()) a.push_back(x);
    }
    return a;
}

// Loads the table. Without a schema file the layout is inferred: listed and
// formula-implied factors stay factors, and remaining columns are covariates
// when fully numeric.
EvalDataset load_dataset(const DataOptions& d, const std::string& default_response,
                         const std::vector<std::string>& implied_factors) {
    CsvOptions csv;
    if (d.tab) csv.delimiter = '\t';
    const std::string text = read_text(d.data);
    ColumnSchema schema;
    if (!d.schema.empty()) {
        schema = load_schema_json(d.schema);
    } else {
        const std::string response = !d.response.empty() ? d.response : default_response;
        std::vector<std::string> factors = merged(d.factors, implied_factors);
        factors.erase(std::remove_if(factors.begin(), factors.end(),
                                     [&](const std::string& f) {
                                         return std::find(d.covariates.begin(), d.covariates.end(), f) !=
                                                d.covariates.end();
                                     }),
                      factors.end());
        schema = infer_schema(text, response, factors, csv);
        if (!d.covariates.empty()) {
            schema.covariates = d.covariates;
        }
    }
    if (!d.object.empty()) schema.object_of_interest = d.object;
    return parse_csv(text, schema, csv);
}

Json data_json(const DataOptions& d, const EvalDataset& ds) {
    Json j;
    j["path"] = d.data;
    j["schema"] = d.schema.empty() ? Json(nullptr) : Json(d.schema);
    j["response"] = ds.response_name();
    Json factors = Json::array();
    for (const auto& f : ds.factors()) factors.push_back(f.name);
    j["factors"] = std::move(factors);
    j["covariates"] = ds.covariate_names();
    j["object"] = ds.object_of_interest();
    j["delimiter"] = d.tab ? "\t" : ",";
    j["n_obs"] = ds.size();
    j["fingerprint"] = fingerprint_hex(ds.fingerprint());
    return j;
}

std::vector<std::string> formula_factors(const std::vector<ModelSpec>& specs) {
    std::vector<std::string> out;
    for (const auto& s : specs) out = merged(out, s.random_factors);
    return out;
}

Json envelope(const std::string& command, Json config) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["command"] = command;
    j["config"] = std::move(config);
    return j;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

std::string fit_table(const FittedModel& fm) {
    std::ostringstream os;
    os << "criterion " << to_string(fm.criterion) << ", deviance " << fmt("%.6f", fm.deviance) << ", "
       << (fm.converged ? "converged" : "NOT converged") << " after " << fm.iterations << " evaluations\n";
    os << "fixed effects:\n";
    for (std::size_t i = 0; i < fm.column_names.size(); ++i) {
        os << "  " << fm.column_names[i] << "  " << fmt("%.6g", fm.beta_hat[static_cast<Eigen::Index>(i)]) << "\n";
    }
    for (const auto& c : fm.dropped_columns) os << "  " << c << "  (aliased, dropped)\n";
    os << "variance components:\n";
    for (const auto& c : fm.sigma2) os << "  " << c.name << "  " << fmt("%.6g", c.variance) << "\n";
    return os.str();
}

std::string glrt_table(const GlrtResult& r) {
    std::ostringstream os;
    os << "restricted: " << r.restricted_formula << "\n";
    os << "general:    " << r.general_formula << "\n";
    os << "stat " << fmt("%.6g", r.stat) << "  df " << r.df << "  p "
       << (r.p_value ? fmt("%.6g", *r.p_value) : std::string("n/a")) << "  lambda " << fmt("%.6g", r.lambda_ratio);
    if (r.effect_size) os << "  effect size " << fmt("%.4f", *r.effect_size);
    os << "\n";
    for (const auto& c : r.dropped_columns) os << "aliased column dropped: " << c << "\n";
    return os.str();
}

std::string vca_table(const VcaReport& r) {
    std::ostringstream os;
    std::size_t width = 18;
    for (const auto& c : r.components) width = std::max(width, c.name.size() + 2);
    os << std::string("component").append(width - 9, ' ') << "variance      percent\n";
    for (const auto& c : r.components) {
        os << c.name << std::string(width - c.name.size(), ' ') << fmt("%-13.5g", c.variance) << " "
           << fmt("%5.1f", c.percent) << "\n";
    }
    os << "phi (" << r.object_of_interest << ") = " << fmt("%.1f", 100.0 * r.phi) << "%  " << to_string(r.interpretation)
       << "\n";
    return os.str();
}

class Emitter {
public:
    Emitter(const Output& o, std::ostream& out) : o_(o), out_(out) {}
    void operator()(const std::string& content) const {
        if (o_.out.empty()) {
            out_ << content;
        } else {
            write_file_atomic(o_.out, content);
        }
    }

private:
    const Output& o_;
    std::ostream& out_;
};

std::map<std::string, std::string> read_texts(const std::string& path, const std::string& layout,
                                              std::vector<std::string>* order) {
    const std::string text = read_text(path);
    std::map<std::string, std::string> texts;
    auto add = [&](std::string id, std::string body) {
        if (texts.count(id)) throw DataError("duplicate text id '" + id + "' in '" + path + "'");
        if (order) order->push_back(id);
        texts.emplace(std::move(id), std::move(body));
    };
    const bool csv = layout == "csv" || (layout == "auto" && path.size() >= 4 && path.ends_with(".csv"));
    if (csv) {
        const auto records = parse_csv_records(text);
        if (records.empty()) throw EmptyDataError("'" + path + "' is empty");
        const auto& header = records.front();
        auto col = [&](const char* name) {
            auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end()) throw SchemaError("'" + path + "' needs columns id,text");
            return static_cast<std::size_t>(it - header.begin());
        };
        const std::size_t id_col = col("id");
        const std::size_t text_col = col("text");
        for (std::size_t r = 1; r < records.size(); ++r) {
            if (records[r].size() != header.size()) {
                throw ParseError("record " + std::to_string(r + 1) + " of '" + path + "' has " +
                                     std::to_string(records[r].size()) + " fields",
                                 r + 1);
            }
            add(records[r][id_col], records[r][text_col]);
        }
    } else {
        std::istringstream in(text);
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            add(std::to_string(++n), line);
        }
    }
    if (texts.empty()) throw EmptyDataError("no texts in '" + path + "'");
    return texts;
}

std::string props_csv(const std::vector<std::string>& ids, const std::map<std::string, std::string>& texts,
                      const CorpusStats& stats) {
    auto num = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    std::string out = "id,rarity,readability\n";
    for (const auto& id : ids) {
        const auto p = text_properties(texts.at(id), stats);
        std::string cell = id;
        if (cell.find_first_of(",\"\n") != std::string::npos) {
            std::string q = "\"";
            for (char c : cell) {
                if (c == '"') q += '"';
                q += c;
            }
            cell = q + "\"";
        }
        out += cell + "," + num(p.rarity) + "," + num(p.readability) + "\n";
    }
    return out;
}

}  // namespace

void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot write '" + tmp.string() + "'");
        f << content;
        f.flush();
        if (!f) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw DataError("failed writing '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw DataError("cannot replace '" + path + "'");
    }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Linear mixed effects analysis of evaluation scores", "lmerepro"};
    app.require_subcommand(1);

    int status = kExitOk;
    std::function<void()> action;

    // fit
    DataOptions fit_data;
    FitFlags fit_flags;
    Output fit_out;
    std::string fit_formula;
    auto* fit_cmd = app.add_subcommand("fit", "fit one mixed model");
    add_data_options(fit_cmd, fit_data);
    add_fit_options(fit_cmd, fit_flags);
    add_output_options(fit_cmd, fit_out, "json,table");
    fit_cmd->add_option("--formula", fit_formula, "model formula")->required();
    fit_cmd->callback([&] {
        action = [&] {
            const ModelSpec spec = ModelSpec::parse(fit_formula);
            const EvalDataset ds = load_dataset(fit_data, spec.response, formula_factors({spec}));
            const FitOptions fo = fit_options(fit_flags, Criterion::REML);
            const FittedModel fm = fit(build_design(ds, spec), response_vector(ds), fo);
            Emitter emit(fit_out, out);
            if (fit_out.format == "table") {
                emit(fit_table(fm));
            } else {
                Json j = envelope("fit", Json{{"data", data_json(fit_data, ds)},
                                              {"formula", spec.to_string()},
                                              {"fit", fit_json(fo)}});
                j["result"] = to_json(fm);
                emit(dump(j));
            }
            if (!fm.converged) {
                err << "fit did not converge within " << fo.max_iter << " deviance evaluations\n";
                status = kExitNumerical;
            }
        };
    });

    // glrt
    DataOptions glrt_data;
    FitFlags glrt_flags;
    Output glrt_out;
    std::string restricted_formula, general_formula, cond_covariate, system_factor = "system";
    std::vector<std::string> cond_random;
    bool interaction_only = false, no_standardize = false;
    auto* glrt_cmd = app.add_subcommand("glrt", "likelihood ratio test of nested models (fitted by ML)");
    add_data_options(glrt_cmd, glrt_data);
    add_fit_options(glrt_cmd, glrt_flags);
    add_output_options(glrt_cmd, glrt_out, "json,table");
    auto* r_opt = glrt_cmd->add_option("--restricted", restricted_formula, "restricted model formula");
    auto* g_opt = glrt_cmd->add_option("--general", general_formula, "general model formula");
    r_opt->needs(g_opt);
    g_opt->needs(r_opt);
    auto* c_opt = glrt_cmd->add_option("--covariate", cond_covariate, "conditional test on this covariate");
    c_opt->excludes(r_opt);
    c_opt->excludes(g_opt);
    glrt_cmd->add_option("--system", system_factor, "system factor of the conditional test");
    glrt_cmd->add_option("--random", cond_random, "random factors of the conditional test")->delimiter(',');
    glrt_cmd->add_flag("--interaction-only", interaction_only, "keep the system main effect in the restricted model");
    glrt_cmd->add_flag("--no-standardize", no_standardize, "fit the covariate on its original scale");
    glrt_cmd->callback([&] {
        action = [&] {
            if (restricted_formula.empty() && cond_covariate.empty()) {
                throw SpecError("glrt needs --restricted and --general, or --covariate");
            }
            const FitOptions fo = fit_options(glrt_flags, Criterion::ML);
            Json config;
            GlrtResult result;
            ScalingRecord scaling;
            if (!cond_covariate.empty()) {
                const EvalDataset ds =
                    load_dataset(glrt_data, "score", merged(merged({system_factor}, cond_random), {}));
                ConditionalOptions co;
                co.system_factor = system_factor;
                co.random_factors = cond_random;
                co.interaction_only = interaction_only;
                co.standardize = !no_standardize;
                co.fit = fo;
                const auto cond = glrt_conditional(ds, cond_covariate, co);
                result = cond.test;
                scaling = cond.scaling;
                config = Json{{"data", data_json(glrt_data, ds)},
                              {"covariate", cond_covariate},
                              {"system", system_factor},
                              {"interaction_only", interaction_only},
                              {"standardize", !no_standardize},
                              {"fit", fit_json(fo)}};
            } else {
                const ModelSpec r = ModelSpec::parse(restricted_formula);
                const ModelSpec g = ModelSpec::parse(general_formula);
                const EvalDataset ds = load_dataset(glrt_data, g.response, formula_factors({r, g}));
                result = glrt(ds, r, g, fo);
                config = Json{{"data", data_json(glrt_data, ds)},
                              {"restricted", r.to_string()},
                              {"general", g.to_string()},
                              {"fit", fit_json(fo)}};
            }
            Emitter emit(glrt_out, out);
            if (glrt_out.format == "table") {
                emit(glrt_table(result));
            } else {
                Json j = envelope("glrt", std::move(config));
                j["result"] = to_json(result);
                if (!scaling.scales.empty()) j["scaling"] = to_json(scaling);
                emit(dump(j));
            }
            if (!result.p_value) {
                err << "p-value withheld: a model fit did not converge\n";
                status = kExitNumerical;
            }
        };
    });

    // vca
    DataOptions vca_data;
    FitFlags vca_flags;
    Output vca_out;
    std::vector<std::string> vca_random, vca_interactions;
    auto* vca_cmd = app.add_subcommand("vca", "variance component analysis and reliability");
    add_data_options(vca_cmd, vca_data);
    add_fit_options(vca_cmd, vca_flags);
    add_output_options(vca_cmd, vca_out, "json,table");
    vca_cmd->add_option("--random", vca_random, "random factors")->delimiter(',')->required();
    vca_cmd->add_option("--interaction", vca_interactions, "extra a:b random interaction")->delimiter(',');
    vca_cmd->callback([&] {
        action = [&] {
            std::vector<std::string> implied = vca_random;
            VcaOptions vo;
            for (const auto& s : vca_interactions) {
                const auto colon = s.find(':');
                if (colon == std::string::npos || colon == 0 || colon + 1 == s.size()) {
                    throw SpecError("--interaction expects a:b, got '" + s + "'");
                }
                vo.interactions.emplace_back(s.substr(0, colon), s.substr(colon + 1));
                implied = merged(implied, {s.substr(0, colon), s.substr(colon + 1)});
            }
            DataOptions d = vca_data;
            if (d.object.empty()) d.object = vca_random.front();
            const EvalDataset ds = load_dataset(d, "score", implied);
            vo.fit = fit_options(vca_flags, Criterion::REML);
            const VcaReport rep = vca(ds, vca_random, ds.object_of_interest(), vo);
            Emitter emit(vca_out, out);
            if (vca_out.format == "table") {
                emit(vca_table(rep));
            } else {
                Json j = envelope("vca", Json{{"data", data_json(d, ds)},
                                              {"random", vca_random},
                                              {"interactions", vca_interactions},
                                              {"fit", fit_json(vo.fit)}});
                j["result"] = to_json(rep);
                emit(dump(j));
            }
        };
    });

    // reliability
    std::string components_text, rel_object;
    double threshold = 0.8;
    Output rel_out;
    auto* rel_cmd = app.add_subcommand("reliability", "reliability coefficient from given variance components");
    rel_cmd->add_option("--components", components_text, "JSON object name -> variance, or @file")->required();
    rel_cmd->add_option("--object", rel_object, "object-of-interest component")->required();
    rel_cmd->add_option("--threshold", threshold, "binary reliability cutoff");
    add_output_options(rel_cmd, rel_out, "json,table");
    rel_cmd->callback([&] {
        action = [&] {
            const std::string text =
                components_text.starts_with("@") ? read_text(components_text.substr(1)) : components_text;
            Json parsed;
            try {
                parsed = Json::parse(text);
            } catch (const Json::parse_error& e) {
                throw DataError(std::string("--components is not valid JSON: ") + e.what());
            }
            if (!parsed.is_object()) throw DataError("--components must be a JSON object");
            std::vector<std::pair<std::string, double>> comps;
            for (auto it = parsed.begin(); it != parsed.end(); ++it) {
                if (!it.value().is_number()) throw DataError("component '" + it.key() + "' is not a number");
                comps.emplace_back(it.key(), it.value().get<double>());
            }
            const VcaReport rep = vca_from_components(comps, rel_object);
            Emitter emit(rel_out, out);
            if (rel_out.format == "table") {
                emit(vca_table(rep));
            } else {
                Json j = envelope("reliability",
                                  Json{{"components", parsed}, {"object", rel_object}, {"threshold", threshold}});
                Json r = to_json(rep);
                r["reliable"] = is_reliable(rep.phi, threshold);
                j["result"] = std::move(r);
                emit(dump(j));
            }
        };
    });

    // props
    std::string texts_path, corpus_path, text_layout = "auto";
    DataOptions props_data;
    Output props_out;
    auto* props_cmd = app.add_subcommand("props", "word rarity and readability of texts");
    props_cmd->add_option("--texts", texts_path, "one text per line, or CSV with id,text")->required();
    props_cmd->add_option("--corpus", corpus_path, "reference corpus (defaults to the texts)");
    props_cmd->add_option("--text-format", text_layout, "auto, lines or csv")
        ->check(CLI::IsMember({"auto", "lines", "csv"}));
    add_data_options(props_cmd, props_data, false);
    props_cmd->add_option("--out", props_out.out, "output file (written atomically)");
    props_cmd->callback([&] {
        action = [&] {
            std::vector<std::string> ids;
            const auto texts = read_texts(texts_path, text_layout, &ids);
            std::vector<std::string> corpus;
            if (corpus_path.empty()) {
                for (const auto& id : ids) corpus.push_back(texts.at(id));
            } else {
                for (const auto& [id, t] : read_texts(corpus_path, text_layout, nullptr)) corpus.push_back(t);
            }
            const CorpusStats stats = build_corpus_stats(corpus);
            Emitter emit(props_out, out);
            if (props_data.data.empty()) {
                emit(props_csv(ids, texts, stats));
            } else {
                std::vector<std::string> implied;
                if (!props_data.object.empty()) implied.push_back(props_data.object);
                const EvalDataset ds = load_dataset(props_data, "score", implied);
                emit(to_csv(annotate_dataset(ds, texts, stats)));
            }
        };
    });

    // interact
    DataOptions int_data;
    FitFlags int_flags;
    Output int_out;
    std::string int_factor, int_covariate;
    std::vector<std::string> int_random;
    std::size_t grid_points = 101;
    bool int_raw = false;
    auto* int_cmd = app.add_subcommand("interact", "factor x covariate interaction test and prediction grid");
    add_data_options(int_cmd, int_data);
    add_fit_options(int_cmd, int_flags);
    add_output_options(int_cmd, int_out, "csv,json");
    int_cmd->add_option("--factor", int_factor, "fixed factor (system or meta-parameter)")->required();
    int_cmd->add_option("--covariate", int_covariate, "data property")->required();
    int_cmd->add_option("--random", int_random, "random factors")->delimiter(',');
    int_cmd->add_option("--grid", grid_points, "grid points over the observed covariate range")
        ->check(CLI::Range(std::size_t{2}, std::size_t{1000000}));
    int_cmd->add_flag("--no-standardize", int_raw, "fit the covariate on its original scale");
    int_cmd->callback([&] {
        action = [&] {
            const EvalDataset ds = load_dataset(int_data, "score", merged({int_factor}, int_random));
            InteractionOptions io;
            io.random_factors = int_random;
            io.standardize = !int_raw;
            io.grid_points = grid_points;
            io.fit = fit_options(int_flags, Criterion::ML);
            const auto res = vca_with_interactions(ds, int_factor, int_covariate, io);
            Emitter emit(int_out, out);
            if (int_out.format == "json") {
                Json j = envelope("interact", Json{{"data", data_json(int_data, ds)},
                                                   {"factor", int_factor},
                                                   {"covariate", int_covariate},
                                                   {"random", int_random},
                                                   {"grid", grid_points},
                                                   {"standardize", !int_raw},
                                                   {"fit", fit_json(io.fit)}});
                j["test"] = to_json(res.interaction_test);
                j["scaling"] = to_json(res.scaling);
                j["grid"] = to_json(res.grid);
                emit(dump(j));
            } else {
                emit(grid_to_csv(res.grid));
            }
            if (!res.interaction_test.p_value) {
                err << "p-value withheld: a model fit did not converge\n";
                status = kExitNumerical;
            }
        };
    });

    // simulate
    std::string spec_path;
    std::uint64_t seed = 0;
    Output sim_out;
    auto* sim_cmd = app.add_subcommand("simulate", "draw a synthetic score table from a JSON spec");
    sim_cmd->add_option("--spec", spec_path, "simulation spec JSON")->required();
    auto* seed_opt = sim_cmd->add_option("--seed", seed, "random seed (overrides the spec file)");
    sim_cmd->add_option("--out", sim_out.out, "output CSV (written atomically)");
    sim_cmd->callback([&] {
        action = [&] {
            SimSpec spec = load_sim_spec_json(spec_path);
            if (seed_opt->count() > 0) spec.seed = seed;
            Emitter(sim_out, out)(to_csv(simulate(spec)));
        };
    });

    // report
    DataOptions rep_data;
    FitFlags rep_flags;
    Output rep_out;
    ReportConfig rc;
    std::string summary_path;
    bool no_vca = false;
    auto* rep_cmd = app.add_subcommand("report", "full reproducibility report");
    add_data_options(rep_cmd, rep_data);
    add_fit_options(rep_cmd, rep_flags);
    add_output_options(rep_cmd, rep_out, "json,table");
    rep_cmd->add_option("--system", rc.system_factor, "system factor");
    rep_cmd->add_option("--config-factors", rc.config_factors, "factors forming a configuration")->delimiter(',');
    rep_cmd->add_option("--conditional", rc.covariates, "covariates for conditional tests")->delimiter(',');
    rep_cmd->add_option("--vca-system", rc.vca_system, "restrict the VCA to one system");
    rep_cmd->add_option("--vca-random", rc.vca_random_factors, "random factors of the VCA")->delimiter(',');
    rep_cmd->add_option("--grid", rc.grid_points, "grid points of conditional interaction grids");
    rep_cmd->add_flag("--no-vca", no_vca, "skip the variance component analysis");
    rep_cmd->add_option("--summary", summary_path, "also write a plain-text summary here");
    rep_cmd->callback([&] {
        action = [&] {
            std::vector<std::string> implied = merged({rc.system_factor}, rc.config_factors);
            implied = merged(implied, rc.vca_random_factors);
            const EvalDataset ds = load_dataset(rep_data, "score", implied);
            rc.run_vca = !no_vca;
            rc.fit = fit_options(rep_flags, Criterion::ML);
            const ReproReport rep = build_report(ds, rc);
            Emitter emit(rep_out, out);
            if (rep_out.format == "table") {
                emit(report_summary(rep));
            } else {
                Json j = envelope("report", Json{{"data", data_json(rep_data, ds)},
                                                 {"system", rc.system_factor},
                                                 {"config_factors", rep.config_factors},
                                                 {"conditional", rc.covariates},
                                                 {"vca_system", rc.vca_system},
                                                 {"vca_random", rc.vca_random_factors},
                                                 {"run_vca", rc.run_vca},
                                                 {"grid", rc.grid_points},
                                                 {"fit", fit_json(rc.fit)}});
                j["report"] = to_json(rep);
                emit(dump(j));
            }
            if (!summary_path.empty()) write_file_atomic(summary_path, report_summary(rep));
            if (!rep.pairwise_best.p_value || !rep.under_variation.p_value) {
                err << "p-value withheld: a model fit did not converge\n";
                status = kExitNumerical;
            }
        };
    });

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitDataError;
    }

    try {
        if (action) action();
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const McStudyError& e) {
        err << "simulation error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return kExitDataError;
    } catch (const nlohmann::json::exception& e) {
        err << "error: malformed JSON input: " << e.what() << "\n";
        return kExitDataError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitDataError;
    }
    return status;
}

}  // namespace lmerepro
