#include "lmerepro/simulate.hpp"

#include "lmerepro/error.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace lmerepro {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(seed ^ splitmix64(index + 1));
}

double NormalStream::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double NormalStream::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(t);
    has_cached_ = true;
    return r * std::cos(t);
}

SimFacet SimSpec::counted_facet(const std::string& name, std::size_t count) {
    SimFacet f{name, {}};
    for (std::size_t l = 1; l <= count; ++l) f.levels.push_back(name + std::to_string(l));
    return f;
}

namespace {

struct TermAtom {
    bool is_factor = false;
    std::size_t index = 0;   // facet index or covariate index
    std::int32_t level = 0;  // for factor atoms
};

std::vector<TermAtom> parse_term(const SimSpec& spec, const std::string& term) {
    std::vector<TermAtom> atoms;
    if (term == "(Intercept)" || term == "1") return atoms;
    std::stringstream ss(term);
    std::string part;
    while (std::getline(ss, part, ':')) {
        auto eq = part.find('=');
        if (eq == std::string::npos) {
            auto it = std::find_if(spec.covariates.begin(), spec.covariates.end(),
                                   [&](const SimCovariate& c) { return c.name == part; });
            if (it == spec.covariates.end()) {
                throw SpecError("fixed-effect term '" + term + "' references unknown covariate '" + part + "'");
            }
            atoms.push_back({false, static_cast<std::size_t>(it - spec.covariates.begin()), 0});
            continue;
        }
        const std::string factor = part.substr(0, eq);
        const std::string level = part.substr(eq + 1);
        auto it = std::find_if(spec.facets.begin(), spec.facets.end(),
                               [&](const SimFacet& f) { return f.name == factor; });
        if (it == spec.facets.end()) {
            throw SpecError("fixed-effect term '" + term + "' references unknown facet '" + factor + "'");
        }
        auto lv = std::find(it->levels.begin(), it->levels.end(), level);
        if (lv == it->levels.end()) {
            throw SpecError("fixed-effect term '" + term + "' references unknown level '" + level + "'");
        }
        atoms.push_back({true, static_cast<std::size_t>(it - spec.facets.begin()),
                         static_cast<std::int32_t>(lv - it->levels.begin())});
    }
    return atoms;
}

}  // namespace

void SimSpec::validate() const {
    if (n_objects < 1) throw SpecError("n_objects must be at least 1");
    if (!(residual_sd > 0.0) || !std::isfinite(residual_sd)) throw SpecError("residual_sd must be finite and > 0");
    if (!(cell_dropout >= 0.0 && cell_dropout < 1.0)) throw SpecError("cell_dropout must lie in [0, 1)");
    std::set<std::string> names{response, object_factor};
    if (names.size() != 2) throw SpecError("response and object factor need distinct names");
    for (const auto& f : facets) {
        if (f.levels.empty()) throw SpecError("facet '" + f.name + "' needs at least one level");
        if (!names.insert(f.name).second) throw SpecError("duplicate column name '" + f.name + "'");
        std::set<std::string> lv(f.levels.begin(), f.levels.end());
        if (lv.size() != f.levels.size()) throw SpecError("facet '" + f.name + "' repeats a level");
    }
    for (const auto& c : covariates) {
        if (!names.insert(c.name).second) throw SpecError("duplicate column name '" + c.name + "'");
        if (!(c.sd >= 0.0) || !std::isfinite(c.mean)) throw SpecError("covariate '" + c.name + "' is invalid");
    }
    for (const auto& [name, v] : variance_components) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw SpecError("variance of '" + name + "' must be finite and >= 0");
        const bool known = name == object_factor || std::any_of(facets.begin(), facets.end(), [&](const SimFacet& f) {
                               return f.name == name;
                           });
        if (!known) throw SpecError("variance component for unknown factor '" + name + "'");
    }
    for (const auto& [term, coef] : fixed_effects) {
        if (!std::isfinite(coef)) throw SpecError("coefficient of '" + term + "' is not finite");
        parse_term(*this, term);
    }
}

EvalDataset simulate(const SimSpec& spec) {
    spec.validate();
    NormalStream rng(spec.seed);

    auto draw_effects = [&](const std::string& name, std::size_t levels) {
        std::vector<double> b(levels, 0.0);
        auto it = spec.variance_components.find(name);
        if (it == spec.variance_components.end()) return b;
        const double sd = std::sqrt(it->second);
        for (auto& v : b) v = sd * rng.normal();
        return b;
    };
    const auto object_effects = draw_effects(spec.object_factor, spec.n_objects);
    std::vector<std::vector<double>> facet_effects;
    for (const auto& f : spec.facets) facet_effects.push_back(draw_effects(f.name, f.levels.size()));

    std::vector<std::vector<double>> cov_values;
    for (const auto& c : spec.covariates) {
        std::vector<double> v(spec.n_objects);
        for (auto& x : v) x = rng.normal(c.mean, c.sd);
        cov_values.push_back(std::move(v));
    }

    std::vector<std::pair<std::vector<TermAtom>, double>> terms;
    for (const auto& [term, coef] : spec.fixed_effects) terms.emplace_back(parse_term(spec, term), coef);

    std::size_t combos = 1;
    for (const auto& f : spec.facets) combos *= f.levels.size();
    const std::size_t capacity = combos * spec.n_objects;

    std::vector<double> y;
    y.reserve(capacity);
    Factor object{spec.object_factor, {}, {}};
    for (std::size_t o = 0; o < spec.n_objects; ++o) object.levels.push_back("s" + std::to_string(o + 1));
    std::vector<Factor> facets;
    for (const auto& f : spec.facets) facets.push_back(Factor{f.name, f.levels, {}});
    std::vector<Covariate> covs;
    for (const auto& c : spec.covariates) covs.push_back(Covariate{c.name, {}});

    std::vector<std::int32_t> level(spec.facets.size(), 0);
    for (std::size_t combo = 0; combo < combos; ++combo) {
        // decode combination index, first facet slowest
        std::size_t rest = combo;
        for (std::size_t j = spec.facets.size(); j-- > 0;) {
            level[j] = static_cast<std::int32_t>(rest % spec.facets[j].levels.size());
            rest /= spec.facets[j].levels.size();
        }
        for (std::size_t o = 0; o < spec.n_objects; ++o) {
            if (spec.cell_dropout > 0.0 && rng.uniform() < spec.cell_dropout) continue;
            double value = object_effects[o];
            for (std::size_t j = 0; j < spec.facets.size(); ++j) {
                value += facet_effects[j][static_cast<std::size_t>(level[j])];
            }
            for (const auto& [atoms, coef] : terms) {
                double x = coef;
                for (const auto& a : atoms) {
                    if (a.is_factor) {
                        if (level[a.index] != a.level) {
                            x = 0.0;
                            break;
                        }
                    } else {
                        x *= cov_values[a.index][o];
                    }
                }
                value += x;
            }
            value += spec.residual_sd * rng.normal();
            y.push_back(value);
            object.codes.push_back(static_cast<std::int32_t>(o));
            for (std::size_t j = 0; j < facets.size(); ++j) facets[j].codes.push_back(level[j]);
            for (std::size_t c = 0; c < covs.size(); ++c) covs[c].values.push_back(cov_values[c][o]);
        }
    }
    if (y.empty()) throw EmptyDataError("simulation dropped every cell");

    std::vector<Factor> all{std::move(object)};
    for (auto& f : facets) all.push_back(std::move(f));
    // select_rows-style cleanup is not needed for complete designs, but
    // dropout can leave a level unobserved; drop such levels.
    EvalDataset ds(spec.response, std::move(y), std::move(all), std::move(covs), spec.object_factor);
    if (spec.cell_dropout > 0.0) {
        std::vector<std::size_t> rows(ds.size());
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        return ds.select_rows(rows);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// JSON

SimSpec parse_sim_spec_json(const std::string& text) {
    using json = nlohmann::ordered_json;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SpecError(std::string("simulation spec is not valid JSON: ") + e.what());
    }
    SimSpec s;
    try {
        s.response = j.value("response", s.response);
        s.object_factor = j.value("object_factor", s.object_factor);
        s.n_objects = j.at("n_objects").get<std::size_t>();
        if (j.contains("facets")) {
            const auto& f = j.at("facets");
            auto add = [&](const std::string& name, const json& levels) {
                if (levels.is_number_integer()) {
                    s.facets.push_back(SimSpec::counted_facet(name, levels.get<std::size_t>()));
                } else {
                    s.facets.push_back(SimFacet{name, levels.get<std::vector<std::string>>()});
                }
            };
            if (f.is_object()) {
                for (const auto& [name, levels] : f.items()) add(name, levels);
            } else {
                for (const auto& item : f) add(item.at("name").get<std::string>(), item.at("levels"));
            }
        }
        if (j.contains("covariates")) {
            for (const auto& c : j.at("covariates")) {
                s.covariates.push_back(
                    SimCovariate{c.at("name").get<std::string>(), c.value("mean", 0.0), c.value("sd", 1.0)});
            }
        }
        if (j.contains("fixed_effects")) {
            for (const auto& [k, v] : j.at("fixed_effects").items()) s.fixed_effects[k] = v.get<double>();
        }
        if (j.contains("variance_components")) {
            for (const auto& [k, v] : j.at("variance_components").items()) s.variance_components[k] = v.get<double>();
        }
        s.residual_sd = j.value("residual_sd", s.residual_sd);
        s.cell_dropout = j.value("cell_dropout", s.cell_dropout);
        s.seed = j.value("seed", std::uint64_t{0});
    } catch (const json::exception& e) {
        throw SpecError(std::string("malformed simulation spec: ") + e.what());
    }
    s.validate();
    return s;
}

SimSpec load_sim_spec_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_sim_spec_json(buf.str());
}

std::string sim_spec_to_json(const SimSpec& spec) {
    nlohmann::ordered_json j;
    j["response"] = spec.response;
    j["object_factor"] = spec.object_factor;
    j["n_objects"] = spec.n_objects;
    j["facets"] = nlohmann::ordered_json::array();
    for (const auto& f : spec.facets) j["facets"].push_back({{"name", f.name}, {"levels", f.levels}});
    j["covariates"] = nlohmann::ordered_json::array();
    for (const auto& c : spec.covariates) j["covariates"].push_back({{"name", c.name}, {"mean", c.mean}, {"sd", c.sd}});
    j["fixed_effects"] = spec.fixed_effects;
    j["variance_components"] = spec.variance_components;
    j["residual_sd"] = spec.residual_sd;
    j["cell_dropout"] = spec.cell_dropout;
    j["seed"] = spec.seed;
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// Monte-Carlo driver

double quantile(std::vector<double> values, double prob) {
    if (values.empty()) throw DataError("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

MetricSummary summarize(const std::vector<double>& values) {
    MetricSummary m;
    const double n = static_cast<double>(values.size());
    m.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.sd = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    m.median = quantile(values, 0.5);
    m.q05 = quantile(values, 0.05);
    m.q25 = quantile(values, 0.25);
    m.q75 = quantile(values, 0.75);
    m.q95 = quantile(values, 0.95);
    return m;
}

std::vector<double> McSummary::column(std::size_t metric) const {
    std::vector<double> out;
    out.reserve(results.size());
    for (const auto& r : results) out.push_back(r.at(metric));
    return out;
}

McSummary mc_study(const SimSpec& spec, const McAnalysis& analysis, std::size_t replications, unsigned threads) {
    if (replications < 1) throw SpecError("mc_study needs at least one replication");
    spec.validate();
    McSummary summary;
    summary.results.resize(replications);
    std::vector<std::exception_ptr> errors(replications);

    auto run_one = [&](std::size_t r) {
        try {
            SimSpec rep = spec;
            rep.seed = derive_seed(spec.seed, r);
            summary.results[r] = analysis(simulate(rep), r);
        } catch (...) {
            errors[r] = std::current_exception();
        }
    };
    threads = std::max(1u, threads);
    if (threads == 1) {
        for (std::size_t r = 0; r < replications; ++r) run_one(r);
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                for (std::size_t r = t; r < replications; r += threads) run_one(r);
            });
        }
        for (auto& th : pool) th.join();
    }
    for (std::size_t r = 0; r < replications; ++r) {
        if (!errors[r]) continue;
        try {
            std::rethrow_exception(errors[r]);
        } catch (const std::exception& e) {
            throw McStudyError(r, e.what());
        }
    }

    const std::size_t metrics = summary.results.front().size();
    for (std::size_t m = 0; m < metrics; ++m) {
        for (std::size_t r = 0; r < replications; ++r) {
            if (summary.results[r].size() != metrics) {
                throw McStudyError(r, "analysis returned an inconsistent number of metrics");
            }
        }
        summary.metrics.push_back(summarize(summary.column(m)));
    }
    return summary;
}

}  // namespace lmerepro
