#include "lmerepro/vca.hpp"

#include "lmerepro/error.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <unordered_map>

namespace lmerepro {

std::string to_string(Reliability r) {
    switch (r) {
        case Reliability::Poor: return "poor";
        case Reliability::Moderate: return "moderate";
        case Reliability::Good: return "good";
        case Reliability::Excellent: return "excellent";
    }
    return "poor";
}

Reliability classify_reliability(double phi) {
    if (phi < 0.5) return Reliability::Poor;
    if (phi < 0.75) return Reliability::Moderate;
    if (phi < 0.9) return Reliability::Good;
    return Reliability::Excellent;
}

PhiResult compute_phi(const std::vector<std::pair<std::string, double>>& components, const std::string& object) {
    double total = 0.0;
    std::optional<double> substantial;
    for (const auto& [name, v] : components) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("variance component '" + name + "' must be >= 0");
        total += v;
        if (name == object) substantial = v;
    }
    if (!substantial) throw DataError("no variance component named '" + object + "'");
    if (!(total > 0.0)) throw NumericalError("reliability is undefined: total variance is zero");
    PhiResult r;
    r.phi = *substantial / total;
    r.interpretation = classify_reliability(r.phi);
    return r;
}

PhiResult compute_phi(const std::map<std::string, double>& components, const std::string& object) {
    return compute_phi(std::vector<std::pair<std::string, double>>(components.begin(), components.end()), object);
}

VcaReport vca_from_components(const std::vector<std::pair<std::string, double>>& components,
                              const std::string& object) {
    const PhiResult phi = compute_phi(components, object);
    double total = 0.0;
    for (const auto& c : components) total += c.second;
    VcaReport report;
    for (const auto& [name, v] : components) report.components.push_back({name, v, 100.0 * v / total});
    report.phi = phi.phi;
    report.interpretation = phi.interpretation;
    report.object_of_interest = object;
    report.converged = true;
    return report;
}

EvalDataset with_interaction_factor(const EvalDataset& ds, const std::string& a, const std::string& b) {
    const auto& fa = ds.factor(a);
    const auto& fb = ds.factor(b);
    Factor combo{a + ":" + b, {}, {}};
    std::unordered_map<std::string, std::int32_t> lookup;
    combo.codes.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::string label = fa.label(i) + ":" + fb.label(i);
        auto [it, inserted] = lookup.try_emplace(label, static_cast<std::int32_t>(combo.levels.size()));
        if (inserted) combo.levels.push_back(std::move(label));
        combo.codes.push_back(it->second);
    }
    auto factors = ds.factors();
    factors.push_back(std::move(combo));
    return EvalDataset(ds.response_name(), ds.response(), std::move(factors), ds.covariates(), ds.object_of_interest());
}

VcaReport vca(const EvalDataset& ds, const std::vector<std::string>& random_factors, const std::string& object,
              const VcaOptions& options) {
    if (std::find(random_factors.begin(), random_factors.end(), object) == random_factors.end()) {
        throw SpecError("object of interest '" + object + "' must be one of the random factors");
    }
    EvalDataset data = ds;
    ModelSpec spec;
    spec.response = ds.response_name();
    spec.random_factors = random_factors;
    for (const auto& [a, b] : options.interactions) {
        data = with_interaction_factor(data, a, b);
        spec.random_factors.push_back(a + ":" + b);
    }
    const DesignMatrices dm = build_design(data, spec);
    const FittedModel fm = fit(dm, response_vector(data), options.fit);
    if (!fm.converged) {
        throw NumericalError("variance component fit did not converge after " + std::to_string(fm.iterations) +
                             " deviance evaluations (last deviance " + std::to_string(fm.deviance) + ")");
    }
    std::vector<std::pair<std::string, double>> comps;
    for (const auto& c : fm.sigma2) comps.emplace_back(c.name, c.variance);
    VcaReport report = vca_from_components(comps, object);
    report.converged = fm.converged;
    report.iterations = fm.iterations;
    report.deviance = fm.deviance;
    report.intercept = fm.beta_hat.size() > 0 ? fm.beta_hat[0] : 0.0;
    report.n_obs = fm.n_obs;
    return report;
}

std::vector<GridRow> interaction_grid(const FittedModel& fm, const GridRequest& request) {
    const bool involved = std::any_of(fm.columns.begin(), fm.columns.end(), [&](const ColumnDef& c) {
        return std::any_of(c.atoms.begin(), c.atoms.end(), [&](const ColumnAtom& a) {
            return a.kind == ColumnAtom::Kind::Covariate && a.variable == request.covariate;
        });
    });
    if (!involved) throw SpecError("covariate '" + request.covariate + "' does not appear in the fitted model");
    if (request.points < 2) throw SpecError("an interaction grid needs at least 2 points");
    if (!(request.upper >= request.lower)) throw SpecError("grid upper bound is below the lower bound");

    std::vector<GridRow> rows;
    rows.reserve(request.levels.size() * request.points);
    const double step = (request.upper - request.lower) / static_cast<double>(request.points - 1);
    for (const auto& level : request.levels) {
        for (std::size_t g = 0; g < request.points; ++g) {
            const double x = g + 1 == request.points ? request.upper : request.lower + step * static_cast<double>(g);
            const double fitted_x = request.scaling ? request.scaling->to_standardized(request.covariate, x) : x;
            std::map<std::string, std::string> levels;
            if (!request.factor.empty()) levels[request.factor] = level;
            const std::map<std::string, double> covs{{request.covariate, fitted_x}};
            double y = 0.0;
            for (std::size_t c = 0; c < fm.columns.size(); ++c) {
                y += fm.beta_hat[static_cast<Eigen::Index>(c)] * evaluate_column(fm.columns[c], levels, covs);
            }
            rows.push_back({x, level, y});
        }
    }
    return rows;
}

std::string grid_to_csv(const std::vector<GridRow>& rows) {
    auto num = [](double v) {
        std::array<char, 64> buf{};
        auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
        return std::string(buf.data(), ptr);
    };
    std::string out = "covariate_value,level,predicted_score\n";
    for (const auto& r : rows) {
        std::string level = r.level;
        if (level.find_first_of(",\"\n") != std::string::npos) {
            std::string q = "\"";
            for (char c : level) {
                if (c == '"') q += '"';
                q += c;
            }
            level = q + "\"";
        }
        out += num(r.covariate_value) + "," + level + "," + num(r.predicted) + "\n";
    }
    return out;
}

InteractionAnalysis vca_with_interactions(const EvalDataset& ds, const std::string& fixed_meta,
                                          const std::string& covariate, const InteractionOptions& options) {
    if (!ds.has_factor(fixed_meta)) throw SpecError("unknown factor '" + fixed_meta + "'");
    if (!ds.has_covariate(covariate)) throw SpecError("unknown covariate '" + covariate + "'");

    InteractionAnalysis out;
    out.factor = fixed_meta;
    out.covariate = covariate;
    const auto& values = ds.covariate(covariate).values;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());

    EvalDataset data = ds;
    if (options.standardize && *lo != *hi) std::tie(data, out.scaling) = standardize_covariates(ds, {covariate});

    ModelSpec restricted;
    restricted.response = ds.response_name();
    restricted.fixed_terms = {FixedTerm{{fixed_meta}}, FixedTerm{{covariate}}};
    restricted.random_factors = options.random_factors.empty() ? std::vector<std::string>{ds.object_of_interest()}
                                                               : options.random_factors;
    ModelSpec general = restricted;
    general.fixed_terms.push_back(FixedTerm{{fixed_meta, covariate}});

    try {
        out.interaction_test = glrt(data, restricted, general, options.fit);
    } catch (const SpecError& e) {
        throw SpecError("interaction test between '" + fixed_meta + "' and '" + covariate +
                        "' is degenerate: " + e.what());
    }
    out.model = out.interaction_test.general;

    GridRequest req;
    req.covariate = covariate;
    req.factor = fixed_meta;
    req.levels = ds.factor(fixed_meta).levels;
    req.lower = *lo;
    req.upper = *hi;
    req.points = std::max<std::size_t>(2, options.grid_points);
    req.scaling = &out.scaling;
    out.grid = interaction_grid(out.model, req);
    return out;
}

}  // namespace lmerepro
