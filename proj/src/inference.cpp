#include "lmerepro/inference.hpp"

#include "lmerepro/error.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace lmerepro {

double chi_square_upper_tail(double stat, int df) {
    if (df <= 0) throw SpecError("chi-square test needs positive degrees of freedom");
    if (!(stat > 0.0)) return 1.0;
    if (std::isinf(stat)) return 0.0;
    boost::math::chi_squared dist(static_cast<double>(df));
    return boost::math::cdf(boost::math::complement(dist, stat));
}

bool is_nested(const ModelSpec& restricted, const ModelSpec& general) {
    if (restricted.response != general.response) return false;
    if (restricted.intercept && !general.intercept) return false;
    for (const auto& t : restricted.fixed_terms) {
        if (!general.has_term(t)) return false;
    }
    std::set<std::string> ra(restricted.random_factors.begin(), restricted.random_factors.end());
    std::set<std::string> rb(general.random_factors.begin(), general.random_factors.end());
    return ra == rb;
}

std::vector<double> scores_at_level(const EvalDataset& ds, const std::string& factor, const std::string& level) {
    const auto& f = ds.factor(factor);
    auto it = std::find(f.levels.begin(), f.levels.end(), level);
    if (it == f.levels.end()) throw SpecError("factor '" + factor + "' has no level '" + level + "'");
    const auto code = static_cast<std::int32_t>(it - f.levels.begin());
    std::vector<double> out;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (f.codes[i] == code) out.push_back(ds.response()[i]);
    }
    return out;
}

double standardized_mean_difference(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw DataError("standardized mean difference needs two non-empty samples");
    auto moments = [](std::span<const double> v) {
        const double n = static_cast<double>(v.size());
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        return std::pair{mean, ss};
    };
    const auto [mean_a, ss_a] = moments(a);
    const auto [mean_b, ss_b] = moments(b);
    const double dof = static_cast<double>(a.size() + b.size()) - 2.0;
    const double pooled = dof > 0.0 ? std::sqrt((ss_a + ss_b) / dof) : 0.0;
    const double diff = mean_a - mean_b;
    if (pooled == 0.0) {
        if (diff == 0.0) return 0.0;
        throw NumericalError("standardized mean difference is infinite: pooled standard deviation is zero");
    }
    return diff / pooled;
}

namespace {

// A two-level factor entering `general` as a main effect but absent from
// `restricted`, if there is exactly one.
std::optional<std::string> added_two_level_factor(const EvalDataset& ds, const ModelSpec& restricted,
                                                  const ModelSpec& general) {
    std::vector<std::string> found;
    for (const auto& t : general.fixed_terms) {
        if (t.variables.size() != 1 || restricted.has_term(t)) continue;
        const auto& v = t.variables.front();
        if (ds.has_factor(v) && ds.factor(v).levels.size() == 2) found.push_back(v);
    }
    if (found.size() != 1) return std::nullopt;
    return found.front();
}

}  // namespace

GlrtResult glrt(const EvalDataset& ds, const ModelSpec& restricted, const ModelSpec& general,
                const FitOptions& fit_options) {
    if (!is_nested(restricted, general)) {
        throw SpecError("'" + restricted.to_string() + "' is not nested in '" + general.to_string() +
                        "' (fixed terms must be a subset and random factors identical)");
    }
    const DesignMatrices dm_r = build_design(ds, restricted);
    const DesignMatrices dm_g = build_design(ds, general);
    const int df = static_cast<int>(dm_g.n_fixed()) - static_cast<int>(dm_r.n_fixed());
    if (df <= 0) {
        std::string why = "general model adds no estimable fixed-effect columns (df = " + std::to_string(df) + ")";
        if (!dm_g.dropped_columns.empty()) {
            why += "; aliased columns:";
            for (const auto& c : dm_g.dropped_columns) why += " " + c;
        }
        throw SpecError(why);
    }

    FitOptions opts = fit_options;
    opts.criterion = Criterion::ML;
    const Eigen::VectorXd y = response_vector(ds);

    GlrtResult r;
    r.restricted = fit(dm_r, y, opts);
    r.general = fit(dm_g, y, opts);
    r.df = df;
    r.stat = std::max(0.0, r.restricted.deviance - r.general.deviance);
    r.lambda_ratio = std::exp(-0.5 * r.stat);
    r.converged_restricted = r.restricted.converged;
    r.converged_general = r.general.converged;
    if (r.converged_restricted && r.converged_general) r.p_value = chi_square_upper_tail(r.stat, df);
    r.dropped_columns = dm_g.dropped_columns;
    r.restricted_formula = restricted.to_string();
    r.general_formula = general.to_string();

    if (auto factor = added_two_level_factor(ds, restricted, general)) {
        const auto& levels = ds.factor(*factor).levels;
        const auto a = scores_at_level(ds, *factor, levels[0]);
        const auto b = scores_at_level(ds, *factor, levels[1]);
        r.effect_size = standardized_mean_difference(a, b);
    }
    return r;
}

ConditionalResult glrt_conditional(const EvalDataset& ds, const std::string& covariate,
                                   const ConditionalOptions& options) {
    if (!ds.has_covariate(covariate)) throw SpecError("unknown covariate '" + covariate + "'");
    if (!ds.has_factor(options.system_factor)) throw SpecError("unknown system factor '" + options.system_factor + "'");

    ConditionalResult out;
    out.covariate = covariate;
    out.system_factor = options.system_factor;

    EvalDataset data = ds;
    if (options.standardize) {
        const auto& v = ds.covariate(covariate).values;
        const bool constant = std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
        if (!constant) std::tie(data, out.scaling) = standardize_covariates(ds, {covariate});
    }

    ModelSpec m0;
    m0.response = ds.response_name();
    m0.fixed_terms = {FixedTerm{{covariate}}};
    m0.random_factors = options.random_factors.empty() ? std::vector<std::string>{ds.object_of_interest()}
                                                       : options.random_factors;
    ModelSpec m1 = m0;
    m1.fixed_terms.push_back(FixedTerm{{options.system_factor}});
    m1.fixed_terms.push_back(FixedTerm{{options.system_factor, covariate}});
    if (options.interaction_only) m0.fixed_terms.push_back(FixedTerm{{options.system_factor}});

    out.test = glrt(data, m0, m1, options.fit);
    out.restricted_spec = std::move(m0);
    out.general_spec = std::move(m1);
    return out;
}

}  // namespace lmerepro
