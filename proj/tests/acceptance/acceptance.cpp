// Acceptance suite. Run with no argument for every criterion, or with a
// criterion number to run just that one. Prints one PASS/FAIL line per
// criterion and exits nonzero if any criterion fails.

#include "lmerepro/dataset.hpp"
#include "lmerepro/design.hpp"
#include "lmerepro/error.hpp"
#include "lmerepro/inference.hpp"
#include "lmerepro/lmem.hpp"
#include "lmerepro/report.hpp"
#include "lmerepro/simulate.hpp"
#include "lmerepro/text_props.hpp"
#include "lmerepro/vca.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <unistd.h>

using namespace lmerepro;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[miss] ";
        }
        detail << what << "; ";
    }
};

std::string fmt(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

using Components = std::vector<std::pair<std::string, double>>;

// Reference variance blocks with their expected percents and phi.
struct ReferenceBlock {
    std::string metric;
    Components variances;
    std::vector<double> percents;
    double phi;
    Reliability band;
};

const std::vector<ReferenceBlock>& reference_blocks() {
    static const std::vector<ReferenceBlock> blocks{
        {"rouge-1",
         {{"summary_id", 0.00923}, {"lambda", 0.00254}, {"random_seed", 0.00012}, {"noise_distribution", 0.00005},
          {"residual", 0.00464}},
         {55.8, 15.0, 0.7, 0.3, 27.1},
         0.558,
         Reliability::Moderate},
        {"rouge-2",
         {{"summary_id", 0.00992}, {"lambda", 0.00131}, {"random_seed", 0.00008}, {"noise_distribution", 0.00003},
          {"residual", 0.00449}},
         {62.7, 8.3, 0.5, 0.2, 28.3},
         0.627,
         Reliability::Moderate},
        {"rouge-l",
         {{"summary_id", 0.00875}, {"lambda", 0.00519}, {"random_seed", 0.00004}, {"noise_distribution", 0.00001},
          {"residual", 0.00428}},
         {47.9, 28.4, 0.2, 0.1, 23.4},
         0.479,
         Reliability::Poor},
    };
    return blocks;
}

// ---------------------------------------------------------------------------

Outcome criterion_phi_golden() {
    Outcome o;
    for (const auto& b : reference_blocks()) {
        const auto r = compute_phi(b.variances, "summary_id");
        const double diff_pp = 100.0 * std::abs(r.phi - b.phi);
        o.require(diff_pp <= 0.1 + 1e-12, b.metric + " phi " + fmt(100.0 * r.phi, 5) + "% vs " + fmt(100.0 * b.phi, 4) +
                                              "% (|diff| " + fmt(diff_pp, 3) + " pp, tol 0.1)");
        o.require(r.interpretation == b.band, b.metric + " band " + to_string(r.interpretation));
    }
    return o;
}

Outcome criterion_percent_columns() {
    Outcome o;
    int matched = 0;
    for (const auto& b : reference_blocks()) {
        const auto rep = vca_from_components(b.variances, "summary_id");
        for (std::size_t i = 0; i < b.percents.size(); ++i) {
            const double got = rep.components[i].percent;
            const bool ok = std::abs(got - b.percents[i]) <= 0.1 + 1e-12;
            matched += ok;
            if (!ok) {
                o.require(false, b.metric + " " + rep.components[i].name + " " + fmt(got, 4) + "% vs reference " +
                                     fmt(b.percents[i], 3) + "%");
            }
        }
    }
    o.require(matched == 15, std::to_string(matched) + "/15 percents within 0.1 pp");
    return o;
}

Outcome criterion_ols_oracle() {
    Outcome o;
    std::mt19937_64 rng(20240301);
    std::uniform_int_distribution<int> n_dist(12, 80);
    std::normal_distribution<double> z;
    double worst_beta = 0.0, worst_dev = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        const int n = n_dist(rng);
        std::vector<double> y(n), x1(n), x2(n);
        std::vector<std::string> f(n), id(n);
        for (int i = 0; i < n; ++i) {
            x1[i] = z(rng) * 3.0 + 1.0;
            x2[i] = z(rng);
            f[i] = "g" + std::to_string(i % 3);
            id[i] = "r" + std::to_string(i);
            y[i] = 0.5 + 0.3 * x1[i] - 1.2 * x2[i] + (i % 3 == 1 ? 0.7 : 0.0) + z(rng);
        }
        const auto ds = oracle::make_dataset(y, {{"f", f}, {"id", id}}, {{"x1", x1}, {"x2", x2}});
        const auto dm = build_design(ds, ModelSpec::parse("score ~ 1 + f + x1 + x2"));
        FitOptions fo;
        fo.criterion = Criterion::ML;
        const auto fm = fit(dm, response_vector(ds), fo);
        const Eigen::VectorXd beta = oracle::ols_beta(dm.X, response_vector(ds));
        worst_beta = std::max(worst_beta, (fm.beta_hat - beta).cwiseAbs().maxCoeff());
        const double dev = oracle::gaussian_ml_deviance(oracle::ols_rss(dm.X, response_vector(ds)), ds.size());
        worst_dev = std::max(worst_dev, std::abs(fm.deviance - dev));
    }
    o.require(worst_beta <= 1e-8, "max |beta - normal equations| " + fmt(worst_beta, 3) + " (tol 1e-8)");
    o.require(worst_dev <= 1e-6, "max |deviance - closed form| " + fmt(worst_dev, 3) + " (tol 1e-6)");
    return o;
}

Outcome criterion_one_way_oracle() {
    Outcome o;
    constexpr std::size_t kGroups = 25, kPer = 6;
    int accepted = 0;
    double worst = 0.0;
    for (std::uint64_t r = 0; accepted < 50 && r < 500; ++r) {
        NormalStream ns(derive_seed(777, r));
        std::vector<double> y;
        std::vector<std::string> g;
        std::vector<std::vector<double>> groups(kGroups);
        for (std::size_t k = 0; k < kGroups; ++k) {
            const double b = ns.normal(0.0, 1.0);
            for (std::size_t j = 0; j < kPer; ++j) {
                const double v = 2.0 + b + ns.normal(0.0, 1.5);
                y.push_back(v);
                g.push_back("g" + std::to_string(k));
                groups[k].push_back(v);
            }
        }
        const auto an = oracle::one_way_anova(groups);
        if (an.sigma2_between() <= 0.0) continue;
        ++accepted;
        const auto ds = oracle::make_dataset(y, {{"g", g}});
        const auto fm = fit(build_design(ds, ModelSpec::parse("score ~ 1 + (1|g)")), response_vector(ds));
        worst = std::max(worst, std::abs(fm.variance("g") - an.sigma2_between()) / an.sigma2_between());
    }
    o.require(accepted == 50, std::to_string(accepted) + " simulations with positive moment estimates");
    o.require(worst <= 1e-4, "max relative |REML - (MSB-MSW)/n| " + fmt(worst, 3) + " (tol 1e-4)");
    return o;
}

SimSpec two_system_spec(std::uint64_t seed, std::size_t sentences, double system_effect) {
    SimSpec s;
    s.n_objects = sentences;
    s.facets = {SimFacet{"system", {"baseline", "sota"}}};
    s.fixed_effects = {{"(Intercept)", 0.4}, {"system=sota", system_effect}};
    s.variance_components = {{"sentence", 0.01}};
    s.residual_sd = 0.05;
    s.seed = seed;
    return s;
}

const ModelSpec& m0() {
    static const ModelSpec m = ModelSpec::parse("score ~ 1 + (1|sentence)");
    return m;
}
const ModelSpec& m1() {
    static const ModelSpec m = ModelSpec::parse("score ~ 1 + system + (1|sentence)");
    return m;
}

Outcome criterion_glrt_calibration() {
    Outcome o;
    constexpr int kSims = 2000;
    std::vector<double> p;
    p.reserve(kSims);
    int missing = 0;
    for (int r = 0; r < kSims; ++r) {
        const auto res = glrt(simulate(two_system_spec(derive_seed(5005, r), 50, 0.0)), m0(), m1());
        if (res.p_value) {
            p.push_back(*res.p_value);
        } else {
            ++missing;
        }
    }
    const double type1 = static_cast<double>(std::count_if(p.begin(), p.end(), [](double v) { return v < 0.05; })) /
                         static_cast<double>(p.size());
    const auto ks = oracle::ks_uniform(p);
    o.require(missing == 0, std::to_string(missing) + " fits without a p-value");
    o.require(type1 >= 0.03 && type1 <= 0.07, "type-I error " + fmt(type1, 4) + " (range [0.03, 0.07])");
    o.require(ks.p_value > 0.01, "KS D " + fmt(ks.d, 4) + " p " + fmt(ks.p_value, 4) + " (alpha 0.01)");
    return o;
}

Outcome criterion_paired_agreement() {
    Outcome o;
    double worst = 0.0;
    for (int r = 0; r < 20; ++r) {
        // effects spanning clear nulls to clear rejections
        const double effect = 0.0005 * (r % 10);
        const auto ds = simulate(two_system_spec(derive_seed(6006, r), 1000, effect));
        const auto res = glrt(ds, m0(), m1());
        const auto a = scores_at_level(ds, "system", "baseline");
        const auto b = scores_at_level(ds, "system", "sota");
        const double pt = oracle::paired_t_pvalue(a, b);
        if (!res.p_value) {
            o.require(false, "design " + std::to_string(r) + " has no GLRT p-value");
            continue;
        }
        worst = std::max(worst, std::abs(*res.p_value - pt));
    }
    o.require(worst <= 0.02, "max |p_GLRT - p_paired_t| " + fmt(worst, 4) + " (tol 0.02)");
    return o;
}

Outcome criterion_variance_recovery() {
    Outcome o;
    const std::map<std::string, double> truth{{"sentence", 4.0}, {"lambda", 1.0}, {"residual", 0.25}};
    const double phi_true = 4.0 / 5.25;
    std::map<std::string, std::vector<double>> rel_err;
    std::vector<double> phis;
    for (std::uint64_t r = 0; r < 50; ++r) {
        SimSpec s;
        s.n_objects = 500;
        s.facets = {SimSpec::counted_facet("lambda", 3), SimSpec::counted_facet("seed", 5)};
        s.fixed_effects = {{"(Intercept)", 0.0}};
        s.variance_components = {{"sentence", 4.0}, {"lambda", 1.0}};
        s.residual_sd = 0.5;
        s.seed = derive_seed(7007, r);
        const auto rep = vca(simulate(s), {"sentence", "lambda"}, "sentence");
        for (const auto& c : rep.components) rel_err[c.name].push_back(std::abs(c.variance - truth.at(c.name)) / truth.at(c.name));
        phis.push_back(rep.phi);
    }
    for (const auto& [name, errs] : rel_err) {
        const double med = oracle::median(errs);
        o.require(med < 0.10, name + " median relative error " + fmt(100.0 * med, 3) + "% (tol 10%)");
    }
    const double phi_med = oracle::median(phis);
    o.require(std::abs(phi_med - phi_true) <= 0.05,
              "median phi " + fmt(phi_med, 4) + " vs " + fmt(phi_true, 4) + " (tol 0.05)");
    return o;
}

Outcome criterion_invariance() {
    Outcome o;
    SimSpec s;
    s.n_objects = 150;
    s.facets = {SimFacet{"system", {"baseline", "sota"}}, SimSpec::counted_facet("lambda", 3)};
    s.fixed_effects = {{"(Intercept)", 0.4}, {"system=sota", 0.02}};
    s.variance_components = {{"sentence", 0.01}, {"lambda", 0.003}};
    s.residual_sd = 0.05;
    s.seed = 8008;
    const auto ds = simulate(s);
    const std::vector<std::string> random{"sentence", "lambda"};
    FitOptions tight;
    tight.ftol_rel = 1e-12;
    tight.xtol = 1e-10;
    VcaOptions vo;
    vo.fit = tight;

    const auto base = vca(ds, random, "sentence", vo);
    const auto base_test = glrt(ds, m0(), m1(), tight);

    auto transformed = [&](double scale, double shift) {
        std::vector<double> y = ds.response();
        for (auto& v : y) v = scale * v + shift;
        return ds.with_response(y);
    };

    const auto shifted = transformed(1.0, 10.0);
    const auto sv = vca(shifted, random, "sentence", vo);
    double shift_comp = 0.0;
    for (std::size_t i = 0; i < base.components.size(); ++i) {
        shift_comp = std::max(shift_comp, std::abs(sv.components[i].variance - base.components[i].variance));
    }
    const double shift_stat = std::abs(glrt(shifted, m0(), m1(), tight).stat - base_test.stat);
    o.require(shift_comp <= 1e-6, "shift: max component change " + fmt(shift_comp, 3) + " (tol 1e-6)");
    o.require(shift_stat <= 1e-6, "shift: GLRT stat change " + fmt(shift_stat, 3) + " (tol 1e-6)");

    constexpr double c = 7.0;
    const auto sc = vca(transformed(c, 0.0), random, "sentence", vo);
    double scale_rel = 0.0;
    for (std::size_t i = 0; i < base.components.size(); ++i) {
        const double want = c * c * base.components[i].variance;
        scale_rel = std::max(scale_rel, std::abs(sc.components[i].variance - want) / want);
    }
    o.require(scale_rel <= 1e-6, "scale: max relative deviation from c^2 " + fmt(scale_rel, 3) + " (tol 1e-6)");
    const double phi_diff = std::abs(sc.phi - base.phi);
    o.require(phi_diff <= 1e-6, "scale: phi change " + fmt(phi_diff, 3) + " (tol 1e-6)");

    std::vector<std::size_t> perm(ds.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(99));
    const auto pv = vca(ds.select_rows(perm), random, "sentence", vo);
    double perm_rel = 0.0;
    for (std::size_t i = 0; i < base.components.size(); ++i) {
        perm_rel = std::max(perm_rel, std::abs(pv.components[i].variance - base.components[i].variance) /
                                          base.components[i].variance);
    }
    o.require(perm_rel <= 1e-8, "row permutation: max relative component change " + fmt(perm_rel, 3) + " (tol 1e-8)");
    return o;
}

Outcome criterion_sign_reversal() {
    Outcome o;
    SimSpec s;
    s.n_objects = 1000;
    s.facets = {SimFacet{"system", {"baseline", "sota"}}, SimSpec::counted_facet("lambda", 3)};
    s.fixed_effects = {{"(Intercept)", 0.4},
                       {"system=sota:lambda=lambda1", 0.02},
                       {"system=sota:lambda=lambda2", -0.04},
                       {"system=sota:lambda=lambda3", -0.04}};
    s.variance_components = {{"sentence", 0.01}};
    s.residual_sd = 0.05;
    s.seed = 9009;
    ReportConfig cfg;
    cfg.run_vca = false;
    const auto r = build_report(simulate(s), cfg);
    const double best = r.pairwise_best.effect_size.value_or(0.0);
    const double under = r.under_variation.effect_size.value_or(0.0);
    const double p_best = r.pairwise_best.p_value.value_or(1.0);
    const double p_under = r.under_variation.p_value.value_or(1.0);
    o.require(best < 0.0, "best-config effect size " + fmt(best, 4) + " (< 0)");
    o.require(under > 0.0, "under-variation effect size " + fmt(under, 4) + " (> 0)");
    o.require(p_best < 0.01, "best-config p " + fmt(p_best, 3) + " (< 0.01)");
    o.require(p_under < 0.01, "under-variation p " + fmt(p_under, 3) + " (< 0.01)");
    return o;
}

Outcome criterion_text_properties() {
    Outcome o;
    const double certain = word_rarity("a", build_corpus_stats({"a a a"}));
    const double uniform = word_rarity("a b", build_corpus_stats({"a b"}));
    const double flesch = readability("The cat sat on the mat.");
    o.require(std::abs(certain) <= 1e-12, "rarity of a certain word " + fmt(certain, 3));
    o.require(std::abs(uniform - std::log(2.0)) <= 1e-12, "two-word uniform rarity " + fmt(uniform, 17));
    o.require(std::abs(flesch - 116.145) <= 1e-9, "Flesch of the cat sentence " + fmt(flesch, 12));

    const auto ds = oracle::make_dataset({1, 2, 3, 4, 5, 6},
                                         {{"sentence", {"x", "y", "z", "x", "y", "z"}},
                                          {"system", {"a", "a", "a", "b", "b", "b"}}});
    const std::map<std::string, std::string> texts{
        {"x", "The cat sat on the mat."}, {"y", "Quantitative evaluation remains difficult."}, {"z", "Go now!"}};
    std::vector<std::string> corpus;
    for (const auto& [k, t] : texts) corpus.push_back(t);
    const auto annotated = annotate_dataset(ds, texts, build_corpus_stats(corpus));
    bool constant = true;
    const auto& sent = annotated.factor("sentence");
    for (const std::string cov : {"rarity", "readability"}) {
        std::map<int, double> seen;
        for (std::size_t i = 0; i < annotated.size(); ++i) {
            const auto [it, fresh] = seen.emplace(sent.codes[i], annotated.covariate(cov).values[i]);
            if (!fresh && it->second != annotated.covariate(cov).values[i]) constant = false;
        }
    }
    o.require(constant, "annotated covariates constant within each object");
    return o;
}

Outcome criterion_scale() {
    Outcome o;
    namespace fs = std::filesystem;
    SimSpec s;
    s.object_factor = "summary_id";
    s.n_objects = 10000;
    s.facets = {SimSpec::counted_facet("lambda", 3), SimSpec::counted_facet("noise", 2), SimSpec::counted_facet("seed", 5)};
    s.covariates = {SimCovariate{"readability", 60.0, 15.0}};
    s.fixed_effects = {{"(Intercept)", 0.4}, {"noise=noise2", 0.005}};
    s.variance_components = {{"summary_id", 0.009}, {"lambda", 0.0025}, {"seed", 0.0001}, {"noise", 0.00005}};
    s.residual_sd = std::sqrt(0.0046);
    s.seed = 1111;
    const auto path = fs::temp_directory_path() / ("lmerepro_scale_" + std::to_string(::getpid()) + ".csv");
    write_csv(simulate(s), path.string());

    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const ColumnSchema schema{"score", {"summary_id", "lambda", "noise", "seed"}, {"readability"}, "summary_id"};
    const auto ds = load_csv(path.string(), schema);
    const auto t_load = clock::now();
    ReportConfig cfg;
    cfg.system_factor = "noise";
    cfg.covariates = {"readability"};
    const auto r = build_report(ds, cfg);
    const auto t_end = clock::now();
    fs::remove(path);

    const auto secs = [](auto a, auto b) { return std::chrono::duration<double>(b - a).count(); };
    const double total = secs(t0, t_end);
    const auto levels = ds.factor_levels();
    o.require(ds.size() == 300000 && levels.at("summary_id").size() == 10000 && levels.at("lambda").size() == 3 &&
                  levels.at("noise").size() == 2 && levels.at("seed").size() == 5,
              std::to_string(ds.size()) + " rows loaded in " + fmt(secs(t0, t_load), 3) + " s");
    o.require(r.vca && r.vca->components.size() == 5 && r.vca->converged,
              "5-component VCA, phi " + fmt(r.vca ? r.vca->phi : 0.0, 4));
    o.require(r.pairwise_best.p_value && r.under_variation.p_value && r.conditional.size() == 1, "GLRTs completed");
    o.require(total < 60.0, "pipeline " + fmt(total, 3) + " s (limit 60 s)");
    return o;
}

struct AcceptanceCriterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
};

const std::vector<AcceptanceCriterion>& criteria() {
    static const std::vector<AcceptanceCriterion> all{
        {1, "reliability coefficient golden values", 1.0, criterion_phi_golden},
        {2, "variance share percentages", 1.0, criterion_percent_columns},
        {3, "OLS reduction oracle", 10.0, criterion_ols_oracle},
        {4, "balanced one-way oracle", 30.0, criterion_one_way_oracle},
        {5, "GLRT calibration under the null", 300.0, criterion_glrt_calibration},
        {6, "agreement with the paired t-test", 60.0, criterion_paired_agreement},
        {7, "variance component recovery", 300.0, criterion_variance_recovery},
        {8, "invariance suite", 60.0, criterion_invariance},
        {9, "sign reversal across configurations", 60.0, criterion_sign_reversal},
        {10, "text properties", 1.0, criterion_text_properties},
        {11, "300k-row pipeline", 60.0, criterion_scale},
    };
    return all;
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    if (argc > 1) {
        only = std::atoi(argv[1]);
        if (only < 1 || only > static_cast<int>(criteria().size())) {
            std::cerr << "usage: " << argv[0] << " [criterion 1.." << criteria().size() << "]\n";
            return 2;
        }
    }
    int failures = 0;
    for (const auto& c : criteria()) {
        if (only != 0 && c.id != only) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out.require(false, std::string("threw: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.require(secs <= c.limit_seconds, "runtime " + fmt(secs, 3) + " s (limit " + fmt(c.limit_seconds, 3) + " s)");
        failures += !out.pass;
        std::cout << (out.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << out.detail.str()
                  << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
