#include <doctest.h>

#include "lmerepro/error.hpp"
#include "lmerepro/simulate.hpp"
#include "oracles.hpp"

using namespace lmerepro;

namespace {

SimSpec crossed_spec(std::uint64_t seed = 7) {
    SimSpec s;
    s.n_objects = 20;
    s.facets = {SimFacet{"system", {"baseline", "sota"}}, SimSpec::counted_facet("lambda", 3)};
    s.covariates = {SimCovariate{"d", 1.0, 2.0}};
    s.fixed_effects = {{"(Intercept)", 0.5}, {"system=sota", 0.1}};
    s.variance_components = {{"sentence", 1.0}, {"lambda", 0.5}};
    s.residual_sd = 0.3;
    s.seed = seed;
    return s;
}

}  // namespace

TEST_SUITE("simulate") {
    TEST_CASE("layout and level names") {
        const auto ds = simulate(crossed_spec());
        CHECK(ds.size() == 20 * 2 * 3);
        CHECK(ds.object_of_interest() == "sentence");
        CHECK(ds.factor("lambda").levels == std::vector<std::string>{"lambda1", "lambda2", "lambda3"});
        CHECK(ds.factor("system").label(0) == "baseline");
        CHECK(ds.factor("system").label(ds.size() - 1) == "sota");
        // covariate is constant within an object
        const auto& d = ds.covariate("d").values;
        CHECK(d[0] == d[20]);
        CHECK(d[0] != d[1]);
    }

    TEST_CASE("same seed gives identical data, different seeds differ") {
        CHECK(simulate(crossed_spec(7)) == simulate(crossed_spec(7)));
        CHECK(simulate(crossed_spec(7)).response() != simulate(crossed_spec(8)).response());
        CHECK(derive_seed(7, 0) != derive_seed(7, 1));
        CHECK(derive_seed(7, 3) == derive_seed(7, 3));
    }

    TEST_CASE("zero variances give the fixed-effect prediction") {
        auto s = crossed_spec();
        s.variance_components = {{"sentence", 0.0}, {"lambda", 0.0}};
        s.residual_sd = 1e-12;
        const auto ds = simulate(s);
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const double expect = ds.factor("system").label(i) == "sota" ? 0.6 : 0.5;
            CHECK(std::abs(ds.response()[i] - expect) < 1e-10);
        }
        s.residual_sd = 0.0;
        CHECK_THROWS_AS(simulate(s), SpecError);
    }

    TEST_CASE("normal stream moments") {
        NormalStream ns(99);
        std::vector<double> z(200000);
        for (auto& v : z) v = ns.normal();
        CHECK(std::abs(oracle::mean(z)) < 0.01);
        CHECK(std::abs(oracle::sample_sd(z) - 1.0) < 0.01);
        NormalStream u(1);
        for (int i = 0; i < 1000; ++i) {
            const double x = u.uniform();
            CHECK((x >= 0.0 && x < 1.0));
        }
    }

    TEST_CASE("dropout removes cells at the requested rate") {
        auto s = crossed_spec();
        s.n_objects = 2000;
        s.cell_dropout = 0.25;
        const auto ds = simulate(s);
        const double kept = static_cast<double>(ds.size()) / (2000.0 * 6.0);
        CHECK(std::abs(kept - 0.75) < 0.02);
    }

    TEST_CASE("spec validation") {
        auto s = crossed_spec();
        s.variance_components["sentence"] = -1.0;
        CHECK_THROWS_AS(s.validate(), SpecError);
        s = crossed_spec();
        s.cell_dropout = 1.0;
        CHECK_THROWS_AS(s.validate(), SpecError);
        s = crossed_spec();
        s.fixed_effects["system=nope"] = 1.0;
        CHECK_THROWS_AS(simulate(s), SpecError);
        s = crossed_spec();
        s.facets.push_back(SimFacet{"empty", {}});
        CHECK_THROWS_AS(simulate(s), SpecError);
    }

    TEST_CASE("JSON round trip preserves the simulation settings") {
        auto s = crossed_spec(12345678901234ULL);
        s.cell_dropout = 0.1;
        const auto back = parse_sim_spec_json(sim_spec_to_json(s));
        CHECK(sim_spec_to_json(back) == sim_spec_to_json(s));
        CHECK(simulate(back) == simulate(s));
        CHECK_THROWS_AS(parse_sim_spec_json("{\"n_objects\": \"x\"}"), SpecError);
    }

    TEST_CASE("quantiles follow linear interpolation") {
        CHECK(quantile({3, 1, 2, 4}, 0.5) == 2.5);
        CHECK(quantile({1, 2, 3, 4, 5}, 0.25) == 2.0);
        CHECK(quantile({10}, 0.95) == 10.0);
        CHECK(quantile({1, 2}, 0.0) == 1.0);
        CHECK(quantile({1, 2}, 1.0) == 2.0);
        const auto m = summarize({1, 2, 3, 4, 5});
        CHECK(m.mean == 3.0);
        CHECK(m.median == 3.0);
        CHECK(m.sd == doctest::Approx(std::sqrt(2.5)));
    }

    TEST_CASE("Monte-Carlo driver") {
        const auto spec = crossed_spec();
        const McAnalysis mean_score = [](const EvalDataset& ds, std::size_t) {
            return std::vector<double>{oracle::mean(ds.response())};
        };
        const auto one = mc_study(spec, mean_score, 1);
        REQUIRE(one.results.size() == 1);
        auto first = spec;
        first.seed = derive_seed(spec.seed, 0);
        CHECK(one.results[0][0] == oracle::mean(simulate(first).response()));

        const auto serial = mc_study(spec, mean_score, 12, 1);
        const auto pooled = mc_study(spec, mean_score, 12, 3);
        CHECK(serial.results == pooled.results);
        CHECK(serial.column(0).size() == 12);
        CHECK(serial.metrics[0].median == quantile(serial.column(0), 0.5));

        const McAnalysis failing = [](const EvalDataset&, std::size_t r) -> std::vector<double> {
            if (r == 4) throw NumericalError("boom");
            return {0.0};
        };
        try {
            mc_study(spec, failing, 6);
            FAIL("expected McStudyError");
        } catch (const McStudyError& e) {
            CHECK(e.replication() == 4);
        }
    }
}
