#include <doctest.h>

#include "lmerepro/cli.hpp"
#include "lmerepro/dataset.hpp"
#include "lmerepro/json_io.hpp"
#include "lmerepro/simulate.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace lmerepro;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path tmp_dir() {
    const fs::path d = LMEREPRO_TEST_TMP;
    fs::create_directories(d);
    return d;
}

// Two systems x two lambdas x 40 sentences with a readability covariate.
fs::path sample_csv() {
    const auto path = tmp_dir() / "sample.csv";
    SimSpec s;
    s.n_objects = 40;
    s.facets = {SimFacet{"system", {"baseline", "sota"}}, SimSpec::counted_facet("lambda", 2)};
    s.covariates = {SimCovariate{"readability", 60.0, 15.0}};
    s.fixed_effects = {{"(Intercept)", 0.4}, {"system=sota", 0.05}};
    s.variance_components = {{"sentence", 0.01}, {"lambda", 0.002}};
    s.residual_sd = 0.05;
    s.seed = 3;
    write_csv(simulate(s), path.string());
    return path;
}

}  // namespace

TEST_SUITE("cli") {
    TEST_CASE("usage errors exit 1") {
        CHECK(run({}).code == kExitDataError);
        CHECK(run({"bogus"}).code == kExitDataError);
        CHECK(run({"fit", "--data", "/nonexistent.csv", "--response", "score", "--formula", "score ~ 1"}).code ==
              kExitDataError);
    }

    TEST_CASE("reliability from given components") {
        const auto r = run({"reliability", "--components",
                            R"({"summary_id":0.00992,"lambda":0.00131,"random_seed":0.00008,"noise_distribution":0.00003,"residual":0.00449})",
                            "--object", "summary_id"});
        REQUIRE(r.code == kExitOk);
        const auto j = Json::parse(r.out);
        CHECK(j.at("command") == "reliability");
        CHECK(std::abs(j.at("result").at("phi").get<double>() - 0.627) < 0.001);
        CHECK(j.at("result").at("interpretation") == "moderate");
        CHECK(j.at("result").at("reliable") == false);
        CHECK(run({"reliability", "--components", R"({"a":1})", "--object", "b"}).code == kExitDataError);
        CHECK(run({"reliability", "--components", R"({"a":0,"r":0})", "--object", "a"}).code == kExitNumerical);
    }

    TEST_CASE("glrt output is deterministic") {
        const auto csv = sample_csv().string();
        const std::vector<std::string> args{"glrt", "--data", csv, "--response", "score",
                                            "--restricted", "score ~ 1 + (1|sentence)",
                                            "--general", "score ~ 1 + system + (1|sentence)"};
        const auto a = run(args);
        const auto b = run(args);
        REQUIRE(a.code == kExitOk);
        CHECK(a.out == b.out);
        const auto j = Json::parse(a.out);
        CHECK(j.at("result").at("df") == 1);
        CHECK(j.at("config").at("data").at("n_obs") == 160);
    }

    TEST_CASE("fit and vca tables and JSON") {
        const auto csv = sample_csv().string();
        const auto fit = run({"fit", "--data", csv, "--response", "score", "--formula", "score ~ 1 + system + (1|sentence) + (1|lambda)"});
        REQUIRE(fit.code == kExitOk);
        CHECK(Json::parse(fit.out).at("result").at("converged") == true);
        const auto vca = run({"vca", "--data", csv, "--response", "score", "--random", "sentence,lambda", "--format", "table"});
        REQUIRE(vca.code == kExitOk);
        CHECK(vca.out.find("sentence") != std::string::npos);
        CHECK(vca.out.find('%') != std::string::npos);
        const auto bad = run({"fit", "--data", csv, "--response", "score", "--formula", "score ~ 1 + nope"});
        CHECK(bad.code == kExitDataError);
        const auto stalled = run({"fit", "--data", csv, "--response", "score", "--max-iter", "2",
                                  "--formula", "score ~ 1 + (1|sentence) + (1|lambda)"});
        CHECK(stalled.code == kExitNumerical);
        CHECK_FALSE(stalled.out.empty());
    }

    TEST_CASE("interaction grid with two points gives four rows") {
        const auto csv = sample_csv().string();
        const auto r = run({"interact", "--data", csv, "--response", "score", "--factor", "system",
                            "--covariate", "readability", "--random", "sentence", "--grid", "2"});
        REQUIRE(r.code == kExitOk);
        std::istringstream lines(r.out);
        std::string header, line;
        std::getline(lines, header);
        CHECK(header == "covariate_value,level,predicted_score");
        int rows = 0;
        while (std::getline(lines, line)) rows += !line.empty();
        CHECK(rows == 4);
        CHECK(run({"interact", "--data", csv, "--response", "score", "--factor", "system", "--covariate",
                   "readability", "--grid", "1"}).code == kExitDataError);
    }

    TEST_CASE("--out writes atomically and matches stdout") {
        const auto csv = sample_csv().string();
        const auto dest = tmp_dir() / "report.json";
        fs::remove(dest);
        const std::vector<std::string> base{"report", "--data", csv, "--response", "score", "--system", "system",
                                            "--conditional", "readability", "--grid", "3"};
        const auto to_stdout = run(base);
        REQUIRE(to_stdout.code == kExitOk);
        auto with_out = base;
        with_out.insert(with_out.end(), {"--out", dest.string()});
        REQUIRE(run(with_out).code == kExitOk);
        CHECK(slurp(dest) == to_stdout.out);
        for (const auto& e : fs::directory_iterator(tmp_dir())) {
            CHECK(e.path().filename().string().find(".tmp.") == std::string::npos);
        }
        write_file_atomic(dest.string(), "replaced");
        CHECK(slurp(dest) == "replaced");
    }

    TEST_CASE("simulate and props round trip through files") {
        const auto dir = tmp_dir();
        {
            std::ofstream f(dir / "spec.json");
            f << R"j({"n_objects": 5, "facets": [{"name": "system", "levels": ["a", "b"]}],
                     "fixed_effects": {"(Intercept)": 1.0}, "variance_components": {"sentence": 1.0},
                     "residual_sd": 0.5, "seed": 9})j";
        }
        const auto a = run({"simulate", "--spec", (dir / "spec.json").string()});
        REQUIRE(a.code == kExitOk);
        CHECK(a.out == run({"simulate", "--spec", (dir / "spec.json").string()}).out);
        CHECK(a.out != run({"simulate", "--spec", (dir / "spec.json").string(), "--seed", "10"}).out);
        CHECK(std::count(a.out.begin(), a.out.end(), '\n') == 11);

        {
            std::ofstream f(dir / "texts.txt");
            f << "The cat sat on the mat.\nDogs run quickly.\n";
        }
        const auto p = run({"props", "--texts", (dir / "texts.txt").string()});
        REQUIRE(p.code == kExitOk);
        CHECK(p.out.rfind("id,rarity,readability\n", 0) == 0);
        CHECK(std::count(p.out.begin(), p.out.end(), '\n') == 3);
    }
}
