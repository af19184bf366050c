#pragma once

#include "lmerepro/dataset.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace lmerepro {

/// A measurement condition crossed with every test item (e.g. system,
/// lambda, seed).
struct SimFacet {
    std::string name;
    std::vector<std::string> levels;
};

/// An item-level covariate drawn once per object from N(mean, sd^2).
struct SimCovariate {
    std::string name;
    double mean = 0.0;
    double sd = 1.0;
};

/// Ground truth for a fully crossed LMEM dataset
///     y = X beta + sum_f Z_f b_f + eps,  b_f ~ N(0, sigma2_f), eps ~ N(0, residual_sd^2).
///
/// Fixed-effect terms are written in the column language of the design
/// module: "(Intercept)", a covariate name, "factor=level" indicators, and
/// ':'-joined products of those (e.g. "system=sota:d").
struct SimSpec {
    std::string response = "score";
    std::string object_factor = "sentence";
    std::size_t n_objects = 1;
    std::vector<SimFacet> facets;
    std::vector<SimCovariate> covariates;
    std::map<std::string, double> fixed_effects;
    std::map<std::string, double> variance_components;
    double residual_sd = 1.0;
    double cell_dropout = 0.0;  // probability that a design cell is missing
    std::uint64_t seed = 0;

    /// Throws SpecError when a setting is out of range or a fixed-effect
    /// term names an unknown factor level.
    void validate() const;

    /// Convenience for facets named by level count: levels become
    /// "<name>1" .. "<name>k".
    static SimFacet counted_facet(const std::string& name, std::size_t count);
};

SimSpec parse_sim_spec_json(const std::string& text);
SimSpec load_sim_spec_json(const std::string& path);
std::string sim_spec_to_json(const SimSpec& spec);

/// SplitMix64 finalizer; used to derive independent seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed of replication `index` in a Monte-Carlo study based on `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Standard normal deviates from a 64-bit Mersenne Twister via the
/// Box-Muller transform. The engine output sequence is fixed by the C++
/// standard, so draws are reproducible across platforms (up to libm
/// rounding of log/sin/cos).
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    double uniform();  // in [0, 1)
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }

private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

/// Draw order: random effects (object factor first, then facets in declared
/// order, one deviate per level), covariates (declared order, one per
/// object), then for each row in output order a dropout uniform (only when
/// cell_dropout > 0) followed by the residual. Rows are ordered by facet
/// combination (first facet slowest) and by object within a combination.
EvalDataset simulate(const SimSpec& spec);

struct MetricSummary {
    double mean = 0.0;
    double sd = 0.0;
    double median = 0.0;
    double q05 = 0.0;
    double q25 = 0.0;
    double q75 = 0.0;
    double q95 = 0.0;
};

struct McSummary {
    std::vector<std::vector<double>> results;  // [replication][metric]
    std::vector<MetricSummary> metrics;
    std::vector<double> column(std::size_t metric) const;
};

class McStudyError : public std::runtime_error {
public:
    McStudyError(std::size_t replication, const std::string& what)
        : std::runtime_error("replication " + std::to_string(replication) + ": " + what), replication_(replication) {}
    std::size_t replication() const noexcept { return replication_; }

private:
    std::size_t replication_;
};

using McAnalysis = std::function<std::vector<double>(const EvalDataset&, std::size_t replication)>;

/// Runs simulate + analysis for each replication with seed
/// derive_seed(spec.seed, r). Results do not depend on `threads`.
McSummary mc_study(const SimSpec& spec, const McAnalysis& analysis, std::size_t replications,
                   unsigned threads = 1);

/// Linear-interpolation quantile (R type 7) of an unsorted sample.
double quantile(std::vector<double> values, double prob);
MetricSummary summarize(const std::vector<double>& values);

}  // namespace lmerepro
