#pragma once

#include "lmerepro/inference.hpp"
#include "lmerepro/json_io.hpp"
#include "lmerepro/vca.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lmerepro {

struct ReportConfig {
    std::string system_factor = "system";
    /// Factors whose level combinations form a system's configurations.
    /// Empty: every factor other than the system and object factors.
    std::vector<std::string> config_factors;
    std::string object;  // empty: the dataset's object of interest
    /// Covariates for conditional (system x covariate) tests.
    std::vector<std::string> covariates;
    /// Restrict the VCA to one system's rows. Empty: all rows, with the
    /// system factor joining the random factors.
    std::string vca_system;
    /// Empty: object, then config factors (then the system factor when the
    /// VCA runs on all rows).
    std::vector<std::string> vca_random_factors;
    bool run_vca = true;
    std::size_t grid_points = 101;
    FitOptions fit;
};

/// The winning configuration of one system.
struct ConfigChoice {
    std::string system;
    std::map<std::string, std::string> levels;  // config factor -> level
    double mean_score = 0.0;
    std::size_t n_rows = 0;
};

struct ConditionalSection {
    std::string covariate;
    GlrtResult test;
    ScalingRecord scaling;
    std::vector<GridRow> grid;
};

struct ReproReport {
    std::string fingerprint;
    std::string response;
    std::string system_factor;
    std::string object;
    std::vector<std::string> systems;
    std::vector<std::string> config_factors;
    std::vector<ConfigChoice> best_configs;
    GlrtResult pairwise_best;    // best configuration of every system
    GlrtResult under_variation;  // all rows
    std::optional<VcaReport> vca;
    std::string vca_scope;  // system level, or "all"
    std::vector<ConditionalSection> conditional;
};

/// Per-system best configuration: highest mean score, ties going to the
/// combination that comes first in level declaration order.
std::vector<ConfigChoice> select_best_configs(const EvalDataset& ds, const std::string& system_factor,
                                              const std::vector<std::string>& config_factors);

/// Rows of every system at its chosen configuration, in original order.
EvalDataset filter_to_configs(const EvalDataset& ds, const std::string& system_factor,
                              const std::vector<ConfigChoice>& choices);

/// Compares systems at their best configuration and over all rows, then
/// adds the VCA and one conditional test per covariate on the best rows.
/// Throws DataError when the system factor has fewer than two levels.
ReproReport build_report(const EvalDataset& ds, const ReportConfig& config = {});

Json to_json(const ReproReport& r);
ReproReport report_from_json(const Json& j);

/// Short plain-text rendering with one-decimal percentages.
std::string report_summary(const ReproReport& r);

}  // namespace lmerepro
