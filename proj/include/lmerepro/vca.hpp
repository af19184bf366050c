#pragma once

#include "lmerepro/inference.hpp"
#include "lmerepro/lmem.hpp"

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lmerepro {

/// Conventional ICC bands: below 0.5 poor, [0.5, 0.75) moderate, [0.75, 0.9) good,
/// 0.9 and above excellent.
enum class Reliability { Poor, Moderate, Good, Excellent };

std::string to_string(Reliability r);
Reliability classify_reliability(double phi);

/// Binary verdict against a single cutoff (0.8 is a common choice).
inline bool is_reliable(double phi, double threshold = 0.8) { return phi >= threshold; }

struct PhiResult {
    double phi = 0.0;
    Reliability interpretation = Reliability::Poor;
};

/// phi = sigma2_object / (sigma2_object + sum of every other component).
/// Throws DataError for negative variances or a missing object component,
/// NumericalError when the total is zero.
PhiResult compute_phi(const std::vector<std::pair<std::string, double>>& components, const std::string& object);
PhiResult compute_phi(const std::map<std::string, double>& components, const std::string& object);

struct VcaComponent {
    std::string name;
    double variance = 0.0;
    double percent = 0.0;  // unrounded share of the total, in percent
};

struct VcaReport {
    std::vector<VcaComponent> components;  // random factors in request order, then residual
    double phi = 0.0;
    std::string object_of_interest;
    Reliability interpretation = Reliability::Poor;
    bool converged = false;
    int iterations = 0;
    double deviance = 0.0;
    double intercept = 0.0;
    std::size_t n_obs = 0;
};

/// Percent shares and phi from already-estimated variances.
VcaReport vca_from_components(const std::vector<std::pair<std::string, double>>& components,
                              const std::string& object);

struct VcaOptions {
    /// Extra random factors for two-way interactions (a:b), worth adding
    /// only when cells are replicated; otherwise interactions stay in the
    /// residual.
    std::vector<std::pair<std::string, std::string>> interactions;
    FitOptions fit;  // criterion defaults to REML
};

/// Fits y ~ 1 + (1|f1) + ... + (1|fJ) and reports the variance shares and
/// phi. Throws SpecError if `object` is not among `random_factors`, and
/// NumericalError (with diagnostics) when the fit does not converge.
VcaReport vca(const EvalDataset& ds, const std::vector<std::string>& random_factors, const std::string& object,
              const VcaOptions& options = {});

/// Adds a factor whose levels are the observed combinations "a:b".
EvalDataset with_interaction_factor(const EvalDataset& ds, const std::string& a, const std::string& b);

struct GridRow {
    double covariate_value = 0.0;
    std::string level;
    double predicted = 0.0;
};

struct GridRequest {
    std::string covariate;
    std::string factor;
    std::vector<std::string> levels;
    double lower = 0.0;
    double upper = 1.0;
    std::size_t points = 2;
    /// Maps the reported (original-scale) covariate onto the fitted scale.
    const ScalingRecord* scaling = nullptr;
};

/// Population-level predictions on an evenly spaced covariate grid, one
/// line per factor level. Throws SpecError if the model has no column that
/// involves the covariate.
std::vector<GridRow> interaction_grid(const FittedModel& fm, const GridRequest& request);
std::string grid_to_csv(const std::vector<GridRow>& rows);

struct InteractionAnalysis {
    FittedModel model;            // ML fit of y ~ 1 + r + d + r:d + (1|s)
    GlrtResult interaction_test;  // against y ~ 1 + r + d + (1|s)
    ScalingRecord scaling;
    std::vector<GridRow> grid;
    std::string factor;
    std::string covariate;
};

struct InteractionOptions {
    std::vector<std::string> random_factors;  // empty: the object-of-interest factor
    bool standardize = true;
    std::size_t grid_points = 101;
    FitOptions fit;
};

/// Meta-parameter x data-property interaction: the meta-parameter enters as
/// a fixed factor, interacting with the covariate. Throws SpecError when
/// the interaction columns are all aliased (df = 0).
InteractionAnalysis vca_with_interactions(const EvalDataset& ds, const std::string& fixed_meta,
                                          const std::string& covariate, const InteractionOptions& options = {});

}  // namespace lmerepro
