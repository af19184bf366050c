#pragma once

#include "lmerepro/design.hpp"
#include "lmerepro/lmem.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lmerepro {

/// Generalized likelihood ratio test between two nested LMEMs fitted by ML.
struct GlrtResult {
    double stat = 0.0;  // deviance(restricted) - deviance(general), clamped at 0
    int df = 0;
    std::optional<double> p_value;  // withheld when either fit did not converge
    double lambda_ratio = 1.0;      // exp(-stat / 2)
    std::optional<double> effect_size;
    bool converged_restricted = false;
    bool converged_general = false;
    std::vector<std::string> dropped_columns;  // aliased columns of the general model
    std::string restricted_formula;
    std::string general_formula;
    FittedModel restricted;
    FittedModel general;
};

/// Upper tail of the chi-square distribution with `df` degrees of freedom.
double chi_square_upper_tail(double stat, int df);

/// True when every fixed term (and the intercept) of `restricted` appears in
/// `general` and both use the same random factors and response.
bool is_nested(const ModelSpec& restricted, const ModelSpec& general);

/// Fits both models by ML (any REML request in `fit_options` is overridden)
/// and compares them. When `general` adds a two-level factor main effect,
/// effect_size is the standardized mean difference of the scores at the
/// first level minus those at the second. Throws SpecError for non-nested
/// specs or a comparison with no added fixed-effect columns.
GlrtResult glrt(const EvalDataset& ds, const ModelSpec& restricted, const ModelSpec& general,
                const FitOptions& fit_options = {});

struct ConditionalOptions {
    std::string system_factor = "system";
    /// Random intercepts; empty means the dataset's object-of-interest factor.
    std::vector<std::string> random_factors;
    /// Test only the interaction (restricted model keeps the system main
    /// effect), giving df = 1 instead of the joint df = 2 test.
    bool interaction_only = false;
    /// Z-score the covariate before fitting (skipped for a constant covariate).
    bool standardize = true;
    FitOptions fit;
};

struct ConditionalResult {
    GlrtResult test;
    std::string covariate;
    std::string system_factor;
    ScalingRecord scaling;
    ModelSpec restricted_spec;
    ModelSpec general_spec;
};

/// Compares  y ~ 1 + d + (1|s)  against  y ~ 1 + d + system + system:d + (1|s).
ConditionalResult glrt_conditional(const EvalDataset& ds, const std::string& covariate,
                                   const ConditionalOptions& options = {});

/// (mean_a - mean_b) / s_pooled with the n-2 pooled variance. Throws
/// NumericalError when s_pooled is 0 and the means differ; returns 0 when
/// both are equal.
double standardized_mean_difference(std::span<const double> scores_a, std::span<const double> scores_b);

/// Scores at a factor level, in row order.
std::vector<double> scores_at_level(const EvalDataset& ds, const std::string& factor, const std::string& level);

}  // namespace lmerepro
