#pragma once

#include "lmerepro/dataset.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <map>
#include <string>
#include <vector>

namespace lmerepro {

/// One fixed-effect term: the intercept is represented separately, so a
/// term here is a main effect (one variable) or an interaction (several).
struct FixedTerm {
    std::vector<std::string> variables;

    std::string label() const;  // variables joined with ':'
    /// Order-insensitive key, so that `a:b` and `b:a` compare equal.
    std::string canonical() const;
};

/// Declarative model: response ~ [1] + fixed terms + (1|factor) ...
/// Random effects are random intercepts only, one variance per factor.
struct ModelSpec {
    std::string response;
    bool intercept = true;
    std::vector<FixedTerm> fixed_terms;
    std::vector<std::string> random_factors;

    /// Parses `score ~ 1 + system + d + system:d + (1|sentence)`. `a*b`
    /// expands to `a + b + a:b`; `0` or `-1` suppresses the intercept.
    static ModelSpec parse(const std::string& formula);
    std::string to_string() const;

    /// Throws SpecError if a term names a column missing from `ds`, a
    /// random factor is not a factor column, or a factor is both fixed and
    /// random.
    void validate(const EvalDataset& ds) const;

    bool has_term(const FixedTerm& term) const;
};

/// A single regressor column is the product of its atoms; no atoms means
/// the intercept column of ones.
struct ColumnAtom {
    enum class Kind { FactorLevel, Covariate };
    Kind kind = Kind::Covariate;
    std::string variable;
    std::string level;  // only for FactorLevel

    friend bool operator==(const ColumnAtom&, const ColumnAtom&) = default;
};

struct ColumnDef {
    std::string name;
    std::vector<ColumnAtom> atoms;

    friend bool operator==(const ColumnDef&, const ColumnDef&) = default;
};

/// Indicator block of one random-intercept factor: row i has a single 1 in
/// column `codes[i]`.
struct RandomBlock {
    std::string name;
    std::vector<std::string> levels;
    std::vector<std::int32_t> codes;

    std::size_t n_levels() const noexcept { return levels.size(); }
    Eigen::SparseMatrix<double> to_sparse() const;
};

struct DesignMatrices {
    Eigen::MatrixXd X;
    std::vector<RandomBlock> z_blocks;
    std::vector<std::string> column_names;
    std::vector<ColumnDef> columns;
    std::vector<std::string> dropped_columns;
    std::vector<std::string> warnings;

    std::size_t n_obs() const noexcept { return static_cast<std::size_t>(X.rows()); }
    std::size_t n_fixed() const noexcept { return static_cast<std::size_t>(X.cols()); }
    std::size_t n_random() const noexcept { return z_blocks.size(); }
};

struct DesignOptions {
    /// Relative tolerance for declaring a column aliased with the columns
    /// retained before it.
    double alias_tolerance = 1e-7;
};

/// Treatment coding against the first-appearing level; interaction columns
/// are elementwise products of coded columns. Aliased columns are dropped
/// in term order and reported in `dropped_columns`.
DesignMatrices build_design(const EvalDataset& ds, const ModelSpec& spec, const DesignOptions& options = {});

/// Evaluates a fixed set of column definitions on (possibly new) data, with
/// no aliasing repair. Used to predict from a fitted model.
Eigen::MatrixXd evaluate_columns(const EvalDataset& ds, const std::vector<ColumnDef>& columns);

/// Value of one column at a single design point. Factors missing from
/// `levels` sit at their reference level; covariates missing from
/// `covariates` are 0.
double evaluate_column(const ColumnDef& column, const std::map<std::string, std::string>& levels,
                       const std::map<std::string, double>& covariates);

/// Same column set as a fitted model, for prediction; random blocks are
/// left empty.
DesignMatrices design_for_columns(const EvalDataset& ds, const std::vector<ColumnDef>& columns);

struct Scaling {
    double mean = 0.0;
    double sd = 1.0;
};

/// Per-covariate (mean, sd) applied by standardize_covariates; sd uses the
/// n-1 denominator.
struct ScalingRecord {
    std::map<std::string, Scaling> scales;

    double to_original(const std::string& covariate, double standardized) const;
    double to_standardized(const std::string& covariate, double original) const;
};

/// Z-scores the named covariates. Throws DataError for zero-variance
/// covariates.
std::pair<EvalDataset, ScalingRecord> standardize_covariates(const EvalDataset& ds,
                                                             const std::vector<std::string>& names);

}  // namespace lmerepro
