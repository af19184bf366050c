#pragma once

#include "lmerepro/design.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <memory>
#include <string>
#include <vector>

namespace lmerepro {

enum class Criterion { ML, REML };

std::string to_string(Criterion c);
Criterion parse_criterion(const std::string& s);

/// Relative variance ratios gamma_j = sigma2_j / sigma2_res, one per
/// random factor, in the order of DesignMatrices::z_blocks.
struct VarianceParams {
    std::vector<double> gamma;
};

enum class SolverKind { Auto, Dense, Sparse };

struct FitOptions {
    Criterion criterion = Criterion::REML;
    int max_iter = 10000;  // deviance evaluations
    double ftol_rel = 1e-10;
    double xtol = 1e-8;
    SolverKind solver = SolverKind::Auto;
};

struct VarianceComponent {
    std::string name;
    double variance = 0.0;
};

struct FittedModel {
    std::vector<std::string> column_names;
    std::vector<ColumnDef> columns;
    std::vector<std::string> dropped_columns;
    Eigen::VectorXd beta_hat;
    /// Random factors in model order, then "residual".
    std::vector<VarianceComponent> sigma2;
    std::vector<double> gamma;
    double log_likelihood = 0.0;
    double deviance = 0.0;
    Criterion criterion = Criterion::REML;
    bool converged = false;
    int iterations = 0;
    std::size_t n_obs = 0;
    std::size_t n_params = 0;

    double variance(const std::string& name) const;
    double residual_variance() const { return sigma2.back().variance; }
    double coefficient(const std::string& column) const;
    bool has_coefficient(const std::string& column) const;
};

/// Everything the deviance needs at one gamma: the profiled fixed effects
/// and penalized residual sum of squares along with the two log-determinants.
struct DevianceTerms {
    double deviance = 0.0;
    Eigen::VectorXd beta;
    double pwrss = 0.0;
    double log_det_l = 0.0;   // log|L|^2 of the random-effects block
    double log_det_rx = 0.0;  // log|R_X|^2 of the Schur complement
    double sigma2_res = 0.0;
};

/// Profiled deviance of a variance-components LMEM. Sufficient statistics
/// (Z'Z, Z'X, Z'y, X'X, X'y, y'y) are accumulated once in extended
/// precision, so the result does not depend on row order. Each evaluation
/// factors
///     A = Lambda Z'Z Lambda + I,   Lambda = diag(sqrt(gamma_j)),
/// where gamma_j = 0 makes the block an identity (the limit case).
class ProfiledDeviance {
public:
    ProfiledDeviance(const DesignMatrices& dm, const Eigen::VectorXd& y, SolverKind solver = SolverKind::Auto);
    ~ProfiledDeviance();
    ProfiledDeviance(ProfiledDeviance&&) noexcept;
    ProfiledDeviance& operator=(ProfiledDeviance&&) noexcept;

    DevianceTerms evaluate(const VarianceParams& gamma, Criterion criterion) const;
    double operator()(const VarianceParams& gamma, Criterion criterion) const {
        return evaluate(gamma, criterion).deviance;
    }

    std::size_t n_obs() const noexcept;
    std::size_t n_fixed() const noexcept;
    std::size_t n_random_factors() const noexcept;
    std::size_t n_random_levels() const noexcept;
    bool uses_sparse_solver() const noexcept;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// -2 log-likelihood (ML) or restricted log-likelihood (REML) with beta and
/// sigma2_res profiled out.
double profiled_deviance(const DesignMatrices& dm, const Eigen::VectorXd& y, const VarianceParams& gamma,
                         Criterion criterion, SolverKind solver = SolverKind::Auto);

/// Minimizes the profiled deviance over gamma >= 0, searching on
/// delta_j = log(1 + gamma_j) from gamma_j = 1. Non-convergence is reported
/// through FittedModel::converged, never thrown.
FittedModel fit(const DesignMatrices& dm, const Eigen::VectorXd& y, const FitOptions& options = {});

Eigen::VectorXd response_vector(const EvalDataset& ds);

/// Population-level predictions X_new * beta_hat. Throws SpecError when the
/// columns of `dm_new` differ from the fitted ones.
Eigen::VectorXd predict_fixed(const FittedModel& fm, const DesignMatrices& dm_new);

}  // namespace lmerepro
