#pragma once

#include <functional>
#include <vector>

namespace lmerepro {

struct NelderMeadOptions {
    int max_evaluations = 10000;
    double ftol_rel = 1e-10;    // spread of simplex values, relative to max(1, |f_best|)
    double xtol_abs = 1e-8;     // max coordinate distance from the best vertex
    double initial_step = 0.5;
    int max_restarts = 8;
};

struct NelderMeadResult {
    std::vector<double> x;
    double fmin = 0.0;
    int evaluations = 0;
    bool converged = false;
};

/// Nelder-Mead with a lower bound on every coordinate. Trial points are
/// projected onto the feasible box, so optima on the bound are reachable.
/// After convergence the simplex is rebuilt around the best point and the
/// search repeated until a restart no longer improves the minimum.
NelderMeadResult minimize_bounded_nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x0, const std::vector<double>& lower,
                                              const NelderMeadOptions& options = {});

}  // namespace lmerepro
