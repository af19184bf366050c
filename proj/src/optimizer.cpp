#include "lmerepro/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace lmerepro {

namespace {

struct Vertex {
    std::vector<double> x;
    double f;
};

class Search {
public:
    Search(const std::function<double(const std::vector<double>&)>& f, const std::vector<double>& lower,
           const NelderMeadOptions& options)
        : f_(f), lower_(lower), options_(options) {}

    double eval(std::vector<double>& x) {
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::max(x[i], lower_[i]);
        ++evaluations_;
        double v = f_(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    }

    bool budget_left() const { return evaluations_ < options_.max_evaluations; }
    int evaluations() const { return evaluations_; }

    // One full simplex descent from x0. Returns true on convergence.
    bool descend(const std::vector<double>& x0, Vertex& best) {
        const std::size_t n = x0.size();
        std::vector<Vertex> s;
        s.reserve(n + 1);
        {
            auto x = x0;
            double fx = eval(x);
            s.push_back({x, fx});
        }
        for (std::size_t i = 0; i < n; ++i) {
            auto x = x0;
            x[i] += options_.initial_step;
            double fx = eval(x);
            s.push_back({x, fx});
        }

        bool converged = false;
        while (true) {
            std::stable_sort(s.begin(), s.end(), [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
            if (has_converged(s)) {
                converged = true;
                break;
            }
            if (!budget_left()) break;

            std::vector<double> c(n, 0.0);
            for (std::size_t v = 0; v < n; ++v) {
                for (std::size_t i = 0; i < n; ++i) c[i] += s[v].x[i];
            }
            for (auto& ci : c) ci /= static_cast<double>(n);

            Vertex& worst = s[n];
            auto along = [&](double t) {
                std::vector<double> x(n);
                for (std::size_t i = 0; i < n; ++i) x[i] = c[i] + t * (worst.x[i] - c[i]);
                return x;
            };

            auto xr = along(-1.0);
            const double fr = eval(xr);
            if (fr < s[0].f) {
                auto xe = along(-2.0);
                const double fe = eval(xe);
                worst = fe < fr ? Vertex{xe, fe} : Vertex{xr, fr};
                continue;
            }
            if (fr < s[n - 1].f) {
                worst = {xr, fr};
                continue;
            }
            if (fr < worst.f) {
                auto xc = along(-0.5);
                const double fc = eval(xc);
                if (fc <= fr) {
                    worst = {xc, fc};
                    continue;
                }
            } else {
                auto xc = along(0.5);
                const double fc = eval(xc);
                if (fc < worst.f) {
                    worst = {xc, fc};
                    continue;
                }
            }
            // shrink toward the best vertex
            for (std::size_t v = 1; v <= n; ++v) {
                for (std::size_t i = 0; i < n; ++i) s[v].x[i] = s[0].x[i] + 0.5 * (s[v].x[i] - s[0].x[i]);
                s[v].f = eval(s[v].x);
            }
        }
        std::stable_sort(s.begin(), s.end(), [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
        if (s[0].f < best.f) best = s[0];
        return converged;
    }

private:
    bool has_converged(const std::vector<Vertex>& s) const {
        const double fbest = s.front().f;
        const double fspread = s.back().f - fbest;
        if (!(fspread <= options_.ftol_rel * std::max(1.0, std::abs(fbest)))) return false;
        for (std::size_t v = 1; v < s.size(); ++v) {
            for (std::size_t i = 0; i < s[v].x.size(); ++i) {
                if (std::abs(s[v].x[i] - s[0].x[i]) > options_.xtol_abs) return false;
            }
        }
        return true;
    }

    const std::function<double(const std::vector<double>&)>& f_;
    const std::vector<double>& lower_;
    const NelderMeadOptions& options_;
    int evaluations_ = 0;
};

}  // namespace

NelderMeadResult minimize_bounded_nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x0, const std::vector<double>& lower,
                                              const NelderMeadOptions& options) {
    NelderMeadResult result;
    if (x0.empty()) {
        result.fmin = f(x0);
        result.evaluations = 1;
        result.converged = true;
        return result;
    }
    for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = std::max(x0[i], lower[i]);

    Search search(f, lower, options);
    Vertex best{x0, std::numeric_limits<double>::infinity()};
    bool converged = search.descend(x0, best);
    for (int restart = 0; converged && restart < options.max_restarts; ++restart) {
        const double before = best.f;
        converged = search.descend(best.x, best);
        if (!converged) break;
        if (before - best.f <= options.ftol_rel * std::max(1.0, std::abs(best.f))) break;
    }
    result.x = best.x;
    result.fmin = best.f;
    result.evaluations = search.evaluations();
    result.converged = converged;
    return result;
}

}  // namespace lmerepro
