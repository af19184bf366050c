#include "lmerepro/lmem.hpp"

#include "lmerepro/error.hpp"
#include "lmerepro/optimizer.hpp"

#include <Eigen/Cholesky>
#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>

namespace lmerepro {

std::string to_string(Criterion c) { return c == Criterion::ML ? "ML" : "REML"; }

Criterion parse_criterion(const std::string& s) {
    std::string t = s;
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (t == "ml") return Criterion::ML;
    if (t == "reml") return Criterion::REML;
    throw SpecError("unknown criterion '" + s + "' (expected ml or reml)");
}

double FittedModel::variance(const std::string& name) const {
    for (const auto& c : sigma2) {
        if (c.name == name) return c.variance;
    }
    throw SpecError("model has no variance component '" + name + "'");
}

bool FittedModel::has_coefficient(const std::string& column) const {
    return std::find(column_names.begin(), column_names.end(), column) != column_names.end();
}

double FittedModel::coefficient(const std::string& column) const {
    auto it = std::find(column_names.begin(), column_names.end(), column);
    if (it == column_names.end()) throw SpecError("model has no fixed-effect column '" + column + "'");
    return beta_hat[it - column_names.begin()];
}

namespace {

// Sufficient statistics are summed in quad precision and rounded once, so
// reordering rows leaves them bitwise unchanged.
using Accum = __float128;

constexpr std::size_t kDenseLevelLimit = 64;

}  // namespace

struct ProfiledDeviance::Impl {
    std::size_t n = 0;
    std::size_t p = 0;
    std::size_t q = 0;
    std::vector<std::size_t> block_of;  // random-effect coordinate -> factor index
    std::size_t n_blocks = 0;

    Eigen::MatrixXd XtX;
    Eigen::VectorXd Xty;
    Eigen::VectorXd beta0;  // OLS coefficients removed from the working response
    double yty = 0.0;
    Eigen::MatrixXd ZtX;
    Eigen::VectorXd Zty;

    bool sparse = false;
    Eigen::MatrixXd ZtZ_dense;

    // Sparse path: A keeps the structure of Z'Z plus the diagonal; values
    // are refreshed per evaluation from the stored counts.
    mutable Eigen::SparseMatrix<double> A;
    std::vector<double> base_values;
    std::vector<int> nz_row;
    std::vector<int> nz_col;
    mutable Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt;
};

ProfiledDeviance::ProfiledDeviance(const DesignMatrices& dm, const Eigen::VectorXd& y, SolverKind solver)
    : impl_(std::make_unique<Impl>()) {
    auto& s = *impl_;
    s.n = static_cast<std::size_t>(dm.X.rows());
    s.p = static_cast<std::size_t>(dm.X.cols());
    if (static_cast<std::size_t>(y.size()) != s.n) {
        throw SpecError("response has " + std::to_string(y.size()) + " entries but the design has " +
                        std::to_string(s.n) + " rows");
    }
    s.n_blocks = dm.z_blocks.size();
    std::vector<std::size_t> offsets;
    for (std::size_t j = 0; j < s.n_blocks; ++j) {
        const auto& b = dm.z_blocks[j];
        if (b.codes.size() != s.n) throw SpecError("random block '" + b.name + "' has the wrong number of rows");
        offsets.push_back(s.q);
        s.q += b.n_levels();
        s.block_of.insert(s.block_of.end(), b.n_levels(), j);
    }

    const std::size_t n = s.n;
    const std::size_t p = s.p;
    const std::size_t q = s.q;
    const std::size_t J = s.n_blocks;

    // Working response: y minus its OLS fit. The deviance is unchanged, and
    // y'y no longer cancels against the fixed-effect fit at large offsets.
    // Normal equations from extended-precision sums keep beta0 independent of row order.
    s.beta0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
    if (p > 0) {
        std::vector<Accum> gram(p * p, 0), rhs(p, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            for (std::size_t a = 0; a < p; ++a) {
                const double xa = dm.X(ii, static_cast<Eigen::Index>(a));
                rhs[a] += static_cast<Accum>(xa * y[ii]);
                for (std::size_t b = a; b < p; ++b) gram[a * p + b] += static_cast<Accum>(xa * dm.X(ii, static_cast<Eigen::Index>(b)));
            }
        }
        Eigen::MatrixXd G(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
        Eigen::VectorXd r(static_cast<Eigen::Index>(p));
        for (std::size_t a = 0; a < p; ++a) {
            r[static_cast<Eigen::Index>(a)] = static_cast<double>(rhs[a]);
            for (std::size_t b = a; b < p; ++b) {
                G(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = static_cast<double>(gram[a * p + b]);
                G(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = static_cast<double>(gram[a * p + b]);
            }
        }
        s.beta0 = G.colPivHouseholderQr().solve(r);
    }
    const Eigen::VectorXd yw = p > 0 ? Eigen::VectorXd(y - dm.X * s.beta0) : y;

    std::vector<Accum> xtx(p * p, 0), xty(p, 0), ztx(q * p, 0), zty(q, 0);
    Accum yty = 0;
    std::vector<double> xrow(p);
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double yi = yw[ii];
        for (std::size_t c = 0; c < p; ++c) xrow[c] = dm.X(ii, static_cast<Eigen::Index>(c));
        yty += static_cast<Accum>(yi * yi);
        for (std::size_t a = 0; a < p; ++a) {
            xty[a] += static_cast<Accum>(xrow[a] * yi);
            for (std::size_t b = a; b < p; ++b) xtx[a * p + b] += static_cast<Accum>(xrow[a] * xrow[b]);
        }
        for (std::size_t j = 0; j < J; ++j) {
            const std::size_t u = offsets[j] + static_cast<std::size_t>(dm.z_blocks[j].codes[i]);
            zty[u] += static_cast<Accum>(yi);
            for (std::size_t c = 0; c < p; ++c) ztx[u * p + c] += static_cast<Accum>(xrow[c]);
        }
    }
    s.XtX.resize(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    s.Xty.resize(static_cast<Eigen::Index>(p));
    for (std::size_t a = 0; a < p; ++a) {
        s.Xty[static_cast<Eigen::Index>(a)] = static_cast<double>(xty[a]);
        for (std::size_t b = a; b < p; ++b) {
            const double v = static_cast<double>(xtx[a * p + b]);
            s.XtX(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v;
            s.XtX(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = v;
        }
    }
    s.yty = static_cast<double>(yty);
    s.ZtX.resize(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(p));
    s.Zty.resize(static_cast<Eigen::Index>(q));
    for (std::size_t u = 0; u < q; ++u) {
        s.Zty[static_cast<Eigen::Index>(u)] = static_cast<double>(zty[u]);
        for (std::size_t c = 0; c < p; ++c) {
            s.ZtX(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(c)) = static_cast<double>(ztx[u * p + c]);
        }
    }

    if (q == 0) return;

    // Z'Z: level counts on the diagonal, cross-tabulations off it (both
    // triangles; exact integer counts).
    std::vector<std::int64_t> diag(q, 0);
    std::vector<Eigen::Triplet<double>> trips;
    for (std::size_t j = 0; j < J; ++j) {
        for (auto c : dm.z_blocks[j].codes) ++diag[offsets[j] + static_cast<std::size_t>(c)];
    }
    for (std::size_t u = 0; u < q; ++u) {
        trips.emplace_back(static_cast<int>(u), static_cast<int>(u), static_cast<double>(diag[u]));
    }
    for (std::size_t a = 0; a < J; ++a) {
        for (std::size_t b = a + 1; b < J; ++b) {
            const auto& ca = dm.z_blocks[a].codes;
            const auto& cb = dm.z_blocks[b].codes;
            const std::size_t mb = dm.z_blocks[b].n_levels();
            const std::size_t cells = dm.z_blocks[a].n_levels() * mb;
            auto emit = [&](std::uint64_t key, std::int64_t count) {
                const auto r = static_cast<int>(offsets[a] + key / mb);
                const auto c = static_cast<int>(offsets[b] + key % mb);
                trips.emplace_back(r, c, static_cast<double>(count));
                trips.emplace_back(c, r, static_cast<double>(count));
            };
            if (cells <= (std::size_t{1} << 24)) {
                std::vector<std::int64_t> table(cells, 0);
                for (std::size_t i = 0; i < n; ++i) {
                    ++table[static_cast<std::size_t>(ca[i]) * mb + static_cast<std::size_t>(cb[i])];
                }
                for (std::size_t k = 0; k < cells; ++k) {
                    if (table[k]) emit(k, table[k]);
                }
            } else {
                std::unordered_map<std::uint64_t, std::int64_t> table;
                for (std::size_t i = 0; i < n; ++i) {
                    ++table[static_cast<std::uint64_t>(ca[i]) * mb + static_cast<std::uint64_t>(cb[i])];
                }
                std::vector<std::pair<std::uint64_t, std::int64_t>> sorted(table.begin(), table.end());
                std::sort(sorted.begin(), sorted.end());
                for (const auto& [k, v] : sorted) emit(k, v);
            }
        }
    }

    s.sparse = solver == SolverKind::Sparse || (solver == SolverKind::Auto && q > kDenseLevelLimit);
    if (!s.sparse) {
        s.ZtZ_dense = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q));
        for (const auto& t : trips) s.ZtZ_dense(t.row(), t.col()) += t.value();
        return;
    }
    s.A.resize(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q));
    s.A.setFromTriplets(trips.begin(), trips.end());
    s.A.makeCompressed();
    for (int k = 0; k < s.A.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(s.A, k); it; ++it) {
            s.nz_row.push_back(static_cast<int>(it.row()));
            s.nz_col.push_back(static_cast<int>(it.col()));
            s.base_values.push_back(it.value());
        }
    }
    s.ldlt.analyzePattern(s.A);
}

ProfiledDeviance::~ProfiledDeviance() = default;
ProfiledDeviance::ProfiledDeviance(ProfiledDeviance&&) noexcept = default;
ProfiledDeviance& ProfiledDeviance::operator=(ProfiledDeviance&&) noexcept = default;

std::size_t ProfiledDeviance::n_obs() const noexcept { return impl_->n; }
std::size_t ProfiledDeviance::n_fixed() const noexcept { return impl_->p; }
std::size_t ProfiledDeviance::n_random_factors() const noexcept { return impl_->n_blocks; }
std::size_t ProfiledDeviance::n_random_levels() const noexcept { return impl_->q; }
bool ProfiledDeviance::uses_sparse_solver() const noexcept { return impl_->sparse; }

DevianceTerms ProfiledDeviance::evaluate(const VarianceParams& params, Criterion criterion) const {
    const auto& s = *impl_;
    if (params.gamma.size() != s.n_blocks) {
        throw SpecError("expected " + std::to_string(s.n_blocks) + " variance ratios, got " +
                        std::to_string(params.gamma.size()));
    }
    for (double g : params.gamma) {
        if (!std::isfinite(g) || g < 0.0) throw SpecError("variance ratios must be finite and non-negative");
    }
    const auto n = static_cast<double>(s.n);
    const auto p = static_cast<Eigen::Index>(s.p);
    const auto q = static_cast<Eigen::Index>(s.q);
    if (criterion == Criterion::REML && s.n <= s.p) {
        throw NumericalError("REML needs more observations than fixed-effect columns");
    }

    Eigen::MatrixXd XtVX = s.XtX;
    Eigen::VectorXd Xty = s.Xty;
    double yty = s.yty;
    double log_det_l = 0.0;

    if (q > 0) {
        Eigen::VectorXd lam(q);
        for (Eigen::Index u = 0; u < q; ++u) lam[u] = std::sqrt(params.gamma[s.block_of[static_cast<std::size_t>(u)]]);

        Eigen::MatrixXd B(q, p + 1);
        B.leftCols(p) = lam.asDiagonal() * s.ZtX;
        B.col(p) = lam.cwiseProduct(s.Zty);

        Eigen::MatrixXd W;
        if (s.sparse) {
            auto* values = s.A.valuePtr();
            for (std::size_t k = 0; k < s.base_values.size(); ++k) {
                const int r = s.nz_row[k];
                const int c = s.nz_col[k];
                values[k] = lam[r] * lam[c] * s.base_values[k] + (r == c ? 1.0 : 0.0);
            }
            s.ldlt.factorize(s.A);
            if (s.ldlt.info() != Eigen::Success) {
                throw NumericalError("sparse factorization of the random-effects system failed");
            }
            const auto& D = s.ldlt.vectorD();
            for (Eigen::Index u = 0; u < q; ++u) log_det_l += std::log(D[u]);
            W = s.ldlt.solve(B);
        } else {
            Eigen::MatrixXd A = lam.asDiagonal() * s.ZtZ_dense * lam.asDiagonal();
            A.diagonal().array() += 1.0;
            Eigen::LLT<Eigen::MatrixXd> llt(A);
            if (llt.info() != Eigen::Success) {
                throw NumericalError("dense factorization of the random-effects system failed");
            }
            log_det_l = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
            W = llt.solve(B);
        }
        const Eigen::MatrixXd M = B.transpose() * W;
        XtVX -= M.topLeftCorner(p, p);
        Xty -= M.col(p).head(p);
        yty -= M(p, p);
    }

    DevianceTerms out;
    out.log_det_l = log_det_l;
    out.beta = Eigen::VectorXd::Zero(p);
    double fitted = 0.0;
    if (p > 0) {
        XtVX = 0.5 * (XtVX + XtVX.transpose());
        Eigen::LLT<Eigen::MatrixXd> rx(XtVX);
        if (rx.info() != Eigen::Success) {
            const double rcond = XtVX.ldlt().rcond();
            throw NumericalError("fixed-effects system is singular (reciprocal condition estimate " +
                                 std::to_string(rcond) + ")");
        }
        const Eigen::VectorXd delta = rx.solve(Xty);
        out.beta = delta + s.beta0;
        out.log_det_rx = 2.0 * rx.matrixLLT().diagonal().array().log().sum();
        fitted = Xty.dot(delta);
    }
    out.pwrss = std::max(yty - fitted, std::numeric_limits<double>::min());

    const double two_pi = 2.0 * std::numbers::pi;
    if (criterion == Criterion::ML) {
        out.sigma2_res = out.pwrss / n;
        out.deviance = log_det_l + n * (1.0 + std::log(two_pi * out.sigma2_res));
    } else {
        const double dof = n - static_cast<double>(p);
        out.sigma2_res = out.pwrss / dof;
        out.deviance = log_det_l + out.log_det_rx + dof * (1.0 + std::log(two_pi * out.sigma2_res));
    }
    return out;
}

double profiled_deviance(const DesignMatrices& dm, const Eigen::VectorXd& y, const VarianceParams& gamma,
                         Criterion criterion, SolverKind solver) {
    return ProfiledDeviance(dm, y, solver)(gamma, criterion);
}

FittedModel fit(const DesignMatrices& dm, const Eigen::VectorXd& y, const FitOptions& options) {
    const std::size_t n = dm.n_obs();
    const std::size_t k = dm.n_fixed();
    const std::size_t J = dm.n_random();
    if (n <= k + J) {
        throw SpecError("need more observations (" + std::to_string(n) +
                        ") than fixed-effect columns plus random factors (" + std::to_string(k + J) + ")");
    }
    ProfiledDeviance pd(dm, y, options.solver);

    // A vanishing residual sends gamma to infinity; the cap keeps the fixed-effects system well posed.
    static constexpr double kMaxGamma = 1e8;
    auto to_gamma = [](const std::vector<double>& delta) {
        VarianceParams g;
        g.gamma.reserve(delta.size());
        for (double d : delta) g.gamma.push_back(std::min(std::expm1(std::max(d, 0.0)), kMaxGamma));
        return g;
    };
    std::function<double(const std::vector<double>&)> objective = [&](const std::vector<double>& delta) {
        return pd(to_gamma(delta), options.criterion);
    };

    FittedModel fm;
    if (J == 0) {
        fm.converged = true;
        fm.iterations = 0;
    } else {
        NelderMeadOptions nm;
        nm.max_evaluations = options.max_iter;
        nm.ftol_rel = options.ftol_rel;
        nm.xtol_abs = options.xtol;
        auto res = minimize_bounded_nelder_mead(objective, std::vector<double>(J, std::log(2.0)),
                                                std::vector<double>(J, 0.0), nm);
        fm.gamma = to_gamma(res.x).gamma;
        fm.converged = res.converged;
        fm.iterations = res.evaluations;
    }

    const DevianceTerms t = pd.evaluate(VarianceParams{fm.gamma}, options.criterion);
    fm.column_names = dm.column_names;
    fm.columns = dm.columns;
    fm.dropped_columns = dm.dropped_columns;
    fm.beta_hat = t.beta;
    for (std::size_t j = 0; j < J; ++j) fm.sigma2.push_back({dm.z_blocks[j].name, fm.gamma[j] * t.sigma2_res});
    fm.sigma2.push_back({"residual", t.sigma2_res});
    fm.log_likelihood = -0.5 * t.deviance;
    fm.deviance = -2.0 * fm.log_likelihood;
    fm.criterion = options.criterion;
    fm.n_obs = n;
    fm.n_params = k + J + 1;
    return fm;
}

Eigen::VectorXd response_vector(const EvalDataset& ds) {
    return Eigen::Map<const Eigen::VectorXd>(ds.response().data(), static_cast<Eigen::Index>(ds.size()));
}

Eigen::VectorXd predict_fixed(const FittedModel& fm, const DesignMatrices& dm_new) {
    if (dm_new.column_names != fm.column_names) {
        throw SpecError("prediction design columns do not match the fitted model");
    }
    return dm_new.X * fm.beta_hat;
}

}  // namespace lmerepro
