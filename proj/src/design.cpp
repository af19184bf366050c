#include "lmerepro/design.hpp"

#include "lmerepro/error.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>

namespace lmerepro {

std::string FixedTerm::label() const {
    std::string out;
    for (std::size_t i = 0; i < variables.size(); ++i) {
        if (i) out += ':';
        out += variables[i];
    }
    return out;
}

std::string FixedTerm::canonical() const {
    auto vars = variables;
    std::sort(vars.begin(), vars.end());
    return FixedTerm{vars}.label();
}

// ---------------------------------------------------------------------------
// Formula parsing

namespace {

struct Token {
    enum class Kind { Ident, Op, End } kind;
    std::string text;
};

bool is_op_char(char c) { return c == '+' || c == '~' || c == ':' || c == '*' || c == '(' || c == ')' || c == '|'; }

std::vector<Token> tokenize(const std::string& s) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        char c = s[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (is_op_char(c) || c == '-') {
            out.push_back({Token::Kind::Op, std::string(1, c)});
            ++i;
        } else {
            std::size_t j = i;
            // '-' may appear inside a name (e.g. rouge-2) but never starts one
            while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j])) && !is_op_char(s[j])) ++j;
            out.push_back({Token::Kind::Ident, s.substr(i, j - i)});
            i = j;
        }
    }
    out.push_back({Token::Kind::End, ""});
    return out;
}

class FormulaParser {
public:
    explicit FormulaParser(const std::string& formula) : source_(formula), tokens_(tokenize(formula)) {}

    ModelSpec parse() {
        ModelSpec spec;
        spec.response = expect_ident("response name");
        expect_op("~");
        bool negate = accept_op("-");
        parse_term(spec, negate);
        while (true) {
            if (accept_op("+")) {
                parse_term(spec, false);
            } else if (accept_op("-")) {
                parse_term(spec, true);
            } else {
                break;
            }
        }
        if (peek().kind != Token::Kind::End) fail("unexpected '" + peek().text + "'");
        return spec;
    }

private:
    const Token& peek() const { return tokens_[pos_]; }

    [[noreturn]] void fail(const std::string& why) const {
        throw SpecError("cannot parse formula '" + source_ + "': " + why);
    }

    bool accept_op(const char* op) {
        if (peek().kind == Token::Kind::Op && peek().text == op) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect_op(const char* op) {
        if (!accept_op(op)) fail(std::string("expected '") + op + "'");
    }

    std::string expect_ident(const char* what) {
        if (peek().kind != Token::Kind::Ident) fail(std::string("expected ") + what);
        return tokens_[pos_++].text;
    }

    static void add_term(ModelSpec& spec, FixedTerm term) {
        if (!spec.has_term(term)) spec.fixed_terms.push_back(std::move(term));
    }

    void parse_term(ModelSpec& spec, bool negate) {
        if (accept_op("(")) {
            if (negate) fail("random terms cannot be removed");
            std::string one = expect_ident("'1' in random term");
            if (one != "1") fail("only random intercepts '(1|factor)' are supported");
            expect_op("|");
            std::string factor = expect_ident("grouping factor");
            expect_op(")");
            if (std::find(spec.random_factors.begin(), spec.random_factors.end(), factor) ==
                spec.random_factors.end()) {
                spec.random_factors.push_back(factor);
            }
            return;
        }
        // product := chain ('*' chain)*, chain := ident (':' ident)*
        std::vector<std::vector<std::string>> chains;
        do {
            std::vector<std::string> chain{expect_ident("term")};
            while (accept_op(":")) chain.push_back(expect_ident("interaction variable"));
            chains.push_back(std::move(chain));
        } while (accept_op("*"));

        if (chains.size() == 1 && chains[0].size() == 1 && (chains[0][0] == "1" || chains[0][0] == "0")) {
            spec.intercept = negate ? chains[0][0] == "0" : chains[0][0] == "1";
            return;
        }
        if (negate) fail("only the intercept can be removed with '-'");
        for (const auto& chain : chains) {
            for (const auto& v : chain) {
                if (v == "1" || v == "0") fail("'" + v + "' cannot appear inside an interaction");
            }
        }
        // all non-empty subsets of the '*' operands, by increasing size
        const std::size_t m = chains.size();
        for (std::size_t size = 1; size <= m; ++size) {
            for (std::size_t mask = 1; mask < (std::size_t{1} << m); ++mask) {
                if (static_cast<std::size_t>(std::popcount(mask)) != size) continue;
                FixedTerm term;
                for (std::size_t b = 0; b < m; ++b) {
                    if (mask & (std::size_t{1} << b)) {
                        term.variables.insert(term.variables.end(), chains[b].begin(), chains[b].end());
                    }
                }
                add_term(spec, std::move(term));
            }
        }
    }

    std::string source_;
    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
};

}  // namespace

ModelSpec ModelSpec::parse(const std::string& formula) { return FormulaParser(formula).parse(); }

std::string ModelSpec::to_string() const {
    std::string out = response + " ~ " + (intercept ? "1" : "0");
    for (const auto& t : fixed_terms) out += " + " + t.label();
    for (const auto& r : random_factors) out += " + (1|" + r + ")";
    return out;
}

bool ModelSpec::has_term(const FixedTerm& term) const {
    const auto key = term.canonical();
    return std::any_of(fixed_terms.begin(), fixed_terms.end(),
                       [&](const FixedTerm& t) { return t.canonical() == key; });
}

void ModelSpec::validate(const EvalDataset& ds) const {
    if (!response.empty() && response != ds.response_name()) {
        throw SpecError("formula response '" + response + "' does not match data response column '" +
                        ds.response_name() + "'");
    }
    std::set<std::string> fixed_vars;
    for (const auto& t : fixed_terms) {
        if (t.variables.empty()) throw SpecError("empty fixed-effect term");
        std::set<std::string> seen;
        for (const auto& v : t.variables) {
            if (!ds.has_factor(v) && !ds.has_covariate(v)) {
                throw SpecError("term '" + t.label() + "' references unknown column '" + v + "'");
            }
            if (!seen.insert(v).second) throw SpecError("term '" + t.label() + "' repeats '" + v + "'");
            fixed_vars.insert(v);
        }
    }
    std::set<std::string> random_seen;
    for (const auto& r : random_factors) {
        if (!ds.has_factor(r)) {
            throw SpecError("random intercept '(1|" + r + ")' needs a factor column; '" + r + "' is not one");
        }
        if (fixed_vars.count(r)) throw SpecError("factor '" + r + "' cannot be both fixed and random");
        if (!random_seen.insert(r).second) throw SpecError("random factor '" + r + "' listed twice");
    }
}

// ---------------------------------------------------------------------------
// Design matrices

Eigen::SparseMatrix<double> RandomBlock::to_sparse() const {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) {
        trips.emplace_back(static_cast<int>(i), codes[i], 1.0);
    }
    Eigen::SparseMatrix<double> Z(static_cast<Eigen::Index>(codes.size()), static_cast<Eigen::Index>(levels.size()));
    Z.setFromTriplets(trips.begin(), trips.end());
    return Z;
}

namespace {

std::vector<ColumnDef> expand_term(const EvalDataset& ds, const FixedTerm& term) {
    std::vector<ColumnDef> cols{ColumnDef{"", {}}};
    for (const auto& v : term.variables) {
        std::vector<ColumnDef> next;
        if (ds.has_factor(v)) {
            const auto& levels = ds.factor(v).levels;
            for (const auto& c : cols) {
                // treatment coding: first-appearing level is the reference
                for (std::size_t l = 1; l < levels.size(); ++l) {
                    ColumnDef d = c;
                    d.atoms.push_back({ColumnAtom::Kind::FactorLevel, v, levels[l]});
                    next.push_back(std::move(d));
                }
            }
        } else {
            for (auto c : cols) {
                c.atoms.push_back({ColumnAtom::Kind::Covariate, v, {}});
                next.push_back(std::move(c));
            }
        }
        cols = std::move(next);
    }
    for (auto& c : cols) {
        for (std::size_t a = 0; a < c.atoms.size(); ++a) {
            if (a) c.name += ':';
            const auto& atom = c.atoms[a];
            c.name += atom.kind == ColumnAtom::Kind::FactorLevel ? atom.variable + "=" + atom.level : atom.variable;
        }
    }
    return cols;
}

void fill_column(const EvalDataset& ds, const ColumnDef& def, Eigen::Ref<Eigen::VectorXd> out) {
    out.setOnes();
    for (const auto& atom : def.atoms) {
        if (atom.kind == ColumnAtom::Kind::FactorLevel) {
            const auto& f = ds.factor(atom.variable);
            auto it = std::find(f.levels.begin(), f.levels.end(), atom.level);
            if (it == f.levels.end()) {
                out.setZero();
                continue;
            }
            const auto code = static_cast<std::int32_t>(it - f.levels.begin());
            for (std::size_t i = 0; i < ds.size(); ++i) {
                if (f.codes[i] != code) out[static_cast<Eigen::Index>(i)] = 0.0;
            }
        } else {
            const auto& values = ds.covariate(atom.variable).values;
            for (std::size_t i = 0; i < ds.size(); ++i) out[static_cast<Eigen::Index>(i)] *= values[i];
        }
    }
}

}  // namespace

Eigen::MatrixXd evaluate_columns(const EvalDataset& ds, const std::vector<ColumnDef>& columns) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j) fill_column(ds, columns[j], X.col(static_cast<Eigen::Index>(j)));
    return X;
}

double evaluate_column(const ColumnDef& column, const std::map<std::string, std::string>& levels,
                       const std::map<std::string, double>& covariates) {
    double value = 1.0;
    for (const auto& atom : column.atoms) {
        if (atom.kind == ColumnAtom::Kind::FactorLevel) {
            auto it = levels.find(atom.variable);
            if (it == levels.end() || it->second != atom.level) return 0.0;
        } else {
            auto it = covariates.find(atom.variable);
            value *= it == covariates.end() ? 0.0 : it->second;
        }
    }
    return value;
}

DesignMatrices design_for_columns(const EvalDataset& ds, const std::vector<ColumnDef>& columns) {
    DesignMatrices dm;
    dm.X = evaluate_columns(ds, columns);
    dm.columns = columns;
    for (const auto& c : columns) dm.column_names.push_back(c.name);
    return dm;
}

DesignMatrices build_design(const EvalDataset& ds, const ModelSpec& spec, const DesignOptions& options) {
    spec.validate(ds);

    std::vector<ColumnDef> candidates;
    if (spec.intercept) candidates.push_back(ColumnDef{"(Intercept)", {}});
    for (const auto& term : spec.fixed_terms) {
        auto cols = expand_term(ds, term);
        candidates.insert(candidates.end(), cols.begin(), cols.end());
    }

    const auto n = static_cast<Eigen::Index>(ds.size());
    Eigen::MatrixXd full = evaluate_columns(ds, candidates);

    // Sequential Gram-Schmidt (two passes) over the candidates in term
    // order; a column whose residual is negligible relative to its own norm
    // is aliased with earlier ones.
    DesignMatrices dm;
    std::vector<Eigen::Index> kept;
    Eigen::MatrixXd Q(n, 0);
    for (std::size_t j = 0; j < candidates.size(); ++j) {
        Eigen::VectorXd v = full.col(static_cast<Eigen::Index>(j));
        const double norm = v.norm();
        if (norm > 0.0) {
            for (int pass = 0; pass < 2; ++pass) {
                if (Q.cols() > 0) v -= Q * (Q.transpose() * v);
            }
        }
        const double resid = v.norm();
        if (norm == 0.0 || resid <= options.alias_tolerance * norm) {
            dm.dropped_columns.push_back(candidates[j].name);
            continue;
        }
        Q.conservativeResize(n, Q.cols() + 1);
        Q.col(Q.cols() - 1) = v / resid;
        kept.push_back(static_cast<Eigen::Index>(j));
    }

    dm.X.resize(n, static_cast<Eigen::Index>(kept.size()));
    for (std::size_t c = 0; c < kept.size(); ++c) {
        dm.X.col(static_cast<Eigen::Index>(c)) = full.col(kept[c]);
        dm.columns.push_back(candidates[static_cast<std::size_t>(kept[c])]);
        dm.column_names.push_back(dm.columns.back().name);
    }
    if (!dm.dropped_columns.empty()) {
        std::string msg = "dropped aliased fixed-effect columns:";
        for (const auto& d : dm.dropped_columns) msg += " " + d;
        dm.warnings.push_back(std::move(msg));
    }

    for (const auto& r : spec.random_factors) {
        const auto& f = ds.factor(r);
        dm.z_blocks.push_back(RandomBlock{f.name, f.levels, f.codes});
    }
    return dm;
}

// ---------------------------------------------------------------------------
// Covariate scaling

double ScalingRecord::to_original(const std::string& covariate, double standardized) const {
    auto it = scales.find(covariate);
    if (it == scales.end()) return standardized;
    return it->second.mean + it->second.sd * standardized;
}

double ScalingRecord::to_standardized(const std::string& covariate, double original) const {
    auto it = scales.find(covariate);
    if (it == scales.end()) return original;
    return (original - it->second.mean) / it->second.sd;
}

std::pair<EvalDataset, ScalingRecord> standardize_covariates(const EvalDataset& ds,
                                                             const std::vector<std::string>& names) {
    EvalDataset out = ds;
    ScalingRecord record;
    for (const auto& name : names) {
        const auto& values = ds.covariate(name).values;
        const double n = static_cast<double>(values.size());
        const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
        double ss = 0.0;
        for (double v : values) ss += (v - mean) * (v - mean);
        const double sd = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
        if (!(sd > 0.0) || sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
            throw DataError("covariate '" + name + "' has zero variance and cannot be standardized");
        }
        Covariate z{name, {}};
        z.values.reserve(values.size());
        for (double v : values) z.values.push_back((v - mean) / sd);
        out = out.with_covariate(std::move(z));
        record.scales[name] = Scaling{mean, sd};
    }
    return {std::move(out), std::move(record)};
}

}  // namespace lmerepro
