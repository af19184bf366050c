#include "lmerepro/dataset.hpp"

#include "lmerepro/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace lmerepro {

namespace {

template <typename Column>
const Column* find_named(const std::vector<Column>& columns, const std::string& name) {
    auto it = std::find_if(columns.begin(), columns.end(), [&](const Column& c) { return c.name == name; });
    return it == columns.end() ? nullptr : &*it;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Splits one CSV record starting at `pos`. Handles RFC 4180 quoting.
// Returns false at end of input.
bool next_record(const std::string& text, std::size_t& pos, char delim, std::vector<std::string>& fields) {
    fields.clear();
    if (pos >= text.size()) return false;
    std::string field;
    bool quoted = false;
    while (pos < text.size()) {
        char c = text[pos];
        if (quoted) {
            if (c == '"') {
                if (pos + 1 < text.size() && text[pos + 1] == '"') {
                    field.push_back('"');
                    pos += 2;
                    continue;
                }
                quoted = false;
                ++pos;
                continue;
            }
            field.push_back(c);
            ++pos;
            continue;
        }
        if (c == '"' && field.empty()) {
            quoted = true;
            ++pos;
        } else if (c == delim) {
            fields.push_back(std::move(field));
            field.clear();
            ++pos;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && pos + 1 < text.size() && text[pos + 1] == '\n') ++pos;
            ++pos;
            break;
        } else {
            field.push_back(c);
            ++pos;
        }
    }
    fields.push_back(std::move(field));
    return true;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

double parse_number(const std::string& cell, const std::string& column, std::size_t line) {
    std::string_view v = trim(cell);
    if (v.empty()) {
        throw ParseError("line " + std::to_string(line) + ": missing value in column '" + column + "'", line);
    }
    if (v.front() == '+') v.remove_prefix(1);
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ParseError("line " + std::to_string(line) + ": non-numeric value '" + cell + "' in column '" + column + "'",
                         line);
    }
    if (!std::isfinite(out)) {
        throw ParseError("line " + std::to_string(line) + ": non-finite value in column '" + column + "'", line);
    }
    return out;
}

std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

std::string quote_if_needed(const std::string& s, char delim) {
    if (s.find_first_of(std::string{'"', '\n', '\r', delim}) == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void fnv_mix(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
}

}  // namespace

EvalDataset::EvalDataset(std::string response_name, std::vector<double> response, std::vector<Factor> factors,
                         std::vector<Covariate> covariates, std::string object_of_interest)
    : response_name_(std::move(response_name)),
      response_(std::move(response)),
      factors_(std::move(factors)),
      covariates_(std::move(covariates)),
      object_of_interest_(std::move(object_of_interest)) {
    const std::size_t n = response_.size();
    if (n == 0) throw EmptyDataError("dataset has no rows");
    if (factors_.empty()) throw SchemaError("dataset needs at least one factor column");
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(response_[i])) {
            throw DataError("row " + std::to_string(i + 1) + ": response is not finite");
        }
    }
    std::set<std::string> names{response_name_};
    for (const auto& f : factors_) {
        if (!names.insert(f.name).second) throw SchemaError("duplicate column '" + f.name + "'");
        if (f.codes.size() != n) throw SchemaError("factor '" + f.name + "' has wrong length");
        if (f.levels.empty()) throw SchemaError("factor '" + f.name + "' has no levels");
        for (auto c : f.codes) {
            if (c < 0 || static_cast<std::size_t>(c) >= f.levels.size()) {
                throw SchemaError("factor '" + f.name + "' has an out-of-range level code");
            }
        }
    }
    for (const auto& c : covariates_) {
        if (!names.insert(c.name).second) throw SchemaError("duplicate column '" + c.name + "'");
        if (c.values.size() != n) throw SchemaError("covariate '" + c.name + "' has wrong length");
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(c.values[i])) {
                throw DataError("row " + std::to_string(i + 1) + ": covariate '" + c.name + "' is not finite");
            }
        }
    }
    if (object_of_interest_.empty()) object_of_interest_ = factors_.front().name;
    if (!has_factor(object_of_interest_)) {
        throw SchemaError("object-of-interest '" + object_of_interest_ + "' is not a factor column");
    }
}

bool EvalDataset::has_factor(const std::string& name) const { return find_named(factors_, name) != nullptr; }

bool EvalDataset::has_covariate(const std::string& name) const { return find_named(covariates_, name) != nullptr; }

const Factor& EvalDataset::factor(const std::string& name) const {
    if (const auto* f = find_named(factors_, name)) return *f;
    throw SchemaError("unknown factor '" + name + "'");
}

const Covariate& EvalDataset::covariate(const std::string& name) const {
    if (const auto* c = find_named(covariates_, name)) return *c;
    throw SchemaError("unknown covariate '" + name + "'");
}

std::map<std::string, std::vector<std::string>> EvalDataset::factor_levels() const {
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& f : factors_) out[f.name] = f.levels;
    return out;
}

std::vector<std::string> EvalDataset::covariate_names() const {
    std::vector<std::string> out;
    for (const auto& c : covariates_) out.push_back(c.name);
    return out;
}

Observation EvalDataset::observation(std::size_t row) const {
    Observation obs;
    obs.response = response_.at(row);
    for (const auto& f : factors_) obs.factor_values[f.name] = f.label(row);
    for (const auto& c : covariates_) obs.covariate_values[c.name] = c.values[row];
    return obs;
}

ColumnSchema EvalDataset::schema() const {
    ColumnSchema s;
    s.response = response_name_;
    for (const auto& f : factors_) s.factors.push_back(f.name);
    for (const auto& c : covariates_) s.covariates.push_back(c.name);
    s.object_of_interest = object_of_interest_;
    return s;
}

EvalDataset EvalDataset::select_rows(const std::vector<std::size_t>& rows) const {
    std::vector<double> y;
    y.reserve(rows.size());
    for (auto r : rows) y.push_back(response_.at(r));

    std::vector<Factor> factors;
    for (const auto& f : factors_) {
        // keep the original level order; drop levels absent from the subset
        std::vector<char> used(f.levels.size(), 0);
        for (auto r : rows) used[static_cast<std::size_t>(f.codes[r])] = 1;
        std::vector<std::int32_t> remap(f.levels.size(), -1);
        Factor g{f.name, {}, {}};
        for (std::size_t l = 0; l < f.levels.size(); ++l) {
            if (used[l]) {
                remap[l] = static_cast<std::int32_t>(g.levels.size());
                g.levels.push_back(f.levels[l]);
            }
        }
        g.codes.reserve(rows.size());
        for (auto r : rows) g.codes.push_back(remap[static_cast<std::size_t>(f.codes[r])]);
        factors.push_back(std::move(g));
    }

    std::vector<Covariate> covariates;
    for (const auto& c : covariates_) {
        Covariate d{c.name, {}};
        d.values.reserve(rows.size());
        for (auto r : rows) d.values.push_back(c.values[r]);
        covariates.push_back(std::move(d));
    }
    return EvalDataset(response_name_, std::move(y), std::move(factors), std::move(covariates), object_of_interest_);
}

EvalDataset EvalDataset::with_response(std::vector<double> response) const {
    if (response.size() != size()) throw DataError("replacement response has wrong length");
    return EvalDataset(response_name_, std::move(response), factors_, covariates_, object_of_interest_);
}

EvalDataset EvalDataset::with_covariate(Covariate covariate) const {
    auto covs = covariates_;
    auto it = std::find_if(covs.begin(), covs.end(), [&](const Covariate& c) { return c.name == covariate.name; });
    if (it != covs.end()) {
        *it = std::move(covariate);
    } else {
        covs.push_back(std::move(covariate));
    }
    return EvalDataset(response_name_, response_, factors_, std::move(covs), object_of_interest_);
}

std::uint64_t EvalDataset::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix_str = [&](const std::string& s) {
        fnv_mix(h, s.data(), s.size());
        const char sep = '\x1f';
        fnv_mix(h, &sep, 1);
    };
    mix_str(response_name_);
    for (double v : response_) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        fnv_mix(h, &bits, sizeof bits);
    }
    for (const auto& f : factors_) {
        mix_str(f.name);
        for (std::size_t i = 0; i < f.codes.size(); ++i) mix_str(f.label(i));
    }
    for (const auto& c : covariates_) {
        mix_str(c.name);
        for (double v : c.values) {
            auto bits = std::bit_cast<std::uint64_t>(v);
            fnv_mix(h, &bits, sizeof bits);
        }
    }
    return h;
}

bool operator==(const EvalDataset& a, const EvalDataset& b) {
    if (a.response_name_ != b.response_name_ || a.response_ != b.response_ ||
        a.object_of_interest_ != b.object_of_interest_ || a.factors_.size() != b.factors_.size() ||
        a.covariates_.size() != b.covariates_.size()) {
        return false;
    }
    for (std::size_t j = 0; j < a.factors_.size(); ++j) {
        const auto& fa = a.factors_[j];
        const auto& fb = b.factors_[j];
        if (fa.name != fb.name || fa.levels != fb.levels || fa.codes != fb.codes) return false;
    }
    for (std::size_t j = 0; j < a.covariates_.size(); ++j) {
        if (a.covariates_[j].name != b.covariates_[j].name || a.covariates_[j].values != b.covariates_[j].values) {
            return false;
        }
    }
    return true;
}

EvalDataset parse_csv(const std::string& text, const ColumnSchema& schema, const CsvOptions& options) {
    std::size_t pos = 0;
    std::vector<std::string> header;
    // skip a UTF-8 byte-order mark
    if (text.size() >= 3 && std::memcmp(text.data(), "\xEF\xBB\xBF", 3) == 0) pos = 3;
    if (!next_record(text, pos, options.delimiter, header) || (header.size() == 1 && trim(header[0]).empty())) {
        throw EmptyDataError("input is empty");
    }
    for (auto& h : header) h = std::string(trim(h));

    auto column_index = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw SchemaError("missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    if (schema.response.empty()) throw SchemaError("schema names no response column");
    if (schema.factors.empty()) throw SchemaError("schema names no factor columns");

    const std::size_t response_col = column_index(schema.response);
    std::vector<std::size_t> factor_cols;
    for (const auto& f : schema.factors) factor_cols.push_back(column_index(f));
    std::vector<std::size_t> covariate_cols;
    for (const auto& c : schema.covariates) covariate_cols.push_back(column_index(c));

    std::vector<double> y;
    std::vector<Factor> factors;
    std::vector<std::unordered_map<std::string, std::int32_t>> lookup(schema.factors.size());
    for (const auto& f : schema.factors) factors.push_back(Factor{f, {}, {}});
    std::vector<Covariate> covariates;
    for (const auto& c : schema.covariates) covariates.push_back(Covariate{c, {}});

    std::vector<std::string> fields;
    std::size_t line = 1;
    while (next_record(text, pos, options.delimiter, fields)) {
        ++line;
        if (fields.size() == 1 && trim(fields[0]).empty()) continue;  // blank line
        if (fields.size() != header.size()) {
            throw ParseError("line " + std::to_string(line) + ": expected " + std::to_string(header.size()) +
                                 " fields, found " + std::to_string(fields.size()),
                             line);
        }
        y.push_back(parse_number(fields[response_col], schema.response, line));
        for (std::size_t j = 0; j < factor_cols.size(); ++j) {
            const std::string& label = fields[factor_cols[j]];
            if (label.empty()) {
                throw ParseError("line " + std::to_string(line) + ": missing level in factor '" + factors[j].name + "'",
                                 line);
            }
            auto [it, inserted] = lookup[j].try_emplace(label, static_cast<std::int32_t>(factors[j].levels.size()));
            if (inserted) factors[j].levels.push_back(label);
            factors[j].codes.push_back(it->second);
        }
        for (std::size_t j = 0; j < covariate_cols.size(); ++j) {
            covariates[j].values.push_back(parse_number(fields[covariate_cols[j]], covariates[j].name, line));
        }
    }
    if (y.empty()) throw EmptyDataError("input has a header but no data rows");
    return EvalDataset(schema.response, std::move(y), std::move(factors), std::move(covariates),
                       schema.object_of_interest);
}

std::vector<std::vector<std::string>> parse_csv_records(const std::string& text, const CsvOptions& options) {
    std::size_t pos = 0;
    if (text.size() >= 3 && std::memcmp(text.data(), "\xEF\xBB\xBF", 3) == 0) pos = 3;
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> fields;
    while (next_record(text, pos, options.delimiter, fields)) {
        if (fields.size() == 1 && trim(fields[0]).empty()) continue;
        records.push_back(fields);
    }
    return records;
}

ColumnSchema infer_schema(const std::string& text, const std::string& response,
                          const std::vector<std::string>& factors, const CsvOptions& options) {
    const auto records = parse_csv_records(text, options);
    if (records.empty()) throw EmptyDataError("input is empty");
    std::vector<std::string> header;
    for (const auto& h : records.front()) header.emplace_back(trim(h));
    if (std::find(header.begin(), header.end(), response) == header.end()) {
        throw SchemaError("missing response column '" + response + "'");
    }
    for (const auto& f : factors) {
        if (std::find(header.begin(), header.end(), f) == header.end()) throw SchemaError("missing column '" + f + "'");
    }
    ColumnSchema schema;
    schema.response = response;
    for (std::size_t j = 0; j < header.size(); ++j) {
        const auto& name = header[j];
        if (name == response) continue;
        if (std::find(factors.begin(), factors.end(), name) != factors.end()) {
            schema.factors.push_back(name);
            continue;
        }
        bool numeric = true;
        for (std::size_t r = 1; r < records.size() && numeric; ++r) {
            if (j >= records[r].size()) break;
            const std::string_view v = trim(records[r][j]);
            double out = 0.0;
            auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
            numeric = !v.empty() && ec == std::errc() && ptr == v.data() + v.size() && std::isfinite(out);
        }
        (numeric ? schema.covariates : schema.factors).push_back(name);
    }
    if (!schema.factors.empty()) schema.object_of_interest = schema.factors.front();
    return schema;
}

EvalDataset load_csv(const std::string& path, const ColumnSchema& schema, const CsvOptions& options) {
    if (!std::filesystem::exists(path)) throw DataError("file not found: '" + path + "'");
    return parse_csv(read_file(path), schema, options);
}

std::string to_csv(const EvalDataset& ds, const CsvOptions& options) {
    const char d = options.delimiter;
    std::string out;
    out.reserve(ds.size() * 32);
    out += quote_if_needed(ds.response_name(), d);
    for (const auto& f : ds.factors()) (out += d) += quote_if_needed(f.name, d);
    for (const auto& c : ds.covariates()) (out += d) += quote_if_needed(c.name, d);
    out += '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out += format_double(ds.response()[i]);
        for (const auto& f : ds.factors()) (out += d) += quote_if_needed(f.label(i), d);
        for (const auto& c : ds.covariates()) (out += d) += format_double(c.values[i]);
        out += '\n';
    }
    return out;
}

void write_csv(const EvalDataset& ds, const std::string& path, const CsvOptions& options) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << to_csv(ds, options);
}

ColumnSchema parse_schema_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(std::string("schema is not valid JSON: ") + e.what());
    }
    ColumnSchema s;
    try {
        s.response = j.at("response").get<std::string>();
        s.factors = j.at("factors").get<std::vector<std::string>>();
        s.covariates = j.value("covariates", std::vector<std::string>{});
        s.object_of_interest = j.value("object_of_interest", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed schema: ") + e.what());
    }
    return s;
}

ColumnSchema load_schema_json(const std::string& path) { return parse_schema_json(read_file(path)); }

bool CrossingReport::fully_crossed() const {
    return std::all_of(pairs.begin(), pairs.end(), [](const PairCoverage& p) { return p.fraction == 1.0; });
}

CrossingReport validate_crossing(const EvalDataset& ds, const std::vector<std::string>& factors) {
    std::vector<const Factor*> fs;
    for (const auto& name : factors) fs.push_back(&ds.factor(name));
    CrossingReport report;
    for (std::size_t a = 0; a < fs.size(); ++a) {
        for (std::size_t b = a + 1; b < fs.size(); ++b) {
            const std::size_t la = fs[a]->levels.size();
            const std::size_t lb = fs[b]->levels.size();
            std::vector<char> seen(la * lb, 0);
            for (std::size_t i = 0; i < ds.size(); ++i) {
                seen[static_cast<std::size_t>(fs[a]->codes[i]) * lb + static_cast<std::size_t>(fs[b]->codes[i])] = 1;
            }
            PairCoverage p;
            p.first = fs[a]->name;
            p.second = fs[b]->name;
            p.observed_cells = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), 1));
            p.possible_cells = la * lb;
            p.fraction = static_cast<double>(p.observed_cells) / static_cast<double>(p.possible_cells);
            report.pairs.push_back(std::move(p));
        }
    }
    return report;
}

}  // namespace lmerepro
