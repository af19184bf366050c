#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lmerepro {

/// A categorical column. Levels are kept in first-appearance order; each
/// row stores an index into `levels`.
struct Factor {
    std::string name;
    std::vector<std::string> levels;
    std::vector<std::int32_t> codes;

    const std::string& label(std::size_t row) const { return levels[static_cast<std::size_t>(codes[row])]; }
};

struct Covariate {
    std::string name;
    std::vector<double> values;
};

/// Row view of a dataset. Materialized on demand; the dataset itself is
/// stored column-wise.
struct Observation {
    double response = 0.0;
    std::map<std::string, std::string> factor_values;
    std::map<std::string, double> covariate_values;
};

/// Names the columns of a long-format score table.
struct ColumnSchema {
    std::string response;
    std::vector<std::string> factors;
    std::vector<std::string> covariates;
    std::string object_of_interest;  // defaults to the first factor when empty
};

/// Long-format evaluation scores: one row per (test item, configuration)
/// measurement. Immutable once built; all mutating helpers return copies.
class EvalDataset {
public:
    EvalDataset() = default;

    /// Validates and takes ownership of the columns. Throws DataError when
    /// an invariant is violated, e.g. ragged columns or non-finite values.
    EvalDataset(std::string response_name, std::vector<double> response, std::vector<Factor> factors,
                std::vector<Covariate> covariates, std::string object_of_interest);

    std::size_t size() const noexcept { return response_.size(); }
    const std::string& response_name() const noexcept { return response_name_; }
    const std::vector<double>& response() const noexcept { return response_; }
    const std::vector<Factor>& factors() const noexcept { return factors_; }
    const std::vector<Covariate>& covariates() const noexcept { return covariates_; }
    const std::string& object_of_interest() const noexcept { return object_of_interest_; }

    bool has_factor(const std::string& name) const;
    bool has_covariate(const std::string& name) const;
    const Factor& factor(const std::string& name) const;
    const Covariate& covariate(const std::string& name) const;

    std::map<std::string, std::vector<std::string>> factor_levels() const;
    std::vector<std::string> covariate_names() const;
    Observation observation(std::size_t row) const;
    ColumnSchema schema() const;

    /// Rows whose index is listed, in the given order. Factor levels keep
    /// their original order; levels absent from the subset are dropped.
    EvalDataset select_rows(const std::vector<std::size_t>& rows) const;
    EvalDataset with_response(std::vector<double> response) const;
    /// Adds or replaces a covariate column.
    EvalDataset with_covariate(Covariate covariate) const;

    /// 64-bit FNV-1a digest over the column contents, stable across runs.
    std::uint64_t fingerprint() const;

    friend bool operator==(const EvalDataset& a, const EvalDataset& b);

private:
    std::string response_name_;
    std::vector<double> response_;
    std::vector<Factor> factors_;
    std::vector<Covariate> covariates_;
    std::string object_of_interest_;
};

struct CsvOptions {
    char delimiter = ',';
};

EvalDataset load_csv(const std::string& path, const ColumnSchema& schema, const CsvOptions& options = {});
EvalDataset parse_csv(const std::string& text, const ColumnSchema& schema, const CsvOptions& options = {});

/// Raw records (header first) with quoting resolved, a leading BOM skipped
/// and blank lines dropped.
std::vector<std::vector<std::string>> parse_csv_records(const std::string& text, const CsvOptions& options = {});

/// Schema from the header and cell contents: `factors` are kept as factors,
/// other columns become covariates when every cell is numeric and factors
/// otherwise. Columns keep header order, and the object of interest is the
/// first factor column.
ColumnSchema infer_schema(const std::string& text, const std::string& response,
                          const std::vector<std::string>& factors = {}, const CsvOptions& options = {});

/// Writes the response first, then factors, then covariates. Numbers use
/// shortest round-trip formatting.
std::string to_csv(const EvalDataset& ds, const CsvOptions& options = {});
void write_csv(const EvalDataset& ds, const std::string& path, const CsvOptions& options = {});

/// Reads the sidecar schema file `{"response", "factors", "covariates",
/// "object_of_interest"}`.
ColumnSchema load_schema_json(const std::string& path);
ColumnSchema parse_schema_json(const std::string& text);

struct PairCoverage {
    std::string first;
    std::string second;
    std::size_t observed_cells = 0;
    std::size_t possible_cells = 0;
    double fraction = 0.0;
};

struct CrossingReport {
    std::vector<PairCoverage> pairs;
    bool fully_crossed() const;
};

/// For each pair of named factors, the fraction of level combinations that
/// occur at least once. Unbalanced data is reported, never rejected.
CrossingReport validate_crossing(const EvalDataset& ds, const std::vector<std::string>& factors);

}  // namespace lmerepro
