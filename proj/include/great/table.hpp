#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace great {

enum class FeatureKind { Categorical, Numeric };

std::string_view to_string(FeatureKind kind);

struct Feature {
    std::string name;
    FeatureKind kind = FeatureKind::Categorical;

    bool operator==(const Feature&) const = default;
};

/// Feature list plus the supports and ranges observed at fit time.
/// `support[j]` is sorted and unique for categorical features and empty for
/// numeric ones; `range[j]` is meaningful only for numeric features.
struct Schema {
    std::vector<Feature> features;
    std::vector<std::vector<std::string>> support;
    std::vector<std::pair<double, double>> range;

    std::size_t size() const { return features.size(); }
    std::optional<std::size_t> index_of(std::string_view name) const;
    /// Like index_of but throws UnknownFeature.
    std::size_t require(std::string_view name) const;
    bool is_numeric(std::size_t j) const { return features[j].kind == FeatureKind::Numeric; }
    bool in_support(std::size_t j, std::string_view value) const;
    std::vector<std::string> names() const;

    /// Same names and kinds in the same order (supports may differ).
    bool same_layout(const Schema& other) const;

    bool operator==(const Schema&) const = default;
};

/// Raw cells, one per schema feature. The empty string marks a missing cell.
struct Row {
    std::vector<std::string> cells;

    bool operator==(const Row&) const = default;
};

inline bool is_missing(std::string_view cell) { return cell.empty(); }

/// Decimal grammar: [+-] then digits with an optional '.', at least one
/// digit overall, then an optional (e|E)[+-]digits exponent; finite only.
std::optional<double> parse_decimal(std::string_view text);

/// Rejects feature names / values that would make the clause text ambiguous.
void check_name(std::string_view name);
void check_value(std::string_view feature, std::string_view value);

class Table {
public:
    Table() = default;
    /// Validates every row against `schema` (arity, numeric parseability).
    Table(Schema schema, std::vector<Row> rows, std::optional<std::string> target = std::nullopt);

    /// Infers kinds and statistics from raw string columns.
    static Table infer(std::vector<std::string> names, std::vector<Row> rows,
                       std::optional<std::string> target = std::nullopt);

    const Schema& schema() const { return schema_; }
    const std::vector<Row>& rows() const { return rows_; }
    const Row& row(std::size_t i) const { return rows_[i]; }
    std::size_t num_rows() const { return rows_.size(); }
    std::size_t num_features() const { return schema_.size(); }
    const std::optional<std::string>& target() const { return target_; }

    double numeric(std::size_t i, std::size_t j) const;
    /// All observed values of column j.
    std::vector<std::string> column(std::size_t j) const;
    bool has_missing() const;

    /// Same schema and target, different rows.
    Table with_rows(std::vector<Row> rows) const;
    Table with_target(std::optional<std::string> target) const;
    /// Re-fits supports/ranges from this table's own rows.
    Table refit() const;

private:
    Schema schema_;
    std::vector<Row> rows_;
    std::optional<std::string> target_;
};

/// Exact distinct-value supports and min/max ranges of the observed cells.
Schema fit_schema_stats(const Table& table);

struct CsvOptions {
    char delimiter = ',';
    bool header = true;
};

/// RFC 4180 reader. Column kinds are inferred: numeric iff every non-missing
/// cell parses as a finite decimal.
Table load_csv(const std::filesystem::path& path, const CsvOptions& options = {});
Table parse_csv(std::string_view text, const CsvOptions& options = {});
/// Reads rows against a known schema (no inference, supports kept). The
/// header must list the schema's features in order. Throws SchemaMismatch.
Table load_csv(const std::filesystem::path& path, const Schema& schema, std::optional<std::string> target = std::nullopt,
               const CsvOptions& options = {});
Table parse_csv(std::string_view text, const Schema& schema, std::optional<std::string> target = std::nullopt,
                const CsvOptions& options = {});

void write_csv(const Table& table, const std::filesystem::path& path, char delimiter = ',');
std::string to_csv(const Table& table, char delimiter = ',');

/// Deterministic partition; train receives ceil((1 - test_fraction) * n) rows.
/// Both halves keep the original relative row order.
std::pair<Table, Table> split(const Table& table, double test_fraction, std::uint64_t seed);

}  // namespace great
