#include "great/table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "great/error.hpp"
#include "great/rng.hpp"

namespace great {

std::string_view to_string(FeatureKind kind) {
    return kind == FeatureKind::Numeric ? "numeric" : "categorical";
}

std::optional<std::size_t> Schema::index_of(std::string_view name) const {
    for (std::size_t j = 0; j < features.size(); ++j)
        if (features[j].name == name) return j;
    return std::nullopt;
}

std::size_t Schema::require(std::string_view name) const {
    auto j = index_of(name);
    if (!j) throw Error(ErrorCode::UnknownFeature, "no feature named '" + std::string(name) + "'");
    return *j;
}

bool Schema::in_support(std::size_t j, std::string_view value) const {
    const auto& s = support[j];
    return std::binary_search(s.begin(), s.end(), value, std::less<>{});
}

std::vector<std::string> Schema::names() const {
    std::vector<std::string> out;
    out.reserve(features.size());
    for (const auto& f : features) out.push_back(f.name);
    return out;
}

bool Schema::same_layout(const Schema& other) const { return features == other.features; }

std::optional<double> parse_decimal(std::string_view text) {
    std::size_t i = 0;
    const std::size_t n = text.size();
    if (i < n && (text[i] == '+' || text[i] == '-')) ++i;
    std::size_t digits = 0;
    while (i < n && text[i] >= '0' && text[i] <= '9') ++i, ++digits;
    if (i < n && text[i] == '.') {
        ++i;
        while (i < n && text[i] >= '0' && text[i] <= '9') ++i, ++digits;
    }
    if (digits == 0) return std::nullopt;
    if (i < n && (text[i] == 'e' || text[i] == 'E')) {
        ++i;
        if (i < n && (text[i] == '+' || text[i] == '-')) ++i;
        std::size_t exp_digits = 0;
        while (i < n && text[i] >= '0' && text[i] <= '9') ++i, ++exp_digits;
        if (exp_digits == 0) return std::nullopt;
    }
    if (i != n) return std::nullopt;

    // from_chars rejects a leading '+'.
    const char* first = text.data() + (text[0] == '+' ? 1 : 0);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(first, text.data() + n, value);
    if (ec != std::errc() || ptr != text.data() + n || !std::isfinite(value)) return std::nullopt;
    return value;
}

namespace {

bool has_forbidden(std::string_view s) {
    return s.find(", ") != std::string_view::npos || s.find(" is ") != std::string_view::npos ||
           s.find('\n') != std::string_view::npos || s.find('\r') != std::string_view::npos;
}

}  // namespace

void check_name(std::string_view name) {
    if (name.empty()) throw Error(ErrorCode::InvalidValue, "feature names must be non-empty");
    if (has_forbidden(name))
        throw Error(ErrorCode::InvalidValue,
                    "feature name '" + std::string(name) +
                        "' contains a clause delimiter (\", \", \" is \" or a newline)");
}

void check_value(std::string_view feature, std::string_view value) {
    if (has_forbidden(value))
        throw Error(ErrorCode::InvalidValue, "value '" + std::string(value) + "' of feature '" +
                                                 std::string(feature) +
                                                 "' contains a clause delimiter (\", \", \" is \" or a newline)");
}

Table::Table(Schema schema, std::vector<Row> rows, std::optional<std::string> target)
    : schema_(std::move(schema)), rows_(std::move(rows)), target_(std::move(target)) {
    const std::size_t m = schema_.size();
    std::set<std::string_view> seen;
    for (const auto& f : schema_.features) {
        check_name(f.name);
        if (!seen.insert(f.name).second)
            throw Error(ErrorCode::DuplicateFeature, "feature '" + f.name + "' appears twice");
    }
    schema_.support.resize(m);
    schema_.range.resize(m, {0.0, 0.0});
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        const auto& cells = rows_[i].cells;
        if (cells.size() != m)
            throw Error(ErrorCode::RaggedRows, "row " + std::to_string(i) + " has " +
                                                   std::to_string(cells.size()) + " cells, expected " +
                                                   std::to_string(m));
        for (std::size_t j = 0; j < m; ++j) {
            if (is_missing(cells[j])) continue;
            check_value(schema_.features[j].name, cells[j]);
            if (schema_.is_numeric(j) && !parse_decimal(cells[j]))
                throw Error(ErrorCode::InvalidValue, "row " + std::to_string(i) + ": '" + cells[j] +
                                                         "' is not a number (feature '" +
                                                         schema_.features[j].name + "')");
        }
    }
    if (target_) schema_.require(*target_);
}

Table Table::infer(std::vector<std::string> names, std::vector<Row> rows,
                   std::optional<std::string> target) {
    Schema schema;
    const std::size_t m = names.size();
    for (auto& name : names) schema.features.push_back({std::move(name), FeatureKind::Numeric});
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (rows[i].cells.size() != m)
            throw Error(ErrorCode::RaggedRows, "row " + std::to_string(i) + " has " +
                                                   std::to_string(rows[i].cells.size()) +
                                                   " cells, expected " + std::to_string(m));
    for (std::size_t j = 0; j < m; ++j) {
        bool observed = false;
        for (const auto& r : rows) {
            const auto& c = r.cells[j];
            if (is_missing(c)) continue;
            observed = true;
            if (!parse_decimal(c)) {
                schema.features[j].kind = FeatureKind::Categorical;
                break;
            }
        }
        if (!observed && !rows.empty())
            throw Error(ErrorCode::InvalidValue,
                        "column '" + schema.features[j].name + "' has no observed values");
    }
    Table t(std::move(schema), std::move(rows), std::move(target));
    if (t.num_rows() > 0) t.schema_ = fit_schema_stats(t);
    return t;
}

double Table::numeric(std::size_t i, std::size_t j) const {
    return *parse_decimal(rows_[i].cells[j]);
}

std::vector<std::string> Table::column(std::size_t j) const {
    std::vector<std::string> out;
    out.reserve(rows_.size());
    for (const auto& r : rows_)
        if (!is_missing(r.cells[j])) out.push_back(r.cells[j]);
    return out;
}

bool Table::has_missing() const {
    for (const auto& r : rows_)
        for (const auto& c : r.cells)
            if (is_missing(c)) return true;
    return false;
}

Table Table::with_rows(std::vector<Row> rows) const { return Table(schema_, std::move(rows), target_); }

Table Table::with_target(std::optional<std::string> target) const {
    return Table(schema_, rows_, std::move(target));
}

Table Table::refit() const {
    Table t = *this;
    t.schema_ = fit_schema_stats(t);
    return t;
}

Schema fit_schema_stats(const Table& table) {
    if (table.num_rows() == 0) throw Error(ErrorCode::EmptyTable, "cannot fit statistics of an empty table");
    Schema s = table.schema();
    const std::size_t m = s.size();
    s.support.assign(m, {});
    s.range.assign(m, {0.0, 0.0});
    for (std::size_t j = 0; j < m; ++j) {
        if (s.is_numeric(j)) {
            double lo = INFINITY, hi = -INFINITY;
            for (const auto& r : table.rows()) {
                if (is_missing(r.cells[j])) continue;
                const double v = *parse_decimal(r.cells[j]);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (lo > hi)
                throw Error(ErrorCode::InvalidValue, "column '" + s.features[j].name + "' has no observed values");
            s.range[j] = {lo, hi};
        } else {
            std::set<std::string> distinct;
            for (const auto& r : table.rows())
                if (!is_missing(r.cells[j])) distinct.insert(r.cells[j]);
            if (distinct.empty())
                throw Error(ErrorCode::InvalidValue, "column '" + s.features[j].name + "' has no observed values");
            s.support[j].assign(distinct.begin(), distinct.end());
        }
    }
    return s;
}

namespace {

std::vector<std::vector<std::string>> parse_records(std::string_view text, char delim) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t i = 0;
    const std::size_t n = text.size();
    if (n >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;

    auto end_record = [&] {
        if (!(record.empty() && !field_started && field.empty())) {
            record.push_back(std::move(field));
            records.push_back(std::move(record));
        }
        record.clear();
        field.clear();
        field_started = false;
    };

    for (; i < n; ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < n && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            in_quotes = true;
            field_started = true;
        } else if (c == delim) {
            record.push_back(std::move(field));
            field.clear();
            field_started = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < n && text[i + 1] == '\n') ++i;
            end_record();
        } else {
            field.push_back(c);
            field_started = true;
        }
    }
    if (in_quotes) throw Error(ErrorCode::IoError, "unterminated quoted field");
    end_record();
    return records;
}

bool needs_quotes(std::string_view s, char delim) {
    for (char c : s)
        if (c == delim || c == '"' || c == '\n' || c == '\r') return true;
    return false;
}

void append_field(std::string& out, std::string_view s, char delim) {
    if (!needs_quotes(s, delim)) {
        out.append(s);
        return;
    }
    out.push_back('"');
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
}

}  // namespace

namespace {

std::pair<std::vector<std::string>, std::vector<Row>> read_rows(std::string_view text, const CsvOptions& options) {
    auto records = parse_records(text, options.delimiter);
    std::vector<std::string> names;
    std::size_t first = 0;
    if (options.header) {
        if (records.empty()) throw Error(ErrorCode::EmptyTable, "missing header row");
        names = records[0];
        first = 1;
    } else {
        if (records.empty()) throw Error(ErrorCode::EmptyTable, "no data rows");
        for (std::size_t j = 0; j < records[0].size(); ++j) names.push_back("col" + std::to_string(j));
    }
    std::vector<Row> rows;
    rows.reserve(records.size() - first);
    for (std::size_t i = first; i < records.size(); ++i) {
        if (records[i].size() != names.size())
            throw Error(ErrorCode::RaggedRows, "data row " + std::to_string(i - first) + " has " +
                                                   std::to_string(records[i].size()) + " fields, expected " +
                                                   std::to_string(names.size()));
        rows.push_back(Row{std::move(records[i])});
    }
    if (rows.empty()) throw Error(ErrorCode::EmptyTable, "no data rows");
    return {std::move(names), std::move(rows)};
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw Error(ErrorCode::IoError, "failed reading '" + path.string() + "'");
    return buf.str();
}

}  // namespace

Table parse_csv(std::string_view text, const CsvOptions& options) {
    auto [names, rows] = read_rows(text, options);
    return Table::infer(std::move(names), std::move(rows));
}

Table parse_csv(std::string_view text, const Schema& schema, std::optional<std::string> target,
                const CsvOptions& options) {
    auto [names, rows] = read_rows(text, options);
    if (options.header && names != schema.names())
        throw Error(ErrorCode::SchemaMismatch, "CSV header does not match the expected columns");
    if (!options.header && names.size() != schema.size())
        throw Error(ErrorCode::SchemaMismatch, "CSV column count does not match the expected columns");
    return Table(schema, std::move(rows), std::move(target));
}

Table load_csv(const std::filesystem::path& path, const Schema& schema, std::optional<std::string> target,
               const CsvOptions& options) {
    return parse_csv(read_file(path), schema, std::move(target), options);
}

Table load_csv(const std::filesystem::path& path, const CsvOptions& options) {
    return parse_csv(read_file(path), options);
}

std::string to_csv(const Table& table, char delimiter) {
    std::string out;
    const auto& features = table.schema().features;
    for (std::size_t j = 0; j < features.size(); ++j) {
        if (j) out.push_back(delimiter);
        append_field(out, features[j].name, delimiter);
    }
    out.push_back('\n');
    for (const auto& r : table.rows()) {
        // A lone empty field would read back as a blank line.
        if (r.cells.size() == 1 && r.cells[0].empty()) {
            out += "\"\"\n";
            continue;
        }
        for (std::size_t j = 0; j < r.cells.size(); ++j) {
            if (j) out.push_back(delimiter);
            append_field(out, r.cells[j], delimiter);
        }
        out.push_back('\n');
    }
    return out;
}

void write_csv(const Table& table, const std::filesystem::path& path, char delimiter) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
    out << to_csv(table, delimiter);
    if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path.string() + "'");
}

std::pair<Table, Table> split(const Table& table, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw Error(ErrorCode::InvalidFraction, "test fraction must lie in (0, 1)");
    const std::size_t n = table.num_rows();
    if (n < 2) throw Error(ErrorCode::TooFewRows, "split needs at least two rows");

    // The epsilon absorbs representation error, e.g. (1 - 0.2) * 10.
    auto n_train = static_cast<std::size_t>(std::ceil((1.0 - test_fraction) * static_cast<double>(n) - 1e-9));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

    std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    std::vector<Row> train_rows, test_rows;
    train_rows.reserve(train_idx.size());
    test_rows.reserve(test_idx.size());
    for (auto i : train_idx) train_rows.push_back(table.row(i));
    for (auto i : test_idx) test_rows.push_back(table.row(i));
    return {table.with_rows(std::move(train_rows)), table.with_rows(std::move(test_rows))};
}

}  // namespace great
