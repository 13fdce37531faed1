#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "great/rng.hpp"
#include "great/table.hpp"

namespace great {

/// One "<feature> is <value>," sentence of a record.
struct Clause {
    std::string feature;
    std::string value;

    bool operator==(const Clause&) const = default;
};

/// Clause list plus its rendering: clauses "<f> is <v>," joined by single
/// spaces, e.g. "Occupation is doctor, Gender is female, Age is 34,".
struct EncodedRecord {
    std::vector<Clause> clauses;
    std::string text;
};

/// Bijection on {0, ..., m-1}: clause k of a record is the feature at
/// position indices[k] among the row's observed features.
struct Permutation {
    std::vector<std::size_t> indices;

    bool operator==(const Permutation&) const = default;
};

enum class InvalidReason {
    UnknownFeature,
    DuplicateFeature,
    MissingFeature,
    OutOfSupportCategory,
    UnparsableNumber,
    MalformedClause,
};

inline constexpr std::size_t kInvalidReasonCount = 6;

std::string_view to_string(InvalidReason reason);

struct Invalid {
    InvalidReason reason;
    std::string detail;
};

/// Result of parsing model output: a schema-ordered row or the first
/// violation found while scanning the clauses left to right.
class ParseOutcome {
public:
    ParseOutcome(Row row) : value_(std::move(row)) {}
    ParseOutcome(Invalid invalid) : value_(std::move(invalid)) {}

    bool valid() const { return std::holds_alternative<Row>(value_); }
    const Row& row() const { return std::get<Row>(value_); }
    InvalidReason reason() const { return std::get<Invalid>(value_).reason; }
    const std::string& detail() const { return std::get<Invalid>(value_).detail; }

private:
    std::variant<Row, Invalid> value_;
};

/// Indices of the non-missing cells of `row`, in schema order.
std::vector<std::size_t> observed_features(const Row& row);

/// Identity permutation of size m.
Permutation identity_permutation(std::size_t m);

/// Uniform over all m! orders (Fisher-Yates).
Permutation sample_permutation(std::size_t m, Rng& rng);

/// Throws BadPermutation unless `perm` is a bijection over the row's observed
/// features.
EncodedRecord encode(const Row& row, const Schema& schema, const Permutation& perm);

std::string render_clauses(const std::vector<Clause>& clauses);

/// Total over arbitrary input; never throws.
ParseOutcome decode(std::string_view text, const Schema& schema);

/// Prompt prefix: "<f> is <v>, " per constraint, then "<trailing> is" when a
/// trailing feature is given. Throws UnknownFeature / DuplicateFeature.
std::string render_condition(const std::vector<Clause>& constraints,
                             const std::optional<std::string>& trailing_feature, const Schema& schema);

}  // namespace great
