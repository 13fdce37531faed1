#include "great/codec.hpp"

#include <algorithm>

#include "great/error.hpp"

namespace great {

namespace {

constexpr std::string_view kIs = " is ";
constexpr std::string_view kSep = ", ";

bool starts_with_at(std::string_view text, std::size_t pos, std::string_view a, std::string_view b) {
    if (pos + a.size() + b.size() > text.size()) return false;
    return text.compare(pos, a.size(), a) == 0 && text.compare(pos + a.size(), b.size(), b) == 0;
}

/// Longest feature name f with text[pos..] == f + " is ".
std::optional<std::size_t> match_name(std::string_view text, std::size_t pos, const Schema& schema) {
    std::optional<std::size_t> best;
    for (std::size_t j = 0; j < schema.size(); ++j) {
        const auto& name = schema.features[j].name;
        if (starts_with_at(text, pos, name, kIs) &&
            (!best || name.size() > schema.features[*best].name.size()))
            best = j;
    }
    return best;
}

/// Earliest q >= from where ", <known name> is " starts.
std::size_t find_boundary(std::string_view text, std::size_t from, const Schema& schema) {
    for (std::size_t q = text.find(kSep, from); q != std::string_view::npos; q = text.find(kSep, q + 1)) {
        if (match_name(text, q + kSep.size(), schema)) return q;
    }
    return std::string_view::npos;
}

Invalid invalid(InvalidReason reason, std::string detail) { return Invalid{reason, std::move(detail)}; }

}  // namespace

std::string_view to_string(InvalidReason reason) {
    switch (reason) {
        case InvalidReason::UnknownFeature: return "UnknownFeature";
        case InvalidReason::DuplicateFeature: return "DuplicateFeature";
        case InvalidReason::MissingFeature: return "MissingFeature";
        case InvalidReason::OutOfSupportCategory: return "OutOfSupportCategory";
        case InvalidReason::UnparsableNumber: return "UnparsableNumber";
        case InvalidReason::MalformedClause: return "MalformedClause";
    }
    return "Unknown";
}

std::vector<std::size_t> observed_features(const Row& row) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < row.cells.size(); ++j)
        if (!is_missing(row.cells[j])) out.push_back(j);
    return out;
}

Permutation identity_permutation(std::size_t m) {
    Permutation p;
    p.indices.resize(m);
    for (std::size_t i = 0; i < m; ++i) p.indices[i] = i;
    return p;
}

Permutation sample_permutation(std::size_t m, Rng& rng) {
    Permutation p = identity_permutation(m);
    for (std::size_t i = m; i-- > 1;) std::swap(p.indices[i], p.indices[rng.below(i + 1)]);
    return p;
}

std::string render_clauses(const std::vector<Clause>& clauses) {
    std::string text;
    for (std::size_t k = 0; k < clauses.size(); ++k) {
        if (k) text.push_back(' ');
        text += clauses[k].feature;
        text += kIs;
        text += clauses[k].value;
        text.push_back(',');
    }
    return text;
}

EncodedRecord encode(const Row& row, const Schema& schema, const Permutation& perm) {
    if (row.cells.size() != schema.size())
        throw Error(ErrorCode::ShapeMismatch, "row arity does not match schema");
    const auto present = observed_features(row);
    const auto& idx = perm.indices;
    if (idx.size() != present.size())
        throw Error(ErrorCode::BadPermutation, "permutation has length " + std::to_string(idx.size()) +
                                                   ", row has " + std::to_string(present.size()) +
                                                   " observed features");
    std::vector<bool> used(idx.size(), false);
    for (auto k : idx) {
        if (k >= idx.size() || used[k]) throw Error(ErrorCode::BadPermutation, "not a bijection");
        used[k] = true;
    }
    EncodedRecord rec;
    rec.clauses.reserve(idx.size());
    for (auto k : idx) {
        const auto j = present[k];
        rec.clauses.push_back({schema.features[j].name, row.cells[j]});
    }
    rec.text = render_clauses(rec.clauses);
    return rec;
}

ParseOutcome decode(std::string_view text, const Schema& schema) {
    const std::size_t m = schema.size();
    if (text.empty()) return invalid(InvalidReason::MalformedClause, "empty record");
    std::vector<std::string> cells(m);
    std::vector<bool> seen(m, false);

    std::size_t pos = 0;
    bool done = false;
    while (!done) {
        const auto j = match_name(text, pos, schema);
        if (!j) {
            const auto is_at = text.find(kIs, pos);
            if (is_at == std::string_view::npos)
                return invalid(InvalidReason::MalformedClause, "no \" is \" after offset " + std::to_string(pos));
            const auto name = text.substr(pos, is_at - pos);
            if (name.empty() || name.find(kSep) != std::string_view::npos)
                return invalid(InvalidReason::MalformedClause, "bad clause at offset " + std::to_string(pos));
            return invalid(InvalidReason::UnknownFeature, "unknown feature '" + std::string(name) + "'");
        }
        const auto& feature = schema.features[*j].name;
        const std::size_t value_start = pos + feature.size() + kIs.size();
        std::string_view value;
        const auto boundary = find_boundary(text, value_start, schema);
        if (boundary != std::string_view::npos) {
            value = text.substr(value_start, boundary - value_start);
            pos = boundary + kSep.size();
        } else {
            if (text.back() != ',' || text.size() <= value_start)
                return invalid(InvalidReason::MalformedClause, "record does not end with ','");
            value = text.substr(value_start, text.size() - 1 - value_start);
            done = true;
        }
        if (value.empty()) return invalid(InvalidReason::MalformedClause, "empty value for '" + feature + "'");
        if (seen[*j]) return invalid(InvalidReason::DuplicateFeature, "'" + feature + "' given twice");
        seen[*j] = true;
        if (schema.is_numeric(*j)) {
            if (!parse_decimal(value))
                return invalid(InvalidReason::UnparsableNumber,
                               "'" + std::string(value) + "' is not a number (feature '" + feature + "')");
        } else if (!schema.in_support(*j, value)) {
            return invalid(InvalidReason::OutOfSupportCategory,
                           "'" + std::string(value) + "' is outside the support of '" + feature + "'");
        }
        cells[*j] = std::string(value);
    }
    for (std::size_t j = 0; j < m; ++j)
        if (!seen[j]) return invalid(InvalidReason::MissingFeature, "'" + schema.features[j].name + "' absent");
    return Row{std::move(cells)};
}

std::string render_condition(const std::vector<Clause>& constraints,
                             const std::optional<std::string>& trailing_feature, const Schema& schema) {
    std::vector<bool> used(schema.size(), false);
    std::string out;
    for (const auto& c : constraints) {
        const auto j = schema.require(c.feature);
        if (used[j]) throw Error(ErrorCode::DuplicateFeature, "'" + c.feature + "' constrained twice");
        used[j] = true;
        out += c.feature;
        out += kIs;
        out += c.value;
        out += kSep;
    }
    if (trailing_feature) {
        const auto j = schema.require(*trailing_feature);
        if (used[j])
            throw Error(ErrorCode::DuplicateFeature, "'" + *trailing_feature + "' is already constrained");
        out += *trailing_feature;
        out += " is";
    }
    return out;
}

}  // namespace great
