#include "great/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "great/error.hpp"

namespace great {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::RaggedRows: return "RaggedRows";
        case ErrorCode::EmptyTable: return "EmptyTable";
        case ErrorCode::InvalidValue: return "InvalidValue";
        case ErrorCode::InvalidFraction: return "InvalidFraction";
        case ErrorCode::BadPermutation: return "BadPermutation";
        case ErrorCode::DuplicateFeature: return "DuplicateFeature";
        case ErrorCode::UnknownFeature: return "UnknownFeature";
        case ErrorCode::TargetTooSmall: return "TargetTooSmall";
        case ErrorCode::UnknownId: return "UnknownId";
        case ErrorCode::ContextOverflow: return "ContextOverflow";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::NonFiniteLogits: return "NonFiniteLogits";
        case ErrorCode::InvalidSpec: return "InvalidSpec";
        case ErrorCode::AttemptBudgetExhausted: return "AttemptBudgetExhausted";
        case ErrorCode::ConstraintUnsatisfiable: return "ConstraintUnsatisfiable";
        case ErrorCode::SchemaMismatch: return "SchemaMismatch";
        case ErrorCode::TooFewRows: return "TooFewRows";
        case ErrorCode::SingleClassTarget: return "SingleClassTarget";
        case ErrorCode::NonNumericSchema: return "NonNumericSchema";
        case ErrorCode::NonNumericFeature: return "NonNumericFeature";
        case ErrorCode::EmDegenerate: return "EmDegenerate";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view name) {
    return mix64(master ^ fnv1a64(name));
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return mix64(mix64(master) + index);
}

std::uint64_t Rng::below(std::uint64_t n) {
    // Rejection on the top of the range keeps the draw unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace great
