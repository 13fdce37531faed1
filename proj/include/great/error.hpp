#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace great {

enum class ErrorCode {
    IoError,
    RaggedRows,
    EmptyTable,
    InvalidValue,
    InvalidFraction,
    BadPermutation,
    DuplicateFeature,
    UnknownFeature,
    TargetTooSmall,
    UnknownId,
    ContextOverflow,
    ShapeMismatch,
    NonFiniteLoss,
    VersionMismatch,
    NonFiniteLogits,
    InvalidSpec,
    AttemptBudgetExhausted,
    ConstraintUnsatisfiable,
    SchemaMismatch,
    TooFewRows,
    SingleClassTarget,
    NonNumericSchema,
    NonNumericFeature,
    EmDegenerate,
    ConfigError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace great
