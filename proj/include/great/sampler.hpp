#pragma once

#include <Eigen/Core>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "great/checkpoint.hpp"
#include "great/codec.hpp"
#include "great/error.hpp"
#include "great/gmm.hpp"
#include "great/rng.hpp"
#include "great/table.hpp"
#include "json.hpp"

namespace great {

/// Draws a token from softmax(logits / temperature), subtracting the max
/// logit first. Throws NonFiniteLogits or InvalidValue (temperature <= 0).
TokenId next_token(const Eigen::VectorXf& logits, double temperature, Rng& rng);

/// Marginal of one feature: value frequencies for categorical features, a
/// 1-D mixture for numeric ones.
struct FeatureDensityEntry {
    std::string feature;
    bool numeric = false;
    std::vector<std::string> values;
    std::vector<double> probabilities;
    Gmm gmm;
    /// Digits after the decimal point used when rendering a drawn number.
    int decimals = 0;

    std::string draw(Rng& rng) const;
};

/// One entry per schema feature, in schema order.
struct FeatureDensity {
    std::vector<FeatureDensityEntry> entries;
    const FeatureDensityEntry& at(std::string_view feature) const;
};

/// `n_components` 0 picks min(5, distinct values). A numeric column with a
/// single distinct value gets one component with variance 1e-9 * max(range^2, 1).
FeatureDensityEntry fit_feature_density(const Table& table, std::string_view feature, std::size_t n_components = 0,
                                        std::uint64_t seed = 0);
FeatureDensity fit_feature_densities(const Table& table, std::uint64_t seed = 0);

enum class Preconditioning { FeatureName, NameValue, MultiNameValue };
std::string_view to_string(Preconditioning mode);
Preconditioning preconditioning_from_string(std::string_view s);

struct SampleSpec {
    std::size_t count = 1;
    double temperature = 0.7;
    std::vector<Clause> constraints;
    Preconditioning mode = Preconditioning::FeatureName;
    /// 0 means up to the context length.
    std::size_t max_new_tokens = 0;
    std::size_t max_attempts_factor = 10;
    std::uint64_t seed = 0;
    /// Pins the first feature in FeatureName / NameValue mode instead of rotating.
    std::optional<std::string> start_feature;
    std::size_t workers = 1;

    /// Throws InvalidValue, UnknownFeature, DuplicateFeature or
    /// ConstraintUnsatisfiable.
    void validate(const Schema& schema) const;
};

struct SampleReport {
    Table rows;
    std::size_t attempts = 0;
    std::size_t invalid = 0;
    double invalid_rate = 0.0;
    std::array<std::size_t, kInvalidReasonCount> invalid_reasons{};

    nlohmann::json to_json() const;
};

/// Thrown when the attempt budget runs out; carries the partial report.
class SamplingBudgetError : public Error {
public:
    SamplingBudgetError(SampleReport report, const std::string& msg)
        : Error(ErrorCode::AttemptBudgetExhausted, msg), report_(std::move(report)) {}
    const SampleReport& report() const { return report_; }

private:
    SampleReport report_;
};

/// Prompt text of an attempt: the conditioning clauses with the trailing
/// space removed so the prompt tokenizes like a record prefix.
std::string prompt_text(const std::vector<Clause>& constraints, const std::optional<std::string>& trailing,
                        const Schema& schema);

/// Completes `prompt` token by token until EOR or the token cap and returns
/// the full text (prompt included).
std::string complete(const Checkpoint& ckpt, const std::string& prompt, double temperature, std::size_t max_new_tokens,
                     Rng& rng);

/// Attempt i draws from its own stream derive_seed(seed, i) and the first
/// `count` valid attempts in index order are kept, so the output does not
/// depend on the worker count. `density` is required in NameValue mode when
/// no constraint is given. Throws SamplingBudgetError.
SampleReport sample(const Checkpoint& ckpt, const SampleSpec& spec, const FeatureDensity* density = nullptr);

struct ImputeOptions {
    double temperature = 0.7;
    std::size_t max_new_tokens = 0;
    std::size_t max_attempts_factor = 10;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

/// Fills the missing cells of each row by conditioning on its observed cells
/// in a fresh random order. Observed cells are copied unchanged.
Table impute(const Checkpoint& ckpt, const Table& partial, const ImputeOptions& options);

}  // namespace great
