#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "great/table.hpp"
#include "json.hpp"

namespace great {

enum class GeneratorKind { Gmm2D, MarkovCategorical, DependentToy };

struct GmmComponentSpec {
    double weight = 1.0;
    std::vector<double> mean;
    std::vector<std::vector<double>> covariance;
};

/// One feature of a discrete generator. Its distribution depends on at most
/// one earlier categorical feature (`parent`); the key "" holds the
/// distribution of a parentless node.
struct NodeSpec {
    std::string name;
    bool numeric = false;
    std::optional<std::string> parent;
    /// Categorical support, in declaration order.
    std::vector<std::string> values;
    /// Categorical: parent value -> probabilities over `values`.
    std::map<std::string, std::vector<double>> probabilities;
    /// Numeric: parent value -> (mean, standard deviation).
    std::map<std::string, std::pair<double, double>> normal;
    int decimals = 2;
};

struct GeneratorSpec {
    GeneratorKind kind = GeneratorKind::Gmm2D;
    std::size_t n_rows = 0;
    std::uint64_t seed = 0;
    /// Gmm2D: feature names, mixture components and printed decimals.
    std::vector<std::string> features;
    std::vector<GmmComponentSpec> components;
    int decimals = 2;
    /// MarkovCategorical (each node's parent is the previous node) and DependentToy.
    std::vector<NodeSpec> nodes;

    /// Throws InvalidSpec.
    void validate() const;
};

/// JSON layouts:
///   {"kind": "gmm2d", "n_rows", "seed", "features": [..], "decimals",
///    "components": [{"weight", "mean": [..], "covariance": [[..], ..]}]}
///   {"kind": "markov_categorical", "n_rows", "seed", "features": [
///    {"name", "values": [..], "initial": [..]},
///    {"name", "values": [..], "transitions": {"<previous value>": [..]}}]}
///   {"kind": "dependent_toy", "n_rows", "seed", "features": [
///    {"name", "type": "categorical", "values": [..], "probabilities": [..] or {"<parent value>": [..]}, "parent"?},
///    {"name", "type": "numeric", "decimals", "normal": [mean, sd] or {"<parent value>": [mean, sd]}, "parent"?}]}
GeneratorSpec generator_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GeneratorSpec& spec);
GeneratorSpec load_generator_spec(const std::filesystem::path& path);

/// Deterministic given spec.seed.
Table generate(const GeneratorSpec& spec);

/// Mean log-density (continuous features) or log-probability (discrete) of
/// the rows under the generator's own distribution. Throws SchemaMismatch.
double true_loglik(const GeneratorSpec& spec, const Table& table);

/// Exact joint distribution of an all-categorical generator, keyed by the
/// row cells in feature order. Throws InvalidSpec for other generators.
std::map<std::vector<std::string>, double> categorical_joint(const GeneratorSpec& spec);

/// 6000 rows, 2 numeric features, a 4-component mixture.
GeneratorSpec gmm_benchmark_spec();
/// 5000 rows, a 3-feature chain with 3 values per feature.
GeneratorSpec markov_benchmark_spec();
/// Categorical parents with categorical and numeric children.
GeneratorSpec dependent_toy_spec();

}  // namespace great
