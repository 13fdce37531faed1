#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "great/learners.hpp"
#include "great/table.hpp"
#include "json.hpp"

namespace great {

/// Mean and sample standard deviation over seeds.
struct Stat {
    double mean = 0.0;
    double std = 0.0;
    std::vector<double> values;
};
Stat summarize(std::vector<double> values);
nlohmann::json to_json(const Stat& s);

/// Rebuilds `table` against `schema` (same names and kinds required), so
/// both tables share supports and ranges. Throws SchemaMismatch.
Table conform(const Table& table, const Schema& schema);

struct DcrResult {
    std::vector<double> distances;
    double min = 0.0, median = 0.0, mean = 0.0;
    double zero_fraction = 0.0;

    nlohmann::json to_json(bool with_distances = false) const;
};

/// Per synthetic row, the smallest L1 distance to any train row: |a - b| on
/// parsed numbers, 0/1 on categorical equality. A missing cell differs by 1
/// from any observed one. `normalized` divides numeric differences by the
/// train column's range (an extension; off by default).
DcrResult dcr(const Table& synthetic, const Table& train, bool normalized = false, std::size_t workers = 1);

struct DiscriminatorOptions {
    std::vector<std::size_t> depths{6, 12, 20};
    std::vector<std::size_t> trees{50, 100};
    std::size_t folds = 5;
};

struct DiscriminatorResult {
    Stat accuracy;
    /// Selected (depth, trees) per seed.
    std::vector<std::pair<std::size_t, std::size_t>> chosen;
    nlohmann::json to_json() const;
};

/// Random forest separating synthetic (label 0) from real (label 1) rows,
/// tuned by k-fold CV over the grid and scored on a balanced test union. The
/// larger test half is truncated to the size of the smaller one. Throws
/// SchemaMismatch or TooFewRows (fewer than 20 rows on a side).
DiscriminatorResult discriminator(const Table& real_train, const Table& synth_train, const Table& real_test,
                                  const Table& synth_test, const std::vector<std::uint64_t>& seeds,
                                  const DiscriminatorOptions& options = {});

struct MleOptions {
    std::size_t max_iter = 500;
    std::size_t tree_depth = 12;
    std::size_t forest_trees = 100;
    std::size_t forest_depth = 12;
};

struct EvaluatorScores {
    Stat accuracy, roc_auc, macro_f1, mse;
};

struct MleResult {
    bool classification = true;
    /// Keyed by "linear", "decision_tree", "random_forest".
    std::map<std::string, EvaluatorScores> models;
    nlohmann::json to_json() const;
};

/// Trains each evaluator on synth_train and on real_train and scores both on
/// real_test. Returns {synthetic-trained, real-trained}. Throws
/// SchemaMismatch, UnknownFeature or SingleClassTarget.
std::pair<MleResult, MleResult> mle(const Table& real_train, const Table& synth_train, const Table& real_test,
                                    const std::string& target, const std::vector<std::uint64_t>& seeds,
                                    const MleOptions& options = {});

struct LikelihoodResult {
    double l_syn = 0.0;
    double l_test = 0.0;
    nlohmann::json to_json() const;
};

/// l_syn: mean log-density of `synthetic` under a GMM fit to real_train;
/// l_test: mean log-density of real_test under a GMM fit to `synthetic`.
/// Full covariance, variance floor 1e-6. Throws NonNumericSchema,
/// SchemaMismatch or EmDegenerate.
LikelihoodResult likelihood_fitness(const Table& real_train, const Table& real_test, const Table& synthetic,
                                    std::size_t n_components, std::uint64_t seed = 0);

struct Histogram2D {
    std::string feature_x, feature_y;
    double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
    std::size_t bins = 0;
    /// counts[ix][iy].
    std::vector<std::vector<std::size_t>> counts;

    /// Grid CSV: header of y bin lower edges, then one row per x bin led by
    /// its lower edge.
    std::string to_csv() const;
};

/// Bounds {x_min, x_max, y_min, y_max} covering every observed pair.
std::array<double, 4> joint_range(const std::vector<const Table*>& tables, const std::string& feature_x,
                                  const std::string& feature_y);

/// Equal-width 2-D histogram over `range` (the table's own range by default).
/// Throws NonNumericFeature.
Histogram2D joint_histogram(const Table& table, const std::string& feature_x, const std::string& feature_y,
                            std::size_t bins, std::optional<std::array<double, 4>> range = std::nullopt);

/// 1-D histogram of DCR distances as "lower,upper,count" CSV.
std::string dcr_histogram_csv(const DcrResult& result, std::size_t bins);

}  // namespace great
