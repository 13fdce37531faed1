#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "great/table.hpp"

namespace great {

/// Numeric design matrix: categoricals one-hot over the union of the
/// supports seen in the fitted tables, numerics passed through raw. Missing
/// categoricals encode as all zeros and missing numerics as 0.
class Featurizer {
public:
    Featurizer(const std::vector<const Table*>& tables, const std::optional<std::string>& exclude = std::nullopt);
    Eigen::MatrixXd transform(const Table& table) const;
    std::size_t width() const { return width_; }

private:
    struct Column {
        std::size_t source;
        bool numeric;
        std::vector<std::string> levels;
        std::size_t offset;
    };
    std::vector<Column> columns_;
    std::size_t width_ = 0;
};

/// Sorted union of the target values of the given tables.
std::vector<std::string> class_labels(const std::vector<const Table*>& tables, std::size_t target);
std::vector<int> encode_labels(const Table& table, std::size_t target, const std::vector<std::string>& classes);
Eigen::VectorXd numeric_target(const Table& table, std::size_t target);

/// Multinomial logistic regression fit by full-batch gradient descent on
/// z-scaled features. The step is learning_rate / L, where L bounds the
/// curvature of the loss.
class LogisticRegression {
public:
    struct Options {
        std::size_t max_iter = 500;
        double learning_rate = 1.0;
        double l2 = 0.0;
    };
    LogisticRegression() = default;
    explicit LogisticRegression(Options o) : opts_(o) {}
    void fit(const Eigen::MatrixXd& x, const std::vector<int>& y, std::size_t n_classes);
    Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& x) const;

private:
    Options opts_;
    Eigen::RowVectorXd mean_, scale_;
    Eigen::MatrixXd w_;  // features x classes
    Eigen::RowVectorXd b_;
};

/// Least squares fit by gradient descent on z-scaled features and target,
/// with step learning_rate / L as above.
class LinearRegression {
public:
    struct Options {
        std::size_t max_iter = 500;
        double learning_rate = 1.0;
    };
    LinearRegression() = default;
    explicit LinearRegression(Options o) : opts_(o) {}
    void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);
    Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;

private:
    Options opts_;
    Eigen::RowVectorXd mean_, scale_;
    Eigen::VectorXd w_;
    double b_ = 0.0, y_mean_ = 0.0, y_scale_ = 1.0;
};

struct TreeOptions {
    std::size_t max_depth = 12;
    std::size_t min_samples_split = 2;
    std::size_t min_samples_leaf = 1;
    /// Features examined per split; 0 means all.
    std::size_t max_features = 0;
};

/// CART with Gini impurity (classification) or variance (regression). A node
/// splits whenever it is impure and a legal split exists, even without an
/// impurity decrease, so XOR-like targets are reachable.
class DecisionTree {
public:
    DecisionTree() = default;
    explicit DecisionTree(TreeOptions o) : opts_(o) {}
    void fit(const Eigen::MatrixXd& x, const std::vector<int>& y, std::size_t n_classes, std::uint64_t seed = 0,
             const std::vector<std::size_t>& rows = {});
    void fit_regression(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::uint64_t seed = 0,
                        const std::vector<std::size_t>& rows = {});
    Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& x) const;
    Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
    std::size_t depth() const;
    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        int feature = -1;
        double threshold = 0.0;
        std::size_t left = 0, right = 0;
        std::vector<double> value;
    };
    friend struct TreeBuilder;
    const Node& leaf_for(const Eigen::MatrixXd& x, Eigen::Index i) const;

    TreeOptions opts_;
    std::vector<Node> nodes_;
    std::size_t outputs_ = 1;
};

/// Bagged CART trees with per-split feature subsampling (sqrt(d) for
/// classification, d/3 for regression unless set).
class RandomForest {
public:
    struct Options {
        std::size_t n_trees = 100;
        TreeOptions tree;
    };
    RandomForest() = default;
    explicit RandomForest(Options o) : opts_(o) {}
    void fit(const Eigen::MatrixXd& x, const std::vector<int>& y, std::size_t n_classes, std::uint64_t seed);
    void fit_regression(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::uint64_t seed);
    Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& x) const;
    Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;

private:
    Options opts_;
    std::vector<DecisionTree> trees_;
};

std::vector<int> argmax_rows(const Eigen::MatrixXd& proba);
double accuracy(const std::vector<int>& truth, const std::vector<int>& pred);
/// Unweighted mean F1 over the classes occurring in truth or prediction.
double macro_f1(const std::vector<int>& truth, const std::vector<int>& pred);
/// Binary: rank AUC of the class-1 column (ties averaged). Multiclass: mean
/// one-vs-rest AUC over classes with positives and negatives in `truth`.
/// NaN when undefined.
double roc_auc(const std::vector<int>& truth, const Eigen::MatrixXd& proba);
double mean_squared_error(const Eigen::VectorXd& truth, const Eigen::VectorXd& pred);

}  // namespace great
