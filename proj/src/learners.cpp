#include "great/learners.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "great/error.hpp"
#include "great/rng.hpp"

namespace great {

Featurizer::Featurizer(const std::vector<const Table*>& tables, const std::optional<std::string>& exclude) {
    if (tables.empty()) throw Error(ErrorCode::EmptyTable, "featurizer needs at least one table");
    const Schema& schema = tables[0]->schema();
    for (const auto* t : tables)
        if (!t->schema().same_layout(schema)) throw Error(ErrorCode::SchemaMismatch, "tables have different columns");
    for (std::size_t j = 0; j < schema.size(); ++j) {
        if (exclude && schema.features[j].name == *exclude) continue;
        Column c{j, schema.is_numeric(j), {}, width_};
        if (c.numeric) {
            width_ += 1;
        } else {
            std::set<std::string> levels;
            for (const auto* t : tables)
                for (const auto& r : t->rows())
                    if (!is_missing(r.cells[j])) levels.insert(r.cells[j]);
            c.levels.assign(levels.begin(), levels.end());
            width_ += c.levels.size();
        }
        columns_.push_back(std::move(c));
    }
}

Eigen::MatrixXd Featurizer::transform(const Table& table) const {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(table.num_rows()),
                                              static_cast<Eigen::Index>(width_));
    for (std::size_t i = 0; i < table.num_rows(); ++i) {
        const auto& cells = table.row(i).cells;
        const auto ii = static_cast<Eigen::Index>(i);
        for (const auto& c : columns_) {
            const auto& cell = cells[c.source];
            if (is_missing(cell)) continue;
            if (c.numeric) {
                x(ii, static_cast<Eigen::Index>(c.offset)) = table.numeric(i, c.source);
            } else {
                const auto it = std::lower_bound(c.levels.begin(), c.levels.end(), cell);
                if (it != c.levels.end() && *it == cell)
                    x(ii, static_cast<Eigen::Index>(c.offset + static_cast<std::size_t>(it - c.levels.begin()))) = 1.0;
            }
        }
    }
    return x;
}

std::vector<std::string> class_labels(const std::vector<const Table*>& tables, std::size_t target) {
    std::set<std::string> labels;
    for (const auto* t : tables)
        for (const auto& r : t->rows())
            if (!is_missing(r.cells[target])) labels.insert(r.cells[target]);
    return {labels.begin(), labels.end()};
}

std::vector<int> encode_labels(const Table& table, std::size_t target, const std::vector<std::string>& classes) {
    std::vector<int> y;
    y.reserve(table.num_rows());
    for (const auto& r : table.rows()) {
        const auto it = std::lower_bound(classes.begin(), classes.end(), r.cells[target]);
        if (it == classes.end() || *it != r.cells[target])
            throw Error(ErrorCode::InvalidValue, "label '" + r.cells[target] + "' is not a known class");
        y.push_back(static_cast<int>(it - classes.begin()));
    }
    return y;
}

Eigen::VectorXd numeric_target(const Table& table, std::size_t target) {
    Eigen::VectorXd y(static_cast<Eigen::Index>(table.num_rows()));
    for (std::size_t i = 0; i < table.num_rows(); ++i) {
        if (is_missing(table.row(i).cells[target]))
            throw Error(ErrorCode::InvalidValue, "missing target in row " + std::to_string(i));
        y(static_cast<Eigen::Index>(i)) = table.numeric(i, target);
    }
    return y;
}

namespace {

void fit_scaling(const Eigen::MatrixXd& x, Eigen::RowVectorXd& mean, Eigen::RowVectorXd& scale) {
    const double n = static_cast<double>(x.rows());
    mean = x.colwise().mean();
    scale = ((x.rowwise() - mean).array().square().colwise().sum() / n).sqrt().matrix();
    for (Eigen::Index j = 0; j < scale.size(); ++j)
        if (scale(j) < 1e-12) scale(j) = 1.0;
}

Eigen::MatrixXd apply_scaling(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& mean,
                              const Eigen::RowVectorXd& scale) {
    return (x.rowwise() - mean).array().rowwise() / scale.array();
}

// Largest eigenvalue of the augmented Gram matrix [X 1]^T [X 1] / n.
double curvature(const Eigen::MatrixXd& z) {
    Eigen::MatrixXd a(z.rows(), z.cols() + 1);
    a << z, Eigen::VectorXd::Ones(z.rows());
    const Eigen::MatrixXd gram = a.transpose() * a / static_cast<double>(z.rows());
    return std::max(1e-12, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff());
}

void softmax_rows(Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        m.row(i).array() -= m.row(i).maxCoeff();
        m.row(i) = m.row(i).array().exp().matrix();
        m.row(i) /= m.row(i).sum();
    }
}

}  // namespace

void LogisticRegression::fit(const Eigen::MatrixXd& x, const std::vector<int>& y, std::size_t n_classes) {
    if (x.rows() == 0) throw Error(ErrorCode::EmptyTable, "no training rows");
    fit_scaling(x, mean_, scale_);
    const Eigen::MatrixXd z = apply_scaling(x, mean_, scale_);
    const auto k = static_cast<Eigen::Index>(n_classes);
    Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(z.rows(), k);
    for (Eigen::Index i = 0; i < z.rows(); ++i) onehot(i, y[static_cast<std::size_t>(i)]) = 1.0;
    // Softmax cross-entropy curvature is at most half that of least squares.
    const double step = opts_.learning_rate / (0.5 * curvature(z) + opts_.l2);
    const double n = static_cast<double>(z.rows());
    w_ = Eigen::MatrixXd::Zero(z.cols(), k);
    b_ = Eigen::RowVectorXd::Zero(k);
    for (std::size_t it = 0; it < opts_.max_iter; ++it) {
        Eigen::MatrixXd p = (z * w_).rowwise() + b_;
        softmax_rows(p);
        p -= onehot;
        w_ -= step * (z.transpose() * p / n + opts_.l2 * w_);
        b_ -= step * p.colwise().sum() / n;
    }
}

Eigen::MatrixXd LogisticRegression::predict_proba(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd p = (apply_scaling(x, mean_, scale_) * w_).rowwise() + b_;
    softmax_rows(p);
    return p;
}

void LinearRegression::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    if (x.rows() == 0) throw Error(ErrorCode::EmptyTable, "no training rows");
    fit_scaling(x, mean_, scale_);
    const Eigen::MatrixXd z = apply_scaling(x, mean_, scale_);
    const double n = static_cast<double>(z.rows());
    y_mean_ = y.mean();
    y_scale_ = std::sqrt((y.array() - y_mean_).square().sum() / n);
    if (y_scale_ < 1e-12) y_scale_ = 1.0;
    const Eigen::VectorXd t = (y.array() - y_mean_) / y_scale_;
    const double step = opts_.learning_rate / curvature(z);
    w_ = Eigen::VectorXd::Zero(z.cols());
    b_ = 0.0;
    for (std::size_t it = 0; it < opts_.max_iter; ++it) {
        const Eigen::VectorXd r = (z * w_).array() + b_ - t.array();
        w_ -= step * z.transpose() * r / n;
        b_ -= step * r.sum() / n;
    }
}

Eigen::VectorXd LinearRegression::predict(const Eigen::MatrixXd& x) const {
    const Eigen::VectorXd z = (apply_scaling(x, mean_, scale_) * w_).array() + b_;
    return (z.array() * y_scale_ + y_mean_).matrix();
}

struct TreeBuilder {
    const Eigen::MatrixXd& x;
    const std::vector<int>* labels;
    const Eigen::VectorXd* targets;
    std::size_t n_classes;
    TreeOptions opts;
    Rng rng;
    DecisionTree& tree;
    std::vector<std::size_t> features;
    std::vector<std::pair<double, std::size_t>> order;

    bool classification() const { return labels != nullptr; }

    std::vector<double> leaf_value(const std::vector<std::size_t>& rows) const {
        if (classification()) {
            std::vector<double> p(n_classes, 0.0);
            for (auto i : rows) p[static_cast<std::size_t>((*labels)[i])] += 1.0;
            for (auto& v : p) v /= static_cast<double>(rows.size());
            return p;
        }
        double s = 0.0;
        for (auto i : rows) s += (*targets)(static_cast<Eigen::Index>(i));
        return {s / static_cast<double>(rows.size())};
    }

    bool pure(const std::vector<std::size_t>& rows) const {
        for (auto i : rows) {
            if (classification() ? (*labels)[i] != (*labels)[rows[0]]
                                 : (*targets)(static_cast<Eigen::Index>(i)) != (*targets)(static_cast<Eigen::Index>(rows[0])))
                return false;
        }
        return true;
    }

    std::size_t build(std::vector<std::size_t> rows, std::size_t depth) {
        const std::size_t id = tree.nodes_.size();
        tree.nodes_.push_back({});
        tree.nodes_[id].value = leaf_value(rows);
        if (depth >= opts.max_depth || rows.size() < opts.min_samples_split ||
            rows.size() < 2 * opts.min_samples_leaf || pure(rows))
            return id;

        // Candidate features: all, or a fresh random subset.
        const std::size_t d = static_cast<std::size_t>(x.cols());
        std::size_t m = opts.max_features == 0 ? d : std::min(opts.max_features, d);
        if (m < d)
            for (std::size_t k = 0; k < m; ++k) std::swap(features[k], features[k + rng.below(d - k)]);

        double best = std::numeric_limits<double>::infinity();
        int best_f = -1;
        double best_t = 0.0;
        const std::size_t n = rows.size();
        std::vector<double> left(n_classes), right(n_classes);
        for (std::size_t fk = 0; fk < m; ++fk) {
            const std::size_t f = features[fk];
            order.clear();
            for (auto i : rows) order.emplace_back(x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)), i);
            std::sort(order.begin(), order.end());
            if (order.front().first == order.back().first) continue;

            if (classification()) {
                std::fill(left.begin(), left.end(), 0.0);
                std::fill(right.begin(), right.end(), 0.0);
                for (auto& [v, i] : order) right[static_cast<std::size_t>((*labels)[i])] += 1.0;
                double sq_left = 0.0, sq_right = 0.0;
                for (double c : right) sq_right += c * c;
                for (std::size_t k = 0; k + 1 < n; ++k) {
                    const auto c = static_cast<std::size_t>((*labels)[order[k].second]);
                    sq_left += 2.0 * left[c] + 1.0;
                    sq_right -= 2.0 * right[c] - 1.0;
                    left[c] += 1.0;
                    right[c] -= 1.0;
                    const std::size_t nl = k + 1, nr = n - nl;
                    if (order[k].first == order[k + 1].first || nl < opts.min_samples_leaf || nr < opts.min_samples_leaf)
                        continue;
                    // Weighted Gini: n_l * (1 - sum p_l^2) + n_r * (1 - sum p_r^2), up to the constant n.
                    const double score = -(sq_left / static_cast<double>(nl) + sq_right / static_cast<double>(nr));
                    if (score < best - 1e-12) {
                        best = score;
                        best_f = static_cast<int>(f);
                        best_t = 0.5 * (order[k].first + order[k + 1].first);
                    }
                }
            } else {
                double sum_r = 0.0, sq_r = 0.0, sum_l = 0.0, sq_l = 0.0;
                for (auto& [v, i] : order) {
                    const double t = (*targets)(static_cast<Eigen::Index>(i));
                    sum_r += t;
                    sq_r += t * t;
                }
                for (std::size_t k = 0; k + 1 < n; ++k) {
                    const double t = (*targets)(static_cast<Eigen::Index>(order[k].second));
                    sum_l += t, sq_l += t * t, sum_r -= t, sq_r -= t * t;
                    const std::size_t nl = k + 1, nr = n - nl;
                    if (order[k].first == order[k + 1].first || nl < opts.min_samples_leaf || nr < opts.min_samples_leaf)
                        continue;
                    const double score = (sq_l - sum_l * sum_l / static_cast<double>(nl)) +
                                         (sq_r - sum_r * sum_r / static_cast<double>(nr));
                    if (score < best - 1e-12) {
                        best = score;
                        best_f = static_cast<int>(f);
                        best_t = 0.5 * (order[k].first + order[k + 1].first);
                    }
                }
            }
        }
        if (best_f < 0) return id;

        std::vector<std::size_t> lrows, rrows;
        for (auto i : rows)
            (x(static_cast<Eigen::Index>(i), best_f) <= best_t ? lrows : rrows).push_back(i);
        rows.clear();
        rows.shrink_to_fit();
        const std::size_t l = build(std::move(lrows), depth + 1);
        const std::size_t r = build(std::move(rrows), depth + 1);
        auto& node = tree.nodes_[id];
        node.feature = best_f;
        node.threshold = best_t;
        node.left = l;
        node.right = r;
        return id;
    }
};

namespace {

std::vector<std::size_t> all_rows(Eigen::Index n) {
    std::vector<std::size_t> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), 0);
    return rows;
}

}  // namespace

void DecisionTree::fit(const Eigen::MatrixXd& x, const std::vector<int>& y, std::size_t n_classes, std::uint64_t seed,
                       const std::vector<std::size_t>& rows) {
    if (x.rows() == 0) throw Error(ErrorCode::EmptyTable, "no training rows");
    nodes_.clear();
    outputs_ = n_classes;
    TreeBuilder b{x, &y, nullptr, n_classes, opts_, Rng(seed), *this, all_rows(x.cols()), {}};
    b.build(rows.empty() ? all_rows(x.rows()) : rows, 0);
}

void DecisionTree::fit_regression(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::uint64_t seed,
                                  const std::vector<std::size_t>& rows) {
    if (x.rows() == 0) throw Error(ErrorCode::EmptyTable, "no training rows");
    nodes_.clear();
    outputs_ = 1;
    TreeBuilder b{x, nullptr, &y, 1, opts_, Rng(seed), *this, all_rows(x.cols()), {}};
    b.build(rows.empty() ? all_rows(x.rows()) : rows, 0);
}

const DecisionTree::Node& DecisionTree::leaf_for(const Eigen::MatrixXd& x, Eigen::Index i) const {
    std::size_t at = 0;
    while (nodes_[at].feature >= 0) at = x(i, nodes_[at].feature) <= nodes_[at].threshold ? nodes_[at].left : nodes_[at].right;
    return nodes_[at];
}

Eigen::MatrixXd DecisionTree::predict_proba(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd p(x.rows(), static_cast<Eigen::Index>(outputs_));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const auto& v = leaf_for(x, i).value;
        for (std::size_t c = 0; c < outputs_; ++c) p(i, static_cast<Eigen::Index>(c)) = v[c];
    }
    return p;
}

Eigen::VectorXd DecisionTree::predict(const Eigen::MatrixXd& x) const {
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = leaf_for(x, i).value[0];
    return out;
}

std::size_t DecisionTree::depth() const {
    std::size_t best = 0;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [at, d] = stack.back();
        stack.pop_back();
        best = std::max(best, d);
        if (nodes_[at].feature >= 0) {
            stack.emplace_back(nodes_[at].left, d + 1);
            stack.emplace_back(nodes_[at].right, d + 1);
        }
    }
    return best;
}

namespace {

std::vector<std::size_t> bootstrap(std::size_t n, Rng& rng) {
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = rng.below(n);
    return rows;
}

}  // namespace

void RandomForest::fit(const Eigen::MatrixXd& x, const std::vector<int>& y, std::size_t n_classes, std::uint64_t seed) {
    TreeOptions t = opts_.tree;
    if (t.max_features == 0)
        t.max_features = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(x.cols()))));
    trees_.assign(opts_.n_trees, DecisionTree(t));
    Rng rng(seed);
    for (auto& tree : trees_) {
        const auto rows = bootstrap(static_cast<std::size_t>(x.rows()), rng);
        tree.fit(x, y, n_classes, rng.next_u64(), rows);
    }
}

void RandomForest::fit_regression(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::uint64_t seed) {
    TreeOptions t = opts_.tree;
    if (t.max_features == 0) t.max_features = std::max<std::size_t>(1, static_cast<std::size_t>(x.cols()) / 3);
    trees_.assign(opts_.n_trees, DecisionTree(t));
    Rng rng(seed);
    for (auto& tree : trees_) {
        const auto rows = bootstrap(static_cast<std::size_t>(x.rows()), rng);
        tree.fit_regression(x, y, rng.next_u64(), rows);
    }
}

Eigen::MatrixXd RandomForest::predict_proba(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd p = trees_.at(0).predict_proba(x);
    for (std::size_t t = 1; t < trees_.size(); ++t) p += trees_[t].predict_proba(x);
    return p / static_cast<double>(trees_.size());
}

Eigen::VectorXd RandomForest::predict(const Eigen::MatrixXd& x) const {
    Eigen::VectorXd p = trees_.at(0).predict(x);
    for (std::size_t t = 1; t < trees_.size(); ++t) p += trees_[t].predict(x);
    return p / static_cast<double>(trees_.size());
}

std::vector<int> argmax_rows(const Eigen::MatrixXd& proba) {
    std::vector<int> out(static_cast<std::size_t>(proba.rows()));
    for (Eigen::Index i = 0; i < proba.rows(); ++i) {
        Eigen::Index k = 0;
        proba.row(i).maxCoeff(&k);
        out[static_cast<std::size_t>(i)] = static_cast<int>(k);
    }
    return out;
}

double accuracy(const std::vector<int>& truth, const std::vector<int>& pred) {
    if (truth.empty() || truth.size() != pred.size()) throw Error(ErrorCode::ShapeMismatch, "label vectors differ in size");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == pred[i];
    return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double macro_f1(const std::vector<int>& truth, const std::vector<int>& pred) {
    if (truth.empty() || truth.size() != pred.size()) throw Error(ErrorCode::ShapeMismatch, "label vectors differ in size");
    std::set<int> classes(truth.begin(), truth.end());
    classes.insert(pred.begin(), pred.end());
    double total = 0.0;
    for (int c : classes) {
        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            tp += truth[i] == c && pred[i] == c;
            fp += truth[i] != c && pred[i] == c;
            fn += truth[i] == c && pred[i] != c;
        }
        total += tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
    }
    return total / static_cast<double>(classes.size());
}

namespace {

double binary_auc(const std::vector<bool>& positive, const std::vector<double>& score) {
    const std::size_t n = score.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return score[a] < score[b]; });
    double rank_sum = 0.0, n_pos = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && score[idx[j]] == score[idx[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (positive[idx[k]]) rank_sum += avg_rank, n_pos += 1.0;
        i = j;
    }
    const double n_neg = static_cast<double>(n) - n_pos;
    if (n_pos == 0.0 || n_neg == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

}  // namespace

double roc_auc(const std::vector<int>& truth, const Eigen::MatrixXd& proba) {
    if (truth.size() != static_cast<std::size_t>(proba.rows()))
        throw Error(ErrorCode::ShapeMismatch, "labels and scores differ in size");
    const auto k = proba.cols();
    std::vector<double> score(truth.size());
    std::vector<bool> positive(truth.size());
    auto one_vs_rest = [&](Eigen::Index c) {
        for (std::size_t i = 0; i < truth.size(); ++i) {
            score[i] = proba(static_cast<Eigen::Index>(i), c);
            positive[i] = truth[i] == c;
        }
        return binary_auc(positive, score);
    };
    if (k == 2) return one_vs_rest(1);
    double total = 0.0;
    int used = 0;
    for (Eigen::Index c = 0; c < k; ++c) {
        const double a = one_vs_rest(c);
        if (std::isnan(a)) continue;
        total += a;
        ++used;
    }
    return used == 0 ? std::numeric_limits<double>::quiet_NaN() : total / used;
}

double mean_squared_error(const Eigen::VectorXd& truth, const Eigen::VectorXd& pred) {
    if (truth.size() != pred.size() || truth.size() == 0)
        throw Error(ErrorCode::ShapeMismatch, "target vectors differ in size");
    return (truth - pred).squaredNorm() / static_cast<double>(truth.size());
}

}  // namespace great
