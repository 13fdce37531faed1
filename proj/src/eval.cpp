#include "great/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <thread>

#include "great/error.hpp"
#include "great/gmm.hpp"
#include "great/rng.hpp"

namespace great {

Stat summarize(std::vector<double> values) {
    Stat s;
    s.values = std::move(values);
    if (s.values.empty()) return s;
    const double n = static_cast<double>(s.values.size());
    s.mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / n;
    if (s.values.size() > 1) {
        double ss = 0.0;
        for (double v : s.values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / (n - 1.0));
    }
    return s;
}

nlohmann::json to_json(const Stat& s) { return {{"mean", s.mean}, {"std", s.std}, {"values", s.values}}; }

Table conform(const Table& table, const Schema& schema) {
    if (!table.schema().same_layout(schema))
        throw Error(ErrorCode::SchemaMismatch, "tables do not share feature names and kinds");
    return Table(schema, table.rows(), table.target());
}

namespace {

void require_same_layout(const Table& a, const Table& b) {
    if (!a.schema().same_layout(b.schema()))
        throw Error(ErrorCode::SchemaMismatch, "tables do not share feature names and kinds");
}

std::string fmt(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

// Column-wise view used by the DCR loop: numbers (NaN when missing) or
// category codes (-1 when missing).
struct Encoded {
    std::vector<std::vector<double>> cols;
};

}  // namespace

nlohmann::json DcrResult::to_json(bool with_distances) const {
    nlohmann::json j = {{"rows", distances.size()},
                        {"min", min},
                        {"median", median},
                        {"mean", mean},
                        {"zero_fraction", zero_fraction}};
    if (with_distances) j["distances"] = distances;
    return j;
}

DcrResult dcr(const Table& synthetic, const Table& train, bool normalized, std::size_t workers) {
    require_same_layout(synthetic, train);
    if (train.num_rows() == 0) throw Error(ErrorCode::EmptyTable, "train table is empty");
    const Schema& schema = train.schema();
    const std::size_t m = schema.size();
    const double nan = std::numeric_limits<double>::quiet_NaN();

    Encoded syn, tr;
    syn.cols.resize(m);
    tr.cols.resize(m);
    std::vector<double> scale(m, 1.0);
    std::vector<bool> numeric(m);
    for (std::size_t j = 0; j < m; ++j) {
        numeric[j] = schema.is_numeric(j);
        std::map<std::string, double> codes;
        auto encode_col = [&](const Table& t, std::vector<double>& out) {
            out.reserve(t.num_rows());
            for (std::size_t i = 0; i < t.num_rows(); ++i) {
                const auto& cell = t.row(i).cells[j];
                if (is_missing(cell))
                    out.push_back(numeric[j] ? nan : -1.0);
                else if (numeric[j])
                    out.push_back(t.numeric(i, j));
                else
                    out.push_back(codes.emplace(cell, static_cast<double>(codes.size())).first->second);
            }
        };
        encode_col(train, tr.cols[j]);
        encode_col(synthetic, syn.cols[j]);
        if (normalized && numeric[j]) {
            double lo = INFINITY, hi = -INFINITY;
            for (double v : tr.cols[j])
                if (!std::isnan(v)) lo = std::min(lo, v), hi = std::max(hi, v);
            if (hi > lo) scale[j] = hi - lo;
        }
    }

    auto cell_distance = [&](std::size_t j, double a, double b) {
        if (!numeric[j]) return a == b ? 0.0 : 1.0;
        const bool ma = std::isnan(a), mb = std::isnan(b);
        if (ma || mb) return ma && mb ? 0.0 : 1.0;
        return std::abs(a - b) / scale[j];
    };

    DcrResult r;
    r.distances.assign(synthetic.num_rows(), 0.0);
    auto work = [&](std::size_t w, std::size_t stride) {
        for (std::size_t s = w; s < synthetic.num_rows(); s += stride) {
            double best = INFINITY;
            for (std::size_t t = 0; t < train.num_rows() && best > 0.0; ++t) {
                double d = 0.0;
                for (std::size_t j = 0; j < m && d < best; ++j) d += cell_distance(j, syn.cols[j][s], tr.cols[j][t]);
                best = std::min(best, d);
            }
            r.distances[s] = best;
        }
    };
    workers = std::max<std::size_t>(1, workers);
    if (workers == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(work, w, workers);
        for (auto& t : threads) t.join();
    }

    if (!r.distances.empty()) {
        auto sorted = r.distances;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t n = sorted.size();
        r.min = sorted.front();
        r.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
        r.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
        r.zero_fraction = static_cast<double>(std::count(sorted.begin(), sorted.end(), 0.0)) / static_cast<double>(n);
    }
    return r;
}

std::string dcr_histogram_csv(const DcrResult& result, std::size_t bins) {
    bins = std::max<std::size_t>(1, bins);
    double hi = 0.0;
    for (double d : result.distances) hi = std::max(hi, d);
    const double width = hi > 0.0 ? hi / static_cast<double>(bins) : 1.0;
    std::vector<std::size_t> counts(bins, 0);
    for (double d : result.distances)
        ++counts[std::min(bins - 1, static_cast<std::size_t>(d / width))];
    std::string out = "lower,upper,count\n";
    for (std::size_t b = 0; b < bins; ++b)
        out += fmt(static_cast<double>(b) * width) + "," + fmt(static_cast<double>(b + 1) * width) + "," +
               std::to_string(counts[b]) + "\n";
    return out;
}

nlohmann::json DiscriminatorResult::to_json() const {
    nlohmann::json c = nlohmann::json::array();
    for (auto [d, t] : chosen) c.push_back({{"depth", d}, {"trees", t}});
    return {{"accuracy", great::to_json(accuracy)}, {"chosen", c}};
}

DiscriminatorResult discriminator(const Table& real_train, const Table& synth_train, const Table& real_test,
                                  const Table& synth_test, const std::vector<std::uint64_t>& seeds,
                                  const DiscriminatorOptions& options) {
    for (const Table* t : {&synth_train, &real_test, &synth_test}) require_same_layout(real_train, *t);
    for (const Table* t : {&real_train, &synth_train, &real_test, &synth_test})
        if (t->num_rows() < 20) throw Error(ErrorCode::TooFewRows, "discriminator needs at least 20 rows per side");
    if (seeds.empty() || options.depths.empty() || options.trees.empty() || options.folds < 2)
        throw Error(ErrorCode::InvalidValue, "discriminator needs seeds, a non-empty grid and at least 2 folds");

    const Featurizer feat({&real_train, &synth_train, &real_test, &synth_test});
    const std::size_t n_real = real_train.num_rows(), n_syn = synth_train.num_rows();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n_real + n_syn), static_cast<Eigen::Index>(feat.width()));
    x << feat.transform(real_train), feat.transform(synth_train);
    std::vector<int> y(n_real + n_syn, 0);
    std::fill_n(y.begin(), n_real, 1);

    const std::size_t m = std::min(real_test.num_rows(), synth_test.num_rows());
    const Eigen::MatrixXd xr = feat.transform(real_test), xs = feat.transform(synth_test);
    Eigen::MatrixXd xt(static_cast<Eigen::Index>(2 * m), x.cols());
    xt << xr.topRows(static_cast<Eigen::Index>(m)), xs.topRows(static_cast<Eigen::Index>(m));
    std::vector<int> yt(2 * m, 0);
    std::fill_n(yt.begin(), m, 1);

    DiscriminatorResult result;
    std::vector<double> accs;
    const std::size_t n = y.size();
    for (std::uint64_t seed : seeds) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(seed, "cv"));
        for (std::size_t i = n; i-- > 1;) std::swap(order[i], order[rng.below(i + 1)]);

        double best_cv = -1.0;
        std::pair<std::size_t, std::size_t> best{options.depths[0], options.trees[0]};
        for (std::size_t depth : options.depths) {
            for (std::size_t trees : options.trees) {
                double cv = 0.0;
                for (std::size_t f = 0; f < options.folds; ++f) {
                    std::vector<std::size_t> tr, va;
                    for (std::size_t k = 0; k < n; ++k) (k % options.folds == f ? va : tr).push_back(order[k]);
                    Eigen::MatrixXd xtr(static_cast<Eigen::Index>(tr.size()), x.cols());
                    Eigen::MatrixXd xva(static_cast<Eigen::Index>(va.size()), x.cols());
                    std::vector<int> ytr, yva;
                    for (std::size_t k = 0; k < tr.size(); ++k)
                        xtr.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(tr[k])), ytr.push_back(y[tr[k]]);
                    for (std::size_t k = 0; k < va.size(); ++k)
                        xva.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(va[k])), yva.push_back(y[va[k]]);
                    RandomForest rf({trees, {depth, 2, 1, 0}});
                    rf.fit(xtr, ytr, 2, derive_seed(derive_seed(seed, "cv-forest"), f));
                    cv += accuracy(yva, argmax_rows(rf.predict_proba(xva)));
                }
                cv /= static_cast<double>(options.folds);
                if (cv > best_cv) best_cv = cv, best = {depth, trees};
            }
        }
        RandomForest rf({best.second, {best.first, 2, 1, 0}});
        rf.fit(x, y, 2, derive_seed(seed, "forest"));
        accs.push_back(accuracy(yt, argmax_rows(rf.predict_proba(xt))));
        result.chosen.push_back(best);
    }
    result.accuracy = summarize(std::move(accs));
    return result;
}

nlohmann::json MleResult::to_json() const {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [name, s] : models) {
        if (classification)
            m[name] = {{"accuracy", great::to_json(s.accuracy)},
                       {"roc_auc", great::to_json(s.roc_auc)},
                       {"macro_f1", great::to_json(s.macro_f1)}};
        else
            m[name] = {{"mse", great::to_json(s.mse)}};
    }
    return {{"task", classification ? "classification" : "regression"}, {"models", m}};
}

std::pair<MleResult, MleResult> mle(const Table& real_train, const Table& synth_train, const Table& real_test,
                                    const std::string& target, const std::vector<std::uint64_t>& seeds,
                                    const MleOptions& options) {
    require_same_layout(real_train, synth_train);
    require_same_layout(real_train, real_test);
    if (seeds.empty()) throw Error(ErrorCode::InvalidValue, "mle needs at least one seed");
    const std::size_t t = real_train.schema().require(target);
    const bool classification = !real_train.schema().is_numeric(t);
    const Featurizer feat({&real_train, &synth_train, &real_test}, target);
    const Eigen::MatrixXd x_test = feat.transform(real_test);

    std::vector<std::string> classes;
    std::vector<int> y_test;
    Eigen::VectorXd r_test;
    if (classification) {
        classes = class_labels({&real_train, &synth_train, &real_test}, t);
        y_test = encode_labels(real_test, t, classes);
    } else {
        r_test = numeric_target(real_test, t);
    }

    auto run = [&](const Table& train) {
        MleResult res;
        res.classification = classification;
        const Eigen::MatrixXd x = feat.transform(train);
        std::map<std::string, std::array<std::vector<double>, 4>> raw;
        if (classification) {
            const auto y = encode_labels(train, t, classes);
            if (std::all_of(y.begin(), y.end(), [&](int v) { return v == y[0]; }))
                throw Error(ErrorCode::SingleClassTarget, "target '" + target + "' has a single class in training data");
            auto score = [&](const std::string& name, const Eigen::MatrixXd& p) {
                const auto pred = argmax_rows(p);
                raw[name][0].push_back(accuracy(y_test, pred));
                raw[name][1].push_back(roc_auc(y_test, p));
                raw[name][2].push_back(macro_f1(y_test, pred));
            };
            // The linear model and the full-feature tree are deterministic, so
            // they are fit once and their score repeated for every seed.
            LogisticRegression lr({options.max_iter, 1.0, 0.0});
            lr.fit(x, y, classes.size());
            const Eigen::MatrixXd p_lr = lr.predict_proba(x_test);
            DecisionTree tree({options.tree_depth, 2, 1, 0});
            tree.fit(x, y, classes.size());
            const Eigen::MatrixXd p_tree = tree.predict_proba(x_test);
            for (std::uint64_t seed : seeds) {
                score("linear", p_lr);
                score("decision_tree", p_tree);
                RandomForest rf({options.forest_trees, {options.forest_depth, 2, 1, 0}});
                rf.fit(x, y, classes.size(), derive_seed(seed, "mle-forest"));
                score("random_forest", rf.predict_proba(x_test));
            }
        } else {
            const auto y = numeric_target(train, t);
            LinearRegression lin({options.max_iter, 1.0});
            lin.fit(x, y);
            const double mse_lin = mean_squared_error(r_test, lin.predict(x_test));
            DecisionTree tree({options.tree_depth, 2, 1, 0});
            tree.fit_regression(x, y);
            const double mse_tree = mean_squared_error(r_test, tree.predict(x_test));
            for (std::uint64_t seed : seeds) {
                raw["linear"][3].push_back(mse_lin);
                raw["decision_tree"][3].push_back(mse_tree);
                RandomForest rf({options.forest_trees, {options.forest_depth, 2, 1, 0}});
                rf.fit_regression(x, y, derive_seed(seed, "mle-forest"));
                raw["random_forest"][3].push_back(mean_squared_error(r_test, rf.predict(x_test)));
            }
        }
        for (auto& [name, v] : raw)
            res.models[name] = {summarize(v[0]), summarize(v[1]), summarize(v[2]), summarize(v[3])};
        return res;
    };
    return {run(synth_train), run(real_train)};
}

nlohmann::json LikelihoodResult::to_json() const { return {{"l_syn", l_syn}, {"l_test", l_test}}; }

namespace {

Eigen::MatrixXd numeric_matrix(const Table& t) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(t.num_rows()), static_cast<Eigen::Index>(t.num_features()));
    for (std::size_t i = 0; i < t.num_rows(); ++i)
        for (std::size_t j = 0; j < t.num_features(); ++j) {
            if (is_missing(t.row(i).cells[j]))
                throw Error(ErrorCode::InvalidValue, "likelihood fitness needs complete rows");
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.numeric(i, j);
        }
    return x;
}

}  // namespace

LikelihoodResult likelihood_fitness(const Table& real_train, const Table& real_test, const Table& synthetic,
                                    std::size_t n_components, std::uint64_t seed) {
    require_same_layout(real_train, real_test);
    require_same_layout(real_train, synthetic);
    for (std::size_t j = 0; j < real_train.num_features(); ++j)
        if (!real_train.schema().is_numeric(j))
            throw Error(ErrorCode::NonNumericSchema,
                        "likelihood fitness needs numeric features; '" + real_train.schema().features[j].name +
                            "' is categorical");
    GmmOptions opts;
    opts.n_components = n_components;
    opts.variance_floor = 1e-6;
    const auto fit_seed = derive_seed(seed, "likelihood");
    const Eigen::MatrixXd syn = numeric_matrix(synthetic);
    const Gmm on_real = fit_gmm(numeric_matrix(real_train), opts, fit_seed);
    const Gmm on_syn = fit_gmm(syn, opts, fit_seed);
    return {on_real.mean_log_density(syn), on_syn.mean_log_density(numeric_matrix(real_test))};
}

std::array<double, 4> joint_range(const std::vector<const Table*>& tables, const std::string& feature_x,
                                  const std::string& feature_y) {
    std::array<double, 4> r{INFINITY, -INFINITY, INFINITY, -INFINITY};
    for (const Table* t : tables) {
        const auto jx = t->schema().require(feature_x), jy = t->schema().require(feature_y);
        if (!t->schema().is_numeric(jx) || !t->schema().is_numeric(jy))
            throw Error(ErrorCode::NonNumericFeature, "joint histogram needs two numeric features");
        for (std::size_t i = 0; i < t->num_rows(); ++i) {
            const auto& c = t->row(i).cells;
            if (is_missing(c[jx]) || is_missing(c[jy])) continue;
            const double x = t->numeric(i, jx), y = t->numeric(i, jy);
            r = {std::min(r[0], x), std::max(r[1], x), std::min(r[2], y), std::max(r[3], y)};
        }
    }
    if (r[0] > r[1]) r = {0.0, 0.0, 0.0, 0.0};
    return r;
}

Histogram2D joint_histogram(const Table& table, const std::string& feature_x, const std::string& feature_y,
                            std::size_t bins, std::optional<std::array<double, 4>> range) {
    if (bins < 1) throw Error(ErrorCode::InvalidValue, "histogram needs at least one bin");
    const auto r = range ? *range : joint_range({&table}, feature_x, feature_y);
    const auto jx = table.schema().require(feature_x), jy = table.schema().require(feature_y);
    if (!table.schema().is_numeric(jx) || !table.schema().is_numeric(jy))
        throw Error(ErrorCode::NonNumericFeature, "joint histogram needs two numeric features");
    Histogram2D h{feature_x, feature_y, r[0], r[1], r[2], r[3], bins,
                  std::vector<std::vector<std::size_t>>(bins, std::vector<std::size_t>(bins, 0))};
    auto bin_of = [&](double v, double lo, double hi) -> std::optional<std::size_t> {
        if (v < lo || v > hi) return std::nullopt;
        if (hi <= lo) return 0;
        return std::min(bins - 1, static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins)));
    };
    for (std::size_t i = 0; i < table.num_rows(); ++i) {
        const auto& c = table.row(i).cells;
        if (is_missing(c[jx]) || is_missing(c[jy])) continue;
        const auto bx = bin_of(table.numeric(i, jx), r[0], r[1]);
        const auto by = bin_of(table.numeric(i, jy), r[2], r[3]);
        if (bx && by) ++h.counts[*bx][*by];
    }
    return h;
}

std::string Histogram2D::to_csv() const {
    const double wx = (x_max - x_min) / static_cast<double>(bins), wy = (y_max - y_min) / static_cast<double>(bins);
    std::string out = feature_x + "\\" + feature_y;
    for (std::size_t b = 0; b < bins; ++b) out += "," + fmt(y_min + static_cast<double>(b) * wy);
    out += "\n";
    for (std::size_t a = 0; a < bins; ++a) {
        out += fmt(x_min + static_cast<double>(a) * wx);
        for (std::size_t b = 0; b < bins; ++b) out += "," + std::to_string(counts[a][b]);
        out += "\n";
    }
    return out;
}

}  // namespace great
