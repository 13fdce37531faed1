#include <cmath>
#include <map>

#include "great/eval.hpp"
#include "great/gmm.hpp"
#include "great/learners.hpp"
#include "support.hpp"

using namespace great;
using great::testing::make_table;

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

// Two numeric features, a categorical one and a label that depends on x.
Table labelled(std::size_t n, std::uint64_t seed, double shift = 0.0) {
    Rng rng(seed);
    std::vector<std::vector<std::string>> cells;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = rng.normal(shift, 1.0), y = rng.normal();
        const std::string c = rng.uniform() < 0.5 ? "u" : "v";
        const bool label = x + 0.3 * rng.normal() > shift;
        cells.push_back({fmt(x), fmt(y), c, label ? "yes" : "no"});
    }
    return make_table({"x", "y", "c", "label"}, cells, "label");
}

// Naive DCR oracle: exhaustive pairwise mixed distance.
double naive_dcr(const Row& s, const Table& train) {
    double best = INFINITY;
    for (const auto& r : train.rows()) {
        double d = 0.0;
        for (std::size_t j = 0; j < s.cells.size(); ++j) {
            const auto a = parse_decimal(s.cells[j]), b = parse_decimal(r.cells[j]);
            if (is_missing(s.cells[j]) || is_missing(r.cells[j])) d += s.cells[j] == r.cells[j] ? 0.0 : 1.0;
            else if (train.schema().is_numeric(j)) d += std::abs(*a - *b);
            else d += s.cells[j] == r.cells[j] ? 0.0 : 1.0;
        }
        best = std::min(best, d);
    }
    return best;
}

}  // namespace

TEST(Stat, MeanAndSampleStd) {
    auto s = summarize({1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(s.mean, 2.5);
    EXPECT_NEAR(s.std, std::sqrt(5.0 / 3.0), 1e-12);
    EXPECT_DOUBLE_EQ(summarize({7.0}).std, 0.0);
}

TEST(Dcr, Examples) {
    auto train = make_table({"a", "b"}, {{"1", "2"}, {"4", "6"}});
    auto synth = Table(train.schema(), {Row{{"1", "2"}}, Row{{"2", "2"}}});
    auto r = dcr(synth, train);
    EXPECT_EQ(r.distances, (std::vector<double>{0.0, 1.0}));
    EXPECT_DOUBLE_EQ(r.min, 0.0);
    EXPECT_DOUBLE_EQ(r.mean, 0.5);
    EXPECT_DOUBLE_EQ(r.zero_fraction, 0.5);

    auto mixed = make_table({"job", "age"}, {{"doctor", "30"}, {"nurse", "60"}});
    auto probe = Table(mixed.schema(), {Row{{"nurse", "33"}}});
    // Nearest is (doctor, 30): 1 for the category plus 3 on age.
    EXPECT_DOUBLE_EQ(dcr(probe, mixed).distances[0], 4.0);
}

TEST(Dcr, SelfDistanceIsZero) {
    auto t = labelled(300, 1);
    auto r = dcr(t, t);
    for (double d : r.distances) EXPECT_EQ(d, 0.0);
    EXPECT_DOUBLE_EQ(r.zero_fraction, 1.0);
}

TEST(Dcr, MatchesNaiveOracle) {
    auto train = labelled(150, 2);
    auto synth = labelled(80, 3);
    std::vector<Row> rows = synth.rows();
    rows[0].cells[2] = "";
    rows[1].cells[0] = "";
    synth = Table(conform(synth, train.schema()).schema(), rows, synth.target());
    auto r = dcr(synth, train, false, 3);
    ASSERT_EQ(r.distances.size(), 80u);
    for (std::size_t i = 0; i < 80; ++i) EXPECT_NEAR(r.distances[i], naive_dcr(synth.row(i), train), 1e-9) << i;
    EXPECT_EQ(dcr(synth, train, false, 1).distances, r.distances);
}

TEST(Dcr, NormalizedDividesByTrainRange) {
    auto train = make_table({"a"}, {{"0"}, {"10"}});
    auto probe = Table(train.schema(), {Row{{"2"}}});
    EXPECT_DOUBLE_EQ(dcr(probe, train, true).distances[0], 0.2);
}

TEST(Dcr, HistogramCsv) {
    DcrResult r;
    r.distances = {0.0, 0.0, 1.0, 2.0};
    auto csv = dcr_histogram_csv(r, 2);
    EXPECT_NE(csv.find("lower,upper,count"), std::string::npos);
    EXPECT_NE(csv.find(",2\n"), std::string::npos);
}

TEST(Learners, LogisticRegressionSeparable) {
    Rng rng(4);
    Eigen::MatrixXd x(200, 2);
    std::vector<int> y(200);
    for (int i = 0; i < 200; ++i) {
        y[static_cast<std::size_t>(i)] = i % 2;
        x(i, 0) = (i % 2 ? 3.0 : -3.0) + rng.normal(0.0, 0.5);
        x(i, 1) = rng.normal();
    }
    LogisticRegression lr;
    lr.fit(x, y, 2);
    auto proba = lr.predict_proba(x);
    EXPECT_DOUBLE_EQ(accuracy(y, argmax_rows(proba)), 1.0);
    for (Eigen::Index i = 0; i < proba.rows(); ++i) EXPECT_NEAR(proba.row(i).sum(), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(roc_auc(y, proba), 1.0);
}

TEST(Learners, TreeLearnsXor) {
    Eigen::MatrixXd x(400, 2);
    std::vector<int> y(400);
    Rng rng(5);
    for (int i = 0; i < 400; ++i) {
        const int a = static_cast<int>(rng.below(2)), b = static_cast<int>(rng.below(2));
        x(i, 0) = a + rng.uniform() * 0.1;
        x(i, 1) = b + rng.uniform() * 0.1;
        y[static_cast<std::size_t>(i)] = a ^ b;
    }
    DecisionTree tree;
    tree.fit(x, y, 2);
    EXPECT_DOUBLE_EQ(accuracy(y, argmax_rows(tree.predict_proba(x))), 1.0);
    EXPECT_GE(tree.depth(), 2u);

    TreeOptions shallow;
    shallow.max_depth = 1;
    DecisionTree stump(shallow);
    stump.fit(x, y, 2);
    EXPECT_LE(stump.depth(), 1u);
    EXPECT_LT(accuracy(y, argmax_rows(stump.predict_proba(x))), 0.8);
}

TEST(Learners, RegressionModels) {
    Rng rng(6);
    Eigen::MatrixXd x(500, 2);
    Eigen::VectorXd y(500);
    for (int i = 0; i < 500; ++i) {
        x(i, 0) = rng.normal();
        x(i, 1) = rng.normal();
        y(i) = 2.0 * x(i, 0) - x(i, 1) + 5.0 + 0.1 * rng.normal();
    }
    LinearRegression lin;
    lin.fit(x, y);
    EXPECT_LT(mean_squared_error(y, lin.predict(x)), 0.02);
    RandomForest forest({30, {}});
    forest.fit_regression(x, y, 1);
    EXPECT_LT(mean_squared_error(y, forest.predict(x)), 0.5);
    DecisionTree tree({64, 2, 1, 0});
    tree.fit_regression(x, y);
    EXPECT_LT(mean_squared_error(y, tree.predict(x)), 1e-6);
}

TEST(Metrics, Oracles) {
    EXPECT_DOUBLE_EQ(accuracy({0, 1, 1, 0}, {0, 1, 0, 0}), 0.75);
    // Class 0: P = 2/3, R = 1 -> F1 0.8; class 1: P = 1, R = 0.5 -> F1 2/3.
    EXPECT_NEAR(macro_f1({0, 1, 1, 0}, {0, 1, 0, 0}), (0.8 + 2.0 / 3.0) / 2, 1e-12);
    Eigen::MatrixXd p(4, 2);
    p << 0.9, 0.1, 0.6, 0.4, 0.35, 0.65, 0.2, 0.8;
    // Positives {1, 3} outrank the negatives in 3 of 4 pairs.
    EXPECT_DOUBLE_EQ(roc_auc({0, 1, 0, 1}, p), 0.75);
    EXPECT_TRUE(std::isnan(roc_auc({1, 1, 1, 1}, p)));
    Eigen::VectorXd a(2), b(2);
    a << 1, 2;
    b << 2, 4;
    EXPECT_DOUBLE_EQ(mean_squared_error(a, b), 2.5);
}

TEST(Featurizer, OneHotOverUnionOfSupports) {
    auto a = make_table({"c", "n"}, {{"x", "1"}, {"y", "2"}});
    auto b = make_table({"c", "n"}, {{"z", "3"}, {"", "4"}});
    Featurizer f({&a, &b});
    EXPECT_EQ(f.width(), 4u);
    auto m = f.transform(b);
    EXPECT_EQ(m.row(0).sum(), 1.0 + 3.0);
    EXPECT_EQ(m.row(1).head(3).sum(), 0.0);
    Featurizer without({&a}, std::string("n"));
    EXPECT_EQ(without.width(), 2u);
}

TEST(Discriminator, IidHalvesAreIndistinguishable) {
    auto t = labelled(800, 7);
    auto [a, b] = split(t, 0.5, 1);
    auto [a_train, a_test] = split(a, 0.3, 2);
    auto [b_train, b_test] = split(b, 0.3, 3);
    DiscriminatorOptions opts;
    opts.depths = {6};
    opts.trees = {30};
    opts.folds = 3;
    auto r = discriminator(a_train, b_train, a_test, b_test, {1, 2, 3}, opts);
    EXPECT_GE(r.accuracy.mean, 0.40);
    EXPECT_LE(r.accuracy.mean, 0.60);
    EXPECT_EQ(r.accuracy.values.size(), 3u);
    EXPECT_EQ(r.chosen.size(), 3u);
}

TEST(Discriminator, DisjointRangesSeparate) {
    auto real = labelled(300, 8, 0.0), fake = labelled(300, 9, 50.0);
    auto [r_train, r_test] = split(real, 0.3, 1);
    auto [f_train, f_test] = split(fake, 0.3, 1);
    DiscriminatorOptions opts;
    opts.depths = {4};
    opts.trees = {10};
    opts.folds = 2;
    auto r = discriminator(r_train, conform(f_train, real.schema()), r_test, conform(f_test, real.schema()), {1}, opts);
    EXPECT_GT(r.accuracy.mean, 0.95);
    auto tiny = Table(real.schema(), {real.row(0)});
    EXPECT_GREAT_ERROR(discriminator(tiny, r_train, r_test, r_test, {1}, opts), ErrorCode::TooFewRows);
}

TEST(Mle, IdentityMatchesBaseline) {
    auto t = labelled(600, 10);
    auto [train, test] = split(t, 0.3, 4);
    MleOptions opts;
    opts.forest_trees = 20;
    auto [syn, real] = mle(train, train, test, "label", {1, 2, 3, 4, 5}, opts);
    for (const auto& [name, scores] : real.models) {
        EXPECT_NEAR(syn.models.at(name).accuracy.mean, scores.accuracy.mean, 0.01) << name;
        EXPECT_EQ(scores.accuracy.values.size(), 5u);
    }
    EXPECT_GT(real.models.at("linear").accuracy.mean, 0.8);
    auto j = real.to_json();
    EXPECT_TRUE(j["models"].contains("random_forest"));
}

TEST(Mle, ShuffledLabelsLoseTheSignal) {
    auto t = labelled(1000, 11);
    auto [train, test] = split(t, 0.3, 5);
    // Label-independent synthetic data: labels permuted across rows.
    auto rows = train.rows();
    Rng rng(12);
    for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1].cells[3], rows[rng.below(i)].cells[3]);
    auto synth = train.with_rows(rows);
    std::map<std::string, double> freq;
    for (const auto& v : test.column(3)) freq[v] += 1.0 / static_cast<double>(test.num_rows());
    const double majority = std::max(freq["yes"], freq["no"]);
    MleOptions opts;
    opts.forest_trees = 20;
    auto [syn, real] = mle(train, synth, test, "label", {1, 2, 3}, opts);
    // With labels independent of x, the sign of the fitted slope is noise, so
    // synthetic-trained accuracy can sit anywhere below the real baseline.
    EXPECT_GT(real.models.at("linear").accuracy.mean, majority + 0.2);
    for (const auto& [name, scores] : real.models)
        EXPECT_LT(syn.models.at(name).accuracy.mean, scores.accuracy.mean - 0.15) << name;
}

TEST(Mle, Errors) {
    auto t = labelled(100, 13);
    EXPECT_GREAT_ERROR(mle(t, t, t, "missing", {1}), ErrorCode::UnknownFeature);
    auto rows = t.rows();
    for (auto& r : rows) r.cells[3] = "yes";
    auto single = Table(t.schema(), rows);
    EXPECT_GREAT_ERROR(mle(single, single, t, "label", {1}), ErrorCode::SingleClassTarget);
    auto other = make_table({"q"}, {{"1"}});
    EXPECT_GREAT_ERROR(mle(t, other, t, "label", {1}), ErrorCode::SchemaMismatch);
}

TEST(Likelihood, IdentityAndSeparation) {
    Rng rng(14);
    std::vector<std::vector<std::string>> cells;
    for (int i = 0; i < 600; ++i) cells.push_back({fmt(rng.normal(i % 2 ? 3 : -3, 1)), fmt(rng.normal())});
    auto t = make_table({"x", "y"}, cells);
    auto id = likelihood_fitness(t, t, t, 2, 1);
    EXPECT_EQ(id.l_syn, id.l_test);

    GmmOptions o;
    o.n_components = 2;
    Eigen::MatrixXd x(600, 2);
    for (Eigen::Index i = 0; i < 600; ++i) x(i, 0) = t.numeric(i, 0), x(i, 1) = t.numeric(i, 1);
    auto g = fit_gmm(x, o, derive_seed(1, "likelihood"));
    EXPECT_NEAR(id.l_syn, g.mean_log_density(x), 1e-9);

    std::vector<std::vector<std::string>> far;
    for (int i = 0; i < 600; ++i) far.push_back({fmt(rng.normal(20, 1)), fmt(rng.normal())});
    auto shifted = conform(make_table({"x", "y"}, far), t.schema());
    auto r = likelihood_fitness(t, t, shifted, 2, 1);
    EXPECT_LT(r.l_syn, id.l_syn - 10);
    EXPECT_LT(r.l_test, id.l_test - 10);
    auto cat = make_table({"c"}, {{"a"}, {"b"}});
    EXPECT_GREAT_ERROR(likelihood_fitness(cat, cat, cat, 1), ErrorCode::NonNumericSchema);
}

TEST(Histogram, SinglePointAndUniformGrid) {
    auto one = make_table({"x", "y"}, {{"1", "1"}});
    auto h = joint_histogram(one, "x", "y", 2, std::array<double, 4>{0, 2, 0, 2});
    std::size_t total = 0, nonzero = 0;
    for (const auto& col : h.counts)
        for (auto c : col) total += c, nonzero += c > 0;
    EXPECT_EQ(total, 1u);
    EXPECT_EQ(nonzero, 1u);

    // Uniform data: per-cell counts within 3 sigma of the multinomial mean.
    Rng rng(15);
    std::vector<std::vector<std::string>> cells;
    const std::size_t n = 16000, bins = 4;
    for (std::size_t i = 0; i < n; ++i) cells.push_back({fmt(rng.uniform()), fmt(rng.uniform())});
    auto u = make_table({"x", "y"}, cells);
    auto g = joint_histogram(u, "x", "y", bins, std::array<double, 4>{0, 1, 0, 1});
    const double p = 1.0 / (bins * bins), mean = n * p, sigma = std::sqrt(n * p * (1 - p));
    for (const auto& col : g.counts)
        for (auto c : col) EXPECT_NEAR(static_cast<double>(c), mean, 3 * sigma);
    auto csv = g.to_csv();
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(bins + 1));

    auto range = joint_range({&one, &u}, "x", "y");
    EXPECT_LE(range[0], 0.0);
    EXPECT_GE(range[1], 1.0);
    auto mixed = make_table({"x", "c"}, {{"1", "a"}});
    EXPECT_GREAT_ERROR(joint_histogram(mixed, "x", "c", 2), ErrorCode::NonNumericFeature);
}

TEST(Conform, RequiresSameLayout) {
    auto a = make_table({"x", "c"}, {{"1", "a"}});
    auto b = make_table({"x", "c"}, {{"5", "z"}});
    auto c = conform(b, a.schema());
    EXPECT_EQ(c.schema(), a.schema());
    EXPECT_EQ(c.rows(), b.rows());
    EXPECT_GREAT_ERROR(conform(make_table({"y", "c"}, {{"1", "a"}}), a.schema()), ErrorCode::SchemaMismatch);
}
