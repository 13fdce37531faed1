#include <cmath>
#include <map>
#include <numbers>

#include "great/gmm.hpp"
#include "great/sampler.hpp"
#include "great/train.hpp"
#include "support.hpp"

using namespace great;
using great::testing::chi_square_p;
using great::testing::make_table;
using great::testing::softmax;

namespace {

std::vector<std::size_t> draw_counts(const std::vector<double>& logits, double t, std::size_t n, std::uint64_t seed) {
    Eigen::VectorXf v(static_cast<Eigen::Index>(logits.size()));
    for (std::size_t i = 0; i < logits.size(); ++i) v(static_cast<Eigen::Index>(i)) = static_cast<float>(logits[i]);
    Rng rng(seed);
    std::vector<std::size_t> counts(logits.size(), 0);
    for (std::size_t i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(next_token(v, t, rng))];
    return counts;
}

}  // namespace

TEST(NextToken, UniformLogits) {
    for (double t : {0.5, 1.0, 3.0}) {
        auto counts = draw_counts({0.7, 0.7, 0.7, 0.7}, t, 100000, 1);
        for (auto c : counts) EXPECT_NEAR(c / 100000.0, 0.25, 0.01);
        EXPECT_GT(chi_square_p(counts, {0.25, 0.25, 0.25, 0.25}), 0.01);
    }
}

TEST(NextToken, LowTemperatureSharpens) {
    auto counts = draw_counts({5, 0, 0}, 0.01, 100000, 2);
    EXPECT_GT(counts[0] / 100000.0, 0.999);
}

TEST(NextToken, TwoTokenClosedForm) {
    auto counts = draw_counts({1, 0}, 1.0, 100000, 3);
    const double e = std::numbers::e;
    EXPECT_NEAR(counts[0] / 100000.0, e / (e + 1), 0.01);
    EXPECT_NEAR(e / (e + 1), 0.7311, 1e-4);
}

TEST(NextToken, MatchesSoftmaxOnRandomLogits) {
    Rng rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> logits(6);
        for (auto& l : logits) l = rng.normal(0.0, 2.0);
        for (double t : {0.5, 0.7, 1.0})
            EXPECT_GT(chi_square_p(draw_counts(logits, t, 50000, 10 + trial), softmax(logits, t)), 0.001);
    }
}

TEST(NextToken, ArgmaxProbabilityMonotoneInTemperature) {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> logits(5);
        for (auto& l : logits) l = rng.normal(0.0, 1.5);
        const auto top = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
        double prev = 0.0;
        for (double t : {2.0, 1.0, 0.5, 0.1}) {
            const double p = softmax(logits, t)[top];
            EXPECT_GE(p, prev - 1e-15);
            prev = p;
        }
    }
    // The sampler follows the same trend.
    const std::vector<double> logits{1.0, 0.3, -0.5};
    double prev = 0.0;
    for (double t : {2.0, 1.0, 0.5, 0.1}) {
        const double f = draw_counts(logits, t, 20000, 6)[0] / 20000.0;
        EXPECT_GT(f, prev);
        prev = f;
    }
}

TEST(NextToken, Errors) {
    Rng rng(1);
    Eigen::VectorXf v(3);
    v << 1.0f, 2.0f, 3.0f;
    EXPECT_GREAT_ERROR(next_token(v, 0.0, rng), ErrorCode::InvalidValue);
    EXPECT_GREAT_ERROR(next_token(v, -1.0, rng), ErrorCode::InvalidValue);
    v(1) = std::nanf("");
    EXPECT_GREAT_ERROR(next_token(v, 1.0, rng), ErrorCode::NonFiniteLogits);
    v(1) = INFINITY;
    EXPECT_GREAT_ERROR(next_token(v, 1.0, rng), ErrorCode::NonFiniteLogits);
}

TEST(Gmm, SingleGaussianMoments) {
    Rng rng(7);
    Eigen::MatrixXd x(10000, 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, 0) = rng.normal();
    auto g = fit_gmm(x, {}, 1);
    ASSERT_EQ(g.size(), 1u);
    EXPECT_NEAR(g.means[0](0), 0.0, 0.05);
    EXPECT_NEAR(g.covariances[0](0, 0), 1.0, 0.1);
    EXPECT_DOUBLE_EQ(g.weights[0], 1.0);
}

TEST(Gmm, SeparatedMixtureMeans) {
    Rng rng(8);
    Eigen::MatrixXd x(4000, 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, 0) = rng.normal(i % 2 ? 5.0 : -5.0, 1.0);
    GmmOptions o;
    o.n_components = 2;
    auto g = fit_gmm(x, o, 3);
    std::vector<double> means{g.means[0](0), g.means[1](0)};
    std::sort(means.begin(), means.end());
    EXPECT_NEAR(means[0], -5.0, 0.1);
    EXPECT_NEAR(means[1], 5.0, 0.1);
    EXPECT_NEAR(g.weights[0], 0.5, 0.03);
}

TEST(Gmm, LogLikelihoodNeverDecreases) {
    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::MatrixXd x(300, 2);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double c = static_cast<double>(rng.below(3)) * 3.0;
            x(i, 0) = rng.normal(c, 1.0);
            x(i, 1) = rng.normal(-c, 0.5) + 0.3 * x(i, 0);
        }
        GmmOptions o;
        o.n_components = 1 + static_cast<std::size_t>(trial % 5);
        auto g = fit_gmm(x, o, static_cast<std::uint64_t>(trial));
        ASSERT_GE(g.loglik_trace.size(), 2u);
        for (std::size_t k = 1; k < g.loglik_trace.size(); ++k)
            EXPECT_GE(g.loglik_trace[k], g.loglik_trace[k - 1] - 1e-9) << "iteration " << k;
        EXPECT_NEAR(g.mean_log_density(x), g.loglik_trace.back(), 1e-6);
        double total = 0.0;
        for (double w : g.weights) total += w;
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(Gmm, StandardNormalDensityAndSampling) {
    Gmm g;
    g.weights = {1.0};
    g.means = {Eigen::VectorXd::Zero(2)};
    g.covariances = {Eigen::MatrixXd::Identity(2, 2)};
    EXPECT_NEAR(g.log_density(Eigen::VectorXd::Zero(2)), -std::log(2 * std::numbers::pi), 1e-12);
    Rng rng(1);
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (int i = 0; i < 20000; ++i) mean += g.sample(rng);
    mean /= 20000.0;
    EXPECT_LT(mean.cwiseAbs().maxCoeff(), 0.03);
}

TEST(Gmm, Errors) {
    Eigen::MatrixXd x(3, 1);
    x << 1, 2, 3;
    GmmOptions o;
    o.n_components = 4;
    EXPECT_GREAT_ERROR(fit_gmm(x, o, 1), ErrorCode::EmDegenerate);
    o.n_components = 1;
    o.variance_floor = 0.0;
    EXPECT_GREAT_ERROR(fit_gmm(x, o, 1), ErrorCode::EmDegenerate);
    o.variance_floor = 1e-6;
    x(1, 0) = NAN;
    EXPECT_GREAT_ERROR(fit_gmm(x, o, 1), ErrorCode::EmDegenerate);
}

TEST(FeatureDensity, CategoricalFrequencies) {
    auto t = make_table({"c"}, {{"a"}, {"a"}, {"b"}, {"b"}});
    auto e = fit_feature_density(t, "c");
    EXPECT_FALSE(e.numeric);
    ASSERT_EQ(e.values, (std::vector<std::string>{"a", "b"}));
    EXPECT_DOUBLE_EQ(e.probabilities[0], 0.5);
    EXPECT_DOUBLE_EQ(e.probabilities[1], 0.5);
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
        auto v = e.draw(rng);
        EXPECT_TRUE(v == "a" || v == "b");
    }
}

TEST(FeatureDensity, NumericMixtureAndFormatting) {
    Rng rng(2);
    std::vector<std::vector<std::string>> cells;
    for (int i = 0; i < 10000; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", rng.normal());
        cells.push_back({buf});
    }
    auto t = make_table({"x"}, cells);
    auto e = fit_feature_density(t, "x", 1, 3);
    EXPECT_TRUE(e.numeric);
    EXPECT_EQ(e.decimals, 2);
    EXPECT_NEAR(e.gmm.means[0](0), 0.0, 0.05);
    EXPECT_NEAR(e.gmm.covariances[0](0, 0), 1.0, 0.1);
    for (int i = 0; i < 100; ++i) {
        auto v = e.draw(rng);
        ASSERT_TRUE(parse_decimal(v)) << v;
        const auto dot = v.find('.');
        ASSERT_NE(dot, std::string::npos);
        EXPECT_EQ(v.size() - dot - 1, 2u) << v;
        EXPECT_NE(v, "-0.00");
    }
    EXPECT_GREAT_ERROR(fit_feature_density(make_table({"x"}, {{"1"}, {"2"}}), "x", 3), ErrorCode::InvalidValue);
    EXPECT_GREAT_ERROR(fit_feature_density(t, "y"), ErrorCode::UnknownFeature);
}

TEST(FeatureDensity, SingleValueFallsBackToNarrowComponent) {
    auto t = make_table({"x"}, {{"4.5"}, {"4.5"}, {"4.5"}});
    auto e = fit_feature_density(t, "x");
    ASSERT_EQ(e.gmm.size(), 1u);
    EXPECT_DOUBLE_EQ(e.gmm.means[0](0), 4.5);
    EXPECT_NEAR(e.gmm.covariances[0](0, 0), 1e-9, 1e-15);
    Rng rng(1);
    EXPECT_EQ(e.draw(rng), "4.5");
}

TEST(Preconditioning, Names) {
    for (auto m : {Preconditioning::FeatureName, Preconditioning::NameValue, Preconditioning::MultiNameValue})
        EXPECT_EQ(preconditioning_from_string(to_string(m)), m);
    EXPECT_EQ(to_string(Preconditioning::MultiNameValue), "multi-name-value");
    EXPECT_GREAT_ERROR(preconditioning_from_string("bogus"), ErrorCode::ConfigError);
}

TEST(SampleSpec, Validation) {
    auto s = make_table({"color", "n"}, {{"red", "1"}, {"blue", "2"}}).schema();
    SampleSpec spec;
    EXPECT_DOUBLE_EQ(spec.temperature, 0.7);
    EXPECT_NO_THROW(spec.validate(s));
    spec.constraints = {{"color", "red"}};
    EXPECT_GREAT_ERROR(spec.validate(s), ErrorCode::InvalidValue);
    spec.mode = Preconditioning::NameValue;
    EXPECT_NO_THROW(spec.validate(s));
    spec.constraints = {{"color", "red"}, {"n", "3"}};
    EXPECT_GREAT_ERROR(spec.validate(s), ErrorCode::InvalidValue);
    spec.mode = Preconditioning::MultiNameValue;
    EXPECT_NO_THROW(spec.validate(s));
    spec.constraints = {{"color", "green"}};
    EXPECT_GREAT_ERROR(spec.validate(s), ErrorCode::ConstraintUnsatisfiable);
    spec.constraints = {{"n", "many"}};
    EXPECT_GREAT_ERROR(spec.validate(s), ErrorCode::ConstraintUnsatisfiable);
    spec.constraints = {{"size", "1"}};
    EXPECT_GREAT_ERROR(spec.validate(s), ErrorCode::UnknownFeature);
    spec.constraints = {{"n", "1"}, {"n", "2"}};
    EXPECT_GREAT_ERROR(spec.validate(s), ErrorCode::DuplicateFeature);
    spec.constraints = {};
    spec.temperature = 0.0;
    EXPECT_GREAT_ERROR(spec.validate(s), ErrorCode::InvalidValue);
}

TEST(Prompt, StripsTrailingSpace) {
    auto s = make_table({"Gender", "Age"}, {{"female", "30"}}).schema();
    EXPECT_EQ(prompt_text({{"Gender", "female"}}, std::nullopt, s), "Gender is female,");
    EXPECT_EQ(prompt_text({{"Gender", "female"}}, "Age", s), "Gender is female, Age is");
    EXPECT_EQ(prompt_text({}, "Age", s), "Age is");
}

namespace {

LmConfig sampler_lm() {
    LmConfig c;
    c.vocab_size = 300;
    c.context_len = 48;
    c.n_layers = 2;
    c.n_heads = 2;
    c.d_model = 32;
    c.d_ff = 64;
    c.seed = 1;
    return c;
}

// color drives shape 90% of the time; a small structured table the decoder
// learns in a few seconds.
Table structured_table(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    const std::vector<std::string> colors{"red", "green", "blue"}, shapes{"circle", "square", "star"};
    std::vector<std::vector<std::string>> cells;
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = rng.categorical(std::vector<double>{0.5, 0.3, 0.2});
        const auto s = rng.uniform() < 0.9 ? c : rng.below(3);
        cells.push_back({colors[c], shapes[s], std::to_string(10 * (c + 1) + rng.below(3))});
    }
    return make_table({"color", "shape", "size"}, cells);
}

class TrainedSampler : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        table_ = new Table(structured_table(600, 1));
        TrainConfig tc;
        tc.epochs = 15;
        tc.batch_size = 32;
        tc.learning_rate = 3e-3;
        tc.schedule = LrSchedule::Cosine;
        tc.warmup_steps = 20;
        tc.seed = 2;
        ckpt_ = new Checkpoint(train(*table_, sampler_lm(), tc));
    }
    static void TearDownTestSuite() {
        delete ckpt_;
        delete table_;
    }
    static Table* table_;
    static Checkpoint* ckpt_;
};

Table* TrainedSampler::table_ = nullptr;
Checkpoint* TrainedSampler::ckpt_ = nullptr;

}  // namespace

TEST_F(TrainedSampler, RowsAreValidAndDeterministic) {
    SampleSpec spec;
    spec.count = 100;
    spec.seed = 3;
    auto a = sample(*ckpt_, spec);
    ASSERT_EQ(a.rows.num_rows(), 100u);
    EXPECT_EQ(a.attempts, 100u + a.invalid);
    EXPECT_LT(a.invalid_rate, 0.2);
    for (const auto& row : a.rows.rows()) {
        auto text = encode(row, ckpt_->schema, identity_permutation(3)).text;
        EXPECT_TRUE(decode(text, ckpt_->schema).valid()) << text;
    }
    EXPECT_EQ(sample(*ckpt_, spec).rows.rows(), a.rows.rows());
    spec.workers = 3;
    EXPECT_EQ(sample(*ckpt_, spec).rows.rows(), a.rows.rows());
    auto j = a.to_json();
    EXPECT_EQ(j.at("rows").get<std::size_t>(), 100u);
    EXPECT_TRUE(j.at("invalid_reasons").contains("OutOfSupportCategory"));
}

TEST_F(TrainedSampler, LearnsTheDependency) {
    SampleSpec spec;
    spec.count = 400;
    spec.temperature = 1.0;
    spec.seed = 4;
    auto r = sample(*ckpt_, spec);
    std::size_t agree = 0;
    const std::map<std::string, std::string> pair{{"red", "circle"}, {"green", "square"}, {"blue", "star"}};
    for (const auto& row : r.rows.rows()) agree += pair.at(row.cells[0]) == row.cells[1];
    // 0.9 + 0.1 / 3 in the generator; a third under independence.
    EXPECT_GT(agree / 400.0, 0.8);
}

TEST_F(TrainedSampler, ConstraintFidelityIsExact) {
    for (auto constraints : std::vector<std::vector<Clause>>{{{"shape", "star"}, {"color", "red"}},
                                                            {{"size", "20"}},
                                                            {{"color", "blue"}, {"size", "31"}}}) {
        SampleSpec spec;
        spec.mode = Preconditioning::MultiNameValue;
        spec.constraints = constraints;
        spec.count = 50;
        spec.max_attempts_factor = 20;
        spec.seed = 5;
        auto r = sample(*ckpt_, spec);
        for (const auto& row : r.rows.rows())
            for (const auto& c : constraints) EXPECT_EQ(row.cells[ckpt_->schema.require(c.feature)], c.value);
    }
}

TEST_F(TrainedSampler, NameValueDrawsFromDensity) {
    auto density = fit_feature_densities(*table_, 1);
    SampleSpec spec;
    spec.mode = Preconditioning::NameValue;
    spec.start_feature = "color";
    spec.count = 200;
    spec.seed = 6;
    auto r = sample(*ckpt_, spec, &density);
    std::map<std::string, double> freq;
    for (const auto& row : r.rows.rows()) freq[row.cells[0]] += 1.0 / 200;
    EXPECT_NEAR(freq["red"], 0.5, 0.1);
    EXPECT_GREAT_ERROR(sample(*ckpt_, spec), ErrorCode::InvalidValue);
}

TEST_F(TrainedSampler, BudgetExhaustionCarriesReport) {
    SampleSpec spec;
    spec.count = 5;
    spec.max_attempts_factor = 1;
    spec.max_new_tokens = 2;  // too short for any complete record
    try {
        sample(*ckpt_, spec);
        ADD_FAILURE() << "no budget error";
    } catch (const SamplingBudgetError& e) {
        EXPECT_EQ(e.code(), ErrorCode::AttemptBudgetExhausted);
        EXPECT_EQ(e.report().attempts, 5u);
        EXPECT_EQ(e.report().invalid, 5u);
    }
}

TEST_F(TrainedSampler, ImputeFillsOnlyMissingCells) {
    auto held = structured_table(200, 99);
    std::vector<Row> partial;
    for (std::size_t i = 0; i < held.num_rows(); ++i) {
        Row r = held.row(i);
        if (i % 4 != 0) r.cells[1] = "";  // every fourth row stays complete
        partial.push_back(r);
    }
    Table masked(ckpt_->schema, partial);
    ImputeOptions opts;
    opts.seed = 7;
    auto filled = impute(*ckpt_, masked, opts);
    ASSERT_EQ(filled.num_rows(), held.num_rows());
    std::size_t hits = 0, masked_rows = 0;
    std::map<std::string, std::size_t> train_counts;
    for (const auto& v : table_->column(1)) ++train_counts[v];
    std::string majority;
    std::size_t best = 0;
    for (const auto& [v, n] : train_counts)
        if (n > best) best = n, majority = v;
    std::size_t baseline = 0;
    for (std::size_t i = 0; i < held.num_rows(); ++i) {
        const auto& out = filled.row(i);
        EXPECT_EQ(out.cells[0], held.row(i).cells[0]);
        EXPECT_EQ(out.cells[2], held.row(i).cells[2]);
        EXPECT_TRUE(ckpt_->schema.in_support(1, out.cells[1])) << out.cells[1];
        if (i % 4 == 0) {
            EXPECT_EQ(out, held.row(i));
            continue;
        }
        ++masked_rows;
        hits += out.cells[1] == held.row(i).cells[1];
        baseline += majority == held.row(i).cells[1];
    }
    EXPECT_GT(hits, baseline + masked_rows / 5) << hits << " vs marginal " << baseline;
    opts.workers = 2;
    EXPECT_EQ(impute(*ckpt_, masked, opts).rows(), filled.rows());

    Table empty_row(ckpt_->schema, {Row{{"", "", ""}}});
    EXPECT_GREAT_ERROR(impute(*ckpt_, empty_row, opts), ErrorCode::InvalidValue);
    auto other = make_table({"a"}, {{"x"}});
    EXPECT_GREAT_ERROR(impute(*ckpt_, other, opts), ErrorCode::SchemaMismatch);
}

TEST(Memorization, LowTemperatureReturnsTheRecord) {
    auto t = make_table({"Occupation", "Age"}, {{"doctor", "34"}});
    TrainConfig tc;
    tc.epochs = 300;
    tc.learning_rate = 1e-2;
    tc.seed = 1;
    auto lm = sampler_lm();
    auto ck = train(t, lm, tc);
    SampleSpec spec;
    spec.temperature = 0.05;
    spec.count = 10;
    spec.seed = 2;
    auto r = sample(ck, spec);
    EXPECT_EQ(r.invalid, 0u);
    EXPECT_DOUBLE_EQ(r.invalid_rate, 0.0);
    for (const auto& row : r.rows.rows()) EXPECT_EQ(row, t.row(0));
}
