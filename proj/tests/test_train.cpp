#include <map>
#include <numeric>

#include "great/train.hpp"
#include "support.hpp"

using namespace great;
using great::testing::make_table;

namespace {

LmConfig small_lm() {
    LmConfig c;
    c.vocab_size = 300;
    c.context_len = 48;
    c.n_layers = 1;
    c.n_heads = 2;
    c.d_model = 16;
    c.d_ff = 32;
    c.seed = 4;
    return c;
}

Table three_features(std::size_t n) {
    std::vector<std::vector<std::string>> cells;
    for (std::size_t i = 0; i < n; ++i)
        cells.push_back({i % 2 ? "red" : "blue", std::to_string(i % 7), i % 3 ? "yes" : "no"});
    return make_table({"color", "size", "flag"}, cells);
}

std::vector<std::size_t> all_rows(const Table& t) {
    std::vector<std::size_t> rows(t.num_rows());
    std::iota(rows.begin(), rows.end(), 0);
    return rows;
}

}  // namespace

TEST(TrainConfig, Validation) {
    TrainConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_DOUBLE_EQ(c.learning_rate, 5e-5);
    auto bad = c;
    bad.batch_size = 0;
    EXPECT_GREAT_ERROR(bad.validate(), ErrorCode::ConfigError);
    bad = c;
    bad.learning_rate = -1;
    EXPECT_GREAT_ERROR(bad.validate(), ErrorCode::ConfigError);
    bad = c;
    bad.val_fraction = 1.0;
    EXPECT_GREAT_ERROR(bad.validate(), ErrorCode::ConfigError);
    EXPECT_EQ(to_json(c).at("learning_rate").get<double>(), 5e-5);
}

TEST(RecordTokens, TextPlusTerminator) {
    auto t = three_features(4);
    auto vocab = fit_vocabulary(t, {}, 280, true, 1);
    const auto perm = Permutation{{2, 0, 1}};
    auto ids = record_tokens(t.row(1), t.schema(), perm, vocab);
    ASSERT_FALSE(ids.empty());
    EXPECT_EQ(ids.back(), Vocabulary::kEor);
    EXPECT_EQ(detokenize(ids, vocab), encode(t.row(1), t.schema(), perm).text);
}

TEST(EpochPlanner, FixedOrderStartsWithFirstFeature) {
    auto t = make_table({"age", "job"}, {{"34", "doctor"}, {"51", "teacher"}, {"18", "nurse"}});
    TrainConfig tc;
    tc.permute = false;
    EpochPlanner planner(t, all_rows(t), tc);
    for (int epoch = 0; epoch < 5; ++epoch)
        for (const auto& item : planner.next_epoch())
            EXPECT_TRUE(encode(t.row(item.row), t.schema(), item.perm).text.starts_with("age is "));
}

TEST(EpochPlanner, PermutationCensusIsUniform) {
    auto t = three_features(6000);
    TrainConfig tc;
    tc.seed = 99;
    EpochPlanner planner(t, all_rows(t), tc);
    auto plan = planner.next_epoch();
    ASSERT_EQ(plan.size(), 6000u);
    // Census by the order in which feature names appear in the emitted text.
    std::map<std::string, std::size_t> census;
    std::vector<bool> seen(6000, false);
    for (const auto& item : plan) {
        seen[item.row] = true;
        std::string order;
        for (const auto& clause : encode(t.row(item.row), t.schema(), item.perm).clauses) order += clause.feature[0];
        ++census[order];
    }
    EXPECT_EQ(std::count(seen.begin(), seen.end(), true), 6000);
    ASSERT_EQ(census.size(), 6u);
    std::vector<std::size_t> counts;
    for (const auto& [order, n] : census) {
        EXPECT_NEAR(static_cast<double>(n) / 6000.0, 1.0 / 6.0, 0.02) << order;
        counts.push_back(n);
    }
    EXPECT_GT(great::testing::chi_square_p(counts, std::vector<double>(6, 1.0 / 6.0)), 0.001);
    // A later epoch draws fresh orders.
    auto next = planner.next_epoch();
    std::size_t same = 0;
    for (std::size_t i = 0; i < plan.size(); ++i) same += plan[i].row == next[i].row && plan[i].perm == next[i].perm;
    EXPECT_LT(same, 100u);
}

TEST(Vocabulary, FitIsDeterministic) {
    auto t = three_features(50);
    auto a = fit_vocabulary(t, {"some warm start text"}, 300, true, 5);
    auto b = fit_vocabulary(t, {"some warm start text"}, 300, true, 5);
    EXPECT_EQ(a, b);
    EXPECT_LE(a.size(), 300u);
    EXPECT_GT(a.size(), 258u);
}

TEST(Train, LossDecreasesAndIsReproducible) {
    auto t = three_features(64);
    TrainConfig tc;
    tc.epochs = 6;
    tc.batch_size = 16;
    tc.learning_rate = 3e-3;
    tc.seed = 8;
    std::vector<TrainEvent> events;
    auto a = train(t, small_lm(), tc, {}, [&](const TrainEvent& e) { events.push_back(e); });
    auto b = train(t, small_lm(), tc);
    EXPECT_EQ(serialize_checkpoint(a), serialize_checkpoint(b));
    ASSERT_EQ(a.train_log.size(), 24u);
    EXPECT_EQ(events.size(), 24u);
    EXPECT_EQ(a.config.vocab_size, a.vocab.size());
    EXPECT_EQ(a.schema, t.schema());
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < 4; ++i) first += a.train_log[i].loss, last += a.train_log[20 + i].loss;
    EXPECT_LT(last, 0.8 * first);
    EXPECT_LT(evaluate_nll(a, t), evaluate_nll(train(t, small_lm(), [] {
        TrainConfig z;
        z.epochs = 0;
        return z;
    }()), t));

    auto other = tc;
    other.seed = 9;
    EXPECT_NE(serialize_checkpoint(train(t, small_lm(), other)), serialize_checkpoint(a));
}

TEST(Train, PretrainAndValidationPhases) {
    auto t = three_features(40);
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 8;
    tc.learning_rate = 3e-3;
    tc.val_fraction = 0.25;
    std::map<std::string, std::size_t> phases;
    auto ck = train(t, small_lm(), tc, {"warm start line one", "warm start line two, longer"},
                    [&](const TrainEvent& e) { ++phases[e.phase]; });
    EXPECT_GT(phases["pretrain"], 0u);
    EXPECT_EQ(phases["val"], 3u);
    EXPECT_EQ(phases["train"], 3u * 4u);  // 30 training rows in batches of 8
    auto plain = tc;
    plain.val_fraction = 0.0;
    EXPECT_NE(serialize_checkpoint(train(t, small_lm(), plain)), serialize_checkpoint(ck));
}

TEST(Train, ContextOverflowNamesTheRow) {
    auto t = make_table({"text"}, {{"short"}, {"a much much longer value that cannot fit in the context window"}});
    auto lm = small_lm();
    lm.context_len = 16;
    TrainConfig tc;
    tc.epochs = 1;
    try {
        train(t, lm, tc);
        ADD_FAILURE() << "no ContextOverflow";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ContextOverflow);
        EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
    }
}

TEST(Train, NonFiniteLossAborts) {
    auto t = three_features(16);
    TrainConfig tc;
    tc.epochs = 2;
    tc.learning_rate = 1e30;
    tc.grad_clip.reset();
    try {
        train(t, small_lm(), tc);
        ADD_FAILURE() << "no NonFiniteLoss";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonFiniteLoss);
        EXPECT_NE(std::string(e.what()).find("step"), std::string::npos) << e.what();
    }
}

TEST(AdamW, DecaysOnlyFlaggedTensors) {
    auto c = great::testing::tiny_config();
    auto p = init_params(c, 1);
    auto before = p;
    TrainConfig tc;
    tc.weight_decay = 0.5;
    AdamW opt(tc, p);
    LmParams zero(c);
    opt.step(p, zero, 0.1);
    for (const auto& info : p.tensors()) {
        const float b = before.data()[info.offset], a = p.data()[info.offset];
        if (info.decay) EXPECT_FLOAT_EQ(a, b * (1.0f - 0.05f)) << info.name;
        else EXPECT_EQ(a, b) << info.name;
    }
}
