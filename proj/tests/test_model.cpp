#include <cmath>
#include <numbers>

#include "great/checkpoint.hpp"
#include "great/model.hpp"
#include "great/train.hpp"
#include "support.hpp"

using namespace great;
using great::testing::tiny_config;

namespace {

using Vec = std::vector<double>;
using Grid = std::vector<Vec>;

// Plain-loop forward pass in double, written against the tensor names only.
struct Reference {
    const BasicParams<double>& p;
    const LmConfig& c;

    double at(const std::string& name, std::size_t i, std::size_t j) const { return p.mat(name)(i, j); }

    Grid layer_norm(const Grid& x, const std::string& g, const std::string& b) const {
        Grid y = x;
        for (std::size_t i = 0; i < x.size(); ++i) {
            double mu = 0.0, var = 0.0;
            for (double v : x[i]) mu += v;
            mu /= static_cast<double>(c.d_model);
            for (double v : x[i]) var += (v - mu) * (v - mu);
            var /= static_cast<double>(c.d_model);
            for (std::size_t j = 0; j < c.d_model; ++j)
                y[i][j] = (x[i][j] - mu) / std::sqrt(var + 1e-5) * at(g, 0, j) + at(b, 0, j);
        }
        return y;
    }

    Grid affine(const Grid& x, const std::string& w, const std::string& b, std::size_t out) const {
        Grid y(x.size(), Vec(out, 0.0));
        for (std::size_t i = 0; i < x.size(); ++i)
            for (std::size_t o = 0; o < out; ++o) {
                double s = at(b, 0, o);
                for (std::size_t k = 0; k < x[i].size(); ++k) s += x[i][k] * at(w, k, o);
                y[i][o] = s;
            }
        return y;
    }

    static double gelu(double x) {
        return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / std::numbers::pi) * (x + 0.044715 * x * x * x)));
    }

    Grid run(const TokenSequence& tokens) const {
        const std::size_t n = tokens.size(), d = c.d_model, dh = d / c.n_heads;
        Grid x(n, Vec(d));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j)
                x[i][j] = at("tok_emb", static_cast<std::size_t>(tokens[i]), j) + at("pos_emb", i, j);
        for (std::size_t l = 0; l < c.n_layers; ++l) {
            const std::string h = "h" + std::to_string(l) + ".";
            auto a = layer_norm(x, h + "ln1.g", h + "ln1.b");
            auto qkv = affine(a, h + "attn.wqkv", h + "attn.bqkv", 3 * d);
            Grid att(n, Vec(d, 0.0));
            for (std::size_t head = 0; head < c.n_heads; ++head)
                for (std::size_t i = 0; i < n; ++i) {
                    Vec s(i + 1);
                    double mx = -INFINITY;
                    for (std::size_t k = 0; k <= i; ++k) {
                        double dot = 0.0;
                        for (std::size_t e = 0; e < dh; ++e) dot += qkv[i][head * dh + e] * qkv[k][d + head * dh + e];
                        s[k] = dot / std::sqrt(static_cast<double>(dh));
                        mx = std::max(mx, s[k]);
                    }
                    double z = 0.0;
                    for (auto& v : s) z += (v = std::exp(v - mx));
                    for (std::size_t k = 0; k <= i; ++k)
                        for (std::size_t e = 0; e < dh; ++e)
                            att[i][head * dh + e] += s[k] / z * qkv[k][2 * d + head * dh + e];
                }
            auto o = affine(att, h + "attn.wo", h + "attn.bo", d);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) x[i][j] += o[i][j];
            auto hid = affine(layer_norm(x, h + "ln2.g", h + "ln2.b"), h + "mlp.w1", h + "mlp.b1", c.d_ff);
            for (auto& r : hid)
                for (auto& v : r) v = gelu(v);
            auto m = affine(hid, h + "mlp.w2", h + "mlp.b2", d);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) x[i][j] += m[i][j];
        }
        auto f = layer_norm(x, "lnf.g", "lnf.b");
        const std::string head = c.tie_embeddings ? "tok_emb" : "head.w";
        Grid logits(n, Vec(c.vocab_size, 0.0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t v = 0; v < c.vocab_size; ++v)
                for (std::size_t j = 0; j < d; ++j) logits[i][v] += f[i][j] * at(head, v, j);
        return logits;
    }

    double nll(const TokenSequence& tokens) const {
        auto logits = run(tokens);
        double total = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
            if (tokens[i + 1] == Vocabulary::kPad) continue;
            double mx = -INFINITY, z = 0.0;
            for (double v : logits[i]) mx = std::max(mx, v);
            for (double v : logits[i]) z += std::exp(v - mx);
            total += std::log(z) + mx - logits[i][static_cast<std::size_t>(tokens[i + 1])];
            ++count;
        }
        return total / static_cast<double>(count);
    }
};

// Init with every tensor perturbed, so gains, biases and all paths matter.
BasicParams<double> random_params(const LmConfig& c, std::uint64_t seed, double scale = 0.3) {
    auto p = init_params(c, seed).cast<double>();
    Rng rng(seed + 1);
    for (std::size_t t = 0; t < p.tensors().size(); ++t) {
        auto m = p.mat(t);
        const bool gain = p.tensors()[t].name.ends_with(".g");
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (gain ? 1.0 : 0.0) + rng.normal(0.0, scale);
    }
    return p;
}

TokenSequence random_tokens(Rng& rng, std::size_t n, std::size_t vocab) {
    TokenSequence t(n);
    for (auto& id : t) id = static_cast<TokenId>(rng.below(vocab));
    return t;
}

}  // namespace

TEST(Config, Validation) {
    auto c = tiny_config();
    EXPECT_NO_THROW(c.validate());
    auto bad = c;
    bad.vocab_size = 100;
    EXPECT_GREAT_ERROR(bad.validate(), ErrorCode::ConfigError);
    bad = c;
    bad.n_heads = 3;
    EXPECT_GREAT_ERROR(bad.validate(), ErrorCode::ConfigError);
    bad = c;
    bad.dropout = 1.0;
    EXPECT_GREAT_ERROR(bad.validate(), ErrorCode::ConfigError);
    EXPECT_EQ(lm_config_from_json(to_json(c)), c);
}

TEST(Forward, ZeroHeadGivesUniformAndLnV) {
    auto c = tiny_config();
    c.vocab_size = 258;
    auto p = init_params(c, 3);
    p.mat("head.w").setZero();
    Rng rng(1);
    auto tokens = random_tokens(rng, 10, 256);
    auto logits = forward(p, c, tokens);
    EXPECT_EQ(logits.rows(), 10);
    EXPECT_EQ(logits.cols(), 258);
    EXPECT_EQ(logits.cwiseAbs().maxCoeff(), 0.0f);
    EXPECT_NEAR(nll(p, c, tokens), std::log(258.0), 1e-6);
    EXPECT_NEAR(std::log(258.0), 5.5530, 1e-4);
}

TEST(Forward, MatchesReferenceImplementation) {
    for (bool tied : {false, true}) {
        auto c = tiny_config();
        c.tie_embeddings = tied;
        auto p = random_params(c, 5);
        Rng rng(2);
        auto tokens = random_tokens(rng, c.context_len, c.vocab_size);
        auto logits = forward(p, c, tokens);
        auto ref = Reference{p, c}.run(tokens);
        double worst = 0.0;
        for (std::size_t i = 0; i < tokens.size(); ++i)
            for (std::size_t v = 0; v < c.vocab_size; ++v)
                worst = std::max(worst, std::abs(logits(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v)) -
                                                 ref[i][v]));
        EXPECT_LT(worst, 1e-9) << "tied=" << tied;

        auto pf = p.cast<float>();
        auto lf = forward(pf, c, tokens);
        EXPECT_LT((lf.cast<double>() - logits).cwiseAbs().maxCoeff(), 1e-3);
        EXPECT_NEAR(nll(p, c, tokens), (Reference{p, c}.nll(tokens)), 1e-9);
    }
}

TEST(Forward, CausalProperty) {
    auto c = tiny_config();
    auto p = random_params(c, 7);
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto a = random_tokens(rng, c.context_len, c.vocab_size);
        const auto k = rng.below(a.size());
        auto b = a;
        b[k] = static_cast<TokenId>((b[k] + 1) % static_cast<TokenId>(c.vocab_size));
        auto la = forward(p, c, a), lb = forward(p, c, b);
        for (std::size_t i = 0; i < k; ++i)
            EXPECT_LT((la.row(static_cast<Eigen::Index>(i)) - lb.row(static_cast<Eigen::Index>(i))).cwiseAbs().maxCoeff(),
                      1e-12);
        EXPECT_GT((la.row(static_cast<Eigen::Index>(k)) - lb.row(static_cast<Eigen::Index>(k))).cwiseAbs().maxCoeff(),
                  1e-6);
    }
}

TEST(Forward, Errors) {
    auto c = tiny_config();
    auto p = init_params(c, 1);
    EXPECT_GREAT_ERROR(forward(p, c, TokenSequence(c.context_len + 1, 1)), ErrorCode::ContextOverflow);
    EXPECT_GREAT_ERROR(forward(p, c, TokenSequence{1, static_cast<TokenId>(c.vocab_size)}), ErrorCode::ShapeMismatch);
    auto other = c;
    other.d_model = 16;
    EXPECT_GREAT_ERROR(forward(p, other, TokenSequence{1, 2}), ErrorCode::ShapeMismatch);
}

TEST(Decoder, MatchesForwardStepByStep) {
    auto c = tiny_config();
    auto p = random_params(c, 9).cast<float>();
    Rng rng(4);
    auto tokens = random_tokens(rng, c.context_len, c.vocab_size);
    auto full = forward(p, c, tokens);
    Decoder dec(p, c);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto& step = dec.step(tokens[i]);
        EXPECT_LT((step.transpose() - full.row(static_cast<Eigen::Index>(i))).cwiseAbs().maxCoeff(), 1e-4);
    }
    EXPECT_EQ(dec.position(), c.context_len);
    EXPECT_GREAT_ERROR(dec.step(1), ErrorCode::ContextOverflow);
}

TEST(Gradients, FiniteDifferenceSpotCheck) {
    auto c = tiny_config();
    auto p = random_params(c, 13);
    Rng rng(5);
    std::vector<TokenSequence> batch{random_tokens(rng, 12, c.vocab_size), random_tokens(rng, 7, c.vocab_size)};
    batch[1].push_back(Vocabulary::kPad);
    batch[1].push_back(Vocabulary::kPad);
    auto g = gradients(p, c, batch);
    auto loss = [&](BasicParams<double>& q) {
        double total = 0.0;
        for (const auto& s : batch) total += nll(q, c, s);
        return total / static_cast<double>(batch.size());
    };
    const double h = 1e-4;
    for (std::size_t t = 0; t < p.tensors().size(); ++t) {
        const auto& info = p.tensors()[t];
        for (int k = 0; k < 10; ++k) {
            const auto at = info.offset + rng.below(info.size());
            const double keep = p.data()[at];
            p.data()[at] = keep + h;
            const double up = loss(p);
            p.data()[at] = keep - h;
            const double down = loss(p);
            p.data()[at] = keep;
            const double numeric = (up - down) / (2 * h), analytic = g.data()[at];
            const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
            EXPECT_LT(rel, 1e-3) << info.name << " coord " << at - info.offset;
        }
    }
}

TEST(Gradients, DuplicatedSequencesLeaveMeanUnchanged) {
    auto c = tiny_config();
    auto p = random_params(c, 17);
    Rng rng(6);
    auto a = random_tokens(rng, 9, c.vocab_size), b = random_tokens(rng, 5, c.vocab_size);
    auto g1 = gradients(p, c, {a, b});
    auto g2 = gradients(p, c, {a, a, b, b});
    double worst = 0.0;
    for (std::size_t i = 0; i < g1.data().size(); ++i) worst = std::max(worst, std::abs(g1.data()[i] - g2.data()[i]));
    EXPECT_LT(worst, 1e-12);
}

TEST(Gradients, VanishAtOneDimensionalMinimum) {
    auto c = tiny_config();
    auto p = random_params(c, 19);
    Rng rng(7);
    const std::vector<TokenSequence> batch{random_tokens(rng, 10, c.vocab_size)};
    const auto at = p.tensors()[p.layout().index("lnf.b")].offset;
    auto f = [&](double v) {
        p.data()[at] = v;
        return batch_nll(p, c, batch);
    };
    // Golden-section search along the slice; the loss is smooth and convex
    // enough there for a bracket of +-5.
    double lo = -5.0, hi = 5.0;
    const double r = (std::sqrt(5.0) - 1) / 2;
    for (int i = 0; i < 200; ++i) {
        const double m1 = hi - r * (hi - lo), m2 = lo + r * (hi - lo);
        if (f(m1) < f(m2)) hi = m2;
        else lo = m1;
    }
    ASSERT_LT(hi - lo, 1e-6);
    ASSERT_GT(lo, -4.9);
    ASSERT_LT(hi, 4.9);
    f(0.5 * (lo + hi));
    auto g = gradients(p, c, batch);
    EXPECT_NEAR(g.data()[at], 0.0, 1e-6);
}

TEST(Gradients, DropoutOnlyInTrainingMode) {
    auto c = tiny_config();
    c.dropout = 0.3;
    auto p = random_params(c, 23);
    Rng rng(8);
    const std::vector<TokenSequence> batch{random_tokens(rng, 10, c.vocab_size)};
    BasicParams<double> g(c);
    const double eval_loss = loss_and_gradients(p, c, batch, g);
    EXPECT_NEAR(eval_loss, batch_nll(p, c, batch), 1e-12);
    Rng r1(1), r2(1);
    BasicParams<double> ga(c), gb(c);
    const double la = loss_and_gradients(p, c, batch, ga, &r1), lb = loss_and_gradients(p, c, batch, gb, &r2);
    EXPECT_EQ(la, lb);
    EXPECT_NE(la, eval_loss);
}

namespace {

// Full-batch AdamW until the loss settles.
double fit(LmParams& p, const LmConfig& c, const std::vector<TokenSequence>& batch, std::size_t steps, double lr) {
    TrainConfig tc;
    tc.grad_clip.reset();
    AdamW opt(tc, p);
    LmParams g(c);
    double loss = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
        loss = loss_and_gradients(p, c, batch, g);
        opt.step(p, g, lr);
    }
    return loss;
}

}  // namespace

TEST(Training, MemorizesOneRecord) {
    LmConfig c;
    c.context_len = 40;
    c.n_layers = 2;
    c.n_heads = 2;
    c.d_model = 32;
    c.d_ff = 64;
    c.vocab_size = 258;
    Vocabulary vocab;
    auto record = tokenize("Occupation is doctor, Age is 34,", vocab);
    record.push_back(Vocabulary::kEor);
    auto p = init_params(c, 1);
    fit(p, c, {record}, 300, 1e-2);
    EXPECT_LT(nll(p, c, record), 0.05);

    // Greedy continuation from the first token reproduces the record.
    TokenSequence out{record[0]};
    Decoder dec(p, c);
    for (std::size_t i = 0; i + 1 < record.size(); ++i) {
        const auto& logits = dec.step(out.back());
        Eigen::Index best;
        logits.maxCoeff(&best);
        out.push_back(static_cast<TokenId>(best));
    }
    EXPECT_EQ(out, record);
}

TEST(Training, RecoversBigramProbability) {
    auto c = tiny_config();
    c.vocab_size = 258;
    c.d_model = 16;
    c.d_ff = 32;
    const TokenId a = 'a', b = 'b';
    std::vector<TokenSequence> corpus;
    for (int i = 0; i < 12; ++i) corpus.push_back(i % 4 == 0 ? TokenSequence{a, a} : TokenSequence{a, b});
    double follow_b = 0.0;
    for (const auto& s : corpus) follow_b += s[1] == b;
    const double oracle = follow_b / static_cast<double>(corpus.size());
    ASSERT_DOUBLE_EQ(oracle, 0.75);

    auto p = init_params(c, 2);
    fit(p, c, corpus, 400, 1e-2);
    auto logits = forward(p, c, TokenSequence{a}).row(0).cast<double>();
    const double z = (logits.array() - logits.maxCoeff()).exp().sum();
    const double pb = std::exp(logits(b) - logits.maxCoeff()) / z;
    EXPECT_NEAR(pb, oracle, 0.02);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    auto c = tiny_config();
    Checkpoint ck;
    ck.config = c;
    ck.params = random_params(c, 29).cast<float>();
    ck.vocab = Vocabulary({{'a', 'b'}, {258, 'c'}, {'c', 'd'}, {'e', 'f'}});
    ck.schema = great::testing::make_table({"x", "y"}, {{"a", "1.5"}, {"b", "2"}}).schema();
    ck.target = "x";
    ck.train_log = {{1, 2.5}, {2, 1.25}};
    const auto bytes = serialize_checkpoint(ck);
    const auto back = deserialize_checkpoint(bytes);
    EXPECT_EQ(back, ck);
    EXPECT_EQ(serialize_checkpoint(back), bytes);

    const TokenSequence prompt{'a', 258, 259, 3};
    auto before = forward(ck.params, ck.config, prompt), after = forward(back.params, back.config, prompt);
    EXPECT_TRUE((before.array() == after.array()).all());

    auto dir = great::testing::scratch_dir("ckpt");
    save_checkpoint(ck, dir / "ck.bin");
    EXPECT_EQ(load_checkpoint(dir / "ck.bin"), ck);
    EXPECT_GREAT_ERROR(load_checkpoint(dir / "missing.bin"), ErrorCode::IoError);
}

TEST(Checkpoint, TruncatedOrCorruptInputNeverCrashes) {
    auto c = tiny_config();
    Checkpoint ck;
    ck.config = c;
    ck.params = init_params(c, 1);
    ck.schema = great::testing::make_table({"x"}, {{"a"}}).schema();
    const auto bytes = serialize_checkpoint(ck);
    for (std::size_t len = 0; len < bytes.size(); len += 1 + len / 16) {
        try {
            deserialize_checkpoint(std::string_view(bytes).substr(0, len));
            ADD_FAILURE() << "accepted a truncated archive of " << len << " bytes";
        } catch (const Error& e) {
            EXPECT_TRUE(e.code() == ErrorCode::VersionMismatch || e.code() == ErrorCode::IoError) << e.what();
        }
    }
    auto wrong_version = bytes;
    wrong_version[8] = 99;
    EXPECT_GREAT_ERROR(deserialize_checkpoint(wrong_version), ErrorCode::VersionMismatch);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_GREAT_ERROR(deserialize_checkpoint(bad_magic), ErrorCode::VersionMismatch);
    Rng rng(3);
    for (int i = 0; i < 300; ++i) {
        auto mutated = bytes;
        mutated[rng.below(std::min<std::size_t>(mutated.size(), 400))] = static_cast<char>(rng.below(256));
        try {
            deserialize_checkpoint(mutated);
        } catch (const Error& e) {
            EXPECT_TRUE(e.code() == ErrorCode::VersionMismatch || e.code() == ErrorCode::IoError ||
                        e.code() == ErrorCode::InvalidSpec)
                << e.what();
        }
    }
}
