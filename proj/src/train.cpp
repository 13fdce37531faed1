#include "great/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "great/error.hpp"

namespace great {

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); };
    if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
    if (batch_size < 1) fail("batch_size must be at least 1");
    if (weight_decay < 0.0) fail("weight_decay must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("adam betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
    if (grad_clip && !(*grad_clip > 0.0)) fail("grad_clip must be positive");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) fail("val_fraction must lie in [0, 1)");
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"weight_decay", c.weight_decay},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"adam_eps", c.adam_eps},
            {"grad_clip", c.grad_clip ? nlohmann::json(*c.grad_clip) : nlohmann::json(nullptr)},
            {"schedule", c.schedule == LrSchedule::Cosine ? "cosine" : "constant"},
            {"warmup_steps", c.warmup_steps},
            {"permute", c.permute},
            {"seed", c.seed},
            {"val_fraction", c.val_fraction},
            {"patience", c.patience},
            {"pretrain_epochs", c.pretrain_epochs}};
}

TokenSequence record_tokens(const Row& row, const Schema& schema, const Permutation& perm, const Vocabulary& vocab) {
    auto ids = tokenize(encode(row, schema, perm).text, vocab);
    ids.push_back(Vocabulary::kEor);
    return ids;
}

Vocabulary fit_vocabulary(const Table& table, const std::vector<std::string>& pretrain_corpus,
                          std::size_t target_size, bool permute, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "bpe"));
    std::vector<std::string> corpus;
    corpus.reserve(table.num_rows() + pretrain_corpus.size());
    for (const auto& row : table.rows()) {
        const auto m = observed_features(row).size();
        const auto perm = permute ? sample_permutation(m, rng) : identity_permutation(m);
        corpus.push_back(encode(row, table.schema(), perm).text);
    }
    corpus.insert(corpus.end(), pretrain_corpus.begin(), pretrain_corpus.end());
    return train_bpe(corpus, target_size);
}

AdamW::AdamW(const TrainConfig& config, const LmParams& params)
    : beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.adam_eps),
      weight_decay_(config.weight_decay),
      m_(params.data().size(), 0.0f),
      v_(params.data().size(), 0.0f),
      decay_(params.data().size(), false) {
    for (const auto& t : params.tensors())
        if (t.decay) std::fill_n(decay_.begin() + static_cast<std::ptrdiff_t>(t.offset), t.size(), true);
}

void AdamW::step(LmParams& params, const LmParams& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const auto b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
    const auto step_size = static_cast<float>(lr / c1);
    const auto inv_c2 = static_cast<float>(1.0 / c2);
    const auto eps = static_cast<float>(eps_);
    const auto decay = static_cast<float>(lr * weight_decay_);
    auto& p = params.data();
    const auto& g = grads.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        m_[i] = b1 * m_[i] + (1.0f - b1) * g[i];
        v_[i] = b2 * v_[i] + (1.0f - b2) * g[i] * g[i];
        if (decay_[i]) p[i] -= decay * p[i];
        p[i] -= step_size * m_[i] / (std::sqrt(v_[i] * inv_c2) + eps);
    }
}

namespace {

double schedule_lr(const TrainConfig& c, std::size_t step, std::size_t total_steps) {
    if (c.warmup_steps > 0 && step < c.warmup_steps)
        return c.learning_rate * static_cast<double>(step + 1) / static_cast<double>(c.warmup_steps);
    if (c.schedule == LrSchedule::Constant || total_steps <= c.warmup_steps) return c.learning_rate;
    const double progress = static_cast<double>(step - c.warmup_steps) /
                            static_cast<double>(std::max<std::size_t>(1, total_steps - c.warmup_steps));
    return c.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(1.0, progress)));
}

float clip_gradients(LmParams& grads, double max_norm) {
    double sq = 0.0;
    for (float g : grads.data()) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const auto s = static_cast<float>(max_norm / (norm + 1e-12));
        for (float& g : grads.data()) g *= s;
    }
    return static_cast<float>(norm);
}

class Optimizer {
public:
    Optimizer(const TrainConfig& tc, const LmConfig& lc, LmParams& params, std::vector<TrainLogEntry>& log,
              const TrainCallback& cb)
        : tc_(tc), lc_(lc), params_(params), grads_(lc), adam_(tc, params), log_(log), cb_(cb),
          dropout_rng_(derive_seed(tc.seed, "dropout")) {}

    void run_batch(const std::vector<TokenSequence>& batch, const std::string& phase, std::size_t epoch,
                   double lr) {
        const double loss =
            loss_and_gradients(params_, lc_, batch, grads_, lc_.dropout > 0.0 ? &dropout_rng_ : nullptr);
        if (!std::isfinite(loss))
            throw Error(ErrorCode::NonFiniteLoss, "loss became non-finite at step " + std::to_string(step_));
        if (tc_.grad_clip) clip_gradients(grads_, *tc_.grad_clip);
        adam_.step(params_, grads_, lr);
        log_.push_back({step_, loss});
        if (cb_) cb_({phase, epoch, step_, loss, lr});
        ++step_;
    }

private:
    const TrainConfig& tc_;
    const LmConfig& lc_;
    LmParams& params_;
    LmParams grads_;
    AdamW adam_;
    std::vector<TrainLogEntry>& log_;
    const TrainCallback& cb_;
    Rng dropout_rng_;
    std::size_t step_ = 0;
};

std::vector<TokenSequence> pretrain_windows(const std::vector<std::string>& corpus, const Vocabulary& vocab,
                                            std::size_t context_len) {
    TokenSequence stream;
    for (const auto& line : corpus) {
        if (line.empty()) continue;
        const auto ids = tokenize(line, vocab);
        stream.insert(stream.end(), ids.begin(), ids.end());
        stream.push_back(Vocabulary::kEor);
    }
    std::vector<TokenSequence> windows;
    for (std::size_t at = 0; at + 1 < stream.size(); at += context_len)
        windows.emplace_back(stream.begin() + static_cast<std::ptrdiff_t>(at),
                             stream.begin() + static_cast<std::ptrdiff_t>(std::min(stream.size(), at + context_len)));
    if (!windows.empty() && windows.back().size() < 2) windows.pop_back();
    return windows;
}

}  // namespace

EpochPlanner::EpochPlanner(const Table& table, std::vector<std::size_t> rows, const TrainConfig& config)
    : table_(&table),
      rows_(std::move(rows)),
      permute_(config.permute),
      order_rng_(derive_seed(config.seed, "shuffle")),
      perm_rng_(derive_seed(config.seed, "permute")) {}

std::vector<EpochPlanner::Item> EpochPlanner::next_epoch() {
    auto order = rows_;
    for (std::size_t i = order.size(); i-- > 1;) std::swap(order[i], order[order_rng_.below(i + 1)]);
    std::vector<Item> plan;
    plan.reserve(order.size());
    for (auto r : order) {
        const auto m = observed_features(table_->row(r)).size();
        plan.push_back({r, permute_ ? sample_permutation(m, perm_rng_) : identity_permutation(m)});
    }
    return plan;
}

Checkpoint train(const Table& table, LmConfig lm_config, const TrainConfig& train_config,
                 const std::vector<std::string>& pretrain_corpus, const TrainCallback& callback) {
    lm_config.validate();
    train_config.validate();
    if (table.num_rows() == 0) throw Error(ErrorCode::EmptyTable, "cannot train on an empty table");
    const auto& tc = train_config;
    const Schema& schema = table.schema();

    Checkpoint ckpt;
    ckpt.schema = schema;
    ckpt.target = table.target();
    ckpt.vocab = fit_vocabulary(table, pretrain_corpus, lm_config.vocab_size, tc.permute, tc.seed);
    lm_config.vocab_size = ckpt.vocab.size();
    ckpt.config = lm_config;

    for (std::size_t i = 0; i < table.num_rows(); ++i) {
        const auto& row = table.row(i);
        const auto n = record_tokens(row, schema, identity_permutation(observed_features(row).size()), ckpt.vocab).size();
        if (n > lm_config.context_len)
            throw Error(ErrorCode::ContextOverflow, "row " + std::to_string(i) + " encodes to " + std::to_string(n) +
                                                        " tokens, context is " + std::to_string(lm_config.context_len));
    }

    ckpt.params = init_params(lm_config, derive_seed(lm_config.seed, "init"));
    Optimizer opt(tc, ckpt.config, ckpt.params, ckpt.train_log, callback);

    if (!pretrain_corpus.empty()) {
        auto windows = pretrain_windows(pretrain_corpus, ckpt.vocab, lm_config.context_len);
        Rng rng(derive_seed(tc.seed, "pretrain"));
        for (std::size_t epoch = 0; epoch < tc.pretrain_epochs && !windows.empty(); ++epoch) {
            for (std::size_t i = windows.size(); i-- > 1;) std::swap(windows[i], windows[rng.below(i + 1)]);
            for (std::size_t at = 0; at < windows.size(); at += tc.batch_size) {
                const auto end = std::min(windows.size(), at + tc.batch_size);
                std::vector<TokenSequence> batch(windows.begin() + static_cast<std::ptrdiff_t>(at),
                                                 windows.begin() + static_cast<std::ptrdiff_t>(end));
                opt.run_batch(batch, "pretrain", epoch, tc.learning_rate);
            }
        }
    }

    std::vector<std::size_t> train_rows(table.num_rows());
    std::iota(train_rows.begin(), train_rows.end(), 0);
    std::vector<TokenSequence> val_records;
    if (tc.val_fraction > 0.0 && table.num_rows() >= 2) {
        Rng rng(derive_seed(tc.seed, "val"));
        for (std::size_t i = train_rows.size(); i-- > 1;) std::swap(train_rows[i], train_rows[rng.below(i + 1)]);
        auto n_val = static_cast<std::size_t>(std::floor(tc.val_fraction * static_cast<double>(table.num_rows())));
        n_val = std::clamp<std::size_t>(n_val, 1, table.num_rows() - 1);
        for (std::size_t k = 0; k < n_val; ++k) {
            const auto& row = table.row(train_rows[k]);
            val_records.push_back(
                record_tokens(row, schema, identity_permutation(observed_features(row).size()), ckpt.vocab));
        }
        train_rows.erase(train_rows.begin(), train_rows.begin() + static_cast<std::ptrdiff_t>(n_val));
        std::sort(train_rows.begin(), train_rows.end());
    }

    EpochPlanner planner(table, train_rows, tc);
    const std::size_t steps_per_epoch = (train_rows.size() + tc.batch_size - 1) / tc.batch_size;
    const std::size_t total_steps = steps_per_epoch * tc.epochs;
    std::size_t step = 0;
    double best_val = INFINITY;
    std::size_t bad_epochs = 0;
    LmParams best_params;

    std::vector<TokenSequence> batch;
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        const auto plan = planner.next_epoch();
        for (std::size_t at = 0; at < plan.size(); at += tc.batch_size) {
            batch.clear();
            for (std::size_t k = at; k < std::min(plan.size(), at + tc.batch_size); ++k) {
                auto ids = record_tokens(table.row(plan[k].row), schema, plan[k].perm, ckpt.vocab);
                if (ids.size() > lm_config.context_len)
                    throw Error(ErrorCode::ContextOverflow, "row " + std::to_string(plan[k].row) + " encodes to " +
                                                                std::to_string(ids.size()) + " tokens");
                batch.push_back(std::move(ids));
            }
            opt.run_batch(batch, "train", epoch, schedule_lr(tc, step, total_steps));
            ++step;
        }
        if (!val_records.empty()) {
            double val = 0.0;
            for (std::size_t at = 0; at < val_records.size(); at += 64) {
                const std::vector<TokenSequence> chunk(
                    val_records.begin() + static_cast<std::ptrdiff_t>(at),
                    val_records.begin() + static_cast<std::ptrdiff_t>(std::min(val_records.size(), at + 64)));
                val += batch_nll(ckpt.params, ckpt.config, chunk) * static_cast<double>(chunk.size());
            }
            val /= static_cast<double>(val_records.size());
            if (callback) callback({"val", epoch, step, val, 0.0});
            if (val < best_val) {
                best_val = val;
                best_params = ckpt.params;
                bad_epochs = 0;
            } else if (++bad_epochs >= tc.patience) {
                break;
            }
        }
    }
    if (!val_records.empty() && !best_params.data().empty()) ckpt.params = std::move(best_params);
    return ckpt;
}

double evaluate_nll(const Checkpoint& ckpt, const Table& table) {
    std::vector<TokenSequence> records;
    for (const auto& row : table.rows())
        records.push_back(
            record_tokens(row, ckpt.schema, identity_permutation(observed_features(row).size()), ckpt.vocab));
    double total = 0.0;
    for (std::size_t at = 0; at < records.size(); at += 64) {
        const std::vector<TokenSequence> chunk(
            records.begin() + static_cast<std::ptrdiff_t>(at),
            records.begin() + static_cast<std::ptrdiff_t>(std::min(records.size(), at + 64)));
        total += batch_nll(ckpt.params, ckpt.config, chunk) * static_cast<double>(chunk.size());
    }
    return total / static_cast<double>(records.size());
}

}  // namespace great
