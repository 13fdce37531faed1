#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "great/checkpoint.hpp"
#include "great/codec.hpp"
#include "great/model.hpp"
#include "great/rng.hpp"
#include "great/table.hpp"
#include "json.hpp"

namespace great {

enum class LrSchedule { Constant, Cosine };

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    /// AdamW step size used for fine-tuning GPT-2 scale models. Training the
    /// desk-scale decoder from scratch needs a much larger value (~1e-3).
    double learning_rate = 5e-5;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::optional<double> grad_clip = 1.0;
    LrSchedule schedule = LrSchedule::Constant;
    std::size_t warmup_steps = 0;
    /// Fresh random clause order per record and epoch; false keeps schema order.
    bool permute = true;
    std::uint64_t seed = 0;
    /// Held-out share of rows for validation-loss early stopping (0 disables).
    double val_fraction = 0.0;
    std::size_t patience = 3;
    /// Epochs over the optional plain-text warm-start corpus.
    std::size_t pretrain_epochs = 1;

    /// Throws ConfigError.
    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);

struct TrainEvent {
    std::string phase;  // "pretrain", "train" or "val"
    std::size_t epoch = 0;
    std::size_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
};

using TrainCallback = std::function<void(const TrainEvent&)>;

/// Training text of one row: clause text plus the terminator.
TokenSequence record_tokens(const Row& row, const Schema& schema, const Permutation& perm, const Vocabulary& vocab);

/// Vocabulary fit on one encoding of every row plus the warm-start lines.
Vocabulary fit_vocabulary(const Table& table, const std::vector<std::string>& pretrain_corpus,
                          std::size_t target_size, bool permute, std::uint64_t seed);

/// Row order and clause order of the training records, epoch by epoch,
/// drawn exactly as train() consumes them.
class EpochPlanner {
public:
    struct Item {
        std::size_t row;
        Permutation perm;
    };
    /// `rows` are the table rows taking part in training.
    EpochPlanner(const Table& table, std::vector<std::size_t> rows, const TrainConfig& config);
    std::vector<Item> next_epoch();

private:
    const Table* table_;
    std::vector<std::size_t> rows_;
    bool permute_;
    Rng order_rng_, perm_rng_;
};

/// Decoupled-weight-decay Adam over a BasicParams buffer.
class AdamW {
public:
    AdamW(const TrainConfig& config, const LmParams& params);
    /// Applies one update with step size `lr`.
    void step(LmParams& params, const LmParams& grads, double lr);

private:
    double beta1_, beta2_, eps_, weight_decay_;
    std::vector<float> m_, v_;
    std::vector<bool> decay_;
    std::size_t t_ = 0;
};

/// Fits the vocabulary, optionally warm-starts on `pretrain_corpus` lines,
/// then trains on the encoded table. `lm_config.vocab_size` is the BPE target
/// and is replaced by the fitted vocabulary size in the returned checkpoint.
/// Throws ContextOverflow (with the offending row) or NonFiniteLoss.
Checkpoint train(const Table& table, LmConfig lm_config, const TrainConfig& train_config,
                 const std::vector<std::string>& pretrain_corpus = {}, const TrainCallback& callback = {});

/// Mean per-record nll over `table` encoded in schema order.
double evaluate_nll(const Checkpoint& ckpt, const Table& table);

}  // namespace great
