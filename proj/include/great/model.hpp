#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "great/rng.hpp"
#include "great/tokenizer.hpp"
#include "json.hpp"

namespace great {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <typename T>
using MatMap = Eigen::Map<Mat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const Mat<T>>;

/// Decoder-only transformer hyperparameters. Pre-layer-norm GPT-2 blocks with
/// GELU feed-forward layers and learned absolute positions.
struct LmConfig {
    std::size_t vocab_size = 512;
    std::size_t context_len = 256;
    std::size_t n_layers = 4;
    std::size_t n_heads = 4;
    std::size_t d_model = 128;
    std::size_t d_ff = 512;
    double dropout = 0.0;
    std::uint64_t seed = 0;
    /// Share the output projection with the token embedding.
    bool tie_embeddings = false;

    /// Throws ConfigError.
    void validate() const;
    bool operator==(const LmConfig&) const = default;
};

nlohmann::json to_json(const LmConfig& c);
LmConfig lm_config_from_json(const nlohmann::json& j);

struct TensorInfo {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t offset = 0;
    /// Weight decay applies (matrices and embeddings, not biases or norms).
    bool decay = false;

    std::size_t size() const { return rows * cols; }
};

/// Indices into the tensor table, resolved once per config.
struct ParamLayout {
    struct Block {
        std::size_t ln1_g, ln1_b, wqkv, bqkv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
    };
    std::vector<TensorInfo> tensors;
    std::vector<Block> blocks;
    std::size_t tok_emb = 0, pos_emb = 0, lnf_g = 0, lnf_b = 0, head = 0;
    std::size_t total = 0;

    explicit ParamLayout(const LmConfig& config);
    ParamLayout() = default;
    std::size_t index(std::string_view name) const;
};

/// Heap buffer aligned to Eigen's widest packet. Vectorized kernels peel a
/// misaligned head in scalar code, so an address-dependent alignment would
/// make float rounding (and checkpoints) differ from run to run.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

/// All model tensors in one contiguous buffer. Gradients share the type.
template <typename T>
class BasicParams {
public:
    BasicParams() = default;
    /// Zero-filled tensors laid out for `config`.
    explicit BasicParams(const LmConfig& config) : layout_(config), data_(layout_.total, T(0)) {}

    const ParamLayout& layout() const { return layout_; }
    const std::vector<TensorInfo>& tensors() const { return layout_.tensors; }
    AlignedVector<T>& data() { return data_; }
    const AlignedVector<T>& data() const { return data_; }

    MatMap<T> mat(std::size_t t) {
        const auto& info = layout_.tensors[t];
        return MatMap<T>(data_.data() + info.offset, static_cast<Eigen::Index>(info.rows),
                         static_cast<Eigen::Index>(info.cols));
    }
    ConstMatMap<T> mat(std::size_t t) const {
        const auto& info = layout_.tensors[t];
        return ConstMatMap<T>(data_.data() + info.offset, static_cast<Eigen::Index>(info.rows),
                              static_cast<Eigen::Index>(info.cols));
    }
    MatMap<T> mat(std::string_view name) { return mat(layout_.index(name)); }
    ConstMatMap<T> mat(std::string_view name) const { return mat(layout_.index(name)); }

    void set_zero() { std::fill(data_.begin(), data_.end(), T(0)); }

    template <typename U>
    BasicParams<U> cast() const {
        BasicParams<U> out;
        out.layout_ = layout_;
        out.data_.assign(data_.begin(), data_.end());
        return out;
    }

    bool operator==(const BasicParams& o) const { return data_ == o.data_; }

private:
    template <typename U>
    friend class BasicParams;

    ParamLayout layout_;
    AlignedVector<T> data_;
};

using LmParams = BasicParams<float>;

/// Normal(0, 0.02) weights and embeddings, zero biases, unit norm gains.
LmParams init_params(const LmConfig& config, std::uint64_t seed);

/// Logits [seq_len x vocab_size]; row k depends only on tokens 0..k.
/// Throws ContextOverflow or ShapeMismatch.
template <typename T>
Mat<T> forward(const BasicParams<T>& params, const LmConfig& config, const TokenSequence& tokens);

/// Mean next-token cross-entropy; positions whose target is PAD are skipped.
template <typename T>
double nll(const BasicParams<T>& params, const LmConfig& config, const TokenSequence& tokens);

/// Mean over the batch of each sequence's nll, without gradients.
template <typename T>
double batch_nll(const BasicParams<T>& params, const LmConfig& config, const std::vector<TokenSequence>& batch);

/// Mean over the batch of each sequence's nll. Sequences without any non-PAD
/// target are ignored. `grads` is resized and overwritten with the exact
/// gradient. A non-null `dropout_rng` enables dropout (training mode).
template <typename T>
double loss_and_gradients(const BasicParams<T>& params, const LmConfig& config,
                          const std::vector<TokenSequence>& batch, BasicParams<T>& grads,
                          Rng* dropout_rng = nullptr);

template <typename T>
BasicParams<T> gradients(const BasicParams<T>& params, const LmConfig& config,
                         const std::vector<TokenSequence>& batch) {
    BasicParams<T> grads(config);
    loss_and_gradients(params, config, batch, grads);
    return grads;
}

/// Incremental single-sequence inference with a key/value cache. Produces
/// the same logits as `forward` one position at a time.
class Decoder {
public:
    Decoder(const LmParams& params, const LmConfig& config);

    /// Feeds one token and returns the logits for the next position.
    /// Throws ContextOverflow once context_len tokens were fed.
    const Eigen::VectorXf& step(TokenId token);
    std::size_t position() const { return pos_; }

private:
    const LmParams* params_;
    const LmConfig* config_;
    std::vector<Mat<float>> keys_, values_;
    std::size_t pos_ = 0;
    RowVec<float> x_, a_, qkv_, att_, hidden_;
    Eigen::VectorXf scores_, logits_;
};

}  // namespace great
