#include "great/model.hpp"

#include <cmath>
#include <numbers>

#include "great/error.hpp"

namespace great {

void LmConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); };
    if (vocab_size < Vocabulary::kBaseSize) fail("vocab_size must be at least 258");
    if (context_len < 2) fail("context_len must be at least 2");
    if (n_layers < 1) fail("n_layers must be at least 1");
    if (n_heads < 1 || d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
    if (d_ff < 1) fail("d_ff must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
}

nlohmann::json to_json(const LmConfig& c) {
    return {{"vocab_size", c.vocab_size}, {"context_len", c.context_len}, {"n_layers", c.n_layers},
            {"n_heads", c.n_heads},       {"d_model", c.d_model},         {"d_ff", c.d_ff},
            {"dropout", c.dropout},       {"seed", c.seed},               {"tie_embeddings", c.tie_embeddings}};
}

LmConfig lm_config_from_json(const nlohmann::json& j) {
    LmConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.context_len = j.at("context_len").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.tie_embeddings = j.at("tie_embeddings").get<bool>();
    return c;
}

ParamLayout::ParamLayout(const LmConfig& c) {
    auto add = [&](std::string name, std::size_t rows, std::size_t cols, bool decay) {
        tensors.push_back({std::move(name), rows, cols, total, decay});
        total += rows * cols;
        return tensors.size() - 1;
    };
    const std::size_t d = c.d_model;
    tok_emb = add("tok_emb", c.vocab_size, d, true);
    pos_emb = add("pos_emb", c.context_len, d, true);
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        const std::string p = "h" + std::to_string(l) + ".";
        Block b{};
        b.ln1_g = add(p + "ln1.g", 1, d, false);
        b.ln1_b = add(p + "ln1.b", 1, d, false);
        b.wqkv = add(p + "attn.wqkv", d, 3 * d, true);
        b.bqkv = add(p + "attn.bqkv", 1, 3 * d, false);
        b.wo = add(p + "attn.wo", d, d, true);
        b.bo = add(p + "attn.bo", 1, d, false);
        b.ln2_g = add(p + "ln2.g", 1, d, false);
        b.ln2_b = add(p + "ln2.b", 1, d, false);
        b.w1 = add(p + "mlp.w1", d, c.d_ff, true);
        b.b1 = add(p + "mlp.b1", 1, c.d_ff, false);
        b.w2 = add(p + "mlp.w2", c.d_ff, d, true);
        b.b2 = add(p + "mlp.b2", 1, d, false);
        blocks.push_back(b);
    }
    lnf_g = add("lnf.g", 1, d, false);
    lnf_b = add("lnf.b", 1, d, false);
    head = c.tie_embeddings ? tok_emb : add("head.w", c.vocab_size, d, true);
}

std::size_t ParamLayout::index(std::string_view name) const {
    for (std::size_t i = 0; i < tensors.size(); ++i)
        if (tensors[i].name == name) return i;
    throw Error(ErrorCode::ShapeMismatch, "no tensor named '" + std::string(name) + "'");
}

LmParams init_params(const LmConfig& config, std::uint64_t seed) {
    config.validate();
    LmParams p(config);
    Rng rng(seed);
    for (std::size_t t = 0; t < p.tensors().size(); ++t) {
        const auto& info = p.tensors()[t];
        const bool gain = info.name.ends_with(".g");
        auto m = p.mat(t);
        if (info.decay) {
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.normal(0.0, 0.02));
        } else {
            m.setConstant(gain ? 1.0f : 0.0f);
        }
    }
    return p;
}

namespace {

constexpr double kLnEps = 1e-5;

template <typename T>
T gelu(T x) {
    const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
    return T(0.5) * x * (T(1) + std::tanh(c * (x + T(0.044715) * x * x * x)));
}

template <typename T>
T gelu_grad(T x) {
    const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
    const T u = c * (x + T(0.044715) * x * x * x);
    const T t = std::tanh(u);
    return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * c * (T(1) + T(3 * 0.044715) * x * x);
}

/// y = (x - mean) * rstd * g + b, row-wise.
template <typename T, typename G, typename B>
void layer_norm(const Mat<T>& x, const G& g, const B& b, Mat<T>& xhat, Eigen::Matrix<T, Eigen::Dynamic, 1>& rstd,
                Mat<T>& y) {
    const auto n = x.rows();
    const auto d = x.cols();
    xhat.resize(n, d);
    y.resize(n, d);
    rstd.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const T mu = x.row(i).mean();
        xhat.row(i) = x.row(i).array() - mu;
        const T var = xhat.row(i).squaredNorm() / static_cast<T>(d);
        rstd(i) = T(1) / std::sqrt(var + static_cast<T>(kLnEps));
        xhat.row(i) *= rstd(i);
        y.row(i) = xhat.row(i).cwiseProduct(g.row(0)) + b.row(0);
    }
}

/// Accumulates dg, db and returns dx for the layer norm above.
template <typename T, typename G, typename DG>
Mat<T> layer_norm_backward(const Mat<T>& dy, const Mat<T>& xhat, const Eigen::Matrix<T, Eigen::Dynamic, 1>& rstd,
                           const G& g, DG dg, DG db) {
    const auto n = dy.rows();
    const auto d = dy.cols();
    Mat<T> dx(n, d);
    dg.row(0) += (dy.cwiseProduct(xhat)).colwise().sum();
    db.row(0) += dy.colwise().sum();
    for (Eigen::Index i = 0; i < n; ++i) {
        const RowVec<T> dxhat = dy.row(i).cwiseProduct(g.row(0));
        const T m1 = dxhat.mean();
        const T m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
        dx.row(i) = rstd(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2).matrix();
    }
    return dx;
}

struct Segment {
    Eigen::Index start;
    Eigen::Index len;
};

template <typename T>
struct BlockCache {
    Mat<T> x_in, xhat1, a, qkv, att, x_mid, xhat2, c, h, g, mask_att, mask_mlp;
    Eigen::Matrix<T, Eigen::Dynamic, 1> rstd1, rstd2;
    std::vector<Mat<T>> probs;  // per (segment, head)
};

/// Forward pass over several sequences packed row-wise. Causality holds
/// per segment, so packing equals running each sequence alone.
template <typename T>
class PackedPass {
public:
    PackedPass(const BasicParams<T>& params, const LmConfig& config, const std::vector<TokenSequence>& batch,
               Rng* dropout_rng)
        : p_(params), cfg_(config), L_(params.layout()), batch_(batch), rng_(dropout_rng) {
        const auto ctx = config.context_len;
        Eigen::Index start = 0;
        for (std::size_t s = 0; s < batch.size(); ++s) {
            const auto& seq = batch[s];
            if (seq.size() > ctx)
                throw Error(ErrorCode::ContextOverflow, "sequence " + std::to_string(s) + " has " +
                                                            std::to_string(seq.size()) + " tokens, context is " +
                                                            std::to_string(ctx));
            for (auto id : seq)
                if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size)
                    throw Error(ErrorCode::ShapeMismatch, "token id " + std::to_string(id) + " outside vocabulary");
            segs_.push_back({start, static_cast<Eigen::Index>(seq.size())});
            start += static_cast<Eigen::Index>(seq.size());
        }
        n_ = start;
        if (p_.layout().total != ParamLayout(config).total)
            throw Error(ErrorCode::ShapeMismatch, "parameters do not match the config");
    }

    const Mat<T>& run() {
        const auto d = static_cast<Eigen::Index>(cfg_.d_model);
        const auto heads = static_cast<Eigen::Index>(cfg_.n_heads);
        const auto dh = d / heads;
        const T scale = T(1) / std::sqrt(static_cast<T>(dh));
        const bool drop = rng_ && cfg_.dropout > 0.0;

        Mat<T> x(n_, d);
        const auto tok = p_.mat(L_.tok_emb);
        const auto pos = p_.mat(L_.pos_emb);
        for (std::size_t s = 0; s < batch_.size(); ++s)
            for (Eigen::Index k = 0; k < segs_[s].len; ++k)
                x.row(segs_[s].start + k) = tok.row(batch_[s][static_cast<std::size_t>(k)]) + pos.row(k);
        if (drop) {
            mask_emb_ = dropout_mask(n_, d);
            x = x.cwiseProduct(mask_emb_);
        }

        cache_.resize(L_.blocks.size());
        for (std::size_t l = 0; l < L_.blocks.size(); ++l) {
            const auto& b = L_.blocks[l];
            auto& cc = cache_[l];
            cc.x_in = x;
            layer_norm(x, p_.mat(b.ln1_g), p_.mat(b.ln1_b), cc.xhat1, cc.rstd1, cc.a);
            cc.qkv.noalias() = cc.a * p_.mat(b.wqkv);
            cc.qkv.rowwise() += p_.mat(b.bqkv).row(0);
            cc.att.setZero(n_, d);
            cc.probs.assign(segs_.size() * static_cast<std::size_t>(heads), Mat<T>());
            for (std::size_t s = 0; s < segs_.size(); ++s) {
                const auto [st, len] = segs_[s];
                if (len == 0) continue;
                for (Eigen::Index h = 0; h < heads; ++h) {
                    auto q = cc.qkv.block(st, h * dh, len, dh);
                    auto k = cc.qkv.block(st, d + h * dh, len, dh);
                    auto v = cc.qkv.block(st, 2 * d + h * dh, len, dh);
                    Mat<T> P = (q * k.transpose()) * scale;
                    for (Eigen::Index i = 0; i < len; ++i) {
                        const T mx = P.row(i).head(i + 1).maxCoeff();
                        P.row(i).head(i + 1) = (P.row(i).head(i + 1).array() - mx).exp();
                        P.row(i).head(i + 1) /= P.row(i).head(i + 1).sum();
                        P.row(i).tail(len - i - 1).setZero();
                    }
                    cc.att.block(st, h * dh, len, dh).noalias() = P * v;
                    cc.probs[s * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)] = std::move(P);
                }
            }
            Mat<T> y = cc.att * p_.mat(b.wo);
            y.rowwise() += p_.mat(b.bo).row(0);
            if (drop) {
                cc.mask_att = dropout_mask(n_, d);
                y = y.cwiseProduct(cc.mask_att);
            }
            cc.x_mid = cc.x_in + y;
            layer_norm(cc.x_mid, p_.mat(b.ln2_g), p_.mat(b.ln2_b), cc.xhat2, cc.rstd2, cc.c);
            cc.h.noalias() = cc.c * p_.mat(b.w1);
            cc.h.rowwise() += p_.mat(b.b1).row(0);
            cc.g = cc.h.unaryExpr([](T v) { return gelu(v); });
            Mat<T> m = cc.g * p_.mat(b.w2);
            m.rowwise() += p_.mat(b.b2).row(0);
            if (drop) {
                cc.mask_mlp = dropout_mask(n_, d);
                m = m.cwiseProduct(cc.mask_mlp);
            }
            x = cc.x_mid + m;
        }
        x_last_ = std::move(x);
        layer_norm(x_last_, p_.mat(L_.lnf_g), p_.mat(L_.lnf_b), xhatf_, rstdf_, f_);
        logits_.noalias() = f_ * p_.mat(L_.head).transpose();
        return logits_;
    }

    /// Mean-of-means cross-entropy and its gradient wrt the logits.
    double loss(Mat<T>* dlogits) {
        std::size_t counted = 0;
        std::vector<std::size_t> targets(segs_.size(), 0);
        for (std::size_t s = 0; s < segs_.size(); ++s) {
            for (std::size_t k = 1; k < batch_[s].size(); ++k)
                if (batch_[s][k] != Vocabulary::kPad) ++targets[s];
            if (targets[s]) ++counted;
        }
        if (counted == 0) throw Error(ErrorCode::ShapeMismatch, "batch has no prediction targets");
        if (dlogits) dlogits->setZero(logits_.rows(), logits_.cols());
        double total = 0.0;
        for (std::size_t s = 0; s < segs_.size(); ++s) {
            if (!targets[s]) continue;
            const double w = 1.0 / (static_cast<double>(targets[s]) * static_cast<double>(counted));
            double seq_loss = 0.0;
            for (std::size_t k = 0; k + 1 < batch_[s].size(); ++k) {
                const TokenId target = batch_[s][k + 1];
                if (target == Vocabulary::kPad) continue;
                const auto r = segs_[s].start + static_cast<Eigen::Index>(k);
                const T mx = logits_.row(r).maxCoeff();
                RowVec<T> e = (logits_.row(r).array() - mx).exp();
                const T z = e.sum();
                seq_loss += -(static_cast<double>(logits_(r, target) - mx) - std::log(static_cast<double>(z)));
                if (dlogits) {
                    dlogits->row(r) = e / z;
                    (*dlogits)(r, target) -= T(1);
                    dlogits->row(r) *= static_cast<T>(w);
                }
            }
            total += seq_loss / static_cast<double>(targets[s]);
        }
        return total / static_cast<double>(counted);
    }

    void backward(const Mat<T>& dlogits, BasicParams<T>& g) {
        const auto d = static_cast<Eigen::Index>(cfg_.d_model);
        const auto heads = static_cast<Eigen::Index>(cfg_.n_heads);
        const auto dh = d / heads;
        const T scale = T(1) / std::sqrt(static_cast<T>(dh));
        const bool drop = rng_ && cfg_.dropout > 0.0;

        g.mat(L_.head).noalias() += dlogits.transpose() * f_;
        Mat<T> df = dlogits * p_.mat(L_.head);
        Mat<T> dx = layer_norm_backward(df, xhatf_, rstdf_, p_.mat(L_.lnf_g), g.mat(L_.lnf_g), g.mat(L_.lnf_b));

        for (std::size_t l = L_.blocks.size(); l-- > 0;) {
            const auto& b = L_.blocks[l];
            auto& cc = cache_[l];
            Mat<T> dm = drop ? Mat<T>(dx.cwiseProduct(cc.mask_mlp)) : dx;
            g.mat(b.w2).noalias() += cc.g.transpose() * dm;
            g.mat(b.b2).row(0) += dm.colwise().sum();
            Mat<T> dh_ = dm * p_.mat(b.w2).transpose();
            dh_ = dh_.cwiseProduct(cc.h.unaryExpr([](T v) { return gelu_grad(v); }));
            g.mat(b.w1).noalias() += cc.c.transpose() * dh_;
            g.mat(b.b1).row(0) += dh_.colwise().sum();
            Mat<T> dc = dh_ * p_.mat(b.w1).transpose();
            Mat<T> dmid = dx + layer_norm_backward(dc, cc.xhat2, cc.rstd2, p_.mat(b.ln2_g), g.mat(b.ln2_g), g.mat(b.ln2_b));

            Mat<T> dy = drop ? Mat<T>(dmid.cwiseProduct(cc.mask_att)) : dmid;
            g.mat(b.wo).noalias() += cc.att.transpose() * dy;
            g.mat(b.bo).row(0) += dy.colwise().sum();
            Mat<T> datt = dy * p_.mat(b.wo).transpose();

            Mat<T> dqkv = Mat<T>::Zero(n_, 3 * d);
            for (std::size_t s = 0; s < segs_.size(); ++s) {
                const auto [st, len] = segs_[s];
                if (len == 0) continue;
                for (Eigen::Index h = 0; h < heads; ++h) {
                    const auto& P = cc.probs[s * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)];
                    auto q = cc.qkv.block(st, h * dh, len, dh);
                    auto k = cc.qkv.block(st, d + h * dh, len, dh);
                    auto v = cc.qkv.block(st, 2 * d + h * dh, len, dh);
                    auto dout = datt.block(st, h * dh, len, dh);
                    Mat<T> dP = dout * v.transpose();
                    dqkv.block(st, 2 * d + h * dh, len, dh).noalias() = P.transpose() * dout;
                    Mat<T> dS(len, len);
                    for (Eigen::Index i = 0; i < len; ++i) {
                        const T dot = dP.row(i).dot(P.row(i));
                        dS.row(i) = P.row(i).cwiseProduct((dP.row(i).array() - dot).matrix());
                    }
                    dqkv.block(st, h * dh, len, dh).noalias() = (dS * k) * scale;
                    dqkv.block(st, d + h * dh, len, dh).noalias() = (dS.transpose() * q) * scale;
                }
            }
            g.mat(b.wqkv).noalias() += cc.a.transpose() * dqkv;
            g.mat(b.bqkv).row(0) += dqkv.colwise().sum();
            Mat<T> da = dqkv * p_.mat(b.wqkv).transpose();
            dx = dmid + layer_norm_backward(da, cc.xhat1, cc.rstd1, p_.mat(b.ln1_g), g.mat(b.ln1_g), g.mat(b.ln1_b));
        }
        if (drop) dx = dx.cwiseProduct(mask_emb_);
        auto dtok = g.mat(L_.tok_emb);
        auto dpos = g.mat(L_.pos_emb);
        for (std::size_t s = 0; s < batch_.size(); ++s)
            for (Eigen::Index k = 0; k < segs_[s].len; ++k) {
                const auto r = segs_[s].start + k;
                dtok.row(batch_[s][static_cast<std::size_t>(k)]) += dx.row(r);
                dpos.row(k) += dx.row(r);
            }
    }

private:
    Mat<T> dropout_mask(Eigen::Index rows, Eigen::Index cols) {
        const double keep = 1.0 - cfg_.dropout;
        const T scale = static_cast<T>(1.0 / keep);
        Mat<T> m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng_->uniform() < keep ? scale : T(0);
        return m;
    }

    const BasicParams<T>& p_;
    const LmConfig& cfg_;
    const ParamLayout& L_;
    const std::vector<TokenSequence>& batch_;
    Rng* rng_;
    std::vector<Segment> segs_;
    Eigen::Index n_ = 0;
    std::vector<BlockCache<T>> cache_;
    Mat<T> mask_emb_, x_last_, xhatf_, f_, logits_;
    Eigen::Matrix<T, Eigen::Dynamic, 1> rstdf_;
};

}  // namespace

template <typename T>
Mat<T> forward(const BasicParams<T>& params, const LmConfig& config, const TokenSequence& tokens) {
    const std::vector<TokenSequence> batch{tokens};
    PackedPass<T> pass(params, config, batch, nullptr);
    return pass.run();
}

template <typename T>
double nll(const BasicParams<T>& params, const LmConfig& config, const TokenSequence& tokens) {
    if (tokens.size() < 2) throw Error(ErrorCode::ShapeMismatch, "nll needs at least two tokens");
    const std::vector<TokenSequence> batch{tokens};
    PackedPass<T> pass(params, config, batch, nullptr);
    pass.run();
    return pass.loss(nullptr);
}

template <typename T>
double batch_nll(const BasicParams<T>& params, const LmConfig& config, const std::vector<TokenSequence>& batch) {
    if (batch.empty()) throw Error(ErrorCode::ShapeMismatch, "empty batch");
    PackedPass<T> pass(params, config, batch, nullptr);
    pass.run();
    return pass.loss(nullptr);
}

template <typename T>
double loss_and_gradients(const BasicParams<T>& params, const LmConfig& config,
                          const std::vector<TokenSequence>& batch, BasicParams<T>& grads, Rng* dropout_rng) {
    if (batch.empty()) throw Error(ErrorCode::ShapeMismatch, "empty batch");
    PackedPass<T> pass(params, config, batch, dropout_rng);
    pass.run();
    Mat<T> dlogits;
    const double loss = pass.loss(&dlogits);
    if (grads.layout().total != params.layout().total) grads = BasicParams<T>(config);
    grads.set_zero();
    pass.backward(dlogits, grads);
    return loss;
}

template Mat<float> forward(const BasicParams<float>&, const LmConfig&, const TokenSequence&);
template Mat<double> forward(const BasicParams<double>&, const LmConfig&, const TokenSequence&);
template double nll(const BasicParams<float>&, const LmConfig&, const TokenSequence&);
template double nll(const BasicParams<double>&, const LmConfig&, const TokenSequence&);
template double batch_nll(const BasicParams<float>&, const LmConfig&, const std::vector<TokenSequence>&);
template double batch_nll(const BasicParams<double>&, const LmConfig&, const std::vector<TokenSequence>&);
template double loss_and_gradients(const BasicParams<float>&, const LmConfig&, const std::vector<TokenSequence>&,
                                   BasicParams<float>&, Rng*);
template double loss_and_gradients(const BasicParams<double>&, const LmConfig&, const std::vector<TokenSequence>&,
                                   BasicParams<double>&, Rng*);

Decoder::Decoder(const LmParams& params, const LmConfig& config) : params_(&params), config_(&config) {
    const auto ctx = static_cast<Eigen::Index>(config.context_len);
    const auto d = static_cast<Eigen::Index>(config.d_model);
    keys_.assign(config.n_layers, Mat<float>(ctx, d));
    values_.assign(config.n_layers, Mat<float>(ctx, d));
}

const Eigen::VectorXf& Decoder::step(TokenId token) {
    const auto& cfg = *config_;
    const auto& p = *params_;
    const auto& L = p.layout();
    if (pos_ >= cfg.context_len) throw Error(ErrorCode::ContextOverflow, "decoder context is full");
    if (token < 0 || static_cast<std::size_t>(token) >= cfg.vocab_size)
        throw Error(ErrorCode::ShapeMismatch, "token id outside vocabulary");
    const auto d = static_cast<Eigen::Index>(cfg.d_model);
    const auto heads = static_cast<Eigen::Index>(cfg.n_heads);
    const auto dh = d / heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    const auto t = static_cast<Eigen::Index>(pos_);

    auto norm = [](const RowVec<float>& in, auto g, auto b, RowVec<float>& out) {
        const float mu = in.mean();
        out = in.array() - mu;
        const float var = out.squaredNorm() / static_cast<float>(in.size());
        out *= 1.0f / std::sqrt(var + static_cast<float>(kLnEps));
        out = out.cwiseProduct(g.row(0)) + b.row(0);
    };

    x_ = p.mat(L.tok_emb).row(token) + p.mat(L.pos_emb).row(t);
    for (std::size_t l = 0; l < L.blocks.size(); ++l) {
        const auto& b = L.blocks[l];
        norm(x_, p.mat(b.ln1_g), p.mat(b.ln1_b), a_);
        qkv_.noalias() = a_ * p.mat(b.wqkv);
        qkv_ += p.mat(b.bqkv).row(0);
        keys_[l].row(t) = qkv_.segment(d, d);
        values_[l].row(t) = qkv_.segment(2 * d, d);
        att_.resize(d);
        for (Eigen::Index h = 0; h < heads; ++h) {
            auto K = keys_[l].block(0, h * dh, t + 1, dh);
            auto V = values_[l].block(0, h * dh, t + 1, dh);
            scores_.noalias() = K * qkv_.segment(h * dh, dh).transpose();
            scores_ *= scale;
            scores_ = (scores_.array() - scores_.maxCoeff()).exp();
            scores_ /= scores_.sum();
            att_.segment(h * dh, dh).noalias() = scores_.transpose() * V;
        }
        x_.noalias() += att_ * p.mat(b.wo);
        x_ += p.mat(b.bo).row(0);
        norm(x_, p.mat(b.ln2_g), p.mat(b.ln2_b), a_);
        hidden_.noalias() = a_ * p.mat(b.w1);
        hidden_ += p.mat(b.b1).row(0);
        hidden_ = hidden_.unaryExpr([](float v) { return gelu(v); });
        x_.noalias() += hidden_ * p.mat(b.w2);
        x_ += p.mat(b.b2).row(0);
    }
    norm(x_, p.mat(L.lnf_g), p.mat(L.lnf_b), a_);
    logits_.noalias() = p.mat(L.head) * a_.transpose();
    ++pos_;
    return logits_;
}

}  // namespace great
