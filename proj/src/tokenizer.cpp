#include "great/tokenizer.hpp"

#include <algorithm>
#include <map>
#include <optional>

#include "great/error.hpp"

namespace great {

namespace {

std::uint64_t pair_key(TokenId l, TokenId r) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(l)) << 32) | static_cast<std::uint32_t>(r);
}

enum class CharClass { Space, Letter, Digit, Other };

CharClass classify(unsigned char c) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') return CharClass::Space;
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80) return CharClass::Letter;
    if (c >= '0' && c <= '9') return CharClass::Digit;
    return CharClass::Other;
}

/// Merges every (l, r) occurrence in `ids`, left to right.
void apply_merge(std::vector<TokenId>& ids, TokenId l, TokenId r, TokenId merged) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < ids.size();) {
        if (i + 1 < ids.size() && ids[i] == l && ids[i + 1] == r) {
            ids[out++] = merged;
            i += 2;
        } else {
            ids[out++] = ids[i++];
        }
    }
    ids.resize(out);
}

}  // namespace

Vocabulary::Vocabulary() {
    tokens_.reserve(kBaseSize);
    for (int b = 0; b < 256; ++b) tokens_.emplace_back(1, static_cast<char>(b));
    tokens_.emplace_back();  // PAD
    tokens_.emplace_back();  // EOR
}

Vocabulary::Vocabulary(std::vector<std::pair<TokenId, TokenId>> merges) : Vocabulary() {
    merges_ = std::move(merges);
    for (std::size_t k = 0; k < merges_.size(); ++k) {
        const auto [l, r] = merges_[k];
        const auto defined = static_cast<TokenId>(tokens_.size());
        if (l < 0 || r < 0 || l >= defined || r >= defined || is_special(l) || is_special(r))
            throw Error(ErrorCode::InvalidSpec, "merge " + std::to_string(k) + " references an undefined id");
        tokens_.push_back(tokens_[static_cast<std::size_t>(l)] + tokens_[static_cast<std::size_t>(r)]);
        ranks_.emplace(pair_key(l, r), static_cast<int>(k));
    }
}

int Vocabulary::merge_rank(TokenId l, TokenId r) const {
    auto it = ranks_.find(pair_key(l, r));
    return it == ranks_.end() ? -1 : it->second;
}

std::vector<std::string_view> pretokenize(std::string_view text) {
    std::vector<std::string_view> chunks;
    const std::size_t n = text.size();
    std::size_t i = 0;
    while (i < n) {
        const std::size_t start = i;
        auto cls = classify(static_cast<unsigned char>(text[i]));
        if (cls == CharClass::Space) {
            if (text[i] == ' ' && i + 1 < n && classify(static_cast<unsigned char>(text[i + 1])) != CharClass::Space) {
                ++i;
                cls = classify(static_cast<unsigned char>(text[i]));
            } else {
                // Whitespace run; a final ' ' before a non-space is left for the next chunk.
                while (i < n && classify(static_cast<unsigned char>(text[i])) == CharClass::Space) {
                    if (text[i] == ' ' && i + 1 < n && i > start &&
                        classify(static_cast<unsigned char>(text[i + 1])) != CharClass::Space)
                        break;
                    ++i;
                }
                chunks.push_back(text.substr(start, i - start));
                continue;
            }
        }
        while (i < n && classify(static_cast<unsigned char>(text[i])) == cls) ++i;
        chunks.push_back(text.substr(start, i - start));
    }
    return chunks;
}

Vocabulary train_bpe(const std::vector<std::string>& corpus, std::size_t target_size) {
    if (target_size < Vocabulary::kBaseSize)
        throw Error(ErrorCode::TargetTooSmall, "target vocabulary size " + std::to_string(target_size) +
                                                   " is below the 258 base ids");
    if (corpus.empty()) throw Error(ErrorCode::InvalidSpec, "empty BPE training corpus");

    std::map<std::string_view, std::int64_t> chunk_counts;
    for (const auto& text : corpus)
        for (auto chunk : pretokenize(text)) ++chunk_counts[chunk];

    struct Word {
        std::vector<TokenId> ids;
        std::int64_t count;
    };
    std::vector<Word> words;
    words.reserve(chunk_counts.size());
    for (const auto& [chunk, count] : chunk_counts) {
        Word w{{}, count};
        for (unsigned char c : chunk) w.ids.push_back(c);
        words.push_back(std::move(w));
    }

    std::vector<std::pair<TokenId, TokenId>> merges;
    auto next_id = static_cast<TokenId>(Vocabulary::kBaseSize);
    std::unordered_map<std::uint64_t, std::int64_t> counts;
    while (static_cast<std::size_t>(next_id) < target_size) {
        counts.clear();
        for (const auto& w : words)
            for (std::size_t i = 0; i + 1 < w.ids.size(); ++i) counts[pair_key(w.ids[i], w.ids[i + 1])] += w.count;
        std::optional<std::uint64_t> best;
        std::int64_t best_count = 0;
        for (const auto& [key, c] : counts) {
            if (c > best_count || (c == best_count && best && key < *best)) {
                best = key;
                best_count = c;
            }
        }
        if (!best || best_count < 2) break;
        const auto l = static_cast<TokenId>(*best >> 32);
        const auto r = static_cast<TokenId>(*best & 0xffffffffu);
        for (auto& w : words) apply_merge(w.ids, l, r, next_id);
        merges.emplace_back(l, r);
        ++next_id;
    }
    return Vocabulary(std::move(merges));
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab) {
    TokenSequence out;
    out.reserve(text.size());
    std::vector<TokenId> ids;
    for (auto chunk : pretokenize(text)) {
        ids.assign(chunk.begin(), chunk.end());
        for (auto& id : ids) id = static_cast<unsigned char>(id);
        while (ids.size() > 1) {
            int best_rank = -1;
            for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
                const int r = vocab.merge_rank(ids[i], ids[i + 1]);
                if (r >= 0 && (best_rank < 0 || r < best_rank)) best_rank = r;
            }
            if (best_rank < 0) break;
            const auto [l, r] = vocab.merges()[static_cast<std::size_t>(best_rank)];
            apply_merge(ids, l, r, static_cast<TokenId>(Vocabulary::kBaseSize) + best_rank);
        }
        out.insert(out.end(), ids.begin(), ids.end());
    }
    return out;
}

std::string sanitize_utf8(std::string_view s) {
    static constexpr std::string_view kReplacement = "\xEF\xBF\xBD";
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    const std::size_t n = s.size();
    while (i < n) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t len = 0;
        std::uint32_t cp = 0, min_cp = 0;
        if (c < 0x80) {
            out.push_back(static_cast<char>(c));
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            len = 2, cp = c & 0x1F, min_cp = 0x80;
        } else if ((c & 0xF0) == 0xE0) {
            len = 3, cp = c & 0x0F, min_cp = 0x800;
        } else if ((c & 0xF8) == 0xF0) {
            len = 4, cp = c & 0x07, min_cp = 0x10000;
        }
        bool ok = len > 0 && i + len <= n;
        for (std::size_t k = 1; ok && k < len; ++k) {
            const auto cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xC0) != 0x80) ok = false;
            cp = (cp << 6) | (cc & 0x3F);
        }
        if (ok && (cp < min_cp || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))) ok = false;
        if (ok) {
            out.append(s.substr(i, len));
            i += len;
        } else {
            out.append(kReplacement);
            ++i;
        }
    }
    return out;
}

std::string detokenize(const TokenSequence& ids, const Vocabulary& vocab) {
    std::string bytes;
    for (auto id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab.size())
            throw Error(ErrorCode::UnknownId, "token id " + std::to_string(id) + " outside vocabulary of size " +
                                                  std::to_string(vocab.size()));
        if (Vocabulary::is_special(id)) continue;
        bytes += vocab.token(id);
    }
    return sanitize_utf8(bytes);
}

namespace {
constexpr std::string_view kB64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                                (static_cast<unsigned char>(bytes[i + 1]) << 8) | static_cast<unsigned char>(bytes[i + 2]);
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += kB64[(v >> 6) & 63];
        out += kB64[v & 63];
    }
    if (i < bytes.size()) {
        std::uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
        const bool two = i + 1 < bytes.size();
        if (two) v |= static_cast<unsigned char>(bytes[i + 1]) << 8;
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += two ? kB64[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

std::string base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) throw Error(ErrorCode::InvalidSpec, "bad base64 length");
    std::string out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        std::uint32_t v = 0;
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = text[i + static_cast<std::size_t>(k)];
            std::uint32_t d = 0;
            if (c == '=' && i + 4 == text.size() && k >= 2) {
                ++pad;
            } else {
                const auto p = kB64.find(c);
                if (p == std::string_view::npos || pad) throw Error(ErrorCode::InvalidSpec, "bad base64 digit");
                d = static_cast<std::uint32_t>(p);
            }
            v = (v << 6) | d;
        }
        out += static_cast<char>((v >> 16) & 0xFF);
        if (pad < 2) out += static_cast<char>((v >> 8) & 0xFF);
        if (pad < 1) out += static_cast<char>(v & 0xFF);
    }
    return out;
}

nlohmann::json vocab_to_json(const Vocabulary& vocab) {
    nlohmann::json tokens = nlohmann::json::array();
    for (const auto& t : vocab.tokens()) tokens.push_back(base64_encode(t));
    nlohmann::json merges = nlohmann::json::array();
    for (const auto& [l, r] : vocab.merges()) merges.push_back({l, r});
    return {{"tokens", tokens},
            {"merges", merges},
            {"special", {{"PAD", Vocabulary::kPad}, {"EOR", Vocabulary::kEor}}}};
}

Vocabulary vocab_from_json(const nlohmann::json& j) {
    try {
        std::vector<std::pair<TokenId, TokenId>> merges;
        for (const auto& m : j.at("merges")) merges.emplace_back(m.at(0).get<TokenId>(), m.at(1).get<TokenId>());
        const auto& special = j.at("special");
        if (special.at("PAD").get<TokenId>() != Vocabulary::kPad || special.at("EOR").get<TokenId>() != Vocabulary::kEor)
            throw Error(ErrorCode::VersionMismatch, "unexpected special token ids");
        Vocabulary vocab(std::move(merges));
        const auto& tokens = j.at("tokens");
        if (tokens.size() != vocab.size()) throw Error(ErrorCode::InvalidSpec, "token table size mismatch");
        for (std::size_t i = 0; i < tokens.size(); ++i)
            if (base64_decode(tokens[i].get<std::string>()) != vocab.tokens()[i])
                throw Error(ErrorCode::InvalidSpec, "token " + std::to_string(i) + " disagrees with merges");
        return vocab;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidSpec, std::string("malformed vocabulary: ") + e.what());
    }
}

}  // namespace great
