#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

namespace great {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

/// Byte-level BPE vocabulary. Ids 0..255 are raw bytes, 256 is PAD, 257 is
/// the end-of-record marker, and every later id is produced by one merge rule
/// (id 258 + k comes from merges[k]).
class Vocabulary {
public:
    static constexpr TokenId kPad = 256;
    static constexpr TokenId kEor = 257;
    static constexpr std::size_t kBaseSize = 258;

    /// Byte-only vocabulary.
    Vocabulary();
    /// Throws InvalidSpec if a merge references an id not defined before it.
    explicit Vocabulary(std::vector<std::pair<TokenId, TokenId>> merges);

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::vector<std::pair<TokenId, TokenId>>& merges() const { return merges_; }
    static bool is_special(TokenId id) { return id == kPad || id == kEor; }

    /// Rank of the merge (l, r), or -1.
    int merge_rank(TokenId l, TokenId r) const;

    bool operator==(const Vocabulary& o) const { return merges_ == o.merges_; }

private:
    std::vector<std::string> tokens_;
    std::vector<std::pair<TokenId, TokenId>> merges_;
    std::unordered_map<std::uint64_t, int> ranks_;
};

/// Splits text into merge domains: an optional single leading space followed
/// by a run of letters, digits, or punctuation; or a run of whitespace.
/// Merges never cross chunk boundaries, so a prompt ending at a clause
/// boundary tokenizes exactly like the same prefix of a full record.
std::vector<std::string_view> pretokenize(std::string_view text);

/// Greedy BPE: repeatedly merges the most frequent adjacent pair (ties go to
/// the smaller (left, right) id pair) until `target_size` ids exist or no
/// pair occurs at least twice. Throws TargetTooSmall when target_size < 258
/// and InvalidSpec on an empty corpus.
Vocabulary train_bpe(const std::vector<std::string>& corpus, std::size_t target_size);

/// Total over any byte string.
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab);

/// Concatenates token bytes (specials dropped) and repairs invalid UTF-8 with
/// U+FFFD. Throws UnknownId.
std::string detokenize(const TokenSequence& ids, const Vocabulary& vocab);

/// Replaces every invalid UTF-8 sequence with U+FFFD.
std::string sanitize_utf8(std::string_view bytes);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

nlohmann::json vocab_to_json(const Vocabulary& vocab);
Vocabulary vocab_from_json(const nlohmann::json& j);

}  // namespace great
