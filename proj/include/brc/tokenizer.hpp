#pragma once

#include "brc/common.hpp"

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace brc {

/// Byte-level BPE tokenizer compatible with the GPT-2 vocabulary/merges
/// files: byte-to-unicode remapping, regex-equivalent pre-tokenization,
/// then rank-ordered pair merging. encode/decode round-trip on any input.
class BpeTokenizer {
public:
    static BpeTokenizer load(const std::string& vocab_path, const std::string& merges_path);

    /// 256-entry vocabulary, one token per byte, no merges. Used for small
    /// synthetic models in tests; any ASCII text encodes to ids < 256.
    static BpeTokenizer byte_level();

    std::vector<TokenId> encode(std::string_view text) const;
    std::string decode(std::span<const TokenId> ids) const;

    int vocab_size() const { return static_cast<int>(id_to_token_.size()); }

    /// Pre-tokenizer split offsets (byte ranges), exposed for tests.
    std::vector<std::pair<size_t, size_t>> pretokenize(std::string_view text) const;

    /// Empty tokenizer; load() or byte_level() produce usable ones.
    BpeTokenizer() = default;

private:
    std::vector<TokenId> bpe_word(const std::string& mapped) const;

    std::unordered_map<std::string, TokenId> token_to_id_;
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> merge_rank_;  // "left right" -> rank
};

}  // namespace brc
