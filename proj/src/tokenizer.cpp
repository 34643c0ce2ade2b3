#include "brc/tokenizer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>

namespace brc {

namespace {

// ---- byte <-> unicode remapping -------------------------------------------
//
// GPT-2 maps every byte to a printable codepoint so BPE can operate on
// strings: printable latin bytes keep their value, the rest are shifted to
// 0x100 + n in byte order.

struct ByteUnicodeTable {
    std::array<uint32_t, 256> byte_to_cp{};
    std::unordered_map<uint32_t, uint8_t> cp_to_byte;

    ByteUnicodeTable() {
        auto printable = [](int b) {
            return (b >= 0x21 && b <= 0x7E) || (b >= 0xA1 && b <= 0xAC) ||
                   (b >= 0xAE && b <= 0xFF);
        };
        int shifted = 0;
        for (int b = 0; b < 256; ++b) {
            const uint32_t cp = printable(b) ? static_cast<uint32_t>(b)
                                             : static_cast<uint32_t>(256 + shifted++);
            byte_to_cp[b] = cp;
            cp_to_byte.emplace(cp, static_cast<uint8_t>(b));
        }
    }
};

const ByteUnicodeTable& byte_table() {
    static const ByteUnicodeTable table;
    return table;
}

void append_utf8(std::string& out, uint32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

// Decodes UTF-8; invalid sequences fall back to latin-1 byte values so that
// arbitrary byte strings still tokenize (byte-level BPE must accept anything).
std::vector<uint32_t> decode_utf8(std::string_view s, std::vector<size_t>* byte_offsets) {
    std::vector<uint32_t> cps;
    cps.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) {
        if (byte_offsets) byte_offsets->push_back(i);
        const auto b0 = static_cast<uint8_t>(s[i]);
        uint32_t cp = b0;
        size_t len = 1;
        if (b0 >= 0xF0 && b0 < 0xF8)
            len = 4, cp = b0 & 0x07;
        else if (b0 >= 0xE0)
            len = 3, cp = b0 & 0x0F;
        else if (b0 >= 0xC0)
            len = 2, cp = b0 & 0x1F;
        else if (b0 >= 0x80)
            len = 1;  // stray continuation byte
        if (len > 1) {
            if (i + len > s.size()) {
                cp = b0;
                len = 1;
            } else {
                for (size_t k = 1; k < len; ++k) {
                    const auto bk = static_cast<uint8_t>(s[i + k]);
                    if ((bk & 0xC0) != 0x80) {
                        cp = b0;
                        len = 1;
                        break;
                    }
                    cp = (cp << 6) | (bk & 0x3F);
                }
            }
        }
        cps.push_back(cp);
        i += len;
    }
    if (byte_offsets) byte_offsets->push_back(s.size());
    return cps;
}

// ---- unicode classes used by the pre-tokenizer -----------------------------
//
// Range tables for \p{L}, \p{N} and \s covering the scripts this project
// processes (Latin incl. extensions, Greek, Cyrillic, Hebrew, Arabic,
// Devanagari, Thai, kana, CJK, Hangul, fullwidth forms, common numeric
// signs). Unlisted codepoints classify as "other", like symbols and emoji.

struct Range {
    uint32_t lo, hi;
};

constexpr Range kLetterRanges[] = {
    {0x41, 0x5A},       {0x61, 0x7A},       {0xAA, 0xAA},       {0xB5, 0xB5},
    {0xBA, 0xBA},       {0xC0, 0xD6},       {0xD8, 0xF6},       {0xF8, 0x2C1},
    {0x370, 0x373},     {0x376, 0x377},     {0x37B, 0x37D},     {0x37F, 0x37F},
    {0x386, 0x386},     {0x388, 0x38A},     {0x38C, 0x38C},     {0x38E, 0x3A1},
    {0x3A3, 0x481},     {0x48A, 0x52F},     {0x531, 0x556},     {0x561, 0x587},
    {0x5D0, 0x5EA},     {0x5EF, 0x5F2},     {0x620, 0x64A},     {0x66E, 0x66F},
    {0x671, 0x6D3},     {0x904, 0x939},     {0x93D, 0x93D},     {0x950, 0x950},
    {0x958, 0x961},     {0x971, 0x980},     {0xE01, 0xE30},     {0xE32, 0xE33},
    {0xE40, 0xE46},     {0x10A0, 0x10C5},   {0x10D0, 0x10FA},   {0x1100, 0x1159},
    {0x1E00, 0x1EFF},   {0x1F00, 0x1F15},   {0x1F18, 0x1F1D},   {0x1F20, 0x1F45},
    {0x3041, 0x3096},   {0x309D, 0x309F},   {0x30A1, 0x30FA},   {0x30FC, 0x30FF},
    {0x31F0, 0x31FF},   {0x3400, 0x4DBF},   {0x4E00, 0x9FFF},   {0xAC00, 0xD7A3},
    {0xF900, 0xFA6D},   {0xFF21, 0xFF3A},   {0xFF41, 0xFF5A},   {0xFF66, 0xFF9F},
    {0x20000, 0x2A6DF},
};

constexpr Range kNumberRanges[] = {
    {0x30, 0x39},       {0xB2, 0xB3},       {0xB9, 0xB9},       {0xBC, 0xBE},
    {0x660, 0x669},     {0x6F0, 0x6F9},     {0x966, 0x96F},     {0xE50, 0xE59},
    {0x2070, 0x2070},   {0x2074, 0x2079},   {0x2080, 0x2089},   {0x2150, 0x2182},
    {0x2460, 0x2468},   {0xFF10, 0xFF19},
};

constexpr Range kSpaceRanges[] = {
    {0x09, 0x0D},       {0x1C, 0x1F},       {0x20, 0x20},       {0x85, 0x85},
    {0xA0, 0xA0},       {0x1680, 0x1680},   {0x2000, 0x200A},   {0x2028, 0x2029},
    {0x202F, 0x202F},   {0x205F, 0x205F},   {0x3000, 0x3000},
};

template <size_t N>
bool in_ranges(const Range (&ranges)[N], uint32_t cp) {
    auto it = std::upper_bound(std::begin(ranges), std::end(ranges), cp,
                               [](uint32_t v, const Range& r) { return v < r.lo; });
    return it != std::begin(ranges) && cp <= std::prev(it)->hi;
}

bool is_letter(uint32_t cp) { return in_ranges(kLetterRanges, cp); }
bool is_number(uint32_t cp) { return in_ranges(kNumberRanges, cp); }
bool is_space(uint32_t cp) { return in_ranges(kSpaceRanges, cp); }

// Splits codepoints exactly like the GPT-2 pre-tokenizer regex
//   's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
// evaluated as an ordered alternation at each position.
std::vector<std::pair<size_t, size_t>> split_codepoints(const std::vector<uint32_t>& cps) {
    std::vector<std::pair<size_t, size_t>> spans;
    const size_t n = cps.size();
    size_t i = 0;
    auto is_other = [](uint32_t cp) {
        return !is_space(cp) && !is_letter(cp) && !is_number(cp);
    };
    while (i < n) {
        // contractions
        if (cps[i] == '\'' && i + 1 < n) {
            const uint32_t c1 = cps[i + 1];
            if (c1 == 's' || c1 == 't' || c1 == 'm' || c1 == 'd') {
                spans.emplace_back(i, i + 2);
                i += 2;
                continue;
            }
            if (i + 2 < n) {
                const uint32_t c2 = cps[i + 2];
                if ((c1 == 'r' && c2 == 'e') || (c1 == 'v' && c2 == 'e') ||
                    (c1 == 'l' && c2 == 'l')) {
                    spans.emplace_back(i, i + 3);
                    i += 3;
                    continue;
                }
            }
        }
        // " ?<class>+" for letters, numbers, then everything else
        {
            size_t j = i;
            if (cps[j] == ' ' && j + 1 < n) ++j;
            bool matched = false;
            for (auto* pred : {&is_letter, &is_number, +is_other}) {
                if (j < n && (*pred)(cps[j])) {
                    size_t k = j;
                    while (k < n && (*pred)(cps[k])) ++k;
                    spans.emplace_back(i, k);
                    i = k;
                    matched = true;
                    break;
                }
            }
            if (matched) continue;
        }
        // whitespace runs: keep the last char for the next token when more
        // input follows ("\s+(?!\S)" with backtracking), else take the run
        {
            size_t k = i;
            while (k < n && is_space(cps[k])) ++k;
            if (k == n) {
                spans.emplace_back(i, k);
                i = k;
            } else if (k - i > 1) {
                spans.emplace_back(i, k - 1);
                i = k - 1;
            } else {
                spans.emplace_back(i, k);  // single non-' ' whitespace: \s+
                i = k;
            }
        }
    }
    return spans;
}

std::string read_file_or_throw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

}  // namespace

BpeTokenizer BpeTokenizer::load(const std::string& vocab_path, const std::string& merges_path) {
    BpeTokenizer tok;

    nlohmann::json vocab;
    try {
        vocab = nlohmann::json::parse(read_file_or_throw(vocab_path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("vocabulary file " + vocab_path + ": " + e.what());
    }
    if (!vocab.is_object() || vocab.empty())
        throw DataError("vocabulary file " + vocab_path + ": expected non-empty object");

    TokenId max_id = 0;
    for (const auto& [token, id] : vocab.items()) {
        if (!id.is_number_integer())
            throw DataError("vocabulary entry '" + token + "': id is not an integer");
        max_id = std::max(max_id, id.get<TokenId>());
    }
    tok.id_to_token_.resize(static_cast<size_t>(max_id) + 1);
    for (const auto& [token, id] : vocab.items()) {
        const auto tid = id.get<TokenId>();
        if (tid < 0) throw DataError("vocabulary entry '" + token + "': negative id");
        tok.id_to_token_[static_cast<size_t>(tid)] = token;
        tok.token_to_id_.emplace(token, tid);
    }

    const std::string merges = read_file_or_throw(merges_path);
    size_t pos = 0;
    int rank = 0;
    bool first_line = true;
    while (pos < merges.size()) {
        size_t end = merges.find('\n', pos);
        if (end == std::string::npos) end = merges.size();
        std::string_view line(merges.data() + pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = end + 1;
        if (first_line) {
            first_line = false;
            if (line.rfind("#version", 0) == 0) continue;
        }
        if (line.empty()) continue;
        const size_t sp = line.find(' ');
        if (sp == std::string_view::npos || sp == 0 || sp + 1 == line.size())
            throw DataError("merges file " + merges_path + ": malformed line " +
                            std::to_string(rank + 1));
        tok.merge_rank_.emplace(std::string(line), rank++);
    }
    return tok;
}

BpeTokenizer BpeTokenizer::byte_level() {
    BpeTokenizer tok;
    tok.id_to_token_.resize(256);
    for (int b = 0; b < 256; ++b) {
        std::string s;
        append_utf8(s, byte_table().byte_to_cp[static_cast<size_t>(b)]);
        tok.id_to_token_[static_cast<size_t>(b)] = s;
        tok.token_to_id_.emplace(s, b);
    }
    return tok;
}

std::vector<std::pair<size_t, size_t>> BpeTokenizer::pretokenize(std::string_view text) const {
    std::vector<size_t> offsets;
    const auto cps = decode_utf8(text, &offsets);
    std::vector<std::pair<size_t, size_t>> byte_spans;
    for (const auto& [lo, hi] : split_codepoints(cps)) {
        byte_spans.emplace_back(offsets[lo], offsets[hi]);
    }
    return byte_spans;
}

std::vector<TokenId> BpeTokenizer::bpe_word(const std::string& mapped) const {
    // symbols start as single mapped codepoints and merge pairwise by rank
    std::vector<std::string> symbols;
    {
        const auto cps = decode_utf8(mapped, nullptr);
        symbols.reserve(cps.size());
        for (uint32_t cp : cps) {
            std::string s;
            append_utf8(s, cp);
            symbols.push_back(std::move(s));
        }
    }
    if (!merge_rank_.empty()) {
        while (symbols.size() > 1) {
            int best_rank = std::numeric_limits<int>::max();
            size_t best_pos = 0;
            std::string key;
            for (size_t k = 0; k + 1 < symbols.size(); ++k) {
                key.assign(symbols[k]);
                key.push_back(' ');
                key.append(symbols[k + 1]);
                const auto it = merge_rank_.find(key);
                if (it != merge_rank_.end() && it->second < best_rank) {
                    best_rank = it->second;
                    best_pos = k;
                }
            }
            if (best_rank == std::numeric_limits<int>::max()) break;
            const std::string left = symbols[best_pos];
            const std::string right = symbols[best_pos + 1];
            // merge every occurrence of the winning pair, left to right
            std::vector<std::string> next;
            next.reserve(symbols.size());
            for (size_t k = 0; k < symbols.size();) {
                if (k + 1 < symbols.size() && symbols[k] == left && symbols[k + 1] == right) {
                    next.push_back(left + right);
                    k += 2;
                } else {
                    next.push_back(std::move(symbols[k]));
                    ++k;
                }
            }
            symbols = std::move(next);
        }
    }
    std::vector<TokenId> ids;
    ids.reserve(symbols.size());
    for (const auto& s : symbols) {
        const auto it = token_to_id_.find(s);
        if (it == token_to_id_.end())
            throw DataError("tokenizer: symbol '" + s + "' missing from vocabulary");
        ids.push_back(it->second);
    }
    return ids;
}

std::vector<TokenId> BpeTokenizer::encode(std::string_view text) const {
    std::vector<TokenId> ids;
    for (const auto& [lo, hi] : pretokenize(text)) {
        std::string mapped;
        mapped.reserve((hi - lo) * 2);
        for (size_t b = lo; b < hi; ++b) {
            append_utf8(mapped, byte_table().byte_to_cp[static_cast<uint8_t>(text[b])]);
        }
        const auto word_ids = bpe_word(mapped);
        ids.insert(ids.end(), word_ids.begin(), word_ids.end());
    }
    return ids;
}

std::string BpeTokenizer::decode(std::span<const TokenId> ids) const {
    std::string mapped;
    for (const TokenId id : ids) {
        if (id < 0 || static_cast<size_t>(id) >= id_to_token_.size())
            throw DataError("decode: token id " + std::to_string(id) + " out of range [0, " +
                            std::to_string(id_to_token_.size()) + ")");
        mapped += id_to_token_[static_cast<size_t>(id)];
    }
    std::string out;
    out.reserve(mapped.size());
    for (uint32_t cp : decode_utf8(mapped, nullptr)) {
        const auto it = byte_table().cp_to_byte.find(cp);
        if (it == byte_table().cp_to_byte.end())
            throw DataError("decode: vocabulary token contains unmapped codepoint");
        out.push_back(static_cast<char>(it->second));
    }
    return out;
}

}  // namespace brc
