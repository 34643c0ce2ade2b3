#include "brc/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>

namespace brc {

namespace {

std::string field_error(size_t index, const std::string& what) {
    return "dataset entry " + std::to_string(index) + ": " + what;
}

void validate_pair(const ContrastivePair& p, size_t index) {
    const bool matching_ok =
        p.answer_matching_behavior == "(A)" || p.answer_matching_behavior == "(B)";
    const bool other_ok = p.answer_not_matching_behavior == "(A)" ||
                          p.answer_not_matching_behavior == "(B)";
    if (!matching_ok)
        throw DataError(field_error(index, "answer_matching_behavior must be \"(A)\" or \"(B)\""));
    if (!other_ok)
        throw DataError(
            field_error(index, "answer_not_matching_behavior must be \"(A)\" or \"(B)\""));
    if (p.answer_matching_behavior == p.answer_not_matching_behavior)
        throw DataError(field_error(index, "answer labels must be distinct"));
    if (p.question.find("(A)") == std::string::npos ||
        p.question.find("(B)") == std::string::npos)
        throw DataError(field_error(index, "question must contain both (A) and (B) choices"));
}

}  // namespace

BehaviorDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset: " + path);
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("dataset " + path + ": " + e.what());
    }
    if (!j.is_array()) throw DataError("dataset " + path + ": expected a JSON array");
    if (j.empty()) throw DataError("dataset " + path + ": empty dataset");

    BehaviorDataset ds;
    ds.behavior_name = std::filesystem::path(path).stem().string();
    ds.pairs.reserve(j.size());
    for (size_t i = 0; i < j.size(); ++i) {
        const auto& entry = j[i];
        if (!entry.is_object()) throw DataError(field_error(i, "expected an object"));
        ContrastivePair p;
        for (const char* key :
             {"question", "answer_matching_behavior", "answer_not_matching_behavior"}) {
            if (!entry.contains(key) || !entry[key].is_string())
                throw DataError(field_error(i, std::string("missing string field '") + key + "'"));
        }
        p.question = entry["question"].get<std::string>();
        p.answer_matching_behavior = entry["answer_matching_behavior"].get<std::string>();
        p.answer_not_matching_behavior = entry["answer_not_matching_behavior"].get<std::string>();
        validate_pair(p, i);
        ds.pairs.push_back(std::move(p));
    }

    Fnv1a hash;
    hash.update(raw);
    ds.fingerprint = hash.digest();
    return ds;
}

SplitIndices split_dataset(int n_pairs, uint32_t seed) {
    if (n_pairs <= 0) throw DataError("split_dataset: empty dataset");
    std::vector<int> order(static_cast<size_t>(n_pairs));
    for (int i = 0; i < n_pairs; ++i) order[static_cast<size_t>(i)] = i;
    deterministic_shuffle(order, seed);

    SplitIndices split;
    if (n_pairs == 1) {
        split.build = {0};
        split.eval = {0};
        return split;
    }
    const int n_eval = std::max(1, n_pairs / 10);
    split.eval.assign(order.begin(), order.begin() + n_eval);
    split.build.assign(order.begin() + n_eval, order.end());
    std::sort(split.eval.begin(), split.eval.end());
    std::sort(split.build.begin(), split.build.end());
    return split;
}

RenderedPair render_pair(const ContrastivePair& pair) {
    RenderedPair r;
    r.prompt_matching = pair.question + "\n\nI choose " + pair.answer_matching_behavior;
    r.prompt_not_matching = pair.question + "\n\nI choose " + pair.answer_not_matching_behavior;
    return r;
}

EvalPrompt render_eval_prompt(const ContrastivePair& pair, const BpeTokenizer& tokenizer) {
    EvalPrompt ep;
    ep.prompt = pair.question + "\n\nI choose (";

    const auto base_ids = tokenizer.encode(ep.prompt);
    auto continuation_token = [&](const std::string& label) {
        // label is "(A)" or "(B)"; the continuation starts at the letter
        const std::string letter = label.substr(1, 1);
        const auto full_ids = tokenizer.encode(ep.prompt + letter);
        size_t common = 0;
        while (common < base_ids.size() && common < full_ids.size() &&
               base_ids[common] == full_ids[common])
            ++common;
        if (common >= full_ids.size())
            throw DataError("eval prompt: continuation '" + letter +
                            "' produced no new token after the prompt");
        return full_ids[common];
    };
    const TokenId tm = continuation_token(pair.answer_matching_behavior);
    const TokenId tn = continuation_token(pair.answer_not_matching_behavior);
    if (tm == tn)
        throw DataError(
            "eval prompt: candidate continuations tokenize to the same first token (id " +
            std::to_string(tm) + "); cannot score this pair");
    ep.token_matching = tm;
    ep.token_not_matching = tn;
    return ep;
}

}  // namespace brc
