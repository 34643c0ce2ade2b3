#pragma once

#include "brc/common.hpp"
#include "brc/tokenizer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace brc {

/// One contrastive entry: a question with an (A)/(B) choice block and the
/// label of the behavior-matching choice.
struct ContrastivePair {
    std::string question;
    std::string answer_matching_behavior;      // "(A)" or "(B)"
    std::string answer_not_matching_behavior;  // the other one
};

struct SplitIndices {
    std::vector<int> build;
    std::vector<int> eval;
};

struct BehaviorDataset {
    std::string behavior_name;
    std::vector<ContrastivePair> pairs;
    std::optional<SplitIndices> split;
    uint64_t fingerprint = 0;
};

/// Loads and validates a JSON array of {question, answer_matching_behavior,
/// answer_not_matching_behavior} objects. Schema violations report the
/// entry index and field.
BehaviorDataset load_dataset(const std::string& path);

/// Seeded deterministic shuffle, then ~90% build / ~10% eval (at least one
/// eval pair; a single-pair dataset lands in both subsets).
SplitIndices split_dataset(int n_pairs, uint32_t seed);

/// The two construction prompts: question + blank line + "I choose (X)",
/// behavior-matching choice first regardless of whether it is labeled (A)
/// or (B).
struct RenderedPair {
    std::string prompt_matching;
    std::string prompt_not_matching;
};
RenderedPair render_pair(const ContrastivePair& pair);

/// The evaluation prompt ends just before the choice letter; candidates are
/// the first continuation tokens of each choice in that exact left context.
struct EvalPrompt {
    std::string prompt;  // ends with "I choose ("
    TokenId token_matching = 0;
    TokenId token_not_matching = 0;
};
EvalPrompt render_eval_prompt(const ContrastivePair& pair, const BpeTokenizer& tokenizer);

}  // namespace brc
