#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "brc/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

using namespace brc;

namespace {

std::string write_temp(const std::string& name, const std::string& contents) {
    const std::string dir = "/tmp/brc_dataset_test";
    std::filesystem::create_directories(dir);
    const std::string path = dir + "/" + name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << contents;
    return path;
}

constexpr const char* kValid = R"json([
  {"question": "Q1?\n\nChoices:\n (A) yes\n (B) no",
   "answer_matching_behavior": "(A)", "answer_not_matching_behavior": "(B)"},
  {"question": "Q2?\n\nChoices:\n (A) up\n (B) down",
   "answer_matching_behavior": "(B)", "answer_not_matching_behavior": "(A)"}
])json";

}  // namespace

TEST_CASE("loads and validates a well-formed dataset") {
    const auto path = write_temp("valid.json", kValid);
    const BehaviorDataset ds = load_dataset(path);
    CHECK(ds.behavior_name == "valid");
    REQUIRE(ds.pairs.size() == 2);
    CHECK(ds.pairs[0].answer_matching_behavior == "(A)");
    CHECK(ds.pairs[1].answer_matching_behavior == "(B)");
    CHECK(ds.fingerprint != 0);
    CHECK(load_dataset(path).fingerprint == ds.fingerprint);
}

TEST_CASE("schema violations report the entry index") {
    const auto both_a = write_temp("both_a.json", R"json([
      {"question": "Q?\n (A) x\n (B) y",
       "answer_matching_behavior": "(A)", "answer_not_matching_behavior": "(A)"}])json");
    CHECK_THROWS_WITH_AS(static_cast<void>(load_dataset(both_a)), doctest::Contains("entry 0"),
                         DataError);

    const auto missing = write_temp("missing.json", R"json([
      {"question": "Q?\n (A) x\n (B) y", "answer_matching_behavior": "(A)",
       "answer_not_matching_behavior": "(B)"},
      {"question": "Q?\n (A) x\n (B) y", "answer_matching_behavior": "(A)"}])json");
    CHECK_THROWS_WITH_AS(static_cast<void>(load_dataset(missing)), doctest::Contains("entry 1"),
                         DataError);

    const auto bad_label = write_temp("bad_label.json", R"json([
      {"question": "Q?\n (A) x\n (B) y",
       "answer_matching_behavior": "(C)", "answer_not_matching_behavior": "(B)"}])json");
    CHECK_THROWS_AS(static_cast<void>(load_dataset(bad_label)), DataError);

    const auto no_choices = write_temp("no_choices.json", R"json([
      {"question": "Q without markers",
       "answer_matching_behavior": "(A)", "answer_not_matching_behavior": "(B)"}])json");
    CHECK_THROWS_WITH_AS(static_cast<void>(load_dataset(no_choices)), doctest::Contains("(A)"),
                         DataError);
}

TEST_CASE("empty and malformed files are rejected") {
    CHECK_THROWS_WITH_AS(static_cast<void>(load_dataset(write_temp("empty.json", "[]"))),
                         doctest::Contains("empty dataset"), DataError);
    CHECK_THROWS_AS(static_cast<void>(load_dataset(write_temp("obj.json", "{}"))), DataError);
    CHECK_THROWS_AS(static_cast<void>(load_dataset(write_temp("junk.json", "nope"))), DataError);
    CHECK_THROWS_AS(static_cast<void>(load_dataset("/nonexistent/ds.json")), DataError);
}

TEST_CASE("render_pair puts the behavior-matching choice first") {
    ContrastivePair pair;
    pair.question = "Q?\n\nChoices:\n (A) yes\n (B) no";
    pair.answer_matching_behavior = "(A)";
    pair.answer_not_matching_behavior = "(B)";

    const RenderedPair r = render_pair(pair);
    CHECK(r.prompt_matching == "Q?\n\nChoices:\n (A) yes\n (B) no\n\nI choose (A)");
    CHECK(r.prompt_not_matching == "Q?\n\nChoices:\n (A) yes\n (B) no\n\nI choose (B)");

    std::swap(pair.answer_matching_behavior, pair.answer_not_matching_behavior);
    const RenderedPair flipped = render_pair(pair);
    CHECK(flipped.prompt_matching == r.prompt_not_matching);
    CHECK(flipped.prompt_not_matching == r.prompt_matching);

    // the two renderings differ only in the choice letter
    REQUIRE(r.prompt_matching.size() == r.prompt_not_matching.size());
    int diffs = 0;
    for (size_t i = 0; i < r.prompt_matching.size(); ++i)
        diffs += r.prompt_matching[i] != r.prompt_not_matching[i];
    CHECK(diffs == 1);
}

TEST_CASE("eval prompt ends just before the choice letter") {
    const BpeTokenizer tok = BpeTokenizer::byte_level();
    ContrastivePair pair;
    pair.question = "Q?\n\nChoices:\n (A) yes\n (B) no";
    pair.answer_matching_behavior = "(B)";
    pair.answer_not_matching_behavior = "(A)";

    const EvalPrompt ep = render_eval_prompt(pair, tok);
    const std::string suffix = "I choose (";
    REQUIRE(ep.prompt.size() >= suffix.size());
    CHECK(ep.prompt.substr(ep.prompt.size() - suffix.size()) == suffix);
    CHECK(ep.token_matching == static_cast<TokenId>('B'));
    CHECK(ep.token_not_matching == static_cast<TokenId>('A'));
    CHECK(ep.token_matching != ep.token_not_matching);
}

TEST_CASE("split is seeded, disjoint, and roughly 90/10") {
    const SplitIndices s = split_dataset(200, 42);
    CHECK(s.eval.size() == 20);
    CHECK(s.build.size() == 180);
    std::set<int> seen(s.build.begin(), s.build.end());
    seen.insert(s.eval.begin(), s.eval.end());
    CHECK(seen.size() == 200);

    const SplitIndices again = split_dataset(200, 42);
    CHECK(again.build == s.build);
    CHECK(again.eval == s.eval);
    const SplitIndices other = split_dataset(200, 43);
    CHECK(other.eval != s.eval);

    const SplitIndices tiny = split_dataset(2, 1);
    CHECK(tiny.build.size() == 1);
    CHECK(tiny.eval.size() == 1);
    CHECK(tiny.build[0] != tiny.eval[0]);

    const SplitIndices single = split_dataset(1, 1);
    CHECK(single.build == std::vector<int>{0});
    CHECK(single.eval == std::vector<int>{0});
}
