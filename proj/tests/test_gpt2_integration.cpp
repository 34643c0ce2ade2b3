// Integration checks against the real GPT-2 Small checkpoint. Exits with
// code 77 (ctest SKIP) when the checkpoint directory is absent.
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "brc/model.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <thread>

using namespace brc;

namespace {

std::unique_ptr<ModelBundle> g_model;

const ModelBundle& model() { return *g_model; }

}  // namespace

int main(int argc, char** argv) {
    const std::string dir = BRC_GPT2_DIR;
    if (!std::filesystem::exists(dir + "/model.safetensors")) {
        std::fprintf(stderr, "SKIP: no GPT-2 checkpoint at %s\n", dir.c_str());
        return 77;
    }
    g_model = std::make_unique<ModelBundle>(load_model_dir(dir));
    return doctest::Context(argc, argv).run();
}

TEST_CASE("checkpoint loads with the published architecture") {
    const ModelConfig& cfg = model().config;
    CHECK(cfg.n_layers == 12);
    CHECK(cfg.d_model == 768);
    CHECK(cfg.n_heads == 12);
    CHECK(cfg.d_vocab == 50257);
    CHECK(cfg.n_ctx == 1024);
    CHECK(model().unembedding.size() == 0);  // tied to the token embedding
    CHECK(model().tokenizer.vocab_size() == 50257);
}

TEST_CASE("reloading yields an identical fingerprint") {
    const ModelBundle second = load_model_dir(BRC_GPT2_DIR);
    CHECK(second.fingerprint == model().fingerprint);
    CHECK(second.token_embedding == model().token_embedding);
}

TEST_CASE("final logits match the published implementation") {
    std::ifstream in(std::string(BRC_FIXTURES_DIR) + "/gpt2_reference_logits.json");
    REQUIRE(in.good());
    const auto cases = nlohmann::json::parse(in);
    for (const auto& c : cases) {
        CAPTURE(c["name"].get<std::string>());
        const auto ids = c["ids"].get<std::vector<TokenId>>();
        const auto out = forward(model(), ids);
        int argmax = 0;
        for (size_t i = 0; i < out.logits.size(); ++i)
            if (out.logits[i] > out.logits[static_cast<size_t>(argmax)])
                argmax = static_cast<int>(i);
        CHECK(argmax == c["argmax"].get<int>());
        const auto head = c["logits_head"].get<std::vector<double>>();
        for (size_t i = 0; i < head.size(); ++i)
            CHECK(std::fabs(out.logits[i] - head[i]) < 0.05);
        CHECK(std::fabs(out.logits[32] - c["logit_a"].get<double>()) < 0.05);
        CHECK(std::fabs(out.logits[33] - c["logit_b"].get<double>()) < 0.05);
    }
}

TEST_CASE("logit lens closure at the last layer") {
    const auto ids = model().tokenizer.encode("The capital of France is");
    const HookSite site[] = {HookSite{11, SiteKind::resid_post}};
    const auto out = forward(model(), ids, {}, site);
    const MatrixF& act = out.cache.at(site[0]);
    const auto lens = logit_lens(model(), act.row(act.rows() - 1).transpose());
    REQUIRE(lens.size() == out.logits.size());
    for (size_t i = 0; i < lens.size(); ++i) {
        CHECK(std::fabs(lens[i] - out.logits[i]) < 1e-4);
    }
}

TEST_CASE("injection shows up in the cache at the injected site") {
    const auto ids = model().tokenizer.encode("I choose (");
    const HookSite site{0, SiteKind::resid_mid};
    const HookSite reads[] = {site};
    const auto base = forward(model(), ids, {}, reads);

    GaussianRng rng(5);
    VectorF v(768);
    for (int i = 0; i < 768; ++i) v[i] = static_cast<float>(rng.next());
    v.normalize();
    const Intervention ivs[] = {Intervention{site, v, 2.5f, TokenScope::all_tokens}};
    const auto out = forward(model(), ids, ivs, reads);

    const MatrixF& got = out.cache.at(site);
    const MatrixF& ref = base.cache.at(site);
    for (Eigen::Index t = 0; t < got.rows(); ++t)
        for (Eigen::Index j = 0; j < got.cols(); ++j)
            CHECK(std::fabs(static_cast<double>(got(t, j)) - ref(t, j) - 2.5 * v[j]) < 1e-5);
}

TEST_CASE("parallel forwards on the shared bundle match the serial result") {
    const auto ids = model().tokenizer.encode("Paris is the capital of");
    const auto serial = forward(model(), ids);
    std::vector<std::vector<float>> results(2);
    std::vector<std::thread> pool;
    for (auto& slot : results)
        pool.emplace_back([&, s = &slot] { *s = forward(model(), ids).logits; });
    for (auto& th : pool) th.join();
    for (const auto& r : results) CHECK(r == serial.logits);
}
