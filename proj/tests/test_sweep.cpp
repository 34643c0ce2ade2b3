#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "toy_model.hpp"

#include "brc/runner.hpp"

#include <cmath>
#include <random>

using namespace brc;
using brctest::make_toy_model;

namespace {

BehaviorDataset sweep_dataset(int n_pairs) {
    BehaviorDataset ds;
    ds.behavior_name = "toy";
    for (int i = 0; i < n_pairs; ++i) {
        ContrastivePair p;
        p.question = "Q" + std::to_string(i) + "?\n\nChoices:\n (A) yes\n (B) no";
        p.answer_matching_behavior = "(A)";
        p.answer_not_matching_behavior = "(B)";
        ds.pairs.push_back(std::move(p));
    }
    Fnv1a hash;
    hash.update_value(n_pairs + 1000);
    ds.fingerprint = hash.digest();
    return ds;
}

}  // namespace

TEST_CASE("alpha grid membership and endpoints") {
    const auto defaults = alpha_grid(-10.0, 0.5, 10.0);
    CHECK(defaults.size() == 41);
    CHECK(defaults.front() == -10.0);
    CHECK(defaults.back() == 10.0);

    CHECK(alpha_grid(0.0, 1.0, 0.0) == std::vector<double>{0.0});

    const auto grid = alpha_grid(-1.0, 0.4, 1.0);
    REQUIRE(grid.size() == 6);
    const double expected[] = {-1.0, -0.6, -0.2, 0.2, 0.6, 1.0};
    for (size_t i = 0; i < 6; ++i) CHECK(grid[i] == doctest::Approx(expected[i]).epsilon(1e-12));

    // stop off the grid is excluded
    CHECK(alpha_grid(0.0, 0.4, 1.0).size() == 3);

    CHECK_THROWS_AS(static_cast<void>(alpha_grid(0.0, 0.0, 1.0)), ConfigError);
    CHECK_THROWS_AS(static_cast<void>(alpha_grid(0.0, -0.5, 1.0)), ConfigError);
    CHECK_THROWS_AS(static_cast<void>(alpha_grid(2.0, 0.5, 1.0)), ConfigError);
}

TEST_CASE("layer pairs enumerate read > inject") {
    SweepConfig cfg;
    cfg.inject_layers = {0, 1};
    cfg.read_layers = {1, 2};
    const auto pairs = layer_pairs(cfg, 12);
    CHECK(pairs == std::vector<std::pair<int, int>>{{0, 1}, {0, 2}, {1, 2}});

    SweepConfig all;
    CHECK(layer_pairs(all, 12).size() == 66);

    SweepConfig boundary;
    boundary.inject_layers = {11};
    CHECK_THROWS_AS(static_cast<void>(layer_pairs(boundary, 12)), ConfigError);

    SweepConfig out_of_range;
    out_of_range.inject_layers = {12};
    CHECK_THROWS_AS(static_cast<void>(layer_pairs(out_of_range, 12)), ConfigError);
}

TEST_CASE("config validation") {
    SweepConfig cfg;
    cfg.metrics = {"logit_diff", "kl"};
    CHECK_NOTHROW(cfg.validate());
    cfg.metrics = {"nope"};
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("nope"), ConfigError);
    cfg.metrics.clear();
    cfg.eval_pair_limit = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("kl divergence hand-computed oracle") {
    // p0 = (.5, .5), p = (.9, .1): 0.5*ln(.5/.9) + 0.5*ln(.5/.1)
    const std::vector<double> lp0 = {std::log(0.5), std::log(0.5)};
    const std::vector<double> lp = {std::log(0.9), std::log(0.1)};
    CHECK(kl_divergence(lp0, lp) == doctest::Approx(0.51082562376599072).epsilon(1e-12));
    CHECK(kl_divergence(lp0, lp0) == 0.0);

    // property: non-negative on random distribution pairs
    std::mt19937 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<float> a(32), b(32);
        std::normal_distribution<float> dist(0.0f, 3.0f);
        for (int i = 0; i < 32; ++i) {
            a[static_cast<size_t>(i)] = dist(rng);
            b[static_cast<size_t>(i)] = dist(rng);
        }
        const auto la = log_softmax(a);
        const auto lb = log_softmax(b);
        CHECK(kl_divergence(la, lb) >= 0.0);
    }
}

TEST_CASE("log_softmax is stable and normalized") {
    const std::vector<float> logits = {1e4f, -1e4f, 0.0f, 500.0f};
    const auto lp = log_softmax(logits);
    double sum = 0.0;
    for (const double v : lp) {
        CHECK(std::isfinite(v));
        sum += std::exp(v);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("compute_point formulas on crafted logits") {
    std::vector<float> logits(8, -1.0f);
    logits[2] = 2.0f;   // matching
    logits[5] = -1.0f;  // not matching (tied with the rest)
    const auto baseline = log_softmax(logits);

    const MetricsRow row = compute_point(logits, baseline, 2, 5);
    CHECK(row.logit_diff == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(row.odds_ratio == doctest::Approx(std::exp(3.0)).epsilon(1e-12));
    CHECK(row.kl_from_baseline == 0.0);
    CHECK(row.rank_matching == 1);
    // ties on -1.0 resolve by token id: ids 0,1,3,4 precede id 5
    CHECK(row.rank_not_matching == 1 + 1 + 4);
    CHECK(row.prob_diff > 0.0);
    CHECK(row.prob_diff <= 1.0);
    const double p_m = std::exp(log_softmax(logits)[2]);
    CHECK(row.perplexity_target == doctest::Approx(1.0 / p_m).epsilon(1e-9));
}

TEST_CASE("rank tie-breaking is deterministic by token id") {
    const std::vector<float> logits = {1.0f, 3.0f, 3.0f, 3.0f, 0.0f};
    CHECK(logit_rank(logits, 1) == 1);
    CHECK(logit_rank(logits, 2) == 2);
    CHECK(logit_rank(logits, 3) == 3);
    CHECK(logit_rank(logits, 0) == 4);
    CHECK(logit_rank(logits, 4) == 5);
}

TEST_CASE("tipping detection") {
    {
        const std::vector<double> a = {-1.0, 1.0}, y = {-2.0, 2.0};
        REQUIRE(detect_tipping(a, y).has_value());
        CHECK(*detect_tipping(a, y) == doctest::Approx(0.0));
    }
    {
        const std::vector<double> a = {0.0, 1.0}, y = {1.0, 3.0};
        CHECK(!detect_tipping(a, y).has_value());
    }
    {
        const std::vector<double> a = {-0.5, 0.5}, y = {-1.0, 3.0};
        REQUIRE(detect_tipping(a, y).has_value());
        CHECK(*detect_tipping(a, y) == doctest::Approx(-0.25));
    }
    {
        // exact grid zero reported as-is, first crossing wins
        const std::vector<double> a = {-1.0, 0.0, 1.0, 2.0}, y = {2.0, 0.0, -1.0, 1.0};
        REQUIRE(detect_tipping(a, y).has_value());
        CHECK(*detect_tipping(a, y) == doctest::Approx(0.0));
    }
    {
        const std::vector<double> a = {0.0}, y = {1.0};
        CHECK(!detect_tipping(a, y).has_value());
    }
}

TEST_CASE("run_sweep on a toy model obeys the counting and degeneracy rules") {
    // 12-layer toy model so the combinatorics match the full-size protocol
    const ModelBundle m = make_toy_model(12, 8, 2, 256, 101);
    const BehaviorDataset ds = sweep_dataset(12);

    SweepConfig cfg;
    cfg.alpha_start = -2.0;
    cfg.alpha_step = 1.0;
    cfg.alpha_stop = 2.0;  // 5 alphas
    cfg.eval_pair_limit = 1;
    cfg.n_threads = 2;

    const SweepResult result = run_sweep(m, ds, cfg);
    REQUIRE(result.complete);
    const size_t n_alphas = 5, n_kinds = 3, n_prompts = 1, n_inject = 12, n_pairs = 66;
    CHECK(result.sweep_forward_passes == n_inject * n_alphas * n_kinds * n_prompts);
    CHECK(result.baseline_forward_passes == n_prompts);
    CHECK(result.rows.size() == n_pairs * n_alphas * n_kinds * n_prompts);
    CHECK(result.curves.size() == n_pairs * n_kinds);

    SUBCASE("alpha = 0 rows are identical across vector kinds") {
        for (const auto& [inj, read] : result.pairs) {
            std::vector<const MetricsRow*> at_zero;
            for (const auto& row : result.rows) {
                if (row.inject_layer == inj && row.read_layer == read && row.alpha == 0.0)
                    at_zero.push_back(&row);
            }
            REQUIRE(at_zero.size() == n_kinds);
            for (size_t k = 1; k < at_zero.size(); ++k) {
                CHECK(at_zero[k]->logit_diff == at_zero[0]->logit_diff);
                CHECK(at_zero[k]->kl_from_baseline == at_zero[0]->kl_from_baseline);
                CHECK(at_zero[k]->rank_matching == at_zero[0]->rank_matching);
            }
            CHECK(at_zero[0]->kl_from_baseline == 0.0);
        }
    }

    SUBCASE("row invariants hold everywhere") {
        for (const auto& row : result.rows) {
            CHECK(std::fabs(row.odds_ratio - std::exp(row.logit_diff)) /
                      row.odds_ratio < 1e-6);
            CHECK(row.kl_from_baseline >= 0.0);
            CHECK(row.rank_matching >= 1);
            CHECK(row.rank_matching <= m.config.d_vocab);
            CHECK(row.rank_not_matching >= 1);
            CHECK(row.rank_not_matching <= m.config.d_vocab);
            CHECK(row.prob_diff >= -1.0);
            CHECK(row.prob_diff <= 1.0);
            CHECK(row.perplexity_target > 0.0);
        }
    }

    SUBCASE("multi-read rows match a dedicated single-read pass") {
        const auto& prompt = result.eval_prompts[0];
        const LayerVectors* lv3 = nullptr;
        for (const auto& lv : result.vectors)
            if (lv.inject_layer == 3) lv3 = &lv;
        REQUIRE(lv3 != nullptr);
        const Intervention ivs[] = {Intervention{
            {3, cfg.inject_site}, lv3->steering.direction, 2.0f, cfg.token_scope}};
        const HookSite read7[] = {HookSite{7, cfg.read_site}};
        const auto out = forward(m, prompt.tokens, ivs, read7);
        const MatrixF& act = out.cache.at(read7[0]);
        const auto lens = logit_lens(m, act.row(act.rows() - 1).transpose());

        const auto base = forward(m, prompt.tokens, {}, read7);
        const MatrixF& bact = base.cache.at(read7[0]);
        const auto base_lp = log_softmax(logit_lens(m, bact.row(bact.rows() - 1).transpose()));
        MetricsRow expect =
            compute_point(lens, base_lp, prompt.token_matching, prompt.token_not_matching);

        const MetricsRow* got = nullptr;
        for (const auto& row : result.rows) {
            if (row.inject_layer == 3 && row.read_layer == 7 && row.alpha == 2.0 &&
                row.vector_kind == VectorKind::steered)
                got = &row;
        }
        REQUIRE(got != nullptr);
        CHECK(std::fabs(got->logit_diff - expect.logit_diff) < 1e-6);
        CHECK(std::fabs(got->kl_from_baseline - expect.kl_from_baseline) < 1e-6);
        CHECK(got->rank_matching == expect.rank_matching);
    }

    SUBCASE("curves are grid-aligned with per-point means") {
        for (const auto& curve : result.curves) {
            CHECK(curve.alphas == result.alphas);
            CHECK(curve.logit_diff.size() == n_alphas);
            CHECK(curve.n_eval_pairs == 1);
        }
    }

    SUBCASE("rerunning the sweep is deterministic") {
        const SweepResult again = run_sweep(m, ds, cfg);
        REQUIRE(again.rows.size() == result.rows.size());
        for (size_t i = 0; i < result.rows.size(); ++i) {
            CHECK(again.rows[i].logit_diff == result.rows[i].logit_diff);
            CHECK(again.rows[i].kl_from_baseline == result.rows[i].kl_from_baseline);
        }
        for (size_t i = 0; i < result.vectors.size(); ++i) {
            CHECK(again.vectors[i].steering.build_fingerprint ==
                  result.vectors[i].steering.build_fingerprint);
        }
    }
}

TEST_CASE("controls can be disabled") {
    const ModelBundle m = make_toy_model(4, 8, 2, 256, 101);
    const BehaviorDataset ds = sweep_dataset(4);
    SweepConfig cfg;
    cfg.alpha_start = -1.0;
    cfg.alpha_step = 1.0;
    cfg.alpha_stop = 1.0;
    cfg.inject_layers = {0};
    cfg.read_layers = {2};
    cfg.run_random_control = false;
    cfg.run_orthogonal_control = false;
    cfg.eval_pair_limit = 1;
    const SweepResult result = run_sweep(m, ds, cfg);
    CHECK(result.sweep_forward_passes == 3);
    CHECK(result.rows.size() == 3);
    for (const auto& row : result.rows) CHECK(row.vector_kind == VectorKind::steered);
}
