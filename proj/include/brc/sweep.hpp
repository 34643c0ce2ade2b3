#pragma once

#include "brc/common.hpp"
#include "brc/model.hpp"
#include "brc/vectors.hpp"

#include <optional>
#include <string>
#include <vector>

namespace brc {

enum class VectorKind { steered, random_control, orthogonal_control };
const char* vector_kind_name(VectorKind kind);

struct SweepConfig {
    double alpha_start = -10.0;
    double alpha_step = 0.5;
    double alpha_stop = 10.0;
    std::vector<int> inject_layers;  // empty = all layers
    std::vector<int> read_layers;    // empty = all layers
    SiteKind inject_site = SiteKind::resid_mid;
    SiteKind read_site = SiteKind::resid_post;
    TokenScope token_scope = TokenScope::all_tokens;
    uint32_t seed = 42;
    std::vector<std::string> metrics;  // empty = all six
    int eval_pair_limit = 10;
    bool run_random_control = true;
    bool run_orthogonal_control = true;
    NormPolicy norm_policy = NormPolicy::match_steering_norm;
    int n_threads = 0;  // 0 = hardware concurrency

    void validate() const;
    std::vector<VectorKind> kinds() const;
};

/// All known metric names, in CSV column order.
const std::vector<std::string>& known_metrics();

/// Arithmetic progression start + k*step, k computed by integer count so the
/// stop point is included exactly when it lies on the grid.
std::vector<double> alpha_grid(double start, double step, double stop);
std::vector<double> alpha_grid(const SweepConfig& config);

/// Cartesian pairs with read strictly greater than inject, sorted by
/// (inject, read). An empty result is an error, not an empty sweep.
std::vector<std::pair<int, int>> layer_pairs(const SweepConfig& config, int n_layers);

/// Sorted, deduplicated, range-checked layer set; empty input means all.
std::vector<int> resolve_layers(const std::vector<int>& requested, int n_layers,
                                const char* which);

struct MetricsRow {
    double alpha = 0.0;
    int inject_layer = 0;
    int read_layer = 0;
    VectorKind vector_kind = VectorKind::steered;
    int eval_pair_id = 0;
    double logit_diff = 0.0;
    double prob_diff = 0.0;
    double odds_ratio = 0.0;
    double kl_from_baseline = 0.0;
    double perplexity_target = 0.0;
    int rank_matching = 0;
    int rank_not_matching = 0;
};

/// Full-vocabulary log-softmax in 64-bit with max subtraction.
std::vector<double> log_softmax(std::span<const float> logits);

/// KL(p0 || p) from two log-probability vectors; exactly zero when the
/// inputs are bitwise identical.
double kl_divergence(std::span<const double> log_p0, std::span<const double> log_p);

/// 1-based rank by descending logit; ties resolve by token id, larger ids
/// ranking worse, so ranks are reproducible.
int logit_rank(std::span<const float> logits, TokenId token);

/// Metrics for one sweep point given the read-site lens logits and the
/// baseline (alpha = 0) log-softmax at the same site.
MetricsRow compute_point(std::span<const float> lens_logits,
                         std::span<const double> baseline_log_probs, TokenId token_matching,
                         TokenId token_not_matching);

struct BiasResponseCurve {
    int inject_layer = 0;
    int read_layer = 0;
    VectorKind vector_kind = VectorKind::steered;
    int n_eval_pairs = 0;
    std::vector<double> alphas;
    // per-alpha means over eval pairs, aligned with `alphas`
    std::vector<double> logit_diff, prob_diff, odds_ratio, kl, perplexity;
    std::vector<double> rank_matching, rank_not_matching;
    std::optional<double> tipping_alpha;
};

/// Smallest alpha where the aggregated logit difference crosses zero,
/// located by linear interpolation between the bracketing grid points.
/// Exact grid zeros are reported as-is; no sign change means no tipping.
std::optional<double> detect_tipping(std::span<const double> alphas,
                                     std::span<const double> logit_diff);

}  // namespace brc
