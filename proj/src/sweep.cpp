#include "brc/sweep.hpp"

#include <algorithm>
#include <cmath>

namespace brc {

const char* vector_kind_name(VectorKind kind) {
    switch (kind) {
        case VectorKind::steered: return "steered";
        case VectorKind::random_control: return "random";
        case VectorKind::orthogonal_control: return "orthogonal";
    }
    return "?";
}

const std::vector<std::string>& known_metrics() {
    static const std::vector<std::string> names = {
        "logit_diff", "prob_diff", "odds_ratio", "kl", "perplexity", "rank",
    };
    return names;
}

void SweepConfig::validate() const {
    if (!(alpha_step > 0.0)) throw ConfigError("alpha step must be positive");
    if (alpha_start > alpha_stop) throw ConfigError("alpha start must not exceed alpha stop");
    if (eval_pair_limit < 1) throw ConfigError("eval pair limit must be at least 1");
    for (const auto& m : metrics) {
        const auto& known = known_metrics();
        if (std::find(known.begin(), known.end(), m) == known.end()) {
            std::string valid;
            for (const auto& k : known) valid += (valid.empty() ? "" : ", ") + k;
            throw ConfigError("unknown metric '" + m + "' (expected one of: " + valid + ")");
        }
    }
    if (n_threads < 0) throw ConfigError("thread count must be non-negative");
}

std::vector<VectorKind> SweepConfig::kinds() const {
    std::vector<VectorKind> k = {VectorKind::steered};
    if (run_random_control) k.push_back(VectorKind::random_control);
    if (run_orthogonal_control) k.push_back(VectorKind::orthogonal_control);
    return k;
}

std::vector<double> alpha_grid(double start, double step, double stop) {
    if (!(step > 0.0)) throw ConfigError("alpha step must be positive");
    if (start > stop) throw ConfigError("alpha start must not exceed alpha stop");
    // count via division, not repeated addition, so endpoints land exactly
    const auto count = static_cast<int64_t>(std::floor((stop - start) / step + 1e-9));
    std::vector<double> grid;
    grid.reserve(static_cast<size_t>(count) + 1);
    for (int64_t k = 0; k <= count; ++k) {
        grid.push_back(start + static_cast<double>(k) * step);
    }
    return grid;
}

std::vector<double> alpha_grid(const SweepConfig& config) {
    return alpha_grid(config.alpha_start, config.alpha_step, config.alpha_stop);
}

std::vector<int> resolve_layers(const std::vector<int>& requested, int n_layers,
                                const char* which) {
    std::vector<int> layers = requested;
    if (layers.empty()) {
        layers.resize(static_cast<size_t>(n_layers));
        for (int i = 0; i < n_layers; ++i) layers[static_cast<size_t>(i)] = i;
    }
    std::sort(layers.begin(), layers.end());
    layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
    for (const int l : layers) {
        if (l < 0 || l >= n_layers)
            throw ConfigError(std::string(which) + " layer " + std::to_string(l) +
                              " out of range [0, " + std::to_string(n_layers) + ")");
    }
    return layers;
}

std::vector<std::pair<int, int>> layer_pairs(const SweepConfig& config, int n_layers) {
    const auto inject = resolve_layers(config.inject_layers, n_layers, "inject");
    const auto read = resolve_layers(config.read_layers, n_layers, "read");

    std::vector<std::pair<int, int>> pairs;
    for (const int i : inject) {
        for (const int r : read) {
            if (r > i) pairs.emplace_back(i, r);
        }
    }
    if (pairs.empty())
        throw ConfigError("no (inject, read) layer pairs with read > inject; "
                          "check --inject-layers/--read-layers");
    return pairs;
}

std::vector<double> log_softmax(std::span<const float> logits) {
    std::vector<double> lp(logits.size());
    double max_v = -std::numeric_limits<double>::infinity();
    for (const float v : logits) max_v = std::max(max_v, static_cast<double>(v));
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        lp[i] = static_cast<double>(logits[i]) - max_v;
        sum += std::exp(lp[i]);
    }
    const double lse = std::log(sum);
    for (double& v : lp) v -= lse;
    return lp;
}

double kl_divergence(std::span<const double> log_p0, std::span<const double> log_p) {
    if (log_p0.size() != log_p.size())
        throw NumericError("kl_divergence: distribution size mismatch");
    double kl = 0.0;
    for (size_t i = 0; i < log_p0.size(); ++i) {
        kl += std::exp(log_p0[i]) * (log_p0[i] - log_p[i]);
    }
    return kl;
}

int logit_rank(std::span<const float> logits, TokenId token) {
    const float target = logits[static_cast<size_t>(token)];
    int rank = 1;
    for (size_t i = 0; i < logits.size(); ++i) {
        if (logits[i] > target) ++rank;
        else if (logits[i] == target && static_cast<TokenId>(i) < token) ++rank;
    }
    return rank;
}

MetricsRow compute_point(std::span<const float> lens_logits,
                         std::span<const double> baseline_log_probs, TokenId token_matching,
                         TokenId token_not_matching) {
    const auto lp = log_softmax(lens_logits);
    const auto m = static_cast<size_t>(token_matching);
    const auto n = static_cast<size_t>(token_not_matching);

    MetricsRow row;
    row.logit_diff = static_cast<double>(lens_logits[m]) - static_cast<double>(lens_logits[n]);
    row.prob_diff = std::exp(lp[m]) - std::exp(lp[n]);
    row.odds_ratio = std::exp(row.logit_diff);
    row.kl_from_baseline = kl_divergence(baseline_log_probs, lp);
    row.perplexity_target = std::exp(-lp[m]);
    row.rank_matching = logit_rank(lens_logits, token_matching);
    row.rank_not_matching = logit_rank(lens_logits, token_not_matching);
    if (!std::isfinite(row.logit_diff) || !std::isfinite(row.kl_from_baseline) ||
        !std::isfinite(row.prob_diff))
        throw NumericError("compute_point: non-finite metric value");
    return row;
}

std::optional<double> detect_tipping(std::span<const double> alphas,
                                     std::span<const double> logit_diff) {
    if (alphas.size() != logit_diff.size())
        throw NumericError("detect_tipping: size mismatch");
    if (alphas.size() < 2) return std::nullopt;
    for (size_t i = 0; i < alphas.size(); ++i) {
        if (logit_diff[i] == 0.0) return alphas[i];
        if (i > 0 && std::signbit(logit_diff[i - 1]) != std::signbit(logit_diff[i])) {
            const double y0 = logit_diff[i - 1];
            const double y1 = logit_diff[i];
            return alphas[i - 1] + (alphas[i] - alphas[i - 1]) * (-y0) / (y1 - y0);
        }
    }
    return std::nullopt;
}

}  // namespace brc
