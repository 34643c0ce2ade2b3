#pragma once

#include "brc/dataset.hpp"
#include "brc/sweep.hpp"

#include <string>
#include <vector>

namespace brc {

struct EvalPromptRecord {
    int pair_id = 0;  // index into the dataset
    std::vector<TokenId> tokens;
    TokenId token_matching = 0;
    TokenId token_not_matching = 0;
};

struct LayerVectors {
    int inject_layer = 0;
    SteeringVector steering;
    std::optional<ControlVector> random_control;
    std::optional<ControlVector> orthogonal_control;
};

struct SweepResult {
    std::vector<double> alphas;
    std::vector<std::pair<int, int>> pairs;
    std::vector<EvalPromptRecord> eval_prompts;
    std::vector<LayerVectors> vectors;  // sorted by inject layer
    std::vector<MetricsRow> rows;       // (inject, read) asc, then alpha, kind, pair
    std::vector<BiasResponseCurve> curves;
    uint64_t sweep_forward_passes = 0;
    uint64_t baseline_forward_passes = 0;
    uint64_t build_forward_passes = 0;
    bool complete = true;
    std::string error;
};

/// Executes the full protocol: split the dataset, build steering vectors at
/// every inject site, draw controls, sweep the alpha grid for each vector
/// kind and eval prompt, and aggregate curves with tipping points. One
/// forward pass per (alpha, inject, kind, prompt) serves every read layer
/// by caching all read sites from that single pass. On a numeric failure
/// the rows computed so far are returned with complete=false.
SweepResult run_sweep(const ModelBundle& model, const BehaviorDataset& dataset,
                      const SweepConfig& config);

}  // namespace brc
