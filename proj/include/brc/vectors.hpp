#pragma once

#include "brc/dataset.hpp"
#include "brc/model.hpp"

#include <span>
#include <vector>

namespace brc {

/// Behavior direction for one (layer, site): the mean over build pairs of
/// the final-token residual difference between the behavior-matching and
/// non-matching construction prompts. No normalization is applied.
struct SteeringVector {
    HookSite site;
    VectorF direction;
    int n_pairs = 0;
    std::string behavior_name;
    uint64_t build_fingerprint = 0;
};

/// Builds vectors for several sites from one set of per-pair forward passes.
/// Per-pair differences accumulate in declaration order with 64-bit
/// accumulators, so the result is reproducible and order-insensitive to
/// within rounding. `n_threads` parallelizes the forward passes only.
std::vector<SteeringVector> build_steering_vectors(const ModelBundle& model,
                                                   const BehaviorDataset& dataset,
                                                   std::span<const HookSite> sites,
                                                   std::span<const int> build_indices,
                                                   int n_threads = 1);

SteeringVector build_steering_vector(const ModelBundle& model, const BehaviorDataset& dataset,
                                     HookSite site, std::span<const int> build_indices,
                                     int n_threads = 1);

enum class ControlKind { random_unit, orthogonal };
enum class NormPolicy { unit, match_steering_norm };

const char* control_kind_name(ControlKind kind);
const char* norm_policy_name(NormPolicy policy);
NormPolicy norm_policy_from_name(std::string_view name);

/// Direction injected in place of the steering vector to separate genuine
/// behavioral signal from the injection itself.
struct ControlVector {
    ControlKind kind = ControlKind::random_unit;
    VectorF direction;
    uint32_t seed = 0;
    NormPolicy norm_policy = NormPolicy::match_steering_norm;
    uint64_t fingerprint = 0;
};

/// random_unit: seeded isotropic Gaussian sample. orthogonal: same, with the
/// projection onto the steering direction removed. Both scaled per
/// norm_policy. Degenerate draws retry with an incremented seed a bounded
/// number of times.
ControlVector make_control(ControlKind kind, const SteeringVector& steering, uint32_t seed,
                           NormPolicy policy);

/// |cos| between a control and its steering vector; orthogonal controls keep
/// this below 1e-6 and the check reruns before every sweep.
double control_cosine(const ControlVector& control, const SteeringVector& steering);

}  // namespace brc
