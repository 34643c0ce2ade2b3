#include "brc/vectors.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

namespace brc {

namespace {

uint64_t steering_fingerprint(const ModelBundle& model, const BehaviorDataset& dataset,
                              HookSite site, std::span<const int> build_indices) {
    Fnv1a hash;
    hash.update_value(model.fingerprint);
    hash.update_value(dataset.fingerprint);
    hash.update_value(site.layer);
    hash.update_value(static_cast<int>(site.kind));
    for (const int idx : build_indices) hash.update_value(idx);
    return hash.digest();
}

}  // namespace

std::vector<SteeringVector> build_steering_vectors(const ModelBundle& model,
                                                   const BehaviorDataset& dataset,
                                                   std::span<const HookSite> sites,
                                                   std::span<const int> build_indices,
                                                   int n_threads) {
    if (build_indices.empty()) throw DataError("steering vector: empty build subset");
    if (sites.empty()) throw DataError("steering vector: no sites requested");
    for (const int idx : build_indices) {
        if (idx < 0 || static_cast<size_t>(idx) >= dataset.pairs.size())
            throw DataError("steering vector: build index " + std::to_string(idx) +
                            " out of range");
    }

    const std::vector<HookSite> read_sites(sites.begin(), sites.end());
    const int d = model.config.d_model;
    const size_t n_pairs = build_indices.size();
    const size_t n_sites = read_sites.size();

    // final-token residual difference per (pair, site), computed in parallel
    std::vector<std::vector<VectorF>> diffs(n_pairs, std::vector<VectorF>(n_sites));
    std::atomic<size_t> next{0};
    std::atomic<bool> failed{false};
    std::string error_message;
    std::mutex error_mutex;

    auto worker = [&]() {
        for (size_t i = next.fetch_add(1); i < n_pairs; i = next.fetch_add(1)) {
            if (failed.load()) return;
            try {
                const auto& pair = dataset.pairs[static_cast<size_t>(build_indices[i])];
                const RenderedPair rendered = render_pair(pair);
                const auto ids_m = model.tokenizer.encode(rendered.prompt_matching);
                const auto ids_n = model.tokenizer.encode(rendered.prompt_not_matching);
                const auto out_m = forward(model, ids_m, {}, read_sites);
                const auto out_n = forward(model, ids_n, {}, read_sites);
                for (size_t s = 0; s < n_sites; ++s) {
                    const MatrixF& cm = out_m.cache.at(read_sites[s]);
                    const MatrixF& cn = out_n.cache.at(read_sites[s]);
                    diffs[i][s] = cm.row(cm.rows() - 1) - cn.row(cn.rows() - 1);
                }
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!failed.exchange(true)) error_message = e.what();
            }
        }
    };
    if (n_threads <= 1 || n_pairs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        const int n = std::min<int>(n_threads, static_cast<int>(n_pairs));
        pool.reserve(static_cast<size_t>(n));
        for (int t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failed.load()) throw DataError("steering vector build failed: " + error_message);

    std::vector<SteeringVector> vectors;
    vectors.reserve(n_sites);
    Eigen::VectorXd acc(d);
    for (size_t s = 0; s < n_sites; ++s) {
        acc.setZero();
        for (size_t i = 0; i < n_pairs; ++i) acc += diffs[i][s].cast<double>();
        acc /= static_cast<double>(n_pairs);

        SteeringVector v;
        v.site = read_sites[s];
        v.direction = acc.cast<float>();
        v.n_pairs = static_cast<int>(n_pairs);
        v.behavior_name = dataset.behavior_name;
        v.build_fingerprint = steering_fingerprint(model, dataset, read_sites[s], build_indices);
        if (!v.direction.allFinite())
            throw NumericError("steering vector at " + v.site.to_string() + " is non-finite");
        vectors.push_back(std::move(v));
    }
    return vectors;
}

SteeringVector build_steering_vector(const ModelBundle& model, const BehaviorDataset& dataset,
                                     HookSite site, std::span<const int> build_indices,
                                     int n_threads) {
    const HookSite sites[] = {site};
    return build_steering_vectors(model, dataset, sites, build_indices, n_threads).front();
}

const char* control_kind_name(ControlKind kind) {
    return kind == ControlKind::random_unit ? "random" : "orthogonal";
}

const char* norm_policy_name(NormPolicy policy) {
    return policy == NormPolicy::unit ? "unit" : "match_steering_norm";
}

NormPolicy norm_policy_from_name(std::string_view name) {
    if (name == "unit") return NormPolicy::unit;
    if (name == "match_steering_norm" || name == "match") return NormPolicy::match_steering_norm;
    throw ConfigError("unknown norm policy '" + std::string(name) +
                      "' (expected unit or match_steering_norm)");
}

ControlVector make_control(ControlKind kind, const SteeringVector& steering, uint32_t seed,
                           NormPolicy policy) {
    const int d = static_cast<int>(steering.direction.size());
    const double steering_norm = steering.direction.cast<double>().norm();
    if (!(steering_norm > 0.0)) throw DataError("make_control: zero steering vector");

    const Eigen::VectorXd unit_steering = steering.direction.cast<double>() / steering_norm;
    constexpr int kMaxRetries = 16;
    for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
        GaussianRng rng(seed + static_cast<uint32_t>(attempt));
        Eigen::VectorXd g(d);
        for (int i = 0; i < d; ++i) g[i] = rng.next();
        if (kind == ControlKind::orthogonal) {
            g -= (unit_steering.dot(g)) * unit_steering;
        }
        const double norm = g.norm();
        if (!(norm > 1e-9)) continue;  // degenerate draw, re-seed

        const double target = policy == NormPolicy::unit ? 1.0 : steering_norm;
        g *= target / norm;

        ControlVector c;
        c.kind = kind;
        c.direction = g.cast<float>();
        c.seed = seed;
        c.norm_policy = policy;
        Fnv1a hash;
        hash.update_value(steering.build_fingerprint);
        hash.update_value(static_cast<int>(kind));
        hash.update_value(seed);
        hash.update_value(static_cast<int>(policy));
        c.fingerprint = hash.digest();

        if (kind == ControlKind::orthogonal && control_cosine(c, steering) >= 1e-6)
            continue;  // float rounding spoiled orthogonality, re-seed
        return c;
    }
    throw NumericError("make_control: no acceptable sample after " +
                       std::to_string(kMaxRetries) + " seeds");
}

double control_cosine(const ControlVector& control, const SteeringVector& steering) {
    const Eigen::VectorXd c = control.direction.cast<double>();
    const Eigen::VectorXd s = steering.direction.cast<double>();
    const double denom = c.norm() * s.norm();
    if (!(denom > 0.0)) return 1.0;
    return std::abs(c.dot(s)) / denom;
}

}  // namespace brc
