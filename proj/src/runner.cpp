#include "brc/runner.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

namespace brc {

namespace {

uint32_t derive_control_seed(uint32_t base, int layer, ControlKind kind) {
    Fnv1a hash;
    hash.update_value(base);
    hash.update_value(layer);
    hash.update_value(static_cast<int>(kind));
    return static_cast<uint32_t>(hash.digest());
}

struct Job {
    size_t inject_idx;
    size_t kind_idx;
    size_t prompt_idx;
    size_t alpha_idx;
};

}  // namespace

SweepResult run_sweep(const ModelBundle& model, const BehaviorDataset& dataset,
                      const SweepConfig& config) {
    config.validate();

    SweepResult result;
    result.alphas = alpha_grid(config);
    result.pairs = layer_pairs(config, model.config.n_layers);

    // every configured inject layer sweeps, even one with no read layer
    // above it; the pass count is one per (alpha, inject, kind, prompt)
    const std::vector<int> inject_layers =
        resolve_layers(config.inject_layers, model.config.n_layers, "inject");
    // read sites needed per inject layer, and the union for the baseline pass
    std::vector<std::vector<HookSite>> reads_for_inject(inject_layers.size());
    std::vector<HookSite> all_read_sites;
    for (size_t ii = 0; ii < inject_layers.size(); ++ii) {
        for (const auto& [i, r] : result.pairs) {
            if (i == inject_layers[ii])
                reads_for_inject[ii].push_back({r, config.read_site});
        }
        for (const HookSite& s : reads_for_inject[ii]) {
            if (std::find(all_read_sites.begin(), all_read_sites.end(), s) ==
                all_read_sites.end())
                all_read_sites.push_back(s);
        }
    }
    std::sort(all_read_sites.begin(), all_read_sites.end());

    const SplitIndices split = split_dataset(static_cast<int>(dataset.pairs.size()), config.seed);

    // steering vectors for all inject sites from one shared set of passes
    std::vector<HookSite> inject_sites;
    for (const int l : inject_layers) inject_sites.push_back({l, config.inject_site});
    const int n_threads = config.n_threads > 0
                              ? config.n_threads
                              : std::max(1u, std::thread::hardware_concurrency());
    auto steering =
        build_steering_vectors(model, dataset, inject_sites, split.build, n_threads);
    result.build_forward_passes = 2 * static_cast<uint64_t>(split.build.size());

    result.vectors.resize(inject_layers.size());
    for (size_t ii = 0; ii < inject_layers.size(); ++ii) {
        LayerVectors& lv = result.vectors[ii];
        lv.inject_layer = inject_layers[ii];
        lv.steering = std::move(steering[ii]);
        if (config.run_random_control) {
            lv.random_control = make_control(
                ControlKind::random_unit, lv.steering,
                derive_control_seed(config.seed, lv.inject_layer, ControlKind::random_unit),
                config.norm_policy);
        }
        if (config.run_orthogonal_control) {
            lv.orthogonal_control = make_control(
                ControlKind::orthogonal, lv.steering,
                derive_control_seed(config.seed, lv.inject_layer, ControlKind::orthogonal),
                config.norm_policy);
            // invariant re-check before the sweep proper
            if (control_cosine(*lv.orthogonal_control, lv.steering) >= 1e-6)
                throw NumericError("orthogonal control at L" +
                                   std::to_string(lv.inject_layer) +
                                   " failed the pre-sweep orthogonality check");
        }
    }

    // eval prompts from the held-out split
    const size_t n_prompts =
        std::min<size_t>(static_cast<size_t>(config.eval_pair_limit), split.eval.size());
    for (size_t e = 0; e < n_prompts; ++e) {
        const int pair_id = split.eval[e];
        const auto& pair = dataset.pairs[static_cast<size_t>(pair_id)];
        const EvalPrompt ep = render_eval_prompt(pair, model.tokenizer);
        EvalPromptRecord rec;
        rec.pair_id = pair_id;
        rec.tokens = model.tokenizer.encode(ep.prompt);
        rec.token_matching = ep.token_matching;
        rec.token_not_matching = ep.token_not_matching;
        result.eval_prompts.push_back(std::move(rec));
    }

    // baseline pass per prompt: alpha = 0 log-softmax at every read site
    const size_t n_reads_total = all_read_sites.size();
    std::vector<std::vector<std::vector<double>>> baseline_lp(
        result.eval_prompts.size(), std::vector<std::vector<double>>(n_reads_total));
    auto read_site_index = [&](HookSite s) {
        return static_cast<size_t>(
            std::lower_bound(all_read_sites.begin(), all_read_sites.end(), s) -
            all_read_sites.begin());
    };
    for (size_t p = 0; p < result.eval_prompts.size(); ++p) {
        const auto out = forward(model, result.eval_prompts[p].tokens, {}, all_read_sites);
        ++result.baseline_forward_passes;
        for (size_t s = 0; s < n_reads_total; ++s) {
            const MatrixF& act = out.cache.at(all_read_sites[s]);
            const auto lens = logit_lens(model, act.row(act.rows() - 1).transpose());
            baseline_lp[p][s] = log_softmax(lens);
        }
    }

    const std::vector<VectorKind> kinds = config.kinds();
    const size_t n_kinds = kinds.size();
    const size_t n_alphas = result.alphas.size();
    const size_t n_jobs =
        inject_layers.size() * n_kinds * result.eval_prompts.size() * n_alphas;

    // jobs in canonical order; workers write by index so output ordering is
    // independent of scheduling
    std::vector<Job> jobs;
    jobs.reserve(n_jobs);
    for (size_t ii = 0; ii < inject_layers.size(); ++ii)
        for (size_t k = 0; k < n_kinds; ++k)
            for (size_t p = 0; p < result.eval_prompts.size(); ++p)
                for (size_t a = 0; a < n_alphas; ++a) jobs.push_back({ii, k, p, a});

    std::vector<std::vector<MetricsRow>> job_rows(n_jobs);
    std::vector<uint8_t> job_done(n_jobs, 0);
    std::atomic<size_t> next_job{0};
    std::atomic<uint64_t> pass_count{0};
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::string error_message;

    auto direction_for = [&](size_t inject_idx, VectorKind kind) -> const VectorF& {
        const LayerVectors& lv = result.vectors[inject_idx];
        switch (kind) {
            case VectorKind::steered: return lv.steering.direction;
            case VectorKind::random_control: return lv.random_control->direction;
            case VectorKind::orthogonal_control: return lv.orthogonal_control->direction;
        }
        return lv.steering.direction;
    };

    auto worker = [&]() {
        for (size_t j = next_job.fetch_add(1); j < n_jobs; j = next_job.fetch_add(1)) {
            if (failed.load()) return;
            const Job& job = jobs[j];
            const int inject_layer = inject_layers[job.inject_idx];
            const double alpha = result.alphas[job.alpha_idx];
            try {
                Intervention iv;
                iv.site = {inject_layer, config.inject_site};
                iv.direction = direction_for(job.inject_idx, kinds[job.kind_idx]);
                iv.alpha = static_cast<float>(alpha);
                iv.scope = config.token_scope;

                const auto& prompt = result.eval_prompts[job.prompt_idx];
                const auto& reads = reads_for_inject[job.inject_idx];
                const Intervention ivs[] = {std::move(iv)};
                const auto out = forward(model, prompt.tokens, ivs, reads);
                pass_count.fetch_add(1);

                auto& rows = job_rows[j];
                rows.reserve(reads.size());
                for (const HookSite& site : reads) {
                    const MatrixF& act = out.cache.at(site);
                    const auto lens = logit_lens(model, act.row(act.rows() - 1).transpose());
                    MetricsRow row =
                        compute_point(lens, baseline_lp[job.prompt_idx][read_site_index(site)],
                                      prompt.token_matching, prompt.token_not_matching);
                    row.alpha = alpha;
                    row.inject_layer = inject_layer;
                    row.read_layer = site.layer;
                    row.vector_kind = kinds[job.kind_idx];
                    row.eval_pair_id = prompt.pair_id;
                    rows.push_back(row);
                }
                job_done[j] = 1;
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!failed.exchange(true))
                    error_message = "sweep point failed (alpha=" + format_double(alpha) +
                                    ", inject L" + std::to_string(inject_layer) + ", " +
                                    vector_kind_name(kinds[job.kind_idx]) + "): " + e.what();
            }
        }
    };
    {
        const size_t pool_size = std::min<size_t>(static_cast<size_t>(n_threads), n_jobs);
        if (pool_size <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            pool.reserve(pool_size);
            for (size_t t = 0; t < pool_size; ++t) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }
    }
    result.sweep_forward_passes = pass_count.load();
    if (failed.load()) {
        result.complete = false;
        result.error = error_message;
    }

    // assemble rows grouped by (inject, read) pair, ordered alpha, kind, pair
    auto job_index = [&](size_t ii, size_t k, size_t p, size_t a) {
        return ((ii * n_kinds + k) * result.eval_prompts.size() + p) * n_alphas + a;
    };
    std::vector<size_t> inject_index(static_cast<size_t>(model.config.n_layers), SIZE_MAX);
    for (size_t ii = 0; ii < inject_layers.size(); ++ii)
        inject_index[static_cast<size_t>(inject_layers[ii])] = ii;

    for (const auto& [inj, read] : result.pairs) {
        const size_t ii = inject_index[static_cast<size_t>(inj)];
        const auto& reads = reads_for_inject[ii];
        const size_t ri = static_cast<size_t>(
            std::find(reads.begin(), reads.end(), HookSite{read, config.read_site}) -
            reads.begin());
        for (size_t a = 0; a < n_alphas; ++a) {
            for (size_t k = 0; k < n_kinds; ++k) {
                for (size_t p = 0; p < result.eval_prompts.size(); ++p) {
                    const size_t j = job_index(ii, k, p, a);
                    if (job_done[j]) result.rows.push_back(job_rows[j][ri]);
                }
            }
        }
    }

    // aggregated curves: per-alpha means over eval pairs, only for groups
    // whose every point completed
    for (const auto& [inj, read] : result.pairs) {
        const size_t ii = inject_index[static_cast<size_t>(inj)];
        const auto& reads = reads_for_inject[ii];
        const size_t ri = static_cast<size_t>(
            std::find(reads.begin(), reads.end(), HookSite{read, config.read_site}) -
            reads.begin());
        for (size_t k = 0; k < n_kinds; ++k) {
            BiasResponseCurve curve;
            curve.inject_layer = inj;
            curve.read_layer = read;
            curve.vector_kind = kinds[k];
            curve.n_eval_pairs = static_cast<int>(result.eval_prompts.size());
            curve.alphas = result.alphas;
            bool group_complete = true;
            for (size_t a = 0; a < n_alphas && group_complete; ++a) {
                double ld = 0, pd = 0, orr = 0, kl = 0, ppl = 0, rm = 0, rn = 0;
                for (size_t p = 0; p < result.eval_prompts.size(); ++p) {
                    const size_t j = job_index(ii, k, p, a);
                    if (!job_done[j]) {
                        group_complete = false;
                        break;
                    }
                    const MetricsRow& row = job_rows[j][ri];
                    ld += row.logit_diff;
                    pd += row.prob_diff;
                    orr += row.odds_ratio;
                    kl += row.kl_from_baseline;
                    ppl += row.perplexity_target;
                    rm += row.rank_matching;
                    rn += row.rank_not_matching;
                }
                if (!group_complete) break;
                const auto n = static_cast<double>(result.eval_prompts.size());
                curve.logit_diff.push_back(ld / n);
                curve.prob_diff.push_back(pd / n);
                curve.odds_ratio.push_back(orr / n);
                curve.kl.push_back(kl / n);
                curve.perplexity.push_back(ppl / n);
                curve.rank_matching.push_back(rm / n);
                curve.rank_not_matching.push_back(rn / n);
            }
            if (!group_complete) continue;
            curve.tipping_alpha = detect_tipping(curve.alphas, curve.logit_diff);
            result.curves.push_back(std::move(curve));
        }
    }
    return result;
}

}  // namespace brc
