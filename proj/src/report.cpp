#include "brc/report.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace brc {

namespace {

void write_file(const fs::path& path, const std::string& contents) {
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (out) out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (out) {
            out.flush();
            if (out) return;
        }
    }
    // remove the partial file so failed runs do not leave corrupt artifacts
    std::error_code ec;
    fs::remove(path, ec);
    throw DataError("failed to write " + path.string());
}

std::string csv_name(int inject, int read) {
    return "inj" + std::to_string(inject) + "_read" + std::to_string(read) + ".csv";
}

std::string run_timestamp() {
    std::time_t t = 0;
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
        t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
    } else {
        t = std::time(nullptr);
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ordered_json config_json(const RunInputs& inputs) {
    const SweepConfig& c = inputs.config;
    ordered_json j;
    j["model_dir"] = inputs.model_dir;
    j["dataset"] = inputs.dataset_path;
    j["behavior"] = inputs.behavior_name;
    j["alpha_start"] = c.alpha_start;
    j["alpha_step"] = c.alpha_step;
    j["alpha_stop"] = c.alpha_stop;
    j["inject_layers"] = c.inject_layers;  // empty = all
    j["read_layers"] = c.read_layers;
    j["inject_site"] = site_kind_name(c.inject_site);
    j["read_site"] = site_kind_name(c.read_site);
    j["steer_all_tokens"] = c.token_scope == TokenScope::all_tokens;
    j["seed"] = c.seed;
    j["metrics"] = c.metrics.empty() ? known_metrics() : c.metrics;
    j["eval_pair_limit"] = c.eval_pair_limit;
    j["controls"] = [&] {
        std::vector<std::string> names;
        if (c.run_random_control) names.emplace_back("random");
        if (c.run_orthogonal_control) names.emplace_back("orthogonal");
        return names;
    }();
    j["norm_policy"] = norm_policy_name(c.norm_policy);
    return j;
}

ordered_json curve_json(const BiasResponseCurve& curve,
                        const std::vector<std::string>& metrics) {
    ordered_json j;
    j["inject_layer"] = curve.inject_layer;
    j["read_layer"] = curve.read_layer;
    j["vector_kind"] = vector_kind_name(curve.vector_kind);
    j["n_eval_pairs"] = curve.n_eval_pairs;
    j["alphas"] = curve.alphas;
    if (metric_selected(metrics, "logit_diff")) j["logit_diff"] = curve.logit_diff;
    if (metric_selected(metrics, "prob_diff")) j["prob_diff"] = curve.prob_diff;
    if (metric_selected(metrics, "odds_ratio")) j["odds_ratio"] = curve.odds_ratio;
    if (metric_selected(metrics, "kl")) j["kl"] = curve.kl;
    if (metric_selected(metrics, "perplexity")) j["perplexity"] = curve.perplexity;
    if (metric_selected(metrics, "rank")) {
        j["rank_matching"] = curve.rank_matching;
        j["rank_not_matching"] = curve.rank_not_matching;
    }
    if (curve.tipping_alpha)
        j["tipping_alpha"] = *curve.tipping_alpha;
    else
        j["tipping_alpha"] = nullptr;
    return j;
}

}  // namespace

bool metric_selected(const std::vector<std::string>& metrics, const std::string& name) {
    if (metrics.empty()) return true;
    return std::find(metrics.begin(), metrics.end(), name) != metrics.end();
}

WriteReport write_results(const SweepResult& result, const RunInputs& inputs,
                          const std::string& out_dir) {
    if (result.rows.empty() && result.complete)
        throw DataError("write_results: no rows to write for a complete run");

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir))
        throw DataError("cannot create output directory: " + out_dir);

    WriteReport report;

    // one CSV per (inject, read) pair; rows arrive already grouped and sorted
    for (const auto& [inj, read] : result.pairs) {
        std::string csv =
            "alpha,vector_kind,eval_pair_id,logit_diff,prob_diff,odds_ratio,kl,perplexity,"
            "rank_matching,rank_not_matching\n";
        for (const MetricsRow& row : result.rows) {
            if (row.inject_layer != inj || row.read_layer != read) continue;
            csv += format_double(row.alpha);
            csv += ',';
            csv += vector_kind_name(row.vector_kind);
            csv += ',';
            csv += std::to_string(row.eval_pair_id);
            csv += ',';
            csv += format_double(row.logit_diff);
            csv += ',';
            csv += format_double(row.prob_diff);
            csv += ',';
            csv += format_double(row.odds_ratio);
            csv += ',';
            csv += format_double(row.kl_from_baseline);
            csv += ',';
            csv += format_double(row.perplexity_target);
            csv += ',';
            csv += std::to_string(row.rank_matching);
            csv += ',';
            csv += std::to_string(row.rank_not_matching);
            csv += '\n';
        }
        const std::string name = csv_name(inj, read);
        write_file(fs::path(out_dir) / name, csv);
        report.files.push_back(name);
    }

    {
        ordered_json j;
        j["format_version"] = 1;
        j["behavior"] = inputs.behavior_name;
        j["curves"] = ordered_json::array();
        for (const BiasResponseCurve& curve : result.curves) {
            j["curves"].push_back(curve_json(curve, inputs.config.metrics));
        }
        write_file(fs::path(out_dir) / "curves.json", j.dump(1) + "\n");
        report.files.emplace_back("curves.json");
    }

    {
        ordered_json j;
        j["format_version"] = 1;
        j["behavior"] = inputs.behavior_name;
        j["vectors"] = ordered_json::array();
        for (const LayerVectors& lv : result.vectors) {
            ordered_json v;
            v["site"] = lv.steering.site.to_string();
            v["behavior"] = lv.steering.behavior_name;
            v["n_pairs"] = lv.steering.n_pairs;
            v["fingerprint"] = to_hex(lv.steering.build_fingerprint);
            v["direction"] = std::vector<float>(
                lv.steering.direction.data(),
                lv.steering.direction.data() + lv.steering.direction.size());
            j["vectors"].push_back(v);
            for (const auto* control : {&lv.random_control, &lv.orthogonal_control}) {
                if (!control->has_value()) continue;
                const ControlVector& c = **control;
                ordered_json cj;
                cj["site"] = lv.steering.site.to_string();
                cj["kind"] = control_kind_name(c.kind);
                cj["seed"] = c.seed;
                cj["norm_policy"] = norm_policy_name(c.norm_policy);
                cj["fingerprint"] = to_hex(c.fingerprint);
                cj["direction"] =
                    std::vector<float>(c.direction.data(), c.direction.data() + c.direction.size());
                j["vectors"].push_back(cj);
            }
        }
        write_file(fs::path(out_dir) / "vectors.json", j.dump(1) + "\n");
        report.files.emplace_back("vectors.json");
    }

    if (result.complete) {
        const auto plot_files =
            emit_plots(result.curves, inputs.config.metrics, out_dir, &report.warnings);
        report.files.insert(report.files.end(), plot_files.begin(), plot_files.end());
    } else {
        report.warnings.push_back("run incomplete: " + result.error);
    }

    std::sort(report.files.begin(), report.files.end());

    // manifest last, so it can list every artifact (including itself)
    {
        ordered_json j;
        j["format_version"] = 1;
        j["config"] = config_json(inputs);
        j["model_fingerprint"] = to_hex(inputs.model_fingerprint);
        j["dataset_fingerprint"] = to_hex(inputs.dataset_fingerprint);
        j["steering_vectors"] = [&] {
            ordered_json arr = ordered_json::array();
            for (const LayerVectors& lv : result.vectors) {
                ordered_json v;
                v["site"] = lv.steering.site.to_string();
                v["fingerprint"] = to_hex(lv.steering.build_fingerprint);
                arr.push_back(v);
            }
            return arr;
        }();
        j["eval_pair_ids"] = [&] {
            std::vector<int> ids;
            for (const auto& p : result.eval_prompts) ids.push_back(p.pair_id);
            return ids;
        }();
        j["forward_passes"] = ordered_json{{"build", result.build_forward_passes},
                                           {"baseline", result.baseline_forward_passes},
                                           {"sweep", result.sweep_forward_passes}};
        j["timestamp"] = run_timestamp();
        j["complete"] = result.complete;
        std::vector<std::string> all_files = report.files;
        all_files.emplace_back("manifest.json");
        std::sort(all_files.begin(), all_files.end());
        j["artifacts"] = all_files;
        j["warnings"] = report.warnings;
        write_file(fs::path(out_dir) / "manifest.json", j.dump(1) + "\n");
        report.files.emplace_back("manifest.json");
        std::sort(report.files.begin(), report.files.end());
    }
    return report;
}

}  // namespace brc
