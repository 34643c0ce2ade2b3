#include "brc/report.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

namespace {

// exit codes: 0 ok, 2 config error, 3 data/schema error, 4 numeric failure
constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kDataError = 3;
constexpr int kNumericError = 4;

std::vector<int> parse_layer_list(const std::vector<std::string>& items) {
    std::vector<int> layers;
    for (const auto& item : items) {
        size_t pos = 0;
        while (pos < item.size()) {
            size_t comma = item.find(',', pos);
            if (comma == std::string::npos) comma = item.size();
            const std::string piece = item.substr(pos, comma - pos);
            pos = comma + 1;
            if (piece.empty()) continue;
            try {
                size_t used = 0;
                const int v = std::stoi(piece, &used);
                if (used != piece.size()) throw std::invalid_argument(piece);
                layers.push_back(v);
            } catch (const std::exception&) {
                throw brc::ConfigError("invalid layer index '" + piece + "'");
            }
        }
    }
    return layers;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"alpha-sweep diagnostics for GPT-2 activation steering: builds behavior "
                 "steering vectors from a contrastive dataset, injects them across layer "
                 "pairs, and writes bias response curves (CSV/JSON/SVG)."};
    app.set_config("--config", "", "config file with key=value lines mirroring the flags");
    app.allow_config_extras(CLI::config_extras_mode::error);

    std::string model_dir, dataset_path, out_dir;
    app.add_option("--model-dir", model_dir, "directory with model.safetensors, config.json, "
                                             "vocab.json, merges.txt")
        ->required();
    app.add_option("--dataset", dataset_path, "contrastive behavior dataset (JSON array)")
        ->required();
    app.add_option("--out-dir", out_dir, "output directory for CSV/JSON/SVG artifacts")
        ->required();

    brc::SweepConfig config;
    app.add_option("--alpha-start", config.alpha_start, "first steering coefficient")
        ->capture_default_str();
    app.add_option("--alpha-step", config.alpha_step, "steering coefficient step (> 0)")
        ->capture_default_str();
    app.add_option("--alpha-stop", config.alpha_stop, "last steering coefficient")
        ->capture_default_str();

    std::vector<std::string> inject_layers, read_layers;
    app.add_option("--inject-layers", inject_layers,
                   "comma-separated injection layers (default: all)");
    app.add_option("--read-layers", read_layers,
                   "comma-separated readout layers (default: all)");

    std::string inject_site = "resid_mid", read_site = "resid_post";
    app.add_option("--inject-site", inject_site, "resid_pre | resid_mid | resid_post")
        ->capture_default_str();
    app.add_option("--read-site", read_site, "resid_pre | resid_mid | resid_post")
        ->capture_default_str();

    bool steer_all_tokens = true;
    app.add_flag("--steer-all-tokens,!--steer-final-token", steer_all_tokens,
                 "add the steering vector at every position (default) or only the final one");

    app.add_option("--seed", config.seed, "seed for splits and control vectors")
        ->capture_default_str();
    app.add_option("--metrics", config.metrics,
                   "comma-separated metric subset (default: all)")
        ->delimiter(',');
    app.add_option("--eval-pairs", config.eval_pair_limit,
                   "max held-out pairs evaluated per sweep point")
        ->capture_default_str();

    std::vector<std::string> controls = {"random", "orthogonal"};
    app.add_option("--controls", controls,
                   "control vector kinds to run: random, orthogonal, none")
        ->delimiter(',');

    std::string norm_policy = "match_steering_norm";
    app.add_option("--norm-policy", norm_policy, "unit | match_steering_norm")
        ->capture_default_str();
    app.add_option("--threads", config.n_threads, "worker threads (0 = hardware)")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    try {
        config.inject_layers = parse_layer_list(inject_layers);
        config.read_layers = parse_layer_list(read_layers);
        config.inject_site = brc::site_kind_from_name(inject_site);
        config.read_site = brc::site_kind_from_name(read_site);
        config.token_scope =
            steer_all_tokens ? brc::TokenScope::all_tokens : brc::TokenScope::final_token;
        config.norm_policy = brc::norm_policy_from_name(norm_policy);
        config.run_random_control = false;
        config.run_orthogonal_control = false;
        for (const auto& c : controls) {
            if (c == "random") config.run_random_control = true;
            else if (c == "orthogonal") config.run_orthogonal_control = true;
            else if (c == "none") { /* explicit opt-out */ }
            else throw brc::ConfigError("unknown control kind '" + c +
                                        "' (expected random, orthogonal, or none)");
        }
        config.validate();

        const brc::BehaviorDataset dataset = brc::load_dataset(dataset_path);
        std::fprintf(stderr, "dataset '%s': %zu pairs\n", dataset.behavior_name.c_str(),
                     dataset.pairs.size());

        std::fprintf(stderr, "loading model from %s\n", model_dir.c_str());
        const brc::ModelBundle model = brc::load_model_dir(model_dir);
        std::fprintf(stderr, "model: %d layers, d_model %d, vocab %d\n", model.config.n_layers,
                     model.config.d_model, model.config.d_vocab);

        const brc::SweepResult result = brc::run_sweep(model, dataset, config);
        std::fprintf(stderr, "sweep: %zu rows, %llu forward passes\n", result.rows.size(),
                     static_cast<unsigned long long>(result.sweep_forward_passes));

        brc::RunInputs inputs;
        inputs.model_dir = model_dir;
        inputs.dataset_path = dataset_path;
        inputs.model_fingerprint = model.fingerprint;
        inputs.dataset_fingerprint = dataset.fingerprint;
        inputs.behavior_name = dataset.behavior_name;
        inputs.config = config;
        const brc::WriteReport report = brc::write_results(result, inputs, out_dir);
        for (const auto& w : report.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
        std::fprintf(stderr, "wrote %zu files to %s\n", report.files.size(), out_dir.c_str());

        if (!result.complete) {
            std::fprintf(stderr, "error: %s\n", result.error.c_str());
            return kNumericError;
        }
        return kOk;
    } catch (const brc::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfigError;
    } catch (const brc::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return kNumericError;
    } catch (const brc::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kDataError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
