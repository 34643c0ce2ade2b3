#pragma once

#include "brc/runner.hpp"

#include <string>
#include <vector>

namespace brc {

/// Everything the manifest needs to make a run reproducible.
struct RunInputs {
    std::string model_dir;
    std::string dataset_path;
    uint64_t model_fingerprint = 0;
    uint64_t dataset_fingerprint = 0;
    std::string behavior_name;
    SweepConfig config;
};

struct WriteReport {
    std::vector<std::string> files;  // relative to out_dir, sorted
    std::vector<std::string> warnings;
};

/// Writes one CSV per (inject, read) pair, curves.json, vectors.json, SVG
/// plots, and manifest.json (last, listing every artifact). Emitted bytes
/// are a pure function of the inputs; the manifest timestamp honors
/// SOURCE_DATE_EPOCH so reruns can be byte-identical.
WriteReport write_results(const SweepResult& result, const RunInputs& inputs,
                          const std::string& out_dir);

/// Static line charts per (inject, read) pair: logit-difference and KL
/// curves with all vector kinds, and candidate rank traces. Returns the
/// files written (empty curve set writes nothing and warns instead).
std::vector<std::string> emit_plots(const std::vector<BiasResponseCurve>& curves,
                                    const std::vector<std::string>& metrics,
                                    const std::string& out_dir,
                                    std::vector<std::string>* warnings);

/// True when `name` is selected by the metric filter (empty filter = all).
bool metric_selected(const std::vector<std::string>& metrics, const std::string& name);

}  // namespace brc
