#pragma once

#include "surgonair/client.hpp"
#include "surgonair/config.hpp"
#include "surgonair/interleave.hpp"
#include "surgonair/manifest.hpp"

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace surgonair {

struct RunReport {
    std::string command;
    std::size_t processed = 0; // units of work actually performed
    std::size_t skipped = 0;   // already up to date
    std::size_t failed = 0;
    std::vector<std::string> failures; // "video_id: reason"
    std::vector<std::string> warnings;
    std::vector<std::string> outputs; // artifact paths, relative to out_dir

    bool ok() const { return failed == 0; }
};

std::string run_report_to_json(const RunReport& r);

struct RunOptions {
    // build: additionally emit the v1 sequences; simulate/evaluate: which
    // sequence variant to read.
    StatePolicy variant = StatePolicy::OnTransition;
    bool also_v1 = false;
    std::string model = "replay";  // replay | null | ngram | external
    std::string judge = "mock";    // mock | external
    std::string fixed_baseline = "replay";
};

// Orchestrates the full dataset flow against one output directory. Every
// command is idempotent: artifacts are hash-addressed in the manifest and
// re-runs skip completed work. Per-video failures never abort the run; they
// are isolated and reported.
class Pipeline {
public:
    explicit Pipeline(PipelineConfig config);
    ~Pipeline();

    const PipelineConfig& config() const { return config_; }

    // parse -> flag -> correct -> classify -> filter, per video.
    RunReport curate();
    // steps -> record -> sequences -> split manifest.
    RunReport build(const RunOptions& options = {});
    // Stream each built sequence through the selected model.
    RunReport simulate(const RunOptions& options = {});
    // Pairwise judging against the fixed baseline + phase-correctness tables.
    RunReport evaluate(const RunOptions& options = {});
    // Re-check inputs and any existing artifacts without writing.
    RunReport validate();
    // Rebuild only the split manifest from the hierarchized records.
    RunReport split();

private:
    LanguageModelClient& client();
    void ensure_dirs() const;
    std::string out_path(const std::string& relative) const;
    bool artifact_fresh(const VideoEntry& entry, const std::string& relative) const;
    std::vector<std::string> discover_video_ids() const;

    PipelineConfig config_;
    std::unique_ptr<LanguageModelClient> base_client_;
    std::unique_ptr<LanguageModelClient> caching_client_;
};

} // namespace surgonair
