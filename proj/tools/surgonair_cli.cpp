// Command-line front end. Talks to the library exclusively through the C API
// so the shared-library boundary is exercised exactly as external callers
// would use it.
#include "surgonair.h"

#include "CLI11.hpp"

#include <cstdio>
#include <string>
#include <utility>
#include <vector>

namespace {

int exit_code_for(soa_status status) {
    switch (status) {
        case SOA_OK: return 0;
        case SOA_PARTIAL: return 1;
        case SOA_INVALID_ARGUMENT:
        case SOA_PARSE_ERROR: return 2;
        default: return 3;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"surgical narration dataset pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    app.add_option("--config", config_path, "JSON config file");

    // Flags that override config values; only flags the user actually passes
    // are forwarded, so config-file settings stay authoritative otherwise.
    struct Override {
        const char* key;
        std::string value;
        CLI::Option* option = nullptr;
    };
    std::vector<Override> overrides = {
        {"asr_dir"}, {"meta_dir"}, {"out_dir"}, {"cache_dir"}, {"fps"},       {"stride"},
        {"threshold"}, {"mode"},   {"variant"}, {"model"},     {"judge"},
        {"fixed_baseline"}, {"seed"}, {"workers"}, {"clock"}, {"pace_scale"},
        {"external_command"},
    };
    auto find = [&](const char* key) -> Override& {
        for (auto& o : overrides) {
            if (std::string(o.key) == key) return o;
        }
        std::abort();
    };

    find("asr_dir").option = app.add_option("--asr-dir", find("asr_dir").value,
                                            "directory of per-video ASR JSON documents");
    find("meta_dir").option = app.add_option("--meta-dir", find("meta_dir").value,
                                             "directory of per-video metadata JSON documents");
    find("out_dir").option =
        app.add_option("--out-dir", find("out_dir").value, "artifact output directory");
    find("cache_dir").option =
        app.add_option("--cache-dir", find("cache_dir").value, "client response cache directory");
    find("fps").option = app.add_option("--fps", find("fps").value, "frames per second");
    find("stride").option =
        app.add_option("--stride", find("stride").value, "frames per chunk (k)");
    find("threshold").option = app.add_option("--threshold", find("threshold").value,
                                              "sentence log-probability flagging threshold");
    find("mode").option = app.add_option("--mode", find("mode").value, "context prefix content")
                              ->check(CLI::IsMember({"asr_history", "title_only"}));
    find("variant").option =
        app.add_option("--variant", find("variant").value, "state-token placement variant")
            ->check(CLI::IsMember({"eq2", "v1"}));
    find("model").option =
        app.add_option("--model", find("model").value, "narration model for simulate")
            ->check(CLI::IsMember({"replay", "null", "ngram", "external"}));
    find("judge").option = app.add_option("--judge", find("judge").value, "pairwise judge backend")
                               ->check(CLI::IsMember({"mock", "external"}));
    find("fixed_baseline").option =
        app.add_option("--fixed-baseline", find("fixed_baseline").value,
                       "model every candidate is judged against");
    find("seed").option = app.add_option("--seed", find("seed").value, "run seed");
    find("workers").option =
        app.add_option("--workers", find("workers").value, "bounded worker pool size");
    find("clock").option =
        app.add_option("--clock", find("clock").value, "simulation clock mode")
            ->check(CLI::IsMember({"as_fast_as_possible", "paced"}));
    find("pace_scale").option = app.add_option("--pace-scale", find("pace_scale").value,
                                               "media seconds per wall second in paced mode");
    find("external_command").option =
        app.add_option("--external-command", find("external_command").value,
                       "command line of the external narration backend");

    for (const char* name : {"curate", "build", "simulate", "evaluate", "validate", "split"}) {
        app.add_subcommand(name);
    }
    app.get_subcommand("curate")->description("parse, correct, classify and filter transcripts");
    app.get_subcommand("build")->description("derive records, sequences and the split manifest");
    app.get_subcommand("simulate")->description("stream built sequences through a model");
    app.get_subcommand("evaluate")->description("pairwise judging and phase-correctness tables");
    app.get_subcommand("validate")->description("re-check inputs and existing artifacts");
    app.get_subcommand("split")->description("rebuild only the split manifest");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    soa_pipeline* pipeline = nullptr;
    soa_status status;
    if (!config_path.empty()) {
        status = soa_pipeline_open(config_path.c_str(), &pipeline);
        if (status != SOA_OK) {
            std::fprintf(stderr, "surgonair: cannot load %s: %s\n", config_path.c_str(),
                         pipeline ? soa_pipeline_last_error(pipeline) : soa_status_name(status));
            soa_pipeline_close(pipeline);
            return 2;
        }
    } else {
        status = soa_pipeline_open_default(&pipeline);
        if (status != SOA_OK) {
            std::fprintf(stderr, "surgonair: cannot create pipeline: %s\n",
                         soa_status_name(status));
            return 3;
        }
    }

    for (const auto& o : overrides) {
        if (!o.option || o.option->count() == 0) continue;
        status = soa_pipeline_set_option(pipeline, o.key, o.value.c_str());
        if (status != SOA_OK) {
            std::fprintf(stderr, "surgonair: %s\n", soa_pipeline_last_error(pipeline));
            soa_pipeline_close(pipeline);
            return 2;
        }
    }

    status = soa_pipeline_run(pipeline, command.c_str());
    const char* report = soa_pipeline_last_report_json(pipeline);
    if (report && report[0] != '\0') {
        std::fputs(report, stdout);
    }
    if (status == SOA_OK) {
        std::fprintf(stderr, "surgonair %s: ok\n", command.c_str());
    } else {
        std::fprintf(stderr, "surgonair %s: %s\n%s\n", command.c_str(), soa_status_name(status),
                     soa_pipeline_last_error(pipeline));
    }
    const int code = exit_code_for(status);
    soa_pipeline_close(pipeline);
    return code;
}
