#pragma once

#include "surgonair/interleave.hpp"
#include "surgonair/stream.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace surgonair {

struct ClientConfig {
    std::string kind = "mock"; // "mock" or "http"
    std::string endpoint;
    std::string model;
    int timeout_ms = 30000;
    int max_in_flight = 4;
    int max_retries = 3;

    bool operator==(const ClientConfig&) const = default;
};

struct SimulateConfig {
    ClockMode clock = ClockMode::AsFastAsPossible;
    double pace_scale = 1.0;
    // Command line of an external narration backend, used by the external
    // model selector.
    std::vector<std::string> external_command;
    int external_timeout_ms = 10000;

    bool operator==(const SimulateConfig&) const = default;
};

struct PipelineConfig {
    std::string asr_dir;
    std::string meta_dir;
    std::string out_dir;
    std::string cache_dir; // empty = <out_dir>/cache

    int fps = 2;
    int stride_k = 1;
    double confidence_threshold = -0.15;
    ConditioningMode mode = ConditioningMode::TitleOnly;
    Ms start_offset_ms = 0;
    double split_ratio = 0.8;
    std::uint64_t seed = 0;
    int workers = 4;

    ClientConfig client;
    SimulateConfig simulate;

    std::string effective_cache_dir() const {
        return cache_dir.empty() ? out_dir + "/cache" : cache_dir;
    }

    bool operator==(const PipelineConfig&) const = default;
};

// Throws on out-of-range values; returns normally otherwise.
void validate_config(const PipelineConfig& c);

std::string config_to_json(const PipelineConfig& c);
PipelineConfig config_from_json(const std::string& text);
PipelineConfig load_config(const std::string& path);

// Hash over the parameters that shape curation outputs (threshold, client,
// prompt assets). Changing any of them invalidates curated artifacts.
std::string curate_config_hash(const PipelineConfig& c);
// Hash over the parameters that shape records/sequences/split.
std::string build_config_hash(const PipelineConfig& c);

} // namespace surgonair
