#include "surgonair/config.hpp"

#include "surgonair/curation.hpp"
#include "surgonair/error.hpp"
#include "surgonair/util.hpp"

#include <nlohmann/json.hpp>

namespace surgonair {

using nlohmann::json;

void validate_config(const PipelineConfig& c) {
    std::vector<Violation> violations;
    auto bad = [&](const std::string& constraint, const std::string& detail) {
        violations.push_back({constraint, 0, detail});
    };
    if (c.asr_dir.empty()) bad("asr_dir", "asr_dir must be set");
    if (c.meta_dir.empty()) bad("meta_dir", "meta_dir must be set");
    if (c.out_dir.empty()) bad("out_dir", "out_dir must be set");
    if (c.fps < 1 || 1000 % c.fps != 0) {
        bad("fps", "fps must be a positive divisor of 1000, got " + std::to_string(c.fps));
    }
    if (c.stride_k < 1) bad("stride_k", "stride must be >= 1, got " + std::to_string(c.stride_k));
    if (c.confidence_threshold > 0.0) {
        bad("confidence_threshold", "confidence threshold is a log probability and must be <= 0");
    }
    if (c.start_offset_ms < 0) bad("start_offset_ms", "start offset must be >= 0");
    if (c.split_ratio < 0.0 || c.split_ratio > 1.0) {
        bad("split_ratio", "split ratio must lie in [0, 1]");
    }
    if (c.workers < 1) bad("workers", "workers must be >= 1");
    if (c.client.kind != "mock" && c.client.kind != "http") {
        bad("client.kind", "client kind must be 'mock' or 'http', got '" + c.client.kind + "'");
    }
    if (c.client.kind == "http" && c.client.endpoint.empty()) {
        bad("client.endpoint", "http client needs an endpoint");
    }
    if (c.client.timeout_ms < 1) bad("client.timeout_ms", "client timeout must be >= 1 ms");
    if (c.client.max_in_flight < 1) bad("client.max_in_flight", "max_in_flight must be >= 1");
    if (c.client.max_retries < 1) bad("client.max_retries", "max_retries must be >= 1");
    if (c.simulate.pace_scale <= 0.0) bad("simulate.pace_scale", "pace scale must be positive");
    if (c.simulate.external_timeout_ms < 1) {
        bad("simulate.external_timeout_ms", "external model timeout must be >= 1 ms");
    }
    if (!violations.empty()) {
        std::string msg = "invalid config: " + violations.front().detail;
        if (violations.size() > 1) {
            msg += " (and " + std::to_string(violations.size() - 1) + " more)";
        }
        throw ValidationError(msg, std::move(violations));
    }
}

std::string config_to_json(const PipelineConfig& c) {
    json doc;
    doc["format_version"] = 1;
    doc["paths"] = {{"asr_dir", c.asr_dir},
                    {"meta_dir", c.meta_dir},
                    {"out_dir", c.out_dir},
                    {"cache_dir", c.cache_dir}};
    doc["fps"] = c.fps;
    doc["stride_k"] = c.stride_k;
    doc["confidence_threshold"] = c.confidence_threshold;
    doc["conditioning_mode"] = to_string(c.mode);
    doc["start_offset_ms"] = c.start_offset_ms;
    doc["split_ratio"] = c.split_ratio;
    doc["seed"] = c.seed;
    doc["workers"] = c.workers;
    doc["client"] = {{"kind", c.client.kind},
                     {"endpoint", c.client.endpoint},
                     {"model", c.client.model},
                     {"timeout_ms", c.client.timeout_ms},
                     {"max_in_flight", c.client.max_in_flight},
                     {"max_retries", c.client.max_retries}};
    doc["simulate"] = {{"clock_mode", to_string(c.simulate.clock)},
                       {"pace_scale", c.simulate.pace_scale},
                       {"external_command", c.simulate.external_command},
                       {"external_timeout_ms", c.simulate.external_timeout_ms}};
    return doc.dump(2) + "\n";
}

PipelineConfig config_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Parse, std::string("malformed config: ") + e.what());
    }
    PipelineConfig c;
    try {
        if (doc.value("format_version", 1) != 1) {
            throw Error(ErrorCode::Parse, "unsupported config format version");
        }
        if (doc.contains("paths")) {
            const auto& p = doc["paths"];
            c.asr_dir = p.value("asr_dir", "");
            c.meta_dir = p.value("meta_dir", "");
            c.out_dir = p.value("out_dir", "");
            c.cache_dir = p.value("cache_dir", "");
        }
        c.fps = doc.value("fps", c.fps);
        c.stride_k = doc.value("stride_k", c.stride_k);
        c.confidence_threshold = doc.value("confidence_threshold", c.confidence_threshold);
        if (doc.contains("conditioning_mode")) {
            auto mode = conditioning_mode_from_string(doc["conditioning_mode"].get<std::string>());
            if (!mode) {
                throw Error(ErrorCode::Parse, "config names an unknown conditioning mode");
            }
            c.mode = *mode;
        }
        c.start_offset_ms = doc.value("start_offset_ms", c.start_offset_ms);
        c.split_ratio = doc.value("split_ratio", c.split_ratio);
        c.seed = doc.value("seed", c.seed);
        c.workers = doc.value("workers", c.workers);
        if (doc.contains("client")) {
            const auto& jc = doc["client"];
            c.client.kind = jc.value("kind", c.client.kind);
            c.client.endpoint = jc.value("endpoint", c.client.endpoint);
            c.client.model = jc.value("model", c.client.model);
            c.client.timeout_ms = jc.value("timeout_ms", c.client.timeout_ms);
            c.client.max_in_flight = jc.value("max_in_flight", c.client.max_in_flight);
            c.client.max_retries = jc.value("max_retries", c.client.max_retries);
        }
        if (doc.contains("simulate")) {
            const auto& js = doc["simulate"];
            if (js.contains("clock_mode")) {
                auto clock = clock_mode_from_string(js["clock_mode"].get<std::string>());
                if (!clock) throw Error(ErrorCode::Parse, "config names an unknown clock mode");
                c.simulate.clock = *clock;
            }
            c.simulate.pace_scale = js.value("pace_scale", c.simulate.pace_scale);
            c.simulate.external_command =
                js.value("external_command", c.simulate.external_command);
            c.simulate.external_timeout_ms =
                js.value("external_timeout_ms", c.simulate.external_timeout_ms);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("config has a wrongly typed field: ") + e.what());
    }
    return c;
}

PipelineConfig load_config(const std::string& path) {
    PipelineConfig c = config_from_json(read_file(path));
    validate_config(c);
    return c;
}

std::string curate_config_hash(const PipelineConfig& c) {
    json doc;
    doc["confidence_threshold"] = c.confidence_threshold;
    doc["client_kind"] = c.client.kind;
    doc["client_endpoint"] = c.client.endpoint;
    doc["client_model"] = c.client.model;
    doc["correction_prompt"] = correction_instruction_asset();
    doc["classification_prompt"] = classification_prompt_asset();
    return fnv1a64_hex(doc.dump());
}

std::string build_config_hash(const PipelineConfig& c) {
    json doc;
    doc["fps"] = c.fps;
    doc["stride_k"] = c.stride_k;
    doc["conditioning_mode"] = to_string(c.mode);
    doc["start_offset_ms"] = c.start_offset_ms;
    doc["split_ratio"] = c.split_ratio;
    doc["seed"] = c.seed;
    doc["client_kind"] = c.client.kind;
    doc["step_prompt"] = step_summary_prompt_asset();
    return fnv1a64_hex(doc.dump());
}

} // namespace surgonair
