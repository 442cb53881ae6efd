#include "surgonair.h"

#include "surgonair/error.hpp"
#include "surgonair/pipeline.hpp"
#include "surgonair/util.hpp"

#include <charconv>
#include <exception>
#include <string>

using namespace surgonair;

struct soa_pipeline {
    PipelineConfig config;
    RunOptions options;
    std::string last_error;
    std::string last_report;
};

namespace {

soa_status status_from_code(ErrorCode code) {
    return static_cast<soa_status>(static_cast<int>(code));
}

soa_status fail(soa_pipeline* p, soa_status status, std::string message) {
    if (p) p->last_error = std::move(message);
    return status;
}

template <typename T>
bool parse_number(const char* text, T& out) {
    const std::string s = text;
    try {
        if constexpr (std::is_same_v<T, double>) {
            std::size_t used = 0;
            out = std::stod(s, &used);
            return used == s.size();
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            std::size_t used = 0;
            out = std::stoull(s, &used);
            return used == s.size();
        } else {
            std::size_t used = 0;
            const long v = std::stol(s, &used);
            if (used != s.size()) return false;
            out = static_cast<T>(v);
            return static_cast<long>(out) == v;
        }
    } catch (const std::exception&) {
        return false;
    }
}

} // namespace

extern "C" {

const char* soa_version(void) { return "1.0.0"; }

const char* soa_status_name(soa_status status) {
    switch (status) {
        case SOA_OK: return "ok";
        case SOA_INVALID_ARGUMENT: return "invalid_argument";
        case SOA_PARSE_ERROR: return "parse_error";
        case SOA_VALIDATION_ERROR: return "validation_error";
        case SOA_EMPTY_INPUT: return "empty_input";
        case SOA_IO_ERROR: return "io_error";
        case SOA_CLIENT_ERROR: return "client_error";
        case SOA_CAUSALITY_VIOLATION: return "causality_violation";
        case SOA_MISSING_STAGE: return "missing_stage";
        case SOA_PARTIAL: return "partial";
        case SOA_INTERNAL_ERROR: return "internal_error";
    }
    return "unknown";
}

soa_status soa_pipeline_open(const char* config_path, soa_pipeline** out) {
    if (!config_path || !out) return SOA_INVALID_ARGUMENT;
    auto p = new soa_pipeline;
    *out = p;
    try {
        p->config = load_config(config_path);
        return SOA_OK;
    } catch (const Error& e) {
        return fail(p, status_from_code(e.code()), e.what());
    } catch (const std::exception& e) {
        return fail(p, SOA_INTERNAL_ERROR, std::string("unexpected error: ") + e.what());
    }
}

soa_status soa_pipeline_open_default(soa_pipeline** out) {
    if (!out) return SOA_INVALID_ARGUMENT;
    *out = new soa_pipeline;
    return SOA_OK;
}

soa_status soa_pipeline_set_option(soa_pipeline* p, const char* key, const char* value) {
    if (!p || !key || !value) return SOA_INVALID_ARGUMENT;
    p->last_error.clear();
    const std::string k = key;
    PipelineConfig& c = p->config;
    RunOptions& o = p->options;

    auto bad_value = [&](const char* what) {
        return fail(p, SOA_INVALID_ARGUMENT,
                    "option '" + k + "' needs " + what + ", got '" + value + "'");
    };

    if (k == "asr_dir") { c.asr_dir = value; return SOA_OK; }
    if (k == "meta_dir") { c.meta_dir = value; return SOA_OK; }
    if (k == "out_dir") { c.out_dir = value; return SOA_OK; }
    if (k == "cache_dir") { c.cache_dir = value; return SOA_OK; }
    if (k == "fps") {
        return parse_number(value, c.fps) ? SOA_OK : bad_value("an integer");
    }
    if (k == "stride") {
        return parse_number(value, c.stride_k) ? SOA_OK : bad_value("an integer");
    }
    if (k == "threshold") {
        return parse_number(value, c.confidence_threshold) ? SOA_OK : bad_value("a number");
    }
    if (k == "mode") {
        auto mode = conditioning_mode_from_string(value);
        if (!mode) return bad_value("asr_history or title_only");
        c.mode = *mode;
        return SOA_OK;
    }
    if (k == "start_offset_ms") {
        return parse_number(value, c.start_offset_ms) ? SOA_OK : bad_value("an integer");
    }
    if (k == "split_ratio") {
        return parse_number(value, c.split_ratio) ? SOA_OK : bad_value("a number");
    }
    if (k == "seed") {
        return parse_number(value, c.seed) ? SOA_OK : bad_value("an unsigned integer");
    }
    if (k == "workers") {
        return parse_number(value, c.workers) ? SOA_OK : bad_value("an integer");
    }
    if (k == "clock") {
        auto clock = clock_mode_from_string(value);
        if (!clock) return bad_value("as_fast_as_possible or paced");
        c.simulate.clock = *clock;
        return SOA_OK;
    }
    if (k == "pace_scale") {
        return parse_number(value, c.simulate.pace_scale) ? SOA_OK : bad_value("a number");
    }
    if (k == "external_command") {
        c.simulate.external_command = split_whitespace(value);
        return SOA_OK;
    }
    if (k == "external_timeout_ms") {
        return parse_number(value, c.simulate.external_timeout_ms) ? SOA_OK
                                                                   : bad_value("an integer");
    }
    if (k == "client.kind") { c.client.kind = value; return SOA_OK; }
    if (k == "client.endpoint") { c.client.endpoint = value; return SOA_OK; }
    if (k == "client.model") { c.client.model = value; return SOA_OK; }
    if (k == "client.timeout_ms") {
        return parse_number(value, c.client.timeout_ms) ? SOA_OK : bad_value("an integer");
    }
    if (k == "client.max_in_flight") {
        return parse_number(value, c.client.max_in_flight) ? SOA_OK : bad_value("an integer");
    }
    if (k == "client.max_retries") {
        return parse_number(value, c.client.max_retries) ? SOA_OK : bad_value("an integer");
    }
    if (k == "variant") {
        auto policy = state_policy_from_string(value);
        if (!policy) return bad_value("eq2 or v1");
        o.variant = *policy;
        o.also_v1 = *policy == StatePolicy::EveryChunk;
        return SOA_OK;
    }
    if (k == "model") { o.model = value; return SOA_OK; }
    if (k == "judge") { o.judge = value; return SOA_OK; }
    if (k == "fixed_baseline") { o.fixed_baseline = value; return SOA_OK; }

    return fail(p, SOA_INVALID_ARGUMENT, "unknown option '" + k + "'");
}

soa_status soa_pipeline_run(soa_pipeline* p, const char* command) {
    if (!p || !command) return SOA_INVALID_ARGUMENT;
    p->last_error.clear();
    const std::string cmd = command;
    try {
        Pipeline pipeline(p->config);
        RunReport report;
        if (cmd == "curate") {
            report = pipeline.curate();
        } else if (cmd == "build") {
            report = pipeline.build(p->options);
        } else if (cmd == "simulate") {
            report = pipeline.simulate(p->options);
        } else if (cmd == "evaluate") {
            report = pipeline.evaluate(p->options);
        } else if (cmd == "validate") {
            report = pipeline.validate();
        } else if (cmd == "split") {
            report = pipeline.split();
        } else {
            return fail(p, SOA_INVALID_ARGUMENT, "unknown command '" + cmd + "'");
        }
        p->last_report = run_report_to_json(report);
        if (!report.ok()) {
            std::string message = std::to_string(report.failed) + " item(s) failed:";
            for (const auto& f : report.failures) message += "\n  " + f;
            return fail(p, SOA_PARTIAL, std::move(message));
        }
        return SOA_OK;
    } catch (const Error& e) {
        return fail(p, status_from_code(e.code()), e.what());
    } catch (const std::exception& e) {
        return fail(p, SOA_INTERNAL_ERROR, std::string("unexpected error: ") + e.what());
    }
}

const char* soa_pipeline_last_error(const soa_pipeline* p) {
    return p ? p->last_error.c_str() : "";
}

const char* soa_pipeline_last_report_json(const soa_pipeline* p) {
    return p ? p->last_report.c_str() : "";
}

void soa_pipeline_close(soa_pipeline* p) { delete p; }

} // extern "C"
