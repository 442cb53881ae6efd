#pragma once

#include "surgonair/time_util.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace surgonair {

// Bounds handed to the step summarizer along with the segment's sentences.
struct StepConstraints {
    int min_steps = 1;
    int max_steps = 3;
    Ms segment_start_ms = 0;
    Ms segment_end_ms = 0;
};

struct SentenceSpan {
    std::string text;
    Ms start_ms = 0;
    Ms end_ms = 0;
};

struct StepProposal {
    std::string label;
    Ms start_ms = 0;
    Ms end_ms = 0;
};

// Boundary to the external language model. Implementations return opaque
// text/labels and never mutate pipeline state; the pipeline validates every
// response before using it. All methods must be safe to call concurrently.
class LanguageModelClient {
public:
    virtual ~LanguageModelClient() = default;

    // Rewrite one sentence under the given instruction; returns the rewritten
    // sentence text.
    virtual std::string correct(const std::string& sentence,
                                const std::string& instruction) = 0;

    // Returns a category label for the sentence (the caller parses it).
    virtual std::string classify(const std::string& sentence) = 0;

    // Proposes procedural steps covering the given sentences.
    virtual std::vector<StepProposal> summarize_steps(
        const std::vector<SentenceSpan>& sentences,
        const StepConstraints& constraints) = 0;

    // Pairwise comparison: given a reference transcript and two candidate
    // narrations, returns a response naming the better one
    // ("FIRST"/"SECOND"/"TIE", free text allowed around the label).
    virtual std::string judge(const std::string& reference,
                              const std::string& first,
                              const std::string& second) = 0;
};

// Rule-based stand-in used for tests and offline runs. Fully deterministic:
// classification by a surgical verb lexicon, correction by a fixed per-word
// substitution table, step proposals by contiguous grouping, judging by token
// overlap with the reference.
//
// Two trigger words exist so failure paths can be exercised end-to-end:
// a sentence containing "vshape" rewrites to a different word count, and a
// segment containing "overlapfault" yields overlapping step proposals.
class MockLanguageModelClient : public LanguageModelClient {
public:
    std::string correct(const std::string& sentence,
                        const std::string& instruction) override;
    std::string classify(const std::string& sentence) override;
    std::vector<StepProposal> summarize_steps(
        const std::vector<SentenceSpan>& sentences,
        const StepConstraints& constraints) override;
    std::string judge(const std::string& reference, const std::string& first,
                      const std::string& second) override;
};

struct HttpClientConfig {
    std::string endpoint;  // e.g. "http://localhost:8080"
    std::string api_key;   // sent as "Authorization: Bearer <key>" when set
    std::string model;
    int timeout_ms = 30000;
};

// Reads SURGONAIR_ENDPOINT / SURGONAIR_API_KEY / SURGONAIR_MODEL /
// SURGONAIR_TIMEOUT_MS on top of the given defaults.
HttpClientConfig http_config_from_env(HttpClientConfig base = {});

// Talks to a model server over the JSON protocol documented in the README
// (POST <endpoint>/v1/complete). Transport failures surface as retryable
// client errors.
class HttpLanguageModelClient : public LanguageModelClient {
public:
    explicit HttpLanguageModelClient(HttpClientConfig config);
    ~HttpLanguageModelClient() override;

    std::string correct(const std::string& sentence,
                        const std::string& instruction) override;
    std::string classify(const std::string& sentence) override;
    std::vector<StepProposal> summarize_steps(
        const std::vector<SentenceSpan>& sentences,
        const StepConstraints& constraints) override;
    std::string judge(const std::string& reference, const std::string& first,
                      const std::string& second) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Decorator adding a content-addressed response cache on disk. A re-run with
// unchanged inputs performs no client calls. Thread safe; distinct inputs
// never collide on a cache file, and cache writes are atomic.
class CachingClient : public LanguageModelClient {
public:
    CachingClient(LanguageModelClient& inner, std::string cache_dir);

    std::string correct(const std::string& sentence,
                        const std::string& instruction) override;
    std::string classify(const std::string& sentence) override;
    std::vector<StepProposal> summarize_steps(
        const std::vector<SentenceSpan>& sentences,
        const StepConstraints& constraints) override;
    std::string judge(const std::string& reference, const std::string& first,
                      const std::string& second) override;

private:
    std::optional<std::string> lookup(const std::string& key) const;
    void store(const std::string& key, const std::string& value) const;

    LanguageModelClient& inner_;
    std::string cache_dir_;
};

// Retry policy for retryable client errors (exponential backoff).
struct RetryPolicy {
    int max_attempts = 3;
    int backoff_base_ms = 100;
};

// Runs fn, retrying on retryable errors per the policy. Non-retryable errors
// propagate immediately.
std::string retry_client_call(const RetryPolicy& policy,
                              const std::function<std::string()>& fn);

} // namespace surgonair
