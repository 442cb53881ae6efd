#pragma once

#include "surgonair/error.hpp"
#include "surgonair/hierarchy.hpp"
#include "surgonair/interleave.hpp"
#include "surgonair/time_util.hpp"

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace surgonair {

enum class ClockMode {
    AsFastAsPossible,
    Paced,
};

const char* to_string(ClockMode m);
std::optional<ClockMode> clock_mode_from_string(std::string_view s);

// What a model is allowed to see for one chunk: the frame tokens plus the
// ground-truth state token (teacher-forced), never the narration words.
struct FrameBatch {
    std::size_t chunk_index = 0;
    Ms begin_ms = 0;
    Ms end_ms = 0;
    std::vector<FrameToken> frames;
    std::optional<StateToken> state;
};

struct WordOut {
    WordToken word;
    bool operator==(const WordOut&) const = default;
};

struct StateOut {
    std::string phase_label;
    std::string step_label;
    bool operator==(const StateOut&) const = default;
};

struct ModelEmission {
    // Exactly one of word/state is set; a tiny tagged union keeps emission
    // lists trivially copyable and serializable.
    std::optional<WordOut> word;
    std::optional<StateOut> state;

    static ModelEmission make_word(WordToken w) { return {WordOut{std::move(w)}, std::nullopt}; }
    static ModelEmission make_state(std::string phase, std::string step) {
        return {std::nullopt, StateOut{std::move(phase), std::move(step)}};
    }
};

// Hands out exactly one chunk at a time. Models must pull the current batch
// and acknowledge it; any other index is a causality violation. The gate owns
// the only channel between harness and model, so no-future-access is a
// structural property rather than a convention.
class StreamGate {
public:
    const FrameBatch& frames(std::size_t chunk_index);
    void acknowledge(std::size_t chunk_index);
    std::size_t cursor() const { return cursor_; }
    std::size_t chunk_count() const { return n_chunks_; }

private:
    friend class StreamHarness;
    explicit StreamGate(const InterleavedSequence& seq);
    void open(std::size_t chunk_index);
    bool pulled() const { return pulled_; }
    bool acknowledged() const { return acked_; }

    const InterleavedSequence* seq_;
    std::size_t n_chunks_;
    std::size_t cursor_ = 0;
    bool pulled_ = false;
    bool acked_ = false;
    FrameBatch current_;
};

class NarrationModel {
public:
    virtual ~NarrationModel() = default;
    virtual std::string name() const = 0;
    virtual void on_context(const ContextToken& context) = 0;
    // Pull the current batch through the gate, acknowledge it, and return the
    // tokens emitted for that chunk.
    virtual std::vector<ModelEmission> on_frames(StreamGate& gate, std::size_t chunk_index) = 0;
    virtual void reset() = 0;
};

enum class StreamEventKind { FrameIn, WordOut, StateOut };

const char* to_string(StreamEventKind k);

struct StreamEvent {
    StreamEventKind kind = StreamEventKind::FrameIn;
    std::size_t chunk_index = 0;
    Ms media_time_ms = 0;
    // FrameIn
    std::size_t frame_count = 0;
    // WordOut
    std::string text;
    Ms word_start_ms = 0;
    // StateOut
    std::string phase_label;
    std::string step_label;
    bool teacher_forced = false;

    bool operator==(const StreamEvent&) const = default;
};

struct StreamReport {
    std::string video_id;
    std::string model_name;
    ClockMode clock = ClockMode::AsFastAsPossible;
    int fps = 0;
    int stride_k = 0;
    std::size_t n_chunks = 0;
    std::vector<StreamEvent> events;
    // Wall-clock measurements; kept apart from the event log so the event log
    // can be compared byte-for-byte across runs.
    std::vector<double> per_chunk_latency_s;
    double realtime_factor = 0.0;
    std::vector<double> frame_wall_clock_s;
};

struct SimulateOptions {
    ClockMode clock = ClockMode::AsFastAsPossible;
    // Paced mode delivers chunk i no earlier than i*chunk_duration/pace_scale
    // of wall time; raise pace_scale to run a paced simulation quickly.
    double pace_scale = 1.0;
    std::string video_id;
};

StreamReport simulate(const InterleavedSequence& seq, NarrationModel& model,
                      const SimulateOptions& options = {});

// Deterministic slice of the report (event log, grid parameters).
std::string stream_report_to_json(const StreamReport& report);
StreamReport stream_report_from_json(const std::string& text);
// Wall-clock slice (latency, realtime factor); varies run to run.
std::string stream_timing_to_json(const StreamReport& report);

// Emits each chunk's ground-truth words and state token verbatim.
class ReplayModel final : public NarrationModel {
public:
    explicit ReplayModel(InterleavedSequence reference);
    std::string name() const override { return "replay"; }
    void on_context(const ContextToken& context) override;
    std::vector<ModelEmission> on_frames(StreamGate& gate, std::size_t chunk_index) override;
    void reset() override {}

private:
    InterleavedSequence reference_;
};

// Pulls and acknowledges every chunk but never emits.
class NullModel final : public NarrationModel {
public:
    std::string name() const override { return "null"; }
    void on_context(const ContextToken&) override {}
    std::vector<ModelEmission> on_frames(StreamGate& gate, std::size_t chunk_index) override;
    void reset() override {}
};

struct NgramOptions {
    int order = 3;
    int max_words_per_chunk = 3;
};

// Deterministic order-n word model conditioned on the active (phase, step)
// pair and the most recent emitted words; state tracking is teacher-forced.
class NgramNarrationModel final : public NarrationModel {
public:
    NgramNarrationModel(const std::vector<HierarchicalRecord>& training,
                        const NgramOptions& options = {});
    std::string name() const override { return "ngram"; }
    void on_context(const ContextToken&) override {}
    std::vector<ModelEmission> on_frames(StreamGate& gate, std::size_t chunk_index) override;
    void reset() override;

    std::size_t vocabulary_size() const { return vocabulary_.size(); }
    bool in_vocabulary(const std::string& word) const { return vocabulary_.count(word) > 0; }

private:
    std::string next_word() const;

    NgramOptions options_;
    // continuations[h] maps "phase\x1fstep\x1fw..." (h history words) to
    // successor counts; level -1 semantics live in global_counts_.
    std::vector<std::map<std::string, std::map<std::string, std::uint64_t>>> continuations_;
    std::map<std::string, std::uint64_t> global_counts_;
    std::map<std::string, std::uint64_t> vocabulary_;

    std::string phase_ = "none";
    std::string step_ = "none";
    std::vector<std::string> history_;
};

struct ExternalModelOptions {
    std::vector<std::string> argv;
    int timeout_ms = 10000;
    std::string display_name = "external";
};

// Bridges the gate protocol to a child process speaking newline-delimited
// JSON: one chunk request, one emission response, strictly alternating.
class ExternalProcessModel final : public NarrationModel {
public:
    explicit ExternalProcessModel(ExternalModelOptions options);
    ~ExternalProcessModel() override;
    ExternalProcessModel(const ExternalProcessModel&) = delete;
    ExternalProcessModel& operator=(const ExternalProcessModel&) = delete;

    std::string name() const override { return options_.display_name; }
    void on_context(const ContextToken& context) override;
    std::vector<ModelEmission> on_frames(StreamGate& gate, std::size_t chunk_index) override;
    void reset() override;

private:
    void spawn();
    void shutdown() noexcept;
    void send_line(const std::string& line);
    std::string recv_line();

    ExternalModelOptions options_;
    int child_pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string read_buffer_;
};

} // namespace surgonair
