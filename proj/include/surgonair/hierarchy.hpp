#pragma once

#include "surgonair/client.hpp"
#include "surgonair/error.hpp"
#include "surgonair/transcript.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace surgonair {

struct PhaseAnnotation {
    std::string label;
    Ms start_ms = 0;
    Ms end_ms = 0;

    bool operator==(const PhaseAnnotation&) const = default;
};

struct StepAnnotation {
    std::string label;
    Ms start_ms = 0;
    Ms end_ms = 0;
    std::size_t phase_index = 0;

    bool operator==(const StepAnnotation&) const = default;
};

// One video's full annotation: coarse phases, intermediate steps nested in
// them, and the retained action-narration words.
struct HierarchicalRecord {
    std::string video_id;
    std::string title;
    std::string meta_type;
    std::vector<PhaseAnnotation> phases;
    std::vector<StepAnnotation> steps;
    std::vector<TimedWord> words;

    // [first phase start, last phase end]; zero when there are no phases.
    Ms envelope_start_ms() const { return phases.empty() ? 0 : phases.front().start_ms; }
    Ms envelope_end_ms() const { return phases.empty() ? 0 : phases.back().end_ms; }

    bool operator==(const HierarchicalRecord&) const = default;
};

// Per-video metadata document: title, surgical category, phase boundaries.
struct VideoMeta {
    std::string video_id;
    std::string title;
    std::string meta_type;
    std::vector<PhaseAnnotation> phases;
};

VideoMeta parse_video_meta(const std::string& json_text,
                           const std::string& source_name = "<meta>");
VideoMeta parse_video_meta_file(const std::string& path);

// Checks every hierarchy constraint and reports all violations found:
// phase ordering/overlap/degenerate intervals, step monotonicity, steps
// escaping their parent phase, and words outside the phase envelope.
std::vector<Violation> validate_record(const HierarchicalRecord& r);

// Diagnostics collected while proposing steps (rejected proposals etc.).
struct StepProposalLog {
    std::vector<std::string> incidents;
};

// Groups the action sentences into per-phase segments, asks the client for
// 1-3 steps per segment, snaps the proposed boundaries to sentence
// boundaries, and validates the result. A proposal that violates the
// contract (too many steps, overlap, escape) is replaced by a single step
// spanning its segment.
std::vector<StepAnnotation> propose_steps(const std::vector<Sentence>& action_sentences,
                                          const std::vector<PhaseAnnotation>& phases,
                                          LanguageModelClient& client,
                                          StepProposalLog* log = nullptr);

// Builds the record and validates it; throws ValidationError carrying every
// violated constraint if the inputs are inconsistent.
HierarchicalRecord assemble_record(const Transcript& actions, const VideoMeta& meta,
                                   const std::vector<StepAnnotation>& steps);

// A change of the active (phase, step) state. The record's first phase start
// produces the initial entry. step_index is empty while the current phase has
// no started step. A phase/step beginning at the same instant collapses into
// one entry.
struct Transition {
    Ms time_ms = 0;
    std::size_t phase_index = 0;
    std::optional<std::size_t> step_index;

    bool operator==(const Transition&) const = default;
};

// Scans phase/step starts in time order and reports every instant the active
// state changes, strictly increasing in time. The active step is the last
// step of the current phase that has begun; it stays active until the next
// step or phase begins.
std::vector<Transition> detect_transitions(const HierarchicalRecord& r);

struct StratumCount {
    std::size_t train = 0;
    std::size_t test = 0;

    bool operator==(const StratumCount&) const = default;
};

struct SplitManifest {
    std::vector<std::string> train;
    std::vector<std::string> test;
    double ratio = 0.8;
    std::uint64_t seed = 0;
    std::map<std::string, StratumCount> strata; // meta_type -> counts

    bool operator==(const SplitManifest&) const = default;
};

// Stratified split by meta_type. Within each stratum round(ratio * n) records
// go to train (round half-up); assignment depends only on (seed, video_ids).
// A stratum of size 1 goes entirely to train with a warning.
SplitManifest split_dataset(const std::vector<HierarchicalRecord>& records,
                            double ratio = 0.8, std::uint64_t seed = 0,
                            std::vector<std::string>* warnings = nullptr);

// Artifact persistence.
std::string record_to_json(const HierarchicalRecord& r);
HierarchicalRecord record_from_json(const std::string& text);
std::string split_to_json(const SplitManifest& m);
SplitManifest split_from_json(const std::string& text);

} // namespace surgonair
