#pragma once

#include "surgonair/hierarchy.hpp"
#include "surgonair/time_util.hpp"

#include <optional>
#include <string>
#include <vector>

namespace surgonair {

// Content of the context prefix: either the running narration history up to
// the sequence start plus the title, or the title alone.
enum class ConditioningMode { AsrHistory, TitleOnly };

// When state tokens appear: only in chunks containing a state transition
// (CLI name "eq2"), or stamped into every chunk (CLI name "v1").
enum class StatePolicy { OnTransition, EveryChunk };

const char* to_string(ConditioningMode m);
const char* to_string(StatePolicy p);
std::optional<ConditioningMode> conditioning_mode_from_string(std::string_view s);
std::optional<StatePolicy> state_policy_from_string(std::string_view s);

struct ContextToken {
    std::string text;
    bool operator==(const ContextToken&) const = default;
};

struct FrameToken {
    std::size_t index = 0; // global frame index across the sequence
    Ms timestamp_ms = 0;
    bool operator==(const FrameToken&) const = default;
};

struct WordToken {
    std::string text;
    Ms start_ms = 0;
    Ms end_ms = 0;
    bool operator==(const WordToken&) const = default;
};

// Rendered as "none" for the step while the current phase has no begun step.
struct StateToken {
    std::string phase_label;
    std::string step_label;
    Ms time_ms = 0;
    bool operator==(const StateToken&) const = default;
};

// One interleaving unit covering stride_k frames. Serialized order within a
// chunk is frames, then the state token if present, then the narration words
// (the words whose end time falls inside the interval).
struct Chunk {
    Ms begin_ms = 0;
    Ms end_ms = 0;
    std::vector<FrameToken> frames;
    std::optional<StateToken> state;
    std::vector<WordToken> narration;
    bool operator==(const Chunk&) const = default;
};

// A transition that shared its chunk with a later one and was therefore
// folded into the chunk's single state token. Kept for diagnostics.
struct CollapsedTransition {
    Ms time_ms = 0;
    std::string phase_label;
    std::string step_label;
    bool operator==(const CollapsedTransition&) const = default;
};

struct InterleavedSequence {
    ContextToken context;
    std::vector<Chunk> chunks;
    int fps = 2;
    int stride_k = 1;
    ConditioningMode mode = ConditioningMode::TitleOnly;
    StatePolicy policy = StatePolicy::OnTransition;
    Ms start_offset_ms = 0;
    std::vector<CollapsedTransition> collapsed;

    Ms chunk_duration_ms() const;
    std::vector<WordToken> flatten_words() const;
    std::size_t state_token_count() const;

    bool operator==(const InterleavedSequence&) const = default;
};

struct BuildOptions {
    int fps = 2;      // integer frames per second; must divide 1000
    int stride_k = 1; // frames per chunk
    ConditioningMode mode = ConditioningMode::TitleOnly;
    StatePolicy policy = StatePolicy::OnTransition;
    // Sequence start, a multiple of the chunk duration. Words ending before
    // it move into the context prefix (AsrHistory) or are omitted (TitleOnly).
    Ms start_offset_ms = 0;
};

// Chunk duration for a parameter pair, in ms. Throws on unusable parameters.
Ms chunk_duration_ms(int fps, int stride_k);

// Builds the interleaved sequence for a validated record. Chunks tile
// [start_offset, duration] where duration is the record's phase envelope end;
// the grid is closed on the right so words ending exactly at the envelope end
// have a chunk. Every word lands in the unique chunk containing its end time;
// every transition's state token lands in the unique chunk containing its
// time. Multiple transitions inside one chunk collapse to the last one, with
// the earlier ones recorded in `collapsed`.
InterleavedSequence build_sequence(const HierarchicalRecord& r,
                                   const BuildOptions& options = {});

// Line-oriented token text. State lines are rendered exactly as
// "<State>Phase=<label>, Step=<label></State>".
std::string serialize(const InterleavedSequence& seq);

// JSON sidecar carrying the parameters plus what the token text cannot hold
// (state token times, collapsed-transition diagnostics).
std::string serialize_meta(const InterleavedSequence& seq);

// Rebuilds a structurally identical sequence from the token text plus its
// sidecar.
InterleavedSequence deserialize(const std::string& doc, const std::string& meta);

} // namespace surgonair
