#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace surgonair {

// Lifecycle of one video through the pipeline; a stage may only advance.
enum class Stage {
    Pending = 0,
    Parsed = 1,
    Corrected = 2,
    Filtered = 3,
    Hierarchized = 4,
    Interleaved = 5,
};

const char* to_string(Stage s);
std::optional<Stage> stage_from_string(std::string_view s);

struct VideoEntry {
    std::string video_id;
    Stage stage = Stage::Pending;
    // Hash of the raw ASR input; a change resets the video entirely.
    std::string input_hash;
    // Hash of the metadata input; a change invalidates only the build stages.
    std::string meta_hash;
    // Artifact file name -> content hash, for idempotence checks.
    std::map<std::string, std::string> artifacts;
    std::string error; // last failure, empty when healthy

    bool operator==(const VideoEntry&) const = default;
};

struct DatasetManifest {
    // Per-stage-group config hashes; mismatch invalidates that group only.
    std::string curate_config_hash;
    std::string build_config_hash;
    std::map<std::string, VideoEntry> videos;
    std::string split_artifact; // relative path of the split manifest, if built

    // Moves a video forward; same-stage writes are allowed (idempotent),
    // regressions throw.
    void advance(const std::string& video_id, Stage stage);
    VideoEntry& entry(const std::string& video_id);

    bool operator==(const DatasetManifest&) const = default;
};

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text);

// Missing file -> empty manifest.
DatasetManifest load_manifest(const std::string& path);
// Atomic write-then-rename; a reader never sees a half-written manifest.
void save_manifest(const std::string& path, const DatasetManifest& m);

} // namespace surgonair
