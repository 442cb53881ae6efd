#include "surgonair/manifest.hpp"

#include "surgonair/error.hpp"
#include "surgonair/util.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

namespace surgonair {

using nlohmann::json;

const char* to_string(Stage s) {
    switch (s) {
        case Stage::Pending: return "pending";
        case Stage::Parsed: return "parsed";
        case Stage::Corrected: return "corrected";
        case Stage::Filtered: return "filtered";
        case Stage::Hierarchized: return "hierarchized";
        case Stage::Interleaved: return "interleaved";
    }
    return "pending";
}

std::optional<Stage> stage_from_string(std::string_view s) {
    if (s == "pending") return Stage::Pending;
    if (s == "parsed") return Stage::Parsed;
    if (s == "corrected") return Stage::Corrected;
    if (s == "filtered") return Stage::Filtered;
    if (s == "hierarchized") return Stage::Hierarchized;
    if (s == "interleaved") return Stage::Interleaved;
    return std::nullopt;
}

VideoEntry& DatasetManifest::entry(const std::string& video_id) {
    auto [it, inserted] = videos.try_emplace(video_id);
    if (inserted) it->second.video_id = video_id;
    return it->second;
}

void DatasetManifest::advance(const std::string& video_id, Stage stage) {
    VideoEntry& e = entry(video_id);
    if (static_cast<int>(stage) < static_cast<int>(e.stage)) {
        throw Error(ErrorCode::Internal,
                    "stage regression for " + video_id + ": " + to_string(e.stage) + " -> " +
                        to_string(stage));
    }
    e.stage = stage;
}

std::string manifest_to_json(const DatasetManifest& m) {
    json doc;
    doc["format_version"] = 1;
    doc["curate_config_hash"] = m.curate_config_hash;
    doc["build_config_hash"] = m.build_config_hash;
    doc["split_artifact"] = m.split_artifact;
    json videos = json::object();
    for (const auto& [id, e] : m.videos) {
        json je;
        je["stage"] = to_string(e.stage);
        je["input_hash"] = e.input_hash;
        je["meta_hash"] = e.meta_hash;
        je["artifacts"] = e.artifacts;
        je["error"] = e.error;
        videos[id] = std::move(je);
    }
    doc["videos"] = std::move(videos);
    return doc.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Parse, std::string("malformed manifest: ") + e.what());
    }
    DatasetManifest m;
    try {
        if (doc.value("format_version", 1) != 1) {
            throw Error(ErrorCode::Parse, "unsupported manifest format version");
        }
        m.curate_config_hash = doc.value("curate_config_hash", "");
        m.build_config_hash = doc.value("build_config_hash", "");
        m.split_artifact = doc.value("split_artifact", "");
        // Bound first: iterating items() of an unnamed temporary would dangle.
        const json videos = doc.value("videos", json::object());
        for (const auto& [id, je] : videos.items()) {
            VideoEntry e;
            e.video_id = id;
            auto stage = stage_from_string(je.value("stage", "pending"));
            if (!stage) throw Error(ErrorCode::Parse, "manifest names an unknown stage");
            e.stage = *stage;
            e.input_hash = je.value("input_hash", "");
            e.meta_hash = je.value("meta_hash", "");
            e.artifacts = je.value("artifacts", std::map<std::string, std::string>{});
            e.error = je.value("error", "");
            m.videos.emplace(id, std::move(e));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("manifest field has the wrong type: ") + e.what());
    }
    return m;
}

DatasetManifest load_manifest(const std::string& path) {
    if (!std::filesystem::exists(path)) return {};
    return manifest_from_json(read_file(path));
}

void save_manifest(const std::string& path, const DatasetManifest& m) {
    atomic_write_file(path, manifest_to_json(m));
}

} // namespace surgonair
