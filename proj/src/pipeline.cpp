#include "surgonair/pipeline.hpp"

#include "surgonair/curation.hpp"
#include "surgonair/eval.hpp"
#include "surgonair/hierarchy.hpp"
#include "surgonair/stream.hpp"
#include "surgonair/transcript.hpp"
#include "surgonair/util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <set>

namespace surgonair {

namespace fs = std::filesystem;
using nlohmann::json;

std::string run_report_to_json(const RunReport& r) {
    json doc;
    doc["format_version"] = 1;
    doc["command"] = r.command;
    doc["processed"] = r.processed;
    doc["skipped"] = r.skipped;
    doc["failed"] = r.failed;
    doc["failures"] = r.failures;
    doc["warnings"] = r.warnings;
    doc["outputs"] = r.outputs;
    return doc.dump(2) + "\n";
}

namespace {

std::string video_rel(const std::string& video_id, const std::string& name) {
    return "videos/" + video_id + "/" + name;
}

std::string sequence_rel(const std::string& video_id, StatePolicy policy) {
    return video_rel(video_id, std::string("sequence.") + to_string(policy) + ".txt");
}

std::string sequence_meta_rel(const std::string& video_id, StatePolicy policy) {
    return video_rel(video_id, std::string("sequence.") + to_string(policy) + ".meta.json");
}

std::string narration_rel(const std::string& video_id, const std::string& model,
                          StatePolicy policy) {
    return video_rel(video_id, "narration." + model + "." + to_string(policy) + ".json");
}

std::string stream_rel(const std::string& video_id, const std::string& model,
                       StatePolicy policy) {
    return video_rel(video_id, "stream." + model + "." + to_string(policy) + ".json");
}

std::string rewrites_to_json_doc(const std::set<std::string>& flagged,
                                 const std::vector<RewriteResult>& rewrites, double threshold) {
    json doc;
    doc["format_version"] = 1;
    doc["threshold"] = threshold;
    doc["flagged"] = std::vector<std::string>(flagged.begin(), flagged.end());
    json list = json::array();
    for (const auto& r : rewrites) {
        list.push_back({{"sentence_id", r.sentence_id},
                        {"original", r.original_words},
                        {"corrected", r.corrected_words},
                        {"accepted", r.accepted},
                        {"rejection_reason", r.rejection_reason}});
    }
    doc["rewrites"] = std::move(list);
    return doc.dump(2) + "\n";
}

std::string classes_to_json_doc(const std::map<std::string, SentenceClass>& classes) {
    json doc;
    doc["format_version"] = 1;
    json map = json::object();
    for (const auto& [id, cls] : classes) map[id] = to_string(cls);
    doc["classes"] = std::move(map);
    return doc.dump(2) + "\n";
}

// Everything one video's worker produced; merged into the manifest on the
// coordinating thread.
struct VideoWork {
    VideoEntry entry;
    std::vector<std::string> outputs;
    std::vector<std::string> warnings;
    bool skipped = false;
    bool failed = false;
    std::string failure;
};

// Writes one artifact and records its hash on the entry.
void emit_artifact(const std::string& out_dir, VideoWork& work, const std::string& relative,
                   const std::string& content) {
    atomic_write_file((fs::path(out_dir) / relative).string(), content);
    work.entry.artifacts[relative] = fnv1a64_hex(content);
    work.outputs.push_back(relative);
}

void merge_work(DatasetManifest& manifest, std::vector<VideoWork>& works, RunReport& report) {
    for (auto& w : works) {
        manifest.videos[w.entry.video_id] = w.entry;
        if (w.skipped) {
            ++report.skipped;
        } else if (w.failed) {
            ++report.failed;
            report.failures.push_back(w.entry.video_id + ": " + w.failure);
        } else {
            ++report.processed;
        }
        for (auto& o : w.outputs) report.outputs.push_back(std::move(o));
        for (auto& m : w.warnings) report.warnings.push_back(std::move(m));
    }
}

} // namespace

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
    validate_config(config_);
}

Pipeline::~Pipeline() = default;

LanguageModelClient& Pipeline::client() {
    if (!caching_client_) {
        ensure_dirs();
        if (config_.client.kind == "http") {
            HttpClientConfig hc;
            hc.endpoint = config_.client.endpoint;
            hc.model = config_.client.model;
            hc.timeout_ms = config_.client.timeout_ms;
            base_client_ = std::make_unique<HttpLanguageModelClient>(http_config_from_env(hc));
        } else {
            base_client_ = std::make_unique<MockLanguageModelClient>();
        }
        caching_client_ =
            std::make_unique<CachingClient>(*base_client_, config_.effective_cache_dir());
    }
    return *caching_client_;
}

void Pipeline::ensure_dirs() const {
    fs::create_directories(config_.out_dir);
    fs::create_directories(out_path("videos"));
    fs::create_directories(out_path("eval"));
    fs::create_directories(out_path("reports/timing"));
    fs::create_directories(config_.effective_cache_dir());
}

std::string Pipeline::out_path(const std::string& relative) const {
    return (fs::path(config_.out_dir) / relative).string();
}

bool Pipeline::artifact_fresh(const VideoEntry& entry, const std::string& relative) const {
    auto it = entry.artifacts.find(relative);
    if (it == entry.artifacts.end()) return false;
    const std::string path = out_path(relative);
    if (!fs::exists(path)) return false;
    return fnv1a64_hex(read_file(path)) == it->second;
}

std::vector<std::string> Pipeline::discover_video_ids() const {
    if (!fs::is_directory(config_.asr_dir)) {
        throw Error(ErrorCode::Io, "ASR directory not found: " + config_.asr_dir);
    }
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(config_.asr_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".json") {
            ids.push_back(e.path().stem().string());
        }
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) {
        throw Error(ErrorCode::EmptyInput, "no ASR documents found in " + config_.asr_dir);
    }
    return ids;
}

// --------------------------------------------------------------------------
// curate

RunReport Pipeline::curate() {
    ensure_dirs();
    RunReport report;
    report.command = "curate";

    const std::string manifest_path = out_path("manifest.json");
    DatasetManifest manifest = load_manifest(manifest_path);
    const std::string curate_hash = curate_config_hash(config_);
    const std::string build_hash = build_config_hash(config_);
    if (manifest.curate_config_hash != curate_hash) {
        // Curation parameters changed: every downstream artifact is stale.
        if (!manifest.videos.empty()) {
            report.warnings.push_back(
                "curation config changed; all cached stages were invalidated");
        }
        manifest.videos.clear();
        manifest.split_artifact.clear();
        manifest.curate_config_hash = curate_hash;
        manifest.build_config_hash = build_hash;
        save_manifest(manifest_path, manifest);
    }

    const std::vector<std::string> ids = discover_video_ids();
    LanguageModelClient& lm = client();
    const RetryPolicy retry{config_.client.max_retries, 100};

    std::vector<VideoWork> works(ids.size());
    parallel_for(ids.size(), static_cast<std::size_t>(config_.workers), [&](std::size_t i) {
        const std::string& vid = ids[i];
        VideoWork& w = works[i];
        auto it = manifest.videos.find(vid);
        w.entry = it != manifest.videos.end() ? it->second : VideoEntry{};
        w.entry.video_id = vid;
        try {
            const std::string asr_raw =
                read_file((fs::path(config_.asr_dir) / (vid + ".json")).string());
            const std::string input_hash = fnv1a64_hex(asr_raw);
            if (w.entry.input_hash != input_hash) {
                w.entry = VideoEntry{};
                w.entry.video_id = vid;
                w.entry.input_hash = input_hash;
            }

            const std::vector<std::string> curated = {
                video_rel(vid, "transcript.json"), video_rel(vid, "rewrites.json"),
                video_rel(vid, "corrected.json"), video_rel(vid, "classes.json"),
                video_rel(vid, "actions.json")};
            if (w.entry.error.empty() && w.entry.stage >= Stage::Filtered &&
                std::all_of(curated.begin(), curated.end(),
                            [&](const std::string& rel) { return artifact_fresh(w.entry, rel); })) {
                w.skipped = true;
                return;
            }
            w.entry.error.clear();

            Transcript t = parse_asr(asr_raw, vid + ".json");
            emit_artifact(config_.out_dir, w, video_rel(vid, "transcript.json"),
                          transcript_to_json(t));
            w.entry.stage = std::max(w.entry.stage, Stage::Parsed);

            const std::set<std::string> flagged =
                flag_low_confidence(t, config_.confidence_threshold);
            std::vector<std::string> warnings;
            CurationOptions copts;
            copts.max_in_flight = static_cast<std::size_t>(config_.client.max_in_flight);
            copts.retry = retry;
            copts.warnings = &warnings;
            CorrectionOutcome outcome = correct_flagged(t, flagged, lm, copts);
            emit_artifact(config_.out_dir, w, video_rel(vid, "rewrites.json"),
                          rewrites_to_json_doc(flagged, outcome.rewrites,
                                               config_.confidence_threshold));
            emit_artifact(config_.out_dir, w, video_rel(vid, "corrected.json"),
                          transcript_to_json(outcome.transcript));
            w.entry.stage = std::max(w.entry.stage, Stage::Corrected);

            const auto classes = classify_sentences(outcome.transcript, lm, copts);
            emit_artifact(config_.out_dir, w, video_rel(vid, "classes.json"),
                          classes_to_json_doc(classes));
            Transcript actions = filter_actions(outcome.transcript, classes);
            emit_artifact(config_.out_dir, w, video_rel(vid, "actions.json"),
                          transcript_to_json(actions));
            w.entry.stage = std::max(w.entry.stage, Stage::Filtered);

            for (const auto& msg : warnings) w.warnings.push_back(vid + ": " + msg);
        } catch (const Error& e) {
            w.failed = true;
            w.failure = e.what();
            w.entry.error = e.what();
        } catch (const std::exception& e) {
            w.failed = true;
            w.failure = std::string("unexpected error: ") + e.what();
            w.entry.error = w.failure;
        }
    });

    merge_work(manifest, works, report);
    save_manifest(manifest_path, manifest);
    atomic_write_file(out_path("reports/curate.json"), run_report_to_json(report));
    return report;
}

// --------------------------------------------------------------------------
// build

RunReport Pipeline::build(const RunOptions& options) {
    ensure_dirs();
    RunReport report;
    report.command = "build";

    const std::string manifest_path = out_path("manifest.json");
    DatasetManifest manifest = load_manifest(manifest_path);
    const std::string curate_hash = curate_config_hash(config_);
    const std::string build_hash = build_config_hash(config_);
    if (manifest.curate_config_hash != curate_hash) {
        throw Error(ErrorCode::MissingStage,
                    "curated artifacts are missing or stale for this config; run curate first");
    }
    if (manifest.build_config_hash != build_hash) {
        // Build parameters changed: drop records/sequences, keep curation.
        for (auto& [vid, entry] : manifest.videos) {
            if (entry.stage > Stage::Filtered) entry.stage = Stage::Filtered;
            for (auto it = entry.artifacts.begin(); it != entry.artifacts.end();) {
                const std::string& rel = it->first;
                const bool build_artifact = rel.find("/record.json") != std::string::npos ||
                                            rel.find("/sequence.") != std::string::npos;
                it = build_artifact ? entry.artifacts.erase(it) : std::next(it);
            }
        }
        manifest.build_config_hash = build_hash;
        manifest.split_artifact.clear();
        report.warnings.push_back("build config changed; records and sequences re-derived");
        save_manifest(manifest_path, manifest);
    }

    std::vector<std::string> ids;
    for (const auto& [vid, entry] : manifest.videos) ids.push_back(vid);
    if (ids.empty()) {
        throw Error(ErrorCode::MissingStage, "manifest lists no videos; run curate first");
    }

    LanguageModelClient& lm = client();
    std::vector<StatePolicy> policies = {StatePolicy::OnTransition};
    if (options.also_v1 || options.variant == StatePolicy::EveryChunk) {
        policies.push_back(StatePolicy::EveryChunk);
    }

    std::vector<VideoWork> works(ids.size());
    parallel_for(ids.size(), static_cast<std::size_t>(config_.workers), [&](std::size_t i) {
        const std::string& vid = ids[i];
        VideoWork& w = works[i];
        w.entry = manifest.videos.at(vid);
        try {
            if (w.entry.stage < Stage::Filtered || !w.entry.error.empty()) {
                throw Error(ErrorCode::MissingStage,
                            "not curated (stage '" + std::string(to_string(w.entry.stage)) +
                                "'); run curate first");
            }
            const std::string meta_path =
                (fs::path(config_.meta_dir) / (vid + ".json")).string();
            if (!fs::exists(meta_path)) {
                throw Error(ErrorCode::Io, "metadata file not found: " + meta_path);
            }
            const std::string meta_raw = read_file(meta_path);
            const std::string meta_hash = fnv1a64_hex(meta_raw);
            if (w.entry.meta_hash != meta_hash) {
                if (w.entry.stage > Stage::Filtered) w.entry.stage = Stage::Filtered;
                for (auto it = w.entry.artifacts.begin(); it != w.entry.artifacts.end();) {
                    const std::string& rel = it->first;
                    const bool build_artifact =
                        rel.find("/record.json") != std::string::npos ||
                        rel.find("/sequence.") != std::string::npos;
                    it = build_artifact ? w.entry.artifacts.erase(it) : std::next(it);
                }
                w.entry.meta_hash = meta_hash;
            }

            std::vector<std::string> needed = {video_rel(vid, "record.json")};
            for (StatePolicy p : policies) {
                needed.push_back(sequence_rel(vid, p));
                needed.push_back(sequence_meta_rel(vid, p));
            }
            if (w.entry.stage >= Stage::Interleaved &&
                std::all_of(needed.begin(), needed.end(),
                            [&](const std::string& rel) { return artifact_fresh(w.entry, rel); })) {
                w.skipped = true;
                return;
            }

            const VideoMeta meta = parse_video_meta(meta_raw, meta_path);
            if (meta.video_id != vid) {
                throw Error(ErrorCode::Validation, "metadata names video '" + meta.video_id +
                                                       "' but the file is for '" + vid + "'");
            }
            const Transcript actions =
                transcript_from_json(read_file(out_path(video_rel(vid, "actions.json"))));

            StepProposalLog log;
            const std::vector<StepAnnotation> steps =
                propose_steps(actions.sentences, meta.phases, lm, &log);
            for (const auto& msg : log.incidents) w.warnings.push_back(vid + ": " + msg);

            const HierarchicalRecord record = assemble_record(actions, meta, steps);
            emit_artifact(config_.out_dir, w, video_rel(vid, "record.json"),
                          record_to_json(record));
            w.entry.stage = std::max(w.entry.stage, Stage::Hierarchized);

            for (StatePolicy p : policies) {
                BuildOptions bopts;
                bopts.fps = config_.fps;
                bopts.stride_k = config_.stride_k;
                bopts.mode = config_.mode;
                bopts.policy = p;
                bopts.start_offset_ms = config_.start_offset_ms;
                const InterleavedSequence seq = build_sequence(record, bopts);
                emit_artifact(config_.out_dir, w, sequence_rel(vid, p), serialize(seq));
                emit_artifact(config_.out_dir, w, sequence_meta_rel(vid, p),
                              serialize_meta(seq));
            }
            w.entry.stage = std::max(w.entry.stage, Stage::Interleaved);
        } catch (const Error& e) {
            w.failed = true;
            w.failure = e.what();
            w.entry.error = e.what();
        } catch (const std::exception& e) {
            w.failed = true;
            w.failure = std::string("unexpected error: ") + e.what();
            w.entry.error = w.failure;
        }
    });

    merge_work(manifest, works, report);

    // Split manifest over everything that reached a validated record.
    std::vector<HierarchicalRecord> records;
    for (const auto& [vid, entry] : manifest.videos) {
        if (entry.stage >= Stage::Hierarchized && entry.error.empty()) {
            records.push_back(record_from_json(read_file(out_path(video_rel(vid, "record.json")))));
        }
    }
    if (!records.empty()) {
        std::vector<std::string> split_warnings;
        const SplitManifest split =
            split_dataset(records, config_.split_ratio, config_.seed, &split_warnings);
        atomic_write_file(out_path("split.json"), split_to_json(split));
        report.outputs.push_back("split.json");
        for (const auto& msg : split_warnings) report.warnings.push_back("split: " + msg);
        manifest.split_artifact = "split.json";
    } else {
        report.warnings.push_back("split: no records available, split manifest not written");
    }

    save_manifest(manifest_path, manifest);
    atomic_write_file(out_path("reports/build.json"), run_report_to_json(report));
    return report;
}

// --------------------------------------------------------------------------
// simulate

RunReport Pipeline::simulate(const RunOptions& options) {
    ensure_dirs();
    RunReport report;
    report.command = "simulate";

    static const std::set<std::string> kModels = {"replay", "null", "ngram", "external"};
    if (!kModels.count(options.model)) {
        throw Error(ErrorCode::InvalidArgument,
                    "unknown model '" + options.model +
                        "' (expected replay, null, ngram or external)");
    }

    DatasetManifest manifest = load_manifest(out_path("manifest.json"));
    std::vector<std::string> ids;
    for (const auto& [vid, entry] : manifest.videos) {
        if (entry.stage >= Stage::Interleaved && entry.error.empty()) ids.push_back(vid);
    }
    if (ids.empty()) {
        throw Error(ErrorCode::MissingStage, "no interleaved sequences found; run build first");
    }

    // The n-gram stand-in trains once, on the training half of the split.
    std::unique_ptr<NgramNarrationModel> ngram;
    if (options.model == "ngram") {
        const std::string split_path = out_path("split.json");
        if (!fs::exists(split_path)) {
            throw Error(ErrorCode::MissingStage, "split manifest not found; run build first");
        }
        const SplitManifest split = split_from_json(read_file(split_path));
        std::vector<HierarchicalRecord> training;
        for (const auto& vid : split.train) {
            const std::string rec_path = out_path(video_rel(vid, "record.json"));
            if (fs::exists(rec_path)) {
                training.push_back(record_from_json(read_file(rec_path)));
            }
        }
        ngram = std::make_unique<NgramNarrationModel>(training);
    }

    for (const auto& vid : ids) {
        try {
            const std::string seq_path = out_path(sequence_rel(vid, options.variant));
            const std::string meta_path = out_path(sequence_meta_rel(vid, options.variant));
            if (!fs::exists(seq_path) || !fs::exists(meta_path)) {
                throw Error(ErrorCode::MissingStage,
                            std::string("sequence variant '") + to_string(options.variant) +
                                "' not built; run build with that variant");
            }
            const InterleavedSequence seq = deserialize(read_file(seq_path), read_file(meta_path));

            std::unique_ptr<NarrationModel> owned;
            NarrationModel* model = nullptr;
            if (options.model == "replay") {
                owned = std::make_unique<ReplayModel>(seq);
                model = owned.get();
            } else if (options.model == "null") {
                owned = std::make_unique<NullModel>();
                model = owned.get();
            } else if (options.model == "ngram") {
                model = ngram.get();
            } else {
                if (config_.simulate.external_command.empty()) {
                    throw Error(ErrorCode::InvalidArgument,
                                "external model needs simulate.external_command in the config");
                }
                ExternalModelOptions xopts;
                xopts.argv = config_.simulate.external_command;
                xopts.timeout_ms = config_.simulate.external_timeout_ms;
                owned = std::make_unique<ExternalProcessModel>(std::move(xopts));
                model = owned.get();
            }

            SimulateOptions sopts;
            sopts.clock = config_.simulate.clock;
            sopts.pace_scale = config_.simulate.pace_scale;
            sopts.video_id = vid;
            const StreamReport stream_report = surgonair::simulate(seq, *model, sopts);

            const std::string stream_file = stream_rel(vid, options.model, options.variant);
            atomic_write_file(out_path(stream_file), stream_report_to_json(stream_report));
            report.outputs.push_back(stream_file);

            const std::string narration_file = narration_rel(vid, options.model, options.variant);
            atomic_write_file(out_path(narration_file),
                              narration_artifact_to_json(artifact_from_report(stream_report)));
            report.outputs.push_back(narration_file);

            // Wall-clock numbers change run to run; they live apart from the
            // reproducible artifacts.
            atomic_write_file(out_path("reports/timing/stream." + vid + "." + options.model + "." +
                                       to_string(options.variant) + ".json"),
                              stream_timing_to_json(stream_report));
            ++report.processed;
        } catch (const Error& e) {
            ++report.failed;
            report.failures.push_back(vid + ": " + e.what());
        } catch (const std::exception& e) {
            ++report.failed;
            report.failures.push_back(vid + ": unexpected error: " + std::string(e.what()));
        }
    }

    atomic_write_file(out_path("reports/simulate." + options.model + "." +
                               to_string(options.variant) + ".json"),
                      run_report_to_json(report));
    return report;
}

// --------------------------------------------------------------------------
// evaluate

RunReport Pipeline::evaluate(const RunOptions& options) {
    ensure_dirs();
    RunReport report;
    report.command = "evaluate";

    std::unique_ptr<LanguageModelClient> judge_base;
    if (options.judge == "mock") {
        judge_base = std::make_unique<MockLanguageModelClient>();
    } else if (options.judge == "external") {
        HttpClientConfig hc;
        hc.endpoint = config_.client.endpoint;
        hc.model = config_.client.model;
        hc.timeout_ms = config_.client.timeout_ms;
        hc = http_config_from_env(hc);
        if (hc.endpoint.empty()) {
            throw Error(ErrorCode::InvalidArgument,
                        "external judge needs an endpoint (config client.endpoint or "
                        "SURGONAIR_ENDPOINT)");
        }
        judge_base = std::make_unique<HttpLanguageModelClient>(hc);
    } else {
        throw Error(ErrorCode::InvalidArgument,
                    "unknown judge '" + options.judge + "' (expected mock or external)");
    }
    CachingClient judge(*judge_base, config_.effective_cache_dir());
    const RetryPolicy retry{config_.client.max_retries, 100};

    DatasetManifest manifest = load_manifest(out_path("manifest.json"));

    // Discover which models have narration artifacts for this variant.
    const std::string suffix = std::string(".") + to_string(options.variant) + ".json";
    std::set<std::string> models;
    std::map<std::string, std::vector<std::string>> videos_by_model;
    for (const auto& [vid, entry] : manifest.videos) {
        const fs::path dir = fs::path(config_.out_dir) / "videos" / vid;
        if (!fs::is_directory(dir)) continue;
        for (const auto& e : fs::directory_iterator(dir)) {
            const std::string name = e.path().filename().string();
            if (name.rfind("narration.", 0) != 0 || !name.ends_with(suffix)) continue;
            const std::string model =
                name.substr(10, name.size() - 10 - suffix.size());
            if (model.empty() || model.find('.') != std::string::npos) continue;
            models.insert(model);
            videos_by_model[model].push_back(vid);
        }
    }
    for (auto& [model, vids] : videos_by_model) std::sort(vids.begin(), vids.end());

    const std::string& baseline = options.fixed_baseline;
    if (!models.count(baseline)) {
        throw Error(ErrorCode::EmptyInput,
                    "no narration artifacts for baseline '" + baseline + "' (variant " +
                        to_string(options.variant) + "); run simulate --model " + baseline);
    }
    std::vector<std::string> candidates;
    for (const auto& m : models) {
        if (m != baseline) candidates.push_back(m);
    }
    if (candidates.empty()) {
        throw Error(ErrorCode::EmptyInput,
                    "no candidate narration artifacts to compare against '" + baseline +
                        "'; run simulate with another model");
    }

    const std::set<std::string> baseline_vids(videos_by_model[baseline].begin(),
                                              videos_by_model[baseline].end());
    for (const auto& candidate : candidates) {
        std::vector<std::string> vids;
        for (const auto& vid : videos_by_model[candidate]) {
            if (baseline_vids.count(vid)) vids.push_back(vid);
        }
        struct Outcome {
            std::optional<JudgeVerdict> verdict;
            std::string error;
        };
        std::vector<Outcome> outcomes(vids.size());
        parallel_for(vids.size(), static_cast<std::size_t>(config_.client.max_in_flight),
                     [&](std::size_t i) {
                         const std::string& vid = vids[i];
                         try {
                             const Transcript reference = transcript_from_json(
                                 read_file(out_path(video_rel(vid, "corrected.json"))));
                             const NarrationArtifact a = narration_artifact_from_json(
                                 read_file(out_path(narration_rel(vid, candidate,
                                                                  options.variant))));
                             const NarrationArtifact b = narration_artifact_from_json(
                                 read_file(out_path(narration_rel(vid, baseline,
                                                                  options.variant))));
                             DetRng rng(config_.seed ^
                                        fnv1a64(vid + "\x1f" + candidate + "\x1f" + baseline));
                             outcomes[i].verdict = judge_pairwise(reference, a, b, judge, rng,
                                                                  retry);
                         } catch (const Error& e) {
                             outcomes[i].error = e.what();
                         } catch (const std::exception& e) {
                             outcomes[i].error = std::string("unexpected error: ") + e.what();
                         }
                     });

        std::vector<JudgeVerdict> verdicts;
        for (std::size_t i = 0; i < outcomes.size(); ++i) {
            if (outcomes[i].verdict) {
                verdicts.push_back(*outcomes[i].verdict);
                ++report.processed;
            } else {
                ++report.failed;
                report.failures.push_back(vids[i] + ": " + outcomes[i].error);
            }
        }
        if (verdicts.empty()) {
            report.warnings.push_back("no verdicts for " + candidate + " vs " + baseline);
            continue;
        }
        const std::string pair = candidate + "_vs_" + baseline;
        atomic_write_file(out_path("eval/verdicts." + pair + ".json"),
                          verdicts_to_json(verdicts));
        report.outputs.push_back("eval/verdicts." + pair + ".json");
        atomic_write_file(out_path("eval/winrate." + pair + ".json"),
                          win_rate_to_json(compute_win_rate(verdicts)));
        report.outputs.push_back("eval/winrate." + pair + ".json");
    }

    // Phase-correctness per model, tolerance = one chunk duration: state can
    // only be announced at chunk granularity.
    const Ms tolerance = chunk_duration_ms(config_.fps, config_.stride_k);
    for (const auto& model : models) {
        json per_video = json::array();
        std::size_t pooled_matched = 0;
        std::size_t pooled_total = 0;
        for (const auto& vid : videos_by_model[model]) {
            const std::string rec_path = out_path(video_rel(vid, "record.json"));
            if (!fs::exists(rec_path)) continue;
            try {
                const HierarchicalRecord record = record_from_json(read_file(rec_path));
                const NarrationArtifact artifact = narration_artifact_from_json(
                    read_file(out_path(narration_rel(vid, model, options.variant))));
                const PhaseCorrectnessReport pc = phase_correctness(artifact, record, tolerance);
                pooled_matched += pc.n_matched;
                pooled_total += pc.n_transitions;
                per_video.push_back(json::parse(phase_correctness_to_json(pc)));
            } catch (const Error& e) {
                ++report.failed;
                report.failures.push_back(vid + ": " + e.what());
            }
        }
        if (per_video.empty()) continue;
        json doc;
        doc["format_version"] = 1;
        doc["model"] = model;
        doc["tolerance_ms"] = tolerance;
        doc["videos"] = std::move(per_video);
        doc["pooled_matched"] = pooled_matched;
        doc["pooled_transitions"] = pooled_total;
        doc["pooled_accuracy_permille"] =
            pooled_total == 0 ? 1000 : percentage_tenths(pooled_matched, pooled_total);
        const std::string rel =
            "eval/phase." + model + "." + to_string(options.variant) + ".json";
        atomic_write_file(out_path(rel), doc.dump(2) + "\n");
        report.outputs.push_back(rel);
    }

    atomic_write_file(out_path("reports/evaluate." + options.judge + "." +
                               to_string(options.variant) + ".json"),
                      run_report_to_json(report));
    return report;
}

// --------------------------------------------------------------------------
// validate

RunReport Pipeline::validate() {
    RunReport report;
    report.command = "validate";

    auto check = [&](const std::string& what, const std::function<void()>& fn) {
        try {
            fn();
            ++report.processed;
        } catch (const ValidationError& e) {
            ++report.failed;
            for (const auto& v : e.violations()) {
                report.failures.push_back(what + ": " + v.constraint + ": " + v.detail);
            }
        } catch (const Error& e) {
            ++report.failed;
            report.failures.push_back(what + ": " + e.what());
        } catch (const std::exception& e) {
            ++report.failed;
            report.failures.push_back(what + ": unexpected error: " + e.what());
        }
    };

    for (const auto& vid : discover_video_ids()) {
        const std::string asr_path = (fs::path(config_.asr_dir) / (vid + ".json")).string();
        check(vid + "/asr", [&] { parse_asr(read_file(asr_path), vid + ".json"); });
        const std::string meta_path = (fs::path(config_.meta_dir) / (vid + ".json")).string();
        if (fs::exists(meta_path)) {
            check(vid + "/meta", [&] {
                const VideoMeta meta = parse_video_meta_file(meta_path);
                if (meta.video_id != vid) {
                    throw Error(ErrorCode::Validation, "metadata names video '" + meta.video_id +
                                                           "' but the file is for '" + vid + "'");
                }
            });
        } else {
            report.warnings.push_back(vid + ": no metadata file (build would fail)");
        }

        const std::string rec_path = out_path(video_rel(vid, "record.json"));
        if (fs::exists(rec_path)) {
            check(vid + "/record", [&] {
                const HierarchicalRecord record = record_from_json(read_file(rec_path));
                auto violations = validate_record(record);
                if (!violations.empty()) {
                    throw ValidationError("record violates the hierarchy contract",
                                          std::move(violations));
                }
            });
        }
        for (StatePolicy p : {StatePolicy::OnTransition, StatePolicy::EveryChunk}) {
            const std::string seq_path = out_path(sequence_rel(vid, p));
            const std::string meta_rel_path = out_path(sequence_meta_rel(vid, p));
            if (!fs::exists(seq_path)) continue;
            check(vid + "/sequence." + to_string(p), [&] {
                const std::string doc = read_file(seq_path);
                const std::string meta = read_file(meta_rel_path);
                const InterleavedSequence seq = deserialize(doc, meta);
                if (serialize(seq) != doc) {
                    throw Error(ErrorCode::Validation,
                                "sequence does not survive a serialization round trip");
                }
            });
        }
    }

    const std::string manifest_path = out_path("manifest.json");
    if (fs::exists(manifest_path)) {
        check("manifest", [&] {
            const DatasetManifest manifest = load_manifest(manifest_path);
            std::vector<Violation> drift;
            for (const auto& [vid, entry] : manifest.videos) {
                for (const auto& [rel, hash] : entry.artifacts) {
                    const std::string path = out_path(rel);
                    if (!fs::exists(path)) {
                        drift.push_back({"artifact_missing", 0, rel});
                    } else if (fnv1a64_hex(read_file(path)) != hash) {
                        drift.push_back({"artifact_drift", 0, rel + " differs from its manifest hash"});
                    }
                }
            }
            if (!drift.empty()) {
                throw ValidationError("artifact tree does not match the manifest",
                                      std::move(drift));
            }
        });
    }
    return report;
}

// --------------------------------------------------------------------------
// split

RunReport Pipeline::split() {
    ensure_dirs();
    RunReport report;
    report.command = "split";

    const std::string manifest_path = out_path("manifest.json");
    DatasetManifest manifest = load_manifest(manifest_path);
    std::vector<HierarchicalRecord> records;
    for (const auto& [vid, entry] : manifest.videos) {
        if (entry.stage >= Stage::Hierarchized && entry.error.empty()) {
            records.push_back(record_from_json(read_file(out_path(video_rel(vid, "record.json")))));
        }
    }
    if (records.empty()) {
        throw Error(ErrorCode::EmptyInput, "no hierarchized records to split; run build first");
    }
    std::vector<std::string> warnings;
    const SplitManifest split = split_dataset(records, config_.split_ratio, config_.seed, &warnings);
    atomic_write_file(out_path("split.json"), split_to_json(split));
    report.outputs.push_back("split.json");
    for (const auto& msg : warnings) report.warnings.push_back("split: " + msg);
    report.processed = records.size();
    manifest.split_artifact = "split.json";
    save_manifest(manifest_path, manifest);
    atomic_write_file(out_path("reports/split.json"), run_report_to_json(report));
    return report;
}

} // namespace surgonair
