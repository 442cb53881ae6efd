#include "surgonair/hierarchy.hpp"

#include "surgonair/util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace surgonair {

using nlohmann::json;

VideoMeta parse_video_meta(const std::string& json_text, const std::string& source_name) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Parse, source_name + ": malformed document at byte " +
                                          std::to_string(e.byte) + ": " + e.what());
    }
    VideoMeta meta;
    try {
        meta.video_id = doc.at("video_id").get<std::string>();
        meta.title = doc.at("title").get<std::string>();
        meta.meta_type = doc.at("meta_type").get<std::string>();
        for (const auto& jp : doc.at("phases")) {
            PhaseAnnotation p;
            p.label = jp.at("label").get<std::string>();
            p.start_ms = ms_from_seconds(jp.at("start").get<double>());
            p.end_ms = ms_from_seconds(jp.at("end").get<double>());
            meta.phases.push_back(std::move(p));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, source_name + ": " + e.what());
    }
    return meta;
}

VideoMeta parse_video_meta_file(const std::string& path) {
    return parse_video_meta(read_file(path), path);
}

std::vector<Violation> validate_record(const HierarchicalRecord& r) {
    std::vector<Violation> v;

    if (r.phases.empty()) {
        v.push_back({"no_phases", 0, "record has no phase annotations"});
    }
    for (std::size_t i = 0; i < r.phases.size(); ++i) {
        const auto& p = r.phases[i];
        if (p.label.empty()) {
            v.push_back({"phase_empty_label", i, "phase " + std::to_string(i) + " has no label"});
        }
        if (p.start_ms >= p.end_ms) {
            v.push_back({"phase_empty_interval", i,
                         "phase " + std::to_string(i) + " interval [" +
                             format_seconds(p.start_ms) + ", " + format_seconds(p.end_ms) +
                             ") is empty or inverted"});
        }
        if (i > 0 && r.phases[i - 1].end_ms > p.start_ms) {
            v.push_back({"phase_overlap", i,
                         "phase " + std::to_string(i) + " starts at " +
                             format_seconds(p.start_ms) + " before phase " +
                             std::to_string(i - 1) + " ends at " +
                             format_seconds(r.phases[i - 1].end_ms)});
        }
    }

    for (std::size_t i = 0; i < r.steps.size(); ++i) {
        const auto& s = r.steps[i];
        if (s.start_ms >= s.end_ms) {
            v.push_back({"step_empty_interval", i,
                         "step " + std::to_string(i) + " interval is empty or inverted"});
        }
        if (s.phase_index >= r.phases.size()) {
            v.push_back({"step_bad_parent", i,
                         "step " + std::to_string(i) + " references missing phase " +
                             std::to_string(s.phase_index)});
        } else {
            const auto& p = r.phases[s.phase_index];
            if (s.start_ms < p.start_ms || s.end_ms > p.end_ms) {
                v.push_back({"step_escapes_phase", i,
                             "step " + std::to_string(i) + " [" + format_seconds(s.start_ms) +
                                 ", " + format_seconds(s.end_ms) + ") escapes phase " +
                                 std::to_string(s.phase_index) + " [" +
                                 format_seconds(p.start_ms) + ", " + format_seconds(p.end_ms) +
                                 ")"});
            }
        }
        if (i > 0 && r.steps[i - 1].end_ms > s.start_ms) {
            v.push_back({"step_overlap", i,
                         "step " + std::to_string(i) + " starts before step " +
                             std::to_string(i - 1) + " ends"});
        }
        if (i > 0 && r.steps[i - 1].phase_index > s.phase_index) {
            v.push_back({"step_phase_order", i,
                         "step " + std::to_string(i) + " belongs to an earlier phase than step " +
                             std::to_string(i - 1)});
        }
    }

    if (!r.phases.empty()) {
        const Ms lo = r.envelope_start_ms();
        const Ms hi = r.envelope_end_ms();
        for (std::size_t i = 0; i < r.words.size(); ++i) {
            const auto& w = r.words[i];
            if (w.end_ms < lo || w.end_ms > hi) {
                v.push_back({"orphan_word", i,
                             "word " + std::to_string(i) + " ('" + w.text + "') ends at " +
                                 format_seconds(w.end_ms) + " outside the phase envelope [" +
                                 format_seconds(lo) + ", " + format_seconds(hi) + "]"});
            }
            if (i > 0 && r.words[i - 1].start_ms > w.start_ms) {
                v.push_back({"word_order", i,
                             "word " + std::to_string(i) + " ('" + w.text +
                                 "') breaks temporal order"});
            }
        }
    }

    return v;
}

namespace {

// Sentences are attributed to the phase containing the last word's end time,
// the same causality rule the interleaver uses for words. Sentences that end
// outside every phase attach to the closest phase that has begun.
std::size_t phase_for_sentence(const Sentence& s, const std::vector<PhaseAnnotation>& phases) {
    const Ms t = s.words.back().end_ms;
    std::size_t best = 0;
    for (std::size_t i = 0; i < phases.size(); ++i) {
        if (phases[i].start_ms <= t) best = i;
    }
    return best;
}

Ms clamp_ms(Ms x, Ms lo, Ms hi) { return std::max(lo, std::min(hi, x)); }

} // namespace

std::vector<StepAnnotation> propose_steps(const std::vector<Sentence>& action_sentences,
                                          const std::vector<PhaseAnnotation>& phases,
                                          LanguageModelClient& client,
                                          StepProposalLog* log) {
    std::vector<StepAnnotation> result;
    if (action_sentences.empty()) return result;
    if (phases.empty()) {
        throw Error(ErrorCode::InvalidArgument, "cannot propose steps without phases");
    }
    for (std::size_t i = 1; i < action_sentences.size(); ++i) {
        if (action_sentences[i - 1].words.front().start_ms >
            action_sentences[i].words.front().start_ms) {
            throw Error(ErrorCode::InvalidArgument, "action sentences are not in temporal order");
        }
    }

    // One segment per phase: the maximal run of action sentences attributed
    // to that phase.
    struct Segment {
        std::size_t phase_index;
        std::vector<std::size_t> sentence_idx;
    };
    std::vector<Segment> segments;
    for (std::size_t i = 0; i < action_sentences.size(); ++i) {
        const std::size_t ph = phase_for_sentence(action_sentences[i], phases);
        if (segments.empty() || segments.back().phase_index != ph) {
            segments.push_back({ph, {}});
        }
        segments.back().sentence_idx.push_back(i);
    }

    auto incident = [&](const std::string& line) {
        if (log) log->incidents.push_back(line);
    };

    for (const auto& seg : segments) {
        const PhaseAnnotation& phase = phases[seg.phase_index];

        // Candidate snap targets: the segment's sentence boundaries, clamped
        // into the parent phase.
        std::vector<Ms> starts, ends;
        std::vector<SentenceSpan> spans;
        for (std::size_t idx : seg.sentence_idx) {
            const Sentence& s = action_sentences[idx];
            const Ms s_start = clamp_ms(s.words.front().start_ms, phase.start_ms, phase.end_ms);
            const Ms s_end = clamp_ms(s.words.back().end_ms, phase.start_ms, phase.end_ms);
            starts.push_back(s_start);
            ends.push_back(s_end);
            spans.push_back({s.text(), s.words.front().start_ms, s.words.back().end_ms});
        }
        const Ms seg_start = starts.front();
        const Ms seg_end = std::max(ends.back(), seg_start + 1);

        StepConstraints constraints;
        constraints.segment_start_ms = seg_start;
        constraints.segment_end_ms = seg_end;
        std::vector<StepProposal> proposals = client.summarize_steps(spans, constraints);

        auto snap = [](Ms t, const std::vector<Ms>& targets) {
            Ms best = targets.front();
            for (Ms c : targets) {
                if (std::llabs(c - t) < std::llabs(best - t)) best = c;
            }
            return best;
        };

        std::vector<StepAnnotation> snapped;
        for (const auto& p : proposals) {
            StepAnnotation st;
            st.label = trim(p.label);
            st.start_ms = snap(p.start_ms, starts);
            st.end_ms = snap(p.end_ms, ends);
            st.phase_index = seg.phase_index;
            snapped.push_back(std::move(st));
        }

        // Contract check: 1..3 steps, monotonic, non-overlapping, inside the
        // segment, non-degenerate after snapping.
        bool ok = !snapped.empty() && snapped.size() <= 3;
        for (std::size_t i = 0; ok && i < snapped.size(); ++i) {
            const auto& st = snapped[i];
            if (st.label.empty()) ok = false;
            if (st.start_ms >= st.end_ms) ok = false;
            if (st.start_ms < seg_start || st.end_ms > seg_end) ok = false;
            if (i > 0 && snapped[i - 1].end_ms > st.start_ms) ok = false;
        }

        if (!ok) {
            incident("step proposal rejected for phase " + std::to_string(seg.phase_index) +
                     " ('" + phase.label + "'): falling back to a single segment-spanning step");
            StepAnnotation fallback;
            fallback.label = !proposals.empty() && !trim(proposals.front().label).empty()
                                 ? trim(proposals.front().label)
                                 : "segment";
            fallback.start_ms = seg_start;
            fallback.end_ms = seg_end;
            fallback.phase_index = seg.phase_index;
            snapped = {fallback};
        }

        for (auto& st : snapped) result.push_back(std::move(st));
    }

    // Segments are phase-ordered but a rejected snap could still collide at
    // the boundary between segments; treat that as a hard error since it
    // means the inputs disagree with the phase annotations.
    for (std::size_t i = 1; i < result.size(); ++i) {
        if (result[i - 1].end_ms > result[i].start_ms) {
            throw ValidationError("proposed steps overlap across segments at step " +
                                  std::to_string(i));
        }
    }
    return result;
}

HierarchicalRecord assemble_record(const Transcript& actions, const VideoMeta& meta,
                                   const std::vector<StepAnnotation>& steps) {
    HierarchicalRecord r;
    r.video_id = meta.video_id.empty() ? actions.video_id : meta.video_id;
    r.title = meta.title;
    r.meta_type = meta.meta_type;
    r.phases = meta.phases;
    r.steps = steps;
    for (const auto& s : actions.sentences) {
        for (const auto& w : s.words) r.words.push_back(w);
    }

    std::vector<Violation> violations = validate_record(r);
    if (!violations.empty()) {
        std::string msg = "record " + r.video_id + " violates " +
                          std::to_string(violations.size()) + " constraint(s): ";
        for (std::size_t i = 0; i < violations.size(); ++i) {
            if (i > 0) msg += "; ";
            msg += violations[i].detail;
        }
        throw ValidationError(msg, std::move(violations));
    }
    return r;
}

std::vector<Transition> detect_transitions(const HierarchicalRecord& r) {
    std::vector<Transition> out;
    if (r.phases.empty()) return out;

    // Candidate instants: phase starts and step starts.
    std::vector<Ms> times;
    for (const auto& p : r.phases) times.push_back(p.start_ms);
    for (const auto& s : r.steps) times.push_back(s.start_ms);
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());

    std::optional<std::size_t> cur_phase;
    for (Ms t : times) {
        // Last phase that has begun by t (all earlier starts were already
        // visited; only starts at exactly t can change it).
        for (std::size_t i = 0; i < r.phases.size(); ++i) {
            if (r.phases[i].start_ms == t) cur_phase = i;
        }
        if (!cur_phase) continue; // step start before any phase: invalid record
        // Last begun step belonging to the current phase.
        std::optional<std::size_t> step;
        for (std::size_t i = 0; i < r.steps.size(); ++i) {
            if (r.steps[i].phase_index == *cur_phase && r.steps[i].start_ms <= t) step = i;
        }
        if (out.empty() || out.back().phase_index != *cur_phase ||
            out.back().step_index != step) {
            out.push_back({t, *cur_phase, step});
        }
    }
    return out;
}

SplitManifest split_dataset(const std::vector<HierarchicalRecord>& records, double ratio,
                            std::uint64_t seed, std::vector<std::string>* warnings) {
    if (records.empty()) {
        throw Error(ErrorCode::EmptyInput, "cannot split an empty record set");
    }
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw Error(ErrorCode::InvalidArgument,
                    "split ratio must be in (0, 1), got " + std::to_string(ratio));
    }

    std::map<std::string, std::vector<std::string>> strata;
    for (const auto& r : records) {
        strata[r.meta_type].push_back(r.video_id);
    }

    SplitManifest m;
    m.ratio = ratio;
    m.seed = seed;

    for (auto& [meta_type, ids] : strata) {
        // Assignment is a function of (seed, ids): order-independent input,
        // deterministic shuffle.
        std::sort(ids.begin(), ids.end());
        DetRng rng(seed ^ fnv1a64(meta_type));
        for (std::size_t i = ids.size(); i > 1; --i) {
            std::swap(ids[i - 1], ids[rng.bounded(i)]);
        }

        const std::size_t n = ids.size();
        std::size_t n_train =
            static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 0.5 + 1e-9));
        n_train = std::min(n_train, n);
        if (n == 1) {
            n_train = 1;
            if (warnings) {
                warnings->push_back("stratum '" + meta_type +
                                    "' has a single record; assigning it to train");
            }
        }

        for (std::size_t i = 0; i < n; ++i) {
            (i < n_train ? m.train : m.test).push_back(ids[i]);
        }
        m.strata[meta_type] = {n_train, n - n_train};
    }

    std::sort(m.train.begin(), m.train.end());
    std::sort(m.test.begin(), m.test.end());
    return m;
}

// ---------------------------------------------------------------------------

std::string record_to_json(const HierarchicalRecord& r) {
    json doc;
    doc["video_id"] = r.video_id;
    doc["title"] = r.title;
    doc["meta_type"] = r.meta_type;
    doc["phases"] = json::array();
    for (const auto& p : r.phases) {
        doc["phases"].push_back(
            {{"label", p.label}, {"start_ms", p.start_ms}, {"end_ms", p.end_ms}});
    }
    doc["steps"] = json::array();
    for (const auto& s : r.steps) {
        doc["steps"].push_back({{"label", s.label},
                                {"start_ms", s.start_ms},
                                {"end_ms", s.end_ms},
                                {"phase_index", s.phase_index}});
    }
    doc["words"] = json::array();
    for (const auto& w : r.words) {
        doc["words"].push_back(
            {{"text", w.text}, {"start_ms", w.start_ms}, {"end_ms", w.end_ms}});
    }
    return doc.dump(2) + "\n";
}

HierarchicalRecord record_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Parse, std::string("malformed record document: ") + e.what());
    }
    HierarchicalRecord r;
    r.video_id = doc.at("video_id").get<std::string>();
    r.title = doc.at("title").get<std::string>();
    r.meta_type = doc.at("meta_type").get<std::string>();
    for (const auto& jp : doc.at("phases")) {
        r.phases.push_back({jp.at("label").get<std::string>(), jp.at("start_ms").get<Ms>(),
                            jp.at("end_ms").get<Ms>()});
    }
    for (const auto& js : doc.at("steps")) {
        r.steps.push_back({js.at("label").get<std::string>(), js.at("start_ms").get<Ms>(),
                           js.at("end_ms").get<Ms>(), js.at("phase_index").get<std::size_t>()});
    }
    for (const auto& jw : doc.at("words")) {
        TimedWord w;
        w.text = jw.at("text").get<std::string>();
        w.start_ms = jw.at("start_ms").get<Ms>();
        w.end_ms = jw.at("end_ms").get<Ms>();
        r.words.push_back(std::move(w));
    }
    return r;
}

std::string split_to_json(const SplitManifest& m) {
    json doc;
    doc["ratio"] = m.ratio;
    doc["seed"] = m.seed;
    doc["train"] = m.train;
    doc["test"] = m.test;
    doc["strata"] = json::object();
    for (const auto& [k, c] : m.strata) {
        doc["strata"][k] = {{"train", c.train}, {"test", c.test}};
    }
    return doc.dump(2) + "\n";
}

SplitManifest split_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Parse, std::string("malformed split document: ") + e.what());
    }
    SplitManifest m;
    m.ratio = doc.at("ratio").get<double>();
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.train = doc.at("train").get<std::vector<std::string>>();
    m.test = doc.at("test").get<std::vector<std::string>>();
    for (const auto& [k, v] : doc.at("strata").items()) {
        m.strata[k] = {v.at("train").get<std::size_t>(), v.at("test").get<std::size_t>()};
    }
    return m;
}

} // namespace surgonair
