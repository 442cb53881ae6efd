#include "surgonair/interleave.hpp"

#include "surgonair/error.hpp"
#include "surgonair/util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>

namespace surgonair {

using nlohmann::json;

const char* to_string(ConditioningMode m) {
    return m == ConditioningMode::AsrHistory ? "asr_history" : "title_only";
}

const char* to_string(StatePolicy p) {
    return p == StatePolicy::OnTransition ? "eq2" : "v1";
}

std::optional<ConditioningMode> conditioning_mode_from_string(std::string_view s) {
    if (s == "asr_history") return ConditioningMode::AsrHistory;
    if (s == "title_only") return ConditioningMode::TitleOnly;
    return std::nullopt;
}

std::optional<StatePolicy> state_policy_from_string(std::string_view s) {
    if (s == "eq2") return StatePolicy::OnTransition;
    if (s == "v1") return StatePolicy::EveryChunk;
    return std::nullopt;
}

Ms chunk_duration_ms(int fps, int stride_k) {
    if (fps < 1 || 1000 % fps != 0) {
        throw Error(ErrorCode::InvalidArgument,
                    "fps must be a positive divisor of 1000, got " + std::to_string(fps));
    }
    if (stride_k < 1) {
        throw Error(ErrorCode::InvalidArgument,
                    "stride must be >= 1, got " + std::to_string(stride_k));
    }
    return static_cast<Ms>(stride_k) * (1000 / fps);
}

Ms InterleavedSequence::chunk_duration_ms() const {
    return surgonair::chunk_duration_ms(fps, stride_k);
}

std::vector<WordToken> InterleavedSequence::flatten_words() const {
    std::vector<WordToken> out;
    for (const auto& c : chunks) {
        out.insert(out.end(), c.narration.begin(), c.narration.end());
    }
    return out;
}

std::size_t InterleavedSequence::state_token_count() const {
    std::size_t n = 0;
    for (const auto& c : chunks) {
        if (c.state) ++n;
    }
    return n;
}

namespace {

std::string step_label_or_none(const std::vector<StepAnnotation>& steps,
                               std::optional<std::size_t> idx) {
    return idx ? steps[*idx].label : std::string("none");
}

} // namespace

InterleavedSequence build_sequence(const HierarchicalRecord& r, const BuildOptions& options) {
    const Ms chunk_ms = chunk_duration_ms(options.fps, options.stride_k);
    const Ms duration = r.envelope_end_ms();
    if (duration <= 0) {
        throw Error(ErrorCode::EmptyInput,
                    "record " + r.video_id + " has zero duration, nothing to interleave");
    }
    if (options.start_offset_ms < 0 || options.start_offset_ms % chunk_ms != 0) {
        throw Error(ErrorCode::InvalidArgument,
                    "start offset must be a non-negative multiple of the chunk duration");
    }
    if (options.start_offset_ms > duration) {
        throw Error(ErrorCode::InvalidArgument, "start offset lies beyond the record");
    }
    {
        auto violations = validate_record(r);
        if (!violations.empty()) {
            std::string msg = "cannot interleave invalid record " + r.video_id + ": " +
                              violations.front().detail;
            throw ValidationError(msg, std::move(violations));
        }
    }

    InterleavedSequence seq;
    seq.fps = options.fps;
    seq.stride_k = options.stride_k;
    seq.mode = options.mode;
    seq.policy = options.policy;
    seq.start_offset_ms = options.start_offset_ms;

    const std::size_t first_chunk = static_cast<std::size_t>(options.start_offset_ms / chunk_ms);
    // Closed tail: a word may end exactly at the envelope end, so the grid
    // always extends one interval past the last full boundary.
    const std::size_t n_chunks = static_cast<std::size_t>(duration / chunk_ms) + 1;
    const Ms frame_period = 1000 / options.fps;

    seq.chunks.reserve(n_chunks - first_chunk);
    for (std::size_t i = first_chunk; i < n_chunks; ++i) {
        Chunk c;
        c.begin_ms = static_cast<Ms>(i) * chunk_ms;
        c.end_ms = c.begin_ms + chunk_ms;
        for (int j = 0; j < options.stride_k; ++j) {
            FrameToken f;
            f.index = i * static_cast<std::size_t>(options.stride_k) + static_cast<std::size_t>(j);
            f.timestamp_ms = c.begin_ms + static_cast<Ms>(j) * frame_period;
            c.frames.push_back(f);
        }
        seq.chunks.push_back(std::move(c));
    }

    auto chunk_slot = [&](Ms t) -> Chunk& {
        const std::size_t idx = static_cast<std::size_t>(t / chunk_ms);
        return seq.chunks.at(idx - first_chunk);
    };

    // Words go to the chunk containing their end time; earlier ones feed the
    // context prefix (or are omitted in title-only mode).
    std::vector<std::string> history;
    for (const auto& w : r.words) {
        if (w.end_ms < options.start_offset_ms) {
            history.push_back(w.text);
            continue;
        }
        chunk_slot(w.end_ms).narration.push_back({w.text, w.start_ms, w.end_ms});
    }

    // Effective transition list for this window: transitions at or after the
    // offset, re-anchored with the state already active at the window start.
    std::vector<Transition> transitions = detect_transitions(r);
    std::vector<Transition> effective;
    std::optional<Transition> carried;
    for (const auto& tr : transitions) {
        if (tr.time_ms < options.start_offset_ms) {
            carried = tr;
        } else {
            effective.push_back(tr);
        }
    }
    if (carried && (effective.empty() || effective.front().time_ms > options.start_offset_ms)) {
        Transition anchor = *carried;
        anchor.time_ms = options.start_offset_ms;
        effective.insert(effective.begin(), anchor);
    }

    for (const auto& tr : effective) {
        Chunk& c = chunk_slot(tr.time_ms);
        StateToken token{r.phases[tr.phase_index].label,
                         step_label_or_none(r.steps, tr.step_index), tr.time_ms};
        if (c.state) {
            // Several transitions in one interval: keep the final state and
            // log the one it displaced.
            seq.collapsed.push_back({c.state->time_ms, c.state->phase_label, c.state->step_label});
        }
        c.state = std::move(token);
    }

    if (options.policy == StatePolicy::EveryChunk) {
        // Stamp the running state into chunks that have no transition.
        StateToken running{"none", "none", 0};
        for (auto& c : seq.chunks) {
            if (c.state) {
                running = *c.state;
            } else {
                c.state = StateToken{running.phase_label, running.step_label, c.begin_ms};
            }
        }
    }

    seq.context.text = r.title;
    if (options.mode == ConditioningMode::AsrHistory && !history.empty()) {
        seq.context.text += " " + join(history, " ");
    }
    return seq;
}

// --------------------------------------------------------------------------
// Serialization

namespace {

std::string escape_text(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == '\\') {
            out += "\\\\";
        } else if (c == '\n') {
            out += "\\n";
        } else {
            out.push_back(c);
        }
    }
    return out;
}

std::string unescape_text(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            ++i;
            out.push_back(s[i] == 'n' ? '\n' : s[i]);
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

Ms parse_seconds_field(std::string_view text, const std::string& where) {
    // Fixed "S.mmm" rendering; parse back exactly.
    const auto dot = text.find('.');
    try {
        if (dot == std::string_view::npos) {
            return std::stoll(std::string(text)) * 1000;
        }
        const Ms secs = std::stoll(std::string(text.substr(0, dot)));
        std::string frac(text.substr(dot + 1));
        if (frac.size() != 3) {
            throw Error(ErrorCode::Parse, where + ": expected millisecond timestamp");
        }
        return secs * 1000 + std::stoll(frac);
    } catch (const std::logic_error&) {
        throw Error(ErrorCode::Parse, where + ": bad timestamp '" + std::string(text) + "'");
    }
}

} // namespace

std::string serialize(const InterleavedSequence& seq) {
    std::string out;
    out += "<Context>" + escape_text(seq.context.text) + "</Context>\n";
    for (const auto& c : seq.chunks) {
        for (const auto& f : c.frames) {
            out += "<Frame idx=" + std::to_string(f.index) + " t=" +
                   format_seconds(f.timestamp_ms) + "/>\n";
        }
        if (c.state) {
            out += "<State>Phase=" + c.state->phase_label + ", Step=" + c.state->step_label +
                   "</State>\n";
        }
        for (const auto& w : c.narration) {
            out += "<Word t=" + format_seconds(w.start_ms) + "-" + format_seconds(w.end_ms) +
                   ">" + escape_text(w.text) + "</Word>\n";
        }
    }
    return out;
}

std::string serialize_meta(const InterleavedSequence& seq) {
    json doc;
    doc["format_version"] = 1;
    doc["fps"] = seq.fps;
    doc["stride_k"] = seq.stride_k;
    doc["conditioning_mode"] = to_string(seq.mode);
    doc["state_policy"] = to_string(seq.policy);
    doc["start_offset_ms"] = seq.start_offset_ms;
    doc["n_chunks"] = seq.chunks.size();
    json times = json::array();
    for (const auto& c : seq.chunks) {
        if (c.state) times.push_back(c.state->time_ms);
    }
    doc["state_times_ms"] = std::move(times);
    json collapsed = json::array();
    for (const auto& ct : seq.collapsed) {
        collapsed.push_back(
            {{"time_ms", ct.time_ms}, {"phase", ct.phase_label}, {"step", ct.step_label}});
    }
    doc["collapsed_transitions"] = std::move(collapsed);
    return doc.dump(2) + "\n";
}

InterleavedSequence deserialize(const std::string& doc, const std::string& meta) {
    json jm;
    try {
        jm = json::parse(meta);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Parse, std::string("malformed sequence sidecar: ") + e.what());
    }

    InterleavedSequence seq;
    seq.fps = jm.at("fps").get<int>();
    seq.stride_k = jm.at("stride_k").get<int>();
    auto mode = conditioning_mode_from_string(jm.at("conditioning_mode").get<std::string>());
    auto policy = state_policy_from_string(jm.at("state_policy").get<std::string>());
    if (!mode || !policy) {
        throw Error(ErrorCode::Parse, "sequence sidecar names an unknown mode or state policy");
    }
    seq.mode = *mode;
    seq.policy = *policy;
    seq.start_offset_ms = jm.at("start_offset_ms").get<Ms>();
    std::vector<Ms> state_times = jm.at("state_times_ms").get<std::vector<Ms>>();
    for (const auto& jc : jm.at("collapsed_transitions")) {
        seq.collapsed.push_back({jc.at("time_ms").get<Ms>(), jc.at("phase").get<std::string>(),
                                 jc.at("step").get<std::string>()});
    }

    const Ms chunk_ms = seq.chunk_duration_ms();
    const int k = seq.stride_k;
    std::size_t state_cursor = 0;
    std::size_t line_no = 0;
    std::size_t frame_in_chunk = 0;

    std::size_t pos = 0;
    while (pos < doc.size()) {
        std::size_t eol = doc.find('\n', pos);
        if (eol == std::string::npos) eol = doc.size();
        std::string_view line(doc.data() + pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        const std::string where = "sequence line " + std::to_string(line_no);
        if (line.empty()) continue;

        auto payload = [&](std::string_view open, std::string_view close) -> std::string_view {
            return line.substr(open.size(), line.size() - open.size() - close.size());
        };

        if (line.rfind("<Context>", 0) == 0) {
            if (!line.ends_with("</Context>")) {
                throw Error(ErrorCode::Parse, where + ": unterminated context line");
            }
            seq.context.text = unescape_text(payload("<Context>", "</Context>"));
        } else if (line.rfind("<Frame idx=", 0) == 0) {
            if (!line.ends_with("/>")) {
                throw Error(ErrorCode::Parse, where + ": unterminated frame line");
            }
            std::string_view body = payload("<Frame idx=", "/>");
            const auto sep = body.find(" t=");
            if (sep == std::string_view::npos) {
                throw Error(ErrorCode::Parse, where + ": frame line missing timestamp");
            }
            FrameToken f;
            try {
                f.index = std::stoull(std::string(body.substr(0, sep)));
            } catch (const std::logic_error&) {
                throw Error(ErrorCode::Parse, where + ": bad frame index");
            }
            f.timestamp_ms = parse_seconds_field(body.substr(sep + 3), where);
            if (frame_in_chunk == 0 || frame_in_chunk == static_cast<std::size_t>(k)) {
                Chunk c;
                c.begin_ms = f.timestamp_ms;
                c.end_ms = c.begin_ms + chunk_ms;
                seq.chunks.push_back(std::move(c));
                frame_in_chunk = 0;
            }
            seq.chunks.back().frames.push_back(f);
            ++frame_in_chunk;
        } else if (line.rfind("<State>", 0) == 0) {
            if (!line.ends_with("</State>") || seq.chunks.empty()) {
                throw Error(ErrorCode::Parse, where + ": misplaced state line");
            }
            std::string_view body = payload("<State>", "</State>");
            if (body.rfind("Phase=", 0) != 0) {
                throw Error(ErrorCode::Parse, where + ": state line missing phase");
            }
            body.remove_prefix(6);
            const auto sep = body.find(", Step=");
            if (sep == std::string_view::npos) {
                throw Error(ErrorCode::Parse, where + ": state line missing step");
            }
            StateToken st;
            st.phase_label = std::string(body.substr(0, sep));
            st.step_label = std::string(body.substr(sep + 7));
            if (state_cursor >= state_times.size()) {
                throw Error(ErrorCode::Parse, where + ": more state lines than sidecar times");
            }
            st.time_ms = state_times[state_cursor++];
            seq.chunks.back().state = std::move(st);
        } else if (line.rfind("<Word t=", 0) == 0) {
            if (!line.ends_with("</Word>") || seq.chunks.empty()) {
                throw Error(ErrorCode::Parse, where + ": misplaced word line");
            }
            std::string_view body = payload("<Word t=", "</Word>");
            const auto gt = body.find('>');
            if (gt == std::string_view::npos) {
                throw Error(ErrorCode::Parse, where + ": malformed word line");
            }
            std::string_view times = body.substr(0, gt);
            const auto dash = times.find('-');
            if (dash == std::string_view::npos) {
                throw Error(ErrorCode::Parse, where + ": word line missing time range");
            }
            WordToken w;
            w.start_ms = parse_seconds_field(times.substr(0, dash), where);
            w.end_ms = parse_seconds_field(times.substr(dash + 1), where);
            w.text = unescape_text(body.substr(gt + 1));
            seq.chunks.back().narration.push_back(std::move(w));
        } else {
            throw Error(ErrorCode::Parse, where + ": unrecognized token line");
        }
    }

    if (state_cursor != state_times.size()) {
        throw Error(ErrorCode::Parse, "sidecar carries more state times than state lines");
    }
    const std::size_t expected = jm.at("n_chunks").get<std::size_t>();
    if (seq.chunks.size() != expected) {
        throw Error(ErrorCode::Parse,
                    "sequence has " + std::to_string(seq.chunks.size()) + " chunks, sidecar says " +
                        std::to_string(expected));
    }
    return seq;
}

} // namespace surgonair
