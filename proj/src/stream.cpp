#include "surgonair/stream.hpp"

#include "surgonair/util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cassert>
#include <chrono>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

namespace surgonair {

using nlohmann::json;

const char* to_string(ClockMode m) {
    return m == ClockMode::AsFastAsPossible ? "as_fast_as_possible" : "paced";
}

std::optional<ClockMode> clock_mode_from_string(std::string_view s) {
    if (s == "as_fast_as_possible") return ClockMode::AsFastAsPossible;
    if (s == "paced") return ClockMode::Paced;
    return std::nullopt;
}

const char* to_string(StreamEventKind k) {
    switch (k) {
        case StreamEventKind::FrameIn: return "frame_in";
        case StreamEventKind::WordOut: return "word_out";
        case StreamEventKind::StateOut: return "state_out";
    }
    return "unknown";
}

// --------------------------------------------------------------------------
// Gate

StreamGate::StreamGate(const InterleavedSequence& seq)
    : seq_(&seq), n_chunks_(seq.chunks.size()) {}

void StreamGate::open(std::size_t chunk_index) {
    cursor_ = chunk_index;
    pulled_ = false;
    acked_ = false;
    const Chunk& c = seq_->chunks[chunk_index];
    current_ = FrameBatch{chunk_index, c.begin_ms, c.end_ms, c.frames, c.state};
}

const FrameBatch& StreamGate::frames(std::size_t chunk_index) {
    if (chunk_index != cursor_) {
        const char* direction = chunk_index > cursor_ ? "future" : "past";
        throw Error(ErrorCode::Causality,
                    "model requested " + std::string(direction) + " chunk " +
                        std::to_string(chunk_index) + " while chunk " + std::to_string(cursor_) +
                        " is live");
    }
    pulled_ = true;
    return current_;
}

void StreamGate::acknowledge(std::size_t chunk_index) {
    if (chunk_index != cursor_) {
        throw Error(ErrorCode::Causality,
                    "out-of-order acknowledgment of chunk " + std::to_string(chunk_index) +
                        " while chunk " + std::to_string(cursor_) + " is live");
    }
    if (!pulled_) {
        throw Error(ErrorCode::Causality, "chunk " + std::to_string(chunk_index) +
                                              " acknowledged before its frames were pulled");
    }
    if (acked_) {
        throw Error(ErrorCode::Causality,
                    "chunk " + std::to_string(chunk_index) + " acknowledged twice");
    }
    acked_ = true;
}

// --------------------------------------------------------------------------
// Harness

class StreamHarness {
public:
    static StreamReport run(const InterleavedSequence& seq, NarrationModel& model,
                            const SimulateOptions& options) {
        using clock = std::chrono::steady_clock;
        if (seq.chunks.empty()) {
            throw Error(ErrorCode::EmptyInput, "cannot simulate an empty sequence");
        }
        if (options.clock == ClockMode::Paced && options.pace_scale <= 0.0) {
            throw Error(ErrorCode::InvalidArgument, "pace scale must be positive");
        }

        StreamReport report;
        report.video_id = options.video_id;
        report.model_name = model.name();
        report.clock = options.clock;
        report.fps = seq.fps;
        report.stride_k = seq.stride_k;
        report.n_chunks = seq.chunks.size();

        model.reset();
        model.on_context(seq.context);

        StreamGate gate(seq);
        const Ms chunk_ms = seq.chunk_duration_ms();
        const auto t_start = clock::now();
        auto wall_s = [&](clock::time_point t) {
            return std::chrono::duration<double>(t - t_start).count();
        };

        for (std::size_t i = 0; i < seq.chunks.size(); ++i) {
            if (options.clock == ClockMode::Paced) {
                const double target_ms =
                    static_cast<double>(i) * static_cast<double>(chunk_ms) / options.pace_scale;
                std::this_thread::sleep_until(
                    t_start + std::chrono::duration_cast<clock::duration>(
                                  std::chrono::duration<double, std::milli>(target_ms)));
            }
            gate.open(i);
            const auto t_open = clock::now();

            std::vector<ModelEmission> emissions;
            try {
                emissions = model.on_frames(gate, i);
            } catch (const Error&) {
                throw;
            } catch (const std::exception& e) {
                throw Error(ErrorCode::Internal, "model failed on chunk " + std::to_string(i) +
                                                     ": " + e.what());
            }
            const auto t_done = clock::now();
            if (!gate.pulled()) {
                throw Error(ErrorCode::Causality, "model finished chunk " + std::to_string(i) +
                                                      " without pulling its frames");
            }
            if (!gate.acknowledged()) {
                throw Error(ErrorCode::Causality, "model finished chunk " + std::to_string(i) +
                                                      " without acknowledging it");
            }

            const Chunk& c = seq.chunks[i];
            StreamEvent frame_in;
            frame_in.kind = StreamEventKind::FrameIn;
            frame_in.chunk_index = i;
            frame_in.media_time_ms = c.begin_ms;
            frame_in.frame_count = c.frames.size();
            report.events.push_back(frame_in);
            report.frame_wall_clock_s.push_back(wall_s(t_open));

            for (const auto& em : emissions) {
                StreamEvent ev;
                ev.chunk_index = i;
                if (em.word) {
                    const WordToken& w = em.word->word;
                    if (w.end_ms > c.end_ms) {
                        throw Error(ErrorCode::Causality,
                                    "chunk " + std::to_string(i) + " emitted word '" + w.text +
                                        "' dated past the chunk boundary");
                    }
                    if (w.end_ms < c.begin_ms || w.start_ms > w.end_ms) {
                        throw Error(ErrorCode::Validation,
                                    "chunk " + std::to_string(i) + " emitted word '" + w.text +
                                        "' with an out-of-range timestamp");
                    }
                    ev.kind = StreamEventKind::WordOut;
                    ev.media_time_ms = w.end_ms;
                    ev.word_start_ms = w.start_ms;
                    ev.text = w.text;
                } else if (em.state) {
                    ev.kind = StreamEventKind::StateOut;
                    ev.phase_label = em.state->phase_label;
                    ev.step_label = em.state->step_label;
                    ev.teacher_forced = c.state && c.state->phase_label == em.state->phase_label &&
                                        c.state->step_label == em.state->step_label;
                    // Teacher-forced copies inherit the ground-truth time; a
                    // model's own announcement can only be located at chunk
                    // granularity.
                    ev.media_time_ms = ev.teacher_forced ? c.state->time_ms : c.begin_ms;
                } else {
                    throw Error(ErrorCode::Internal,
                                "empty emission from chunk " + std::to_string(i));
                }
                assert(ev.chunk_index <= gate.cursor());
                report.events.push_back(std::move(ev));
            }
            report.per_chunk_latency_s.push_back(
                std::chrono::duration<double>(t_done - t_open).count());
        }

        const double wall_total = wall_s(clock::now());
        const double media_total =
            static_cast<double>(seq.chunks.size()) * static_cast<double>(chunk_ms) / 1000.0;
        report.realtime_factor = wall_total > 0.0 ? media_total / wall_total : 0.0;
        return report;
    }
};

StreamReport simulate(const InterleavedSequence& seq, NarrationModel& model,
                      const SimulateOptions& options) {
    return StreamHarness::run(seq, model, options);
}

// --------------------------------------------------------------------------
// Report persistence

std::string stream_report_to_json(const StreamReport& report) {
    json doc;
    doc["format_version"] = 1;
    doc["video_id"] = report.video_id;
    doc["model"] = report.model_name;
    doc["clock_mode"] = to_string(report.clock);
    doc["fps"] = report.fps;
    doc["stride_k"] = report.stride_k;
    doc["n_chunks"] = report.n_chunks;
    json events = json::array();
    for (const auto& ev : report.events) {
        json je;
        je["kind"] = to_string(ev.kind);
        je["chunk"] = ev.chunk_index;
        je["media_time_ms"] = ev.media_time_ms;
        switch (ev.kind) {
            case StreamEventKind::FrameIn:
                je["frame_count"] = ev.frame_count;
                break;
            case StreamEventKind::WordOut:
                je["start_ms"] = ev.word_start_ms;
                je["text"] = ev.text;
                break;
            case StreamEventKind::StateOut:
                je["phase"] = ev.phase_label;
                je["step"] = ev.step_label;
                je["teacher_forced"] = ev.teacher_forced;
                break;
        }
        events.push_back(std::move(je));
    }
    doc["events"] = std::move(events);
    return doc.dump(2) + "\n";
}

StreamReport stream_report_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Parse, std::string("malformed stream report: ") + e.what());
    }
    StreamReport report;
    try {
        report.video_id = doc.at("video_id").get<std::string>();
        report.model_name = doc.at("model").get<std::string>();
        auto clock = clock_mode_from_string(doc.at("clock_mode").get<std::string>());
        if (!clock) throw Error(ErrorCode::Parse, "stream report names an unknown clock mode");
        report.clock = *clock;
        report.fps = doc.at("fps").get<int>();
        report.stride_k = doc.at("stride_k").get<int>();
        report.n_chunks = doc.at("n_chunks").get<std::size_t>();
        for (const auto& je : doc.at("events")) {
            StreamEvent ev;
            const std::string kind = je.at("kind").get<std::string>();
            ev.chunk_index = je.at("chunk").get<std::size_t>();
            ev.media_time_ms = je.at("media_time_ms").get<Ms>();
            if (kind == "frame_in") {
                ev.kind = StreamEventKind::FrameIn;
                ev.frame_count = je.at("frame_count").get<std::size_t>();
            } else if (kind == "word_out") {
                ev.kind = StreamEventKind::WordOut;
                ev.word_start_ms = je.at("start_ms").get<Ms>();
                ev.text = je.at("text").get<std::string>();
            } else if (kind == "state_out") {
                ev.kind = StreamEventKind::StateOut;
                ev.phase_label = je.at("phase").get<std::string>();
                ev.step_label = je.at("step").get<std::string>();
                ev.teacher_forced = je.at("teacher_forced").get<bool>();
            } else {
                throw Error(ErrorCode::Parse, "stream report has an unknown event kind: " + kind);
            }
            report.events.push_back(std::move(ev));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("stream report missing fields: ") + e.what());
    }
    return report;
}

std::string stream_timing_to_json(const StreamReport& report) {
    json doc;
    doc["video_id"] = report.video_id;
    doc["model"] = report.model_name;
    doc["per_chunk_latency_s"] = report.per_chunk_latency_s;
    doc["realtime_factor"] = report.realtime_factor;
    doc["frame_wall_clock_s"] = report.frame_wall_clock_s;
    return doc.dump(2) + "\n";
}

// --------------------------------------------------------------------------
// Built-in models

ReplayModel::ReplayModel(InterleavedSequence reference) : reference_(std::move(reference)) {}

void ReplayModel::on_context(const ContextToken&) {}

std::vector<ModelEmission> ReplayModel::on_frames(StreamGate& gate, std::size_t chunk_index) {
    const FrameBatch& batch = gate.frames(chunk_index);
    if (chunk_index >= reference_.chunks.size()) {
        throw Error(ErrorCode::InvalidArgument,
                    "replay reference has no chunk " + std::to_string(chunk_index));
    }
    std::vector<ModelEmission> out;
    if (batch.state) {
        out.push_back(ModelEmission::make_state(batch.state->phase_label, batch.state->step_label));
    }
    for (const auto& w : reference_.chunks[chunk_index].narration) {
        out.push_back(ModelEmission::make_word(WordToken{w.text, w.start_ms, w.end_ms}));
    }
    gate.acknowledge(chunk_index);
    return out;
}

std::vector<ModelEmission> NullModel::on_frames(StreamGate& gate, std::size_t chunk_index) {
    gate.frames(chunk_index);
    gate.acknowledge(chunk_index);
    return {};
}

// --------------------------------------------------------------------------
// N-gram stand-in

namespace {
constexpr char kKeySep = '\x1f';

std::string ngram_key(const std::string& phase, const std::string& step,
                      const std::vector<std::string>& history, std::size_t h) {
    std::string key = phase;
    key += kKeySep;
    key += step;
    for (std::size_t i = history.size() - h; i < history.size(); ++i) {
        key += kKeySep;
        key += history[i];
    }
    return key;
}

// Highest count wins; ties break toward the lexicographically smallest word,
// which the sorted map yields for free.
const std::string* argmax_word(const std::map<std::string, std::uint64_t>& counts) {
    const std::string* best = nullptr;
    std::uint64_t best_count = 0;
    for (const auto& [word, count] : counts) {
        if (count > best_count) {
            best = &word;
            best_count = count;
        }
    }
    return best;
}
} // namespace

NgramNarrationModel::NgramNarrationModel(const std::vector<HierarchicalRecord>& training,
                                         const NgramOptions& options)
    : options_(options) {
    if (training.empty()) {
        throw Error(ErrorCode::EmptyInput, "n-gram model needs at least one training record");
    }
    if (options_.order < 1) {
        throw Error(ErrorCode::InvalidArgument, "n-gram order must be >= 1");
    }
    if (options_.max_words_per_chunk < 0) {
        throw Error(ErrorCode::InvalidArgument, "n-gram per-chunk word bound must be >= 0");
    }
    continuations_.resize(static_cast<std::size_t>(options_.order));

    for (const auto& record : training) {
        const auto transitions = detect_transitions(record);
        std::size_t t_idx = 0;
        std::string phase = "none";
        std::string step = "none";
        std::vector<std::string> history;
        for (const auto& w : record.words) {
            while (t_idx < transitions.size() && transitions[t_idx].time_ms <= w.start_ms) {
                const auto& tr = transitions[t_idx];
                phase = record.phases[tr.phase_index].label;
                step = tr.step_index ? record.steps[*tr.step_index].label : "none";
                ++t_idx;
            }
            for (std::size_t h = 0; h < continuations_.size() && h <= history.size(); ++h) {
                ++continuations_[h][ngram_key(phase, step, history, h)][w.text];
            }
            ++global_counts_[w.text];
            ++vocabulary_[w.text];
            history.push_back(w.text);
        }
    }
}

std::string NgramNarrationModel::next_word() const {
    const std::size_t max_h =
        std::min(history_.size(), static_cast<std::size_t>(options_.order - 1));
    for (std::size_t h = max_h + 1; h-- > 0;) {
        auto it = continuations_[h].find(ngram_key(phase_, step_, history_, h));
        if (it != continuations_[h].end()) {
            if (const std::string* w = argmax_word(it->second)) return *w;
        }
    }
    if (const std::string* w = argmax_word(global_counts_)) return *w;
    return {};
}

std::vector<ModelEmission> NgramNarrationModel::on_frames(StreamGate& gate,
                                                          std::size_t chunk_index) {
    const FrameBatch& batch = gate.frames(chunk_index);
    std::vector<ModelEmission> out;
    if (batch.state) {
        phase_ = batch.state->phase_label;
        step_ = batch.state->step_label;
        out.push_back(ModelEmission::make_state(phase_, step_));
    }
    std::vector<std::string> texts;
    for (int j = 0; j < options_.max_words_per_chunk; ++j) {
        std::string w = next_word();
        if (w.empty()) break;
        history_.push_back(w);
        if (history_.size() > static_cast<std::size_t>(options_.order)) {
            history_.erase(history_.begin());
        }
        texts.push_back(std::move(w));
    }
    const Ms span = batch.end_ms - batch.begin_ms;
    const Ms n = static_cast<Ms>(texts.size());
    for (Ms j = 0; j < n; ++j) {
        WordToken w;
        w.text = texts[static_cast<std::size_t>(j)];
        w.start_ms = batch.begin_ms + span * j / n;
        w.end_ms = batch.begin_ms + span * (j + 1) / n;
        out.push_back(ModelEmission::make_word(std::move(w)));
    }
    gate.acknowledge(chunk_index);
    return out;
}

void NgramNarrationModel::reset() {
    phase_ = "none";
    step_ = "none";
    history_.clear();
}

// --------------------------------------------------------------------------
// External process bridge

ExternalProcessModel::ExternalProcessModel(ExternalModelOptions options)
    : options_(std::move(options)) {
    if (options_.argv.empty()) {
        throw Error(ErrorCode::InvalidArgument, "external model command line is empty");
    }
}

ExternalProcessModel::~ExternalProcessModel() { shutdown(); }

void ExternalProcessModel::spawn() {
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0) {
        throw Error(ErrorCode::Client, "failed to create pipes for the external model");
    }
    const pid_t pid = fork();
    if (pid < 0) {
        throw Error(ErrorCode::Client, "failed to fork the external model process");
    }
    if (pid == 0) {
        dup2(to_child[0], STDIN_FILENO);
        dup2(from_child[1], STDOUT_FILENO);
        close(to_child[0]);
        close(to_child[1]);
        close(from_child[0]);
        close(from_child[1]);
        std::vector<char*> argv;
        argv.reserve(options_.argv.size() + 1);
        for (auto& a : options_.argv) argv.push_back(a.data());
        argv.push_back(nullptr);
        execvp(argv[0], argv.data());
        _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    child_pid_ = pid;
    to_child_ = to_child[1];
    from_child_ = from_child[0];
    read_buffer_.clear();
}

void ExternalProcessModel::shutdown() noexcept {
    if (to_child_ >= 0) {
        close(to_child_);
        to_child_ = -1;
    }
    if (from_child_ >= 0) {
        close(from_child_);
        from_child_ = -1;
    }
    if (child_pid_ > 0) {
        int status = 0;
        for (int i = 0; i < 200; ++i) {
            if (waitpid(child_pid_, &status, WNOHANG) != 0) {
                child_pid_ = -1;
                return;
            }
            usleep(10'000);
        }
        kill(child_pid_, SIGKILL);
        waitpid(child_pid_, &status, 0);
        child_pid_ = -1;
    }
}

void ExternalProcessModel::send_line(const std::string& line) {
    std::string payload = line;
    payload.push_back('\n');
    std::size_t off = 0;
    while (off < payload.size()) {
        const ssize_t n = write(to_child_, payload.data() + off, payload.size() - off);
        if (n <= 0) {
            throw Error(ErrorCode::Client, "external model stopped reading requests");
        }
        off += static_cast<std::size_t>(n);
    }
}

std::string ExternalProcessModel::recv_line() {
    for (;;) {
        const auto eol = read_buffer_.find('\n');
        if (eol != std::string::npos) {
            std::string line = read_buffer_.substr(0, eol);
            read_buffer_.erase(0, eol + 1);
            return line;
        }
        pollfd pfd{from_child_, POLLIN, 0};
        const int ready = poll(&pfd, 1, options_.timeout_ms);
        if (ready == 0) {
            throw Error(ErrorCode::Client, "external model response timed out after " +
                                               std::to_string(options_.timeout_ms) + " ms");
        }
        if (ready < 0) {
            throw Error(ErrorCode::Client, "poll on the external model pipe failed");
        }
        char buf[4096];
        const ssize_t n = read(from_child_, buf, sizeof(buf));
        if (n <= 0) {
            throw Error(ErrorCode::Client, "external model closed its output mid-stream");
        }
        read_buffer_.append(buf, static_cast<std::size_t>(n));
    }
}

void ExternalProcessModel::on_context(const ContextToken& context) {
    if (child_pid_ < 0) spawn();
    json req;
    req["type"] = "context";
    req["protocol_version"] = 1;
    req["text"] = context.text;
    send_line(req.dump());
    json resp;
    try {
        resp = json::parse(recv_line());
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Client, std::string("external model handshake is not JSON: ") +
                                           e.what());
    }
    if (resp.value("type", "") != "ready" || resp.value("protocol_version", 0) != 1) {
        throw Error(ErrorCode::Client, "external model did not acknowledge protocol version 1");
    }
}

std::vector<ModelEmission> ExternalProcessModel::on_frames(StreamGate& gate,
                                                           std::size_t chunk_index) {
    const FrameBatch& batch = gate.frames(chunk_index);
    json req;
    req["type"] = "chunk";
    req["index"] = batch.chunk_index;
    req["begin_ms"] = batch.begin_ms;
    req["end_ms"] = batch.end_ms;
    json frames = json::array();
    for (const auto& f : batch.frames) {
        frames.push_back({{"index", f.index}, {"t_ms", f.timestamp_ms}});
    }
    req["frames"] = std::move(frames);
    if (batch.state) {
        req["state"] = {{"phase", batch.state->phase_label},
                        {"step", batch.state->step_label},
                        {"time_ms", batch.state->time_ms}};
    }
    send_line(req.dump());

    json resp;
    try {
        resp = json::parse(recv_line());
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Client,
                    std::string("external model response is not JSON: ") + e.what());
    }
    std::vector<ModelEmission> out;
    try {
        if (resp.at("type").get<std::string>() != "emission" ||
            resp.at("index").get<std::size_t>() != chunk_index) {
            throw Error(ErrorCode::Client,
                        "external model answered the wrong chunk (expected " +
                            std::to_string(chunk_index) + ")");
        }
        if (resp.contains("state") && !resp["state"].is_null()) {
            out.push_back(ModelEmission::make_state(resp["state"].at("phase").get<std::string>(),
                                                    resp["state"].at("step").get<std::string>()));
        }
        for (const auto& jw : resp.at("words")) {
            WordToken w;
            w.text = jw.at("text").get<std::string>();
            w.start_ms = jw.at("start_ms").get<Ms>();
            w.end_ms = jw.at("end_ms").get<Ms>();
            out.push_back(ModelEmission::make_word(std::move(w)));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Client,
                    std::string("external model response missing fields: ") + e.what());
    }
    gate.acknowledge(chunk_index);
    return out;
}

void ExternalProcessModel::reset() {
    if (child_pid_ < 0) return;
    try {
        send_line(R"({"type":"end"})");
    } catch (const Error&) {
        // The child may already be gone; shutdown below reaps it either way.
    }
    shutdown();
}

} // namespace surgonair
