#include "surgonair/eval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <tuple>

namespace surgonair {

using nlohmann::json;

std::string NarrationArtifact::rendered_text() const {
    std::vector<std::string> texts;
    texts.reserve(narration.size());
    for (const auto& e : narration) texts.push_back(e.text);
    return join(texts, " ");
}

NarrationArtifact artifact_from_report(const StreamReport& report) {
    NarrationArtifact artifact;
    artifact.video_id = report.video_id;
    artifact.model_name = report.model_name;
    for (const auto& ev : report.events) {
        switch (ev.kind) {
            case StreamEventKind::FrameIn:
                break;
            case StreamEventKind::WordOut:
                artifact.narration.push_back({ev.text, ev.media_time_ms});
                break;
            case StreamEventKind::StateOut:
                artifact.state_outputs.push_back(
                    {ev.phase_label, ev.step_label, ev.media_time_ms, ev.teacher_forced});
                break;
        }
    }
    return artifact;
}

namespace {

void check_times_sorted(const NarrationArtifact& a) {
    for (std::size_t i = 1; i < a.narration.size(); ++i) {
        if (a.narration[i].time_ms < a.narration[i - 1].time_ms) {
            throw Error(ErrorCode::Validation, "narration artifact for " + a.video_id +
                                                   " has out-of-order narration times");
        }
    }
    for (std::size_t i = 1; i < a.state_outputs.size(); ++i) {
        if (a.state_outputs[i].time_ms < a.state_outputs[i - 1].time_ms) {
            throw Error(ErrorCode::Validation, "narration artifact for " + a.video_id +
                                                   " has out-of-order state times");
        }
    }
}

} // namespace

std::string narration_artifact_to_json(const NarrationArtifact& artifact) {
    json doc;
    doc["format_version"] = 1;
    doc["video_id"] = artifact.video_id;
    doc["model"] = artifact.model_name;
    json narration = json::array();
    for (const auto& e : artifact.narration) {
        narration.push_back({{"text", e.text}, {"time_ms", e.time_ms}});
    }
    doc["narration"] = std::move(narration);
    json states = json::array();
    for (const auto& s : artifact.state_outputs) {
        states.push_back({{"phase", s.phase_label},
                          {"step", s.step_label},
                          {"time_ms", s.time_ms},
                          {"teacher_forced", s.teacher_forced}});
    }
    doc["state_outputs"] = std::move(states);
    return doc.dump(2) + "\n";
}

NarrationArtifact narration_artifact_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Parse, std::string("malformed narration artifact: ") + e.what());
    }
    NarrationArtifact artifact;
    try {
        artifact.video_id = doc.at("video_id").get<std::string>();
        artifact.model_name = doc.at("model").get<std::string>();
        for (const auto& je : doc.at("narration")) {
            artifact.narration.push_back(
                {je.at("text").get<std::string>(), je.at("time_ms").get<Ms>()});
        }
        for (const auto& js : doc.at("state_outputs")) {
            artifact.state_outputs.push_back(
                {js.at("phase").get<std::string>(), js.at("step").get<std::string>(),
                 js.at("time_ms").get<Ms>(), js.at("teacher_forced").get<bool>()});
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("narration artifact missing fields: ") + e.what());
    }
    check_times_sorted(artifact);
    return artifact;
}

// --------------------------------------------------------------------------
// Judging

const char* to_string(Winner w) {
    switch (w) {
        case Winner::A: return "A";
        case Winner::B: return "B";
        case Winner::Tie: return "TIE";
    }
    return "TIE";
}

std::optional<Winner> winner_from_string(std::string_view s) {
    if (s == "A") return Winner::A;
    if (s == "B") return Winner::B;
    if (s == "TIE") return Winner::Tie;
    return std::nullopt;
}

namespace {

// First token of the response decides; anything else is an explicit tie so
// percentages stay well-defined even with an erratic judge.
enum class RawChoice { First, Second, Tie, Unparseable };

RawChoice parse_choice(const std::string& response) {
    const auto tokens = split_whitespace(response);
    if (tokens.empty()) return RawChoice::Unparseable;
    const std::string head = to_lower(tokens.front());
    if (head.rfind("first", 0) == 0) return RawChoice::First;
    if (head.rfind("second", 0) == 0) return RawChoice::Second;
    if (head.rfind("tie", 0) == 0) return RawChoice::Tie;
    return RawChoice::Unparseable;
}

} // namespace

JudgeVerdict judge_pairwise(const Transcript& reference, const NarrationArtifact& a,
                            const NarrationArtifact& b, LanguageModelClient& judge, DetRng& rng,
                            const RetryPolicy& retry) {
    if (a.video_id != reference.video_id || b.video_id != reference.video_id) {
        throw Error(ErrorCode::InvalidArgument,
                    "judging requires matching video ids, got reference '" + reference.video_id +
                        "' vs '" + a.video_id + "' and '" + b.video_id + "'");
    }

    std::vector<std::string> sentence_texts;
    sentence_texts.reserve(reference.sentences.size());
    for (const auto& s : reference.sentences) sentence_texts.push_back(s.text());
    const std::string reference_text = join(sentence_texts, " ");

    JudgeVerdict verdict;
    verdict.video_id = a.video_id;
    verdict.model_a = a.model_name;
    verdict.model_b = b.model_name;
    verdict.a_presented_first = rng.bounded(2) == 0;

    const std::string& first = verdict.a_presented_first ? a.rendered_text() : b.rendered_text();
    const std::string& second = verdict.a_presented_first ? b.rendered_text() : a.rendered_text();
    const std::string response = retry_client_call(
        retry, [&] { return judge.judge(reference_text, first, second); });

    switch (parse_choice(response)) {
        case RawChoice::First:
            verdict.winner = verdict.a_presented_first ? Winner::A : Winner::B;
            verdict.rationale = response;
            break;
        case RawChoice::Second:
            verdict.winner = verdict.a_presented_first ? Winner::B : Winner::A;
            verdict.rationale = response;
            break;
        case RawChoice::Tie:
            verdict.winner = Winner::Tie;
            verdict.rationale = response;
            break;
        case RawChoice::Unparseable:
            verdict.winner = Winner::Tie;
            verdict.rationale = "unparseable";
            break;
    }
    return verdict;
}

std::string verdicts_to_json(const std::vector<JudgeVerdict>& verdicts) {
    json doc;
    doc["format_version"] = 1;
    json list = json::array();
    for (const auto& v : verdicts) {
        list.push_back({{"video_id", v.video_id},
                        {"model_a", v.model_a},
                        {"model_b", v.model_b},
                        {"winner", to_string(v.winner)},
                        {"rationale", v.rationale},
                        {"a_presented_first", v.a_presented_first}});
    }
    doc["verdicts"] = std::move(list);
    return doc.dump(2) + "\n";
}

std::vector<JudgeVerdict> verdicts_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Parse, std::string("malformed verdict file: ") + e.what());
    }
    std::vector<JudgeVerdict> out;
    try {
        for (const auto& jv : doc.at("verdicts")) {
            JudgeVerdict v;
            v.video_id = jv.at("video_id").get<std::string>();
            v.model_a = jv.at("model_a").get<std::string>();
            v.model_b = jv.at("model_b").get<std::string>();
            auto winner = winner_from_string(jv.at("winner").get<std::string>());
            if (!winner) {
                throw Error(ErrorCode::Parse, "verdict file has an unknown winner label");
            }
            v.winner = *winner;
            v.rationale = jv.at("rationale").get<std::string>();
            v.a_presented_first = jv.at("a_presented_first").get<bool>();
            out.push_back(std::move(v));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("verdict file missing fields: ") + e.what());
    }
    return out;
}

// --------------------------------------------------------------------------
// Win rate

int percentage_tenths(std::size_t wins, std::size_t n) {
    if (n == 0) {
        throw Error(ErrorCode::InvalidArgument, "percentage of an empty comparison set");
    }
    const std::uint64_t scaled = static_cast<std::uint64_t>(wins) * 1000;
    const std::uint64_t q = scaled / n;
    const std::uint64_t r = scaled % n;
    // Round half to even: exact halves go to the even neighbour, so paired
    // rates like x.x5 / y.y5 never both round up.
    if (2 * r > n || (2 * r == n && q % 2 == 1)) {
        return static_cast<int>(q) + 1;
    }
    return static_cast<int>(q);
}

std::string format_percentage(int tenths) {
    return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
}

WinRateReport compute_win_rate(const std::vector<JudgeVerdict>& verdicts) {
    if (verdicts.empty()) {
        throw Error(ErrorCode::EmptyInput, "cannot compute a win rate from zero verdicts");
    }
    WinRateReport report;
    report.model_a = verdicts.front().model_a;
    report.model_b = verdicts.front().model_b;
    for (const auto& v : verdicts) {
        if (v.model_a != report.model_a || v.model_b != report.model_b) {
            throw Error(ErrorCode::InvalidArgument,
                        "verdicts mix model pairs: (" + report.model_a + ", " + report.model_b +
                            ") vs (" + v.model_a + ", " + v.model_b + ")");
        }
        switch (v.winner) {
            case Winner::A: ++report.wins_a; break;
            case Winner::B: ++report.wins_b; break;
            case Winner::Tie: ++report.ties; break;
        }
    }
    report.n_comparisons = verdicts.size();
    report.win_rate_a_tenths = percentage_tenths(report.wins_a, report.n_comparisons);
    report.win_rate_b_tenths = percentage_tenths(report.wins_b, report.n_comparisons);
    return report;
}

std::string win_rate_to_json(const WinRateReport& report) {
    json doc;
    doc["format_version"] = 1;
    doc["model_a"] = report.model_a;
    doc["model_b"] = report.model_b;
    doc["n_comparisons"] = report.n_comparisons;
    doc["wins_a"] = report.wins_a;
    doc["wins_b"] = report.wins_b;
    doc["ties"] = report.ties;
    doc["win_rate_a"] = format_percentage(report.win_rate_a_tenths);
    doc["win_rate_b"] = format_percentage(report.win_rate_b_tenths);
    doc["win_rate_a_tenths"] = report.win_rate_a_tenths;
    doc["win_rate_b_tenths"] = report.win_rate_b_tenths;
    return doc.dump(2) + "\n";
}

WinRateReport win_rate_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Parse, std::string("malformed win-rate report: ") + e.what());
    }
    WinRateReport report;
    try {
        report.model_a = doc.at("model_a").get<std::string>();
        report.model_b = doc.at("model_b").get<std::string>();
        report.n_comparisons = doc.at("n_comparisons").get<std::size_t>();
        report.wins_a = doc.at("wins_a").get<std::size_t>();
        report.wins_b = doc.at("wins_b").get<std::size_t>();
        report.ties = doc.at("ties").get<std::size_t>();
        report.win_rate_a_tenths = doc.at("win_rate_a_tenths").get<int>();
        report.win_rate_b_tenths = doc.at("win_rate_b_tenths").get<int>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("win-rate report missing fields: ") + e.what());
    }
    return report;
}

// --------------------------------------------------------------------------
// Phase correctness

namespace {

struct Announcement {
    Ms time_ms;
    std::string label;
};

} // namespace

PhaseCorrectnessReport phase_correctness(const NarrationArtifact& pred,
                                         const HierarchicalRecord& gt, Ms tolerance_ms) {
    if (pred.video_id != gt.video_id) {
        throw Error(ErrorCode::InvalidArgument, "phase correctness requires matching video ids");
    }
    if (tolerance_ms < 0) {
        throw Error(ErrorCode::InvalidArgument, "tolerance must be non-negative");
    }

    // Ground truth: the moments the active phase changes.
    std::vector<Announcement> gt_changes;
    {
        std::optional<std::size_t> prev;
        for (const auto& tr : detect_transitions(gt)) {
            if (!prev || tr.phase_index != *prev) {
                gt_changes.push_back({tr.time_ms, gt.phases[tr.phase_index].label});
                prev = tr.phase_index;
            }
        }
    }
    // Prediction: the first announcement of each phase run. A later repeat of
    // an earlier label starts a new run, so only consecutive duplicates fold.
    std::vector<Announcement> pred_changes;
    for (const auto& s : pred.state_outputs) {
        if (pred_changes.empty() || pred_changes.back().label != s.phase_label) {
            pred_changes.push_back({s.time_ms, s.phase_label});
        }
    }

    struct Candidate {
        Ms distance;
        std::size_t gt_index;
        std::size_t pred_index;
    };
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < gt_changes.size(); ++i) {
        for (std::size_t j = 0; j < pred_changes.size(); ++j) {
            if (gt_changes[i].label != pred_changes[j].label) continue;
            const Ms d = std::llabs(gt_changes[i].time_ms - pred_changes[j].time_ms);
            if (d <= tolerance_ms) candidates.push_back({d, i, j});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
        return std::tie(x.distance, x.gt_index, x.pred_index) <
               std::tie(y.distance, y.gt_index, y.pred_index);
    });

    std::vector<bool> gt_used(gt_changes.size(), false);
    std::vector<bool> pred_used(pred_changes.size(), false);
    std::vector<std::optional<Ms>> error_by_gt(gt_changes.size());
    for (const auto& c : candidates) {
        if (gt_used[c.gt_index] || pred_used[c.pred_index]) continue;
        gt_used[c.gt_index] = true;
        pred_used[c.pred_index] = true;
        error_by_gt[c.gt_index] = c.distance;
    }

    PhaseCorrectnessReport report;
    report.video_id = gt.video_id;
    report.model_name = pred.model_name;
    report.tolerance_ms = tolerance_ms;
    report.n_transitions = gt_changes.size();
    for (const auto& err : error_by_gt) {
        if (err) {
            ++report.n_matched;
            report.timing_errors_ms.push_back(*err);
        }
    }
    report.accuracy = report.n_transitions == 0
                          ? 1.0
                          : static_cast<double>(report.n_matched) /
                                static_cast<double>(report.n_transitions);
    report.matched_video = report.n_matched == report.n_transitions;
    return report;
}

std::string phase_correctness_to_json(const PhaseCorrectnessReport& report) {
    json doc;
    doc["format_version"] = 1;
    doc["video_id"] = report.video_id;
    doc["model"] = report.model_name;
    doc["tolerance_ms"] = report.tolerance_ms;
    doc["n_transitions"] = report.n_transitions;
    doc["n_matched"] = report.n_matched;
    doc["accuracy_permille"] =
        report.n_transitions == 0
            ? 1000
            : percentage_tenths(report.n_matched, report.n_transitions);
    doc["matched_video"] = report.matched_video;
    doc["timing_errors_ms"] = report.timing_errors_ms;
    json errors_s = json::array();
    for (Ms e : report.timing_errors_ms) errors_s.push_back(format_seconds(e));
    doc["timing_errors_s"] = std::move(errors_s);
    return doc.dump(2) + "\n";
}

} // namespace surgonair
