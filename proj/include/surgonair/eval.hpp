#pragma once

#include "surgonair/client.hpp"
#include "surgonair/hierarchy.hpp"
#include "surgonair/stream.hpp"
#include "surgonair/time_util.hpp"
#include "surgonair/transcript.hpp"
#include "surgonair/util.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace surgonair {

struct NarrationEntry {
    std::string text;
    Ms time_ms = 0;
    bool operator==(const NarrationEntry&) const = default;
};

struct StateEntry {
    std::string phase_label;
    std::string step_label;
    Ms time_ms = 0;
    bool teacher_forced = false;
    bool operator==(const StateEntry&) const = default;
};

// One model's output for one video, reduced to what comparison needs: the
// narration words and the state announcements, each in media-time order.
struct NarrationArtifact {
    std::string video_id;
    std::string model_name;
    std::vector<NarrationEntry> narration;
    std::vector<StateEntry> state_outputs;

    std::string rendered_text() const;
    bool operator==(const NarrationArtifact&) const = default;
};

NarrationArtifact artifact_from_report(const StreamReport& report);
std::string narration_artifact_to_json(const NarrationArtifact& artifact);
NarrationArtifact narration_artifact_from_json(const std::string& text);

enum class Winner { A, B, Tie };

const char* to_string(Winner w);
std::optional<Winner> winner_from_string(std::string_view s);

struct JudgeVerdict {
    std::string video_id;
    std::string model_a;
    std::string model_b;
    Winner winner = Winner::Tie;
    std::string rationale;
    // Position-bias control: which candidate was shown first is drawn from the
    // run's seed and logged here.
    bool a_presented_first = true;

    bool operator==(const JudgeVerdict&) const = default;
};

JudgeVerdict judge_pairwise(const Transcript& reference, const NarrationArtifact& a,
                            const NarrationArtifact& b, LanguageModelClient& judge, DetRng& rng,
                            const RetryPolicy& retry = {});

std::string verdicts_to_json(const std::vector<JudgeVerdict>& verdicts);
std::vector<JudgeVerdict> verdicts_from_json(const std::string& text);

struct WinRateReport {
    std::string model_a;
    std::string model_b;
    std::size_t n_comparisons = 0;
    std::size_t wins_a = 0;
    std::size_t wins_b = 0;
    std::size_t ties = 0;
    // Percentages as integer tenths (661 = 66.1%), so that with no ties the
    // two sides always sum to exactly 100.0.
    int win_rate_a_tenths = 0;
    int win_rate_b_tenths = 0;

    bool operator==(const WinRateReport&) const = default;
};

WinRateReport compute_win_rate(const std::vector<JudgeVerdict>& verdicts);

// Banker's rounding of 100*wins/n to tenths of a percent.
int percentage_tenths(std::size_t wins, std::size_t n);
// "66.1" for 661.
std::string format_percentage(int tenths);

std::string win_rate_to_json(const WinRateReport& report);
WinRateReport win_rate_from_json(const std::string& text);

struct PhaseCorrectnessReport {
    std::string video_id;
    std::string model_name;
    Ms tolerance_ms = 0;
    std::size_t n_transitions = 0;
    std::size_t n_matched = 0;
    double accuracy = 0.0;
    // |predicted - ground truth| per matched transition, in ground-truth
    // transition order.
    std::vector<Ms> timing_errors_ms;
    bool matched_video = false;
};

// Matches each ground-truth phase change to the nearest same-label predicted
// announcement within tolerance; greedy nearest-first, each prediction used
// at most once.
PhaseCorrectnessReport phase_correctness(const NarrationArtifact& pred,
                                         const HierarchicalRecord& gt, Ms tolerance_ms);

std::string phase_correctness_to_json(const PhaseCorrectnessReport& report);

} // namespace surgonair
