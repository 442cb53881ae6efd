#pragma once

#include "surgonair/time_util.hpp"

#include <set>
#include <string>
#include <vector>

namespace surgonair {

// One aligned word: the text plus its start/end time in the audio.
struct TimedWord {
    std::string text;
    Ms start_ms = 0;
    Ms end_ms = 0;

    bool operator==(const TimedWord&) const = default;
};

struct Sentence {
    std::string id; // unique within one transcript, stable across runs
    std::vector<TimedWord> words;
    double avg_log_prob = 0.0; // arithmetic mean of the words' log-probabilities

    std::string text() const; // words joined with single spaces

    bool operator==(const Sentence&) const = default;
};

struct Transcript {
    std::string video_id;
    std::vector<Sentence> sentences;

    std::size_t word_count() const;
    const Sentence* find_sentence(const std::string& id) const;

    bool operator==(const Transcript&) const = default;
};

// Sentences with avg log-probability strictly below this are flagged for
// correction.
inline constexpr double kDefaultConfidenceThreshold = -0.15;

// Parses a word-segment ASR document (JSON):
//
//   {
//     "video_id": "vid01",
//     "segments": [
//       {
//         "text": "grasp the fundus",
//         "avg_logprob": -0.12,
//         "words": [
//           {"word": "grasp", "start": 1.0, "end": 1.3, "probability": 0.98},
//           ...
//         ]
//       }
//     ]
//   }
//
// Each segment becomes one Sentence. A word's log-probability is
// log(probability) when the word carries one, otherwise the segment's
// avg_logprob. Segments with an empty word list are dropped; a document that
// yields no sentences at all is an empty-input error.
Transcript parse_asr(const std::string& text, const std::string& source_name = "<asr>");
Transcript parse_asr_file(const std::string& path);

// Sentence ids whose avg_log_prob < threshold (strict).
std::set<std::string> flag_low_confidence(const Transcript& t,
                                          double threshold = kDefaultConfidenceThreshold);

// Artifact persistence (ms-integer timestamps; byte-stable across runs).
std::string transcript_to_json(const Transcript& t);
Transcript transcript_from_json(const std::string& text);

} // namespace surgonair
