#include "surgonair/transcript.hpp"

#include "surgonair/error.hpp"
#include "surgonair/util.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <set>
#include <tuple>

namespace surgonair {

using nlohmann::json;

std::string Sentence::text() const {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i > 0) out += ' ';
        out += words[i].text;
    }
    return out;
}

std::size_t Transcript::word_count() const {
    std::size_t n = 0;
    for (const auto& s : sentences) n += s.words.size();
    return n;
}

const Sentence* Transcript::find_sentence(const std::string& id) const {
    for (const auto& s : sentences) {
        if (s.id == id) return &s;
    }
    return nullptr;
}

namespace {

std::string sentence_id_for(std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "s%04zu", index);
    return buf;
}

json parse_json_document(const std::string& text, const std::string& source_name) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Parse,
                    source_name + ": malformed document at byte " +
                        std::to_string(e.byte) + ": " + e.what());
    }
}

void check_transcript_invariants(const Transcript& t, const std::string& source_name) {
    std::set<std::tuple<Ms, Ms, std::string>> seen;
    Ms prev_sentence_start = -1;
    for (const auto& s : t.sentences) {
        if (s.words.empty()) {
            throw ValidationError(source_name + ": sentence " + s.id + " has no words");
        }
        if (s.avg_log_prob > 0.0) {
            throw ValidationError(source_name + ": sentence " + s.id +
                                  " has positive avg_log_prob");
        }
        Ms prev_start = -1;
        for (const auto& w : s.words) {
            if (w.text.empty()) {
                throw ValidationError(source_name + ": empty word text in sentence " + s.id);
            }
            if (w.start_ms < 0) {
                throw ValidationError(source_name + ": word '" + w.text +
                                      "' has negative start time");
            }
            if (w.end_ms < w.start_ms) {
                throw ValidationError(source_name + ": word '" + w.text + "' ends at " +
                                      format_seconds(w.end_ms) + " before it starts at " +
                                      format_seconds(w.start_ms));
            }
            if (w.start_ms < prev_start) {
                throw ValidationError(source_name + ": word '" + w.text +
                                      "' breaks temporal order in sentence " + s.id);
            }
            prev_start = w.start_ms;
            if (!seen.insert({w.start_ms, w.end_ms, w.text}).second) {
                throw ValidationError(source_name + ": duplicate word triple ('" + w.text +
                                      "', " + format_seconds(w.start_ms) + ", " +
                                      format_seconds(w.end_ms) + ")");
            }
        }
        if (s.words.front().start_ms < prev_sentence_start) {
            throw ValidationError(source_name + ": sentence " + s.id +
                                  " starts before the previous sentence");
        }
        prev_sentence_start = s.words.front().start_ms;
    }
}

} // namespace

Transcript parse_asr(const std::string& text, const std::string& source_name) {
    json doc = parse_json_document(text, source_name);
    if (!doc.is_object()) {
        throw Error(ErrorCode::Parse, source_name + ": top level is not an object");
    }

    Transcript t;
    t.video_id = doc.value("video_id", std::string{});

    if (!doc.contains("segments") || !doc["segments"].is_array()) {
        throw Error(ErrorCode::Parse, source_name + ": missing 'segments' array");
    }

    std::size_t seg_index = 0;
    for (const auto& seg : doc["segments"]) {
        const std::string where = source_name + ": segment " + std::to_string(seg_index);
        ++seg_index;
        if (!seg.is_object()) {
            throw Error(ErrorCode::Parse, where + " is not an object");
        }
        if (!seg.contains("avg_logprob") || !seg["avg_logprob"].is_number()) {
            throw Error(ErrorCode::Parse, where + ": missing numeric 'avg_logprob'");
        }
        const double seg_logprob = seg["avg_logprob"].get<double>();
        if (!seg.contains("words") || !seg["words"].is_array()) {
            throw Error(ErrorCode::Parse, where + ": missing 'words' array");
        }
        if (seg["words"].empty()) {
            continue; // forced alignment produced nothing for this segment
        }

        Sentence sentence;
        sentence.id = sentence_id_for(t.sentences.size());
        double logprob_sum = 0.0;
        for (const auto& w : seg["words"]) {
            const std::string wword = where + ", word " + std::to_string(sentence.words.size());
            if (!w.is_object() || !w.contains("word") || !w["word"].is_string() ||
                !w.contains("start") || !w["start"].is_number() ||
                !w.contains("end") || !w["end"].is_number()) {
                throw Error(ErrorCode::Parse, wword + ": expected {word, start, end}");
            }
            TimedWord word;
            word.text = trim(w["word"].get<std::string>());
            word.start_ms = ms_from_seconds(w["start"].get<double>());
            word.end_ms = ms_from_seconds(w["end"].get<double>());

            double word_logprob = seg_logprob;
            if (w.contains("probability")) {
                if (!w["probability"].is_number()) {
                    throw Error(ErrorCode::Parse, wword + ": 'probability' is not a number");
                }
                const double p = w["probability"].get<double>();
                if (p <= 0.0 || p > 1.0) {
                    throw ValidationError(wword + ": probability " + std::to_string(p) +
                                          " outside (0, 1]");
                }
                word_logprob = std::log(p);
            }
            logprob_sum += word_logprob;
            sentence.words.push_back(std::move(word));
        }
        sentence.avg_log_prob = logprob_sum / static_cast<double>(sentence.words.size());
        t.sentences.push_back(std::move(sentence));
    }

    if (t.sentences.empty()) {
        throw Error(ErrorCode::EmptyInput, source_name + ": document contains no words");
    }
    check_transcript_invariants(t, source_name);
    return t;
}

Transcript parse_asr_file(const std::string& path) {
    return parse_asr(read_file(path), path);
}

std::set<std::string> flag_low_confidence(const Transcript& t, double threshold) {
    if (threshold > 0.0) {
        throw Error(ErrorCode::InvalidArgument,
                    "confidence threshold must be <= 0, got " + std::to_string(threshold));
    }
    std::set<std::string> flagged;
    for (const auto& s : t.sentences) {
        if (s.avg_log_prob < threshold) flagged.insert(s.id);
    }
    return flagged;
}

std::string transcript_to_json(const Transcript& t) {
    json doc;
    doc["video_id"] = t.video_id;
    doc["sentences"] = json::array();
    for (const auto& s : t.sentences) {
        json js;
        js["id"] = s.id;
        js["avg_log_prob"] = s.avg_log_prob;
        js["words"] = json::array();
        for (const auto& w : s.words) {
            js["words"].push_back({{"text", w.text},
                                   {"start_ms", w.start_ms},
                                   {"end_ms", w.end_ms}});
        }
        doc["sentences"].push_back(std::move(js));
    }
    return doc.dump(2) + "\n";
}

Transcript transcript_from_json(const std::string& text) {
    json doc = parse_json_document(text, "<transcript>");
    Transcript t;
    t.video_id = doc.at("video_id").get<std::string>();
    for (const auto& js : doc.at("sentences")) {
        Sentence s;
        s.id = js.at("id").get<std::string>();
        s.avg_log_prob = js.at("avg_log_prob").get<double>();
        for (const auto& jw : js.at("words")) {
            TimedWord w;
            w.text = jw.at("text").get<std::string>();
            w.start_ms = jw.at("start_ms").get<Ms>();
            w.end_ms = jw.at("end_ms").get<Ms>();
            s.words.push_back(std::move(w));
        }
        t.sentences.push_back(std::move(s));
    }
    check_transcript_invariants(t, "<transcript>");
    return t;
}

} // namespace surgonair
