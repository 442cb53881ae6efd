#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "surgonair/error.hpp"
#include "surgonair/transcript.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <string>

using namespace surgonair;
using nlohmann::json;

namespace {

json word(const std::string& text, double start, double end) {
    return {{"word", text}, {"start", start}, {"end", end}};
}

// Segment whose sentence-level confidence equals `logprob` exactly: no word
// carries its own probability, so every word inherits the segment value.
json segment(double logprob, std::initializer_list<json> words) {
    json seg;
    seg["avg_logprob"] = logprob;
    seg["words"] = json::array();
    for (const auto& w : words) seg["words"].push_back(w);
    return seg;
}

std::string doc_with_segments(std::initializer_list<json> segments) {
    json doc;
    doc["video_id"] = "vid_test";
    doc["segments"] = json::array();
    for (const auto& s : segments) doc["segments"].push_back(s);
    return doc.dump();
}

} // namespace

TEST_CASE("strict threshold flags exactly the sentences below it") {
    // Four sentences straddling the default threshold of -0.15. The
    // comparison is strict, so the sentence sitting exactly on the threshold
    // must not be flagged while one epsilon below it must be.
    const std::string doc = doc_with_segments({
        segment(-0.05, {word("one", 0.0, 0.4)}),
        segment(-0.15, {word("two", 1.0, 1.4)}),
        segment(-0.1500001, {word("three", 2.0, 2.4)}),
        segment(-0.20, {word("four", 3.0, 3.4)}),
    });
    Transcript t = parse_asr(doc);
    REQUIRE(t.sentences.size() == 4);
    CHECK(t.sentences[0].id == "s0000");
    CHECK(t.sentences[3].id == "s0003");

    std::set<std::string> flagged = flag_low_confidence(t, -0.15);
    CHECK(flagged == std::set<std::string>{"s0002", "s0003"});

    // The default argument is the same threshold.
    CHECK(flag_low_confidence(t) == flagged);

    // A permissive threshold flags nothing; zero flags every negative one.
    CHECK(flag_low_confidence(t, -1.0).empty());
    CHECK(flag_low_confidence(t, 0.0).size() == 4);
}

TEST_CASE("positive threshold is rejected") {
    Transcript t = parse_asr(doc_with_segments({segment(-0.1, {word("a", 0.0, 0.2)})}));
    CHECK_THROWS_AS(flag_low_confidence(t, 0.001), Error);
    try {
        flag_low_confidence(t, 0.5);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidArgument);
    }
}

TEST_CASE("word probability overrides the segment confidence") {
    json w1 = word("sharp", 0.0, 0.3);
    w1["probability"] = 0.5;
    json w2 = word("dissection", 0.4, 0.9); // inherits the segment value
    const std::string doc = doc_with_segments({segment(-0.4, {w1, w2})});

    Transcript t = parse_asr(doc);
    REQUIRE(t.sentences.size() == 1);
    const double expected = (std::log(0.5) + -0.4) / 2.0;
    CHECK(t.sentences[0].avg_log_prob == doctest::Approx(expected));

    // probability 1.0 is legal and contributes log(1) = 0.
    json w3 = word("ok", 0.0, 0.3);
    w3["probability"] = 1.0;
    Transcript t2 = parse_asr(doc_with_segments({segment(-0.9, {w3})}));
    CHECK(t2.sentences[0].avg_log_prob == doctest::Approx(0.0));
}

TEST_CASE("timestamps round to milliseconds and text is trimmed") {
    json w = word("  grasp  ", 1.0015, 2.0004);
    Transcript t = parse_asr(doc_with_segments({segment(-0.1, {w})}));
    CHECK(t.video_id == "vid_test");
    CHECK(t.sentences[0].words[0].text == "grasp");
    CHECK(t.sentences[0].words[0].start_ms == 1002); // round half away from zero
    CHECK(t.sentences[0].words[0].end_ms == 2000);
}

TEST_CASE("empty segments are dropped; an all-empty document is an error") {
    json empty_seg;
    empty_seg["avg_logprob"] = -0.3;
    empty_seg["words"] = json::array();

    Transcript t = parse_asr(
        doc_with_segments({empty_seg, segment(-0.1, {word("kept", 0.0, 0.4)})}));
    REQUIRE(t.sentences.size() == 1);
    CHECK(t.sentences[0].id == "s0000"); // ids follow retained sentences

    try {
        parse_asr(doc_with_segments({empty_seg}));
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyInput);
    }
}

TEST_CASE("malformed documents raise parse errors") {
    auto code_of = [](const std::string& text) {
        try {
            parse_asr(text);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::Ok;
    };

    CHECK(code_of("not json at all") == ErrorCode::Parse);
    CHECK(code_of("[1, 2, 3]") == ErrorCode::Parse);         // top level not an object
    CHECK(code_of(R"({"video_id": "v"})") == ErrorCode::Parse); // no segments

    json seg = segment(-0.1, {word("a", 0.0, 0.2)});
    seg.erase("avg_logprob");
    CHECK(code_of(doc_with_segments({seg})) == ErrorCode::Parse);

    json seg2;
    seg2["avg_logprob"] = -0.1;
    CHECK(code_of(doc_with_segments({seg2})) == ErrorCode::Parse); // no words array

    json bad_word = {{"word", "a"}, {"start", 0.0}}; // missing end
    json seg3;
    seg3["avg_logprob"] = -0.1;
    seg3["words"] = json::array({bad_word});
    CHECK(code_of(doc_with_segments({seg3})) == ErrorCode::Parse);

    json w = word("a", 0.0, 0.2);
    w["probability"] = "high"; // wrong type
    CHECK(code_of(doc_with_segments({segment(-0.1, {w})})) == ErrorCode::Parse);
}

TEST_CASE("out-of-range probability is a validation error") {
    for (double p : {0.0, -0.2, 1.5}) {
        json w = word("a", 0.0, 0.2);
        w["probability"] = p;
        CHECK_THROWS_AS(parse_asr(doc_with_segments({segment(-0.1, {w})})), ValidationError);
    }
}

TEST_CASE("transcript invariants reject inconsistent timing") {
    // Word ends before it starts.
    CHECK_THROWS_AS(parse_asr(doc_with_segments({segment(-0.1, {word("a", 2.0, 1.0)})})),
                    ValidationError);
    // Words out of order inside a sentence.
    CHECK_THROWS_AS(parse_asr(doc_with_segments(
                        {segment(-0.1, {word("a", 2.0, 2.3), word("b", 1.0, 1.3)})})),
                    ValidationError);
    // Negative start.
    CHECK_THROWS_AS(parse_asr(doc_with_segments({segment(-0.1, {word("a", -1.0, 0.2)})})),
                    ValidationError);
    // Identical (text, start, end) triple appearing twice.
    CHECK_THROWS_AS(parse_asr(doc_with_segments({segment(-0.1, {word("a", 1.0, 1.2)}),
                                                 segment(-0.1, {word("a", 1.0, 1.2)})})),
                    ValidationError);
    // A sentence that starts before its predecessor.
    CHECK_THROWS_AS(parse_asr(doc_with_segments({segment(-0.1, {word("a", 5.0, 5.2)}),
                                                 segment(-0.1, {word("b", 1.0, 1.2)})})),
                    ValidationError);
    // Positive confidence is impossible for a log-probability.
    CHECK_THROWS_AS(parse_asr(doc_with_segments({segment(0.25, {word("a", 0.0, 0.2)})})),
                    ValidationError);
    // Empty word text after trimming.
    CHECK_THROWS_AS(parse_asr(doc_with_segments({segment(-0.1, {word("   ", 0.0, 0.2)})})),
                    ValidationError);
}

TEST_CASE("sentence text and lookup helpers") {
    Transcript t = parse_asr(doc_with_segments(
        {segment(-0.1, {word("grasp", 0.0, 0.3), word("the", 0.35, 0.5),
                        word("fundus", 0.55, 1.0)})}));
    CHECK(t.sentences[0].text() == "grasp the fundus");
    CHECK(t.word_count() == 3);
    REQUIRE(t.find_sentence("s0000") != nullptr);
    CHECK(t.find_sentence("s0000")->words.size() == 3);
    CHECK(t.find_sentence("nope") == nullptr);
}

TEST_CASE("transcript JSON round-trip is lossless") {
    json w1 = word("retract", 0.0, 0.4);
    w1["probability"] = 0.81;
    Transcript t = parse_asr(doc_with_segments({
        segment(-0.2, {w1, word("gently", 0.5, 0.9)}),
        segment(-0.05, {word("expose", 1.2, 1.7), word("calot", 1.8, 2.2)}),
    }));
    Transcript back = transcript_from_json(transcript_to_json(t));
    CHECK(back == t);

    // Serialization itself is byte-stable.
    CHECK(transcript_to_json(t) == transcript_to_json(back));
}

TEST_CASE("parse_asr_file reports missing files as IO errors") {
    try {
        parse_asr_file("/nonexistent/definitely_missing.json");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Io);
    }
}
