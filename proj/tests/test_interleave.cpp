#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support/corpus.hpp"
#include "surgonair/error.hpp"
#include "surgonair/interleave.hpp"

#include <set>
#include <string>

using namespace surgonair;
namespace st = surgonair::testing;

namespace {

HierarchicalRecord tiny_record() {
    HierarchicalRecord r;
    r.video_id = "tiny";
    r.title = "Tiny procedure";
    r.meta_type = "type_a";
    r.phases = {{"prep", 0, 4000}, {"work", 4000, 9000}};
    r.steps = {{"open", 1000, 3000, 0}, {"act", 4000, 8000, 1}};
    r.words = {{"first", 200, 600},   {"second", 1100, 1400}, {"third", 4200, 4600},
               {"fourth", 6900, 7100}, {"last", 8500, 9000}};
    return r;
}

} // namespace

TEST_CASE("chunk duration derives from fps and stride") {
    CHECK(chunk_duration_ms(2, 1) == 500);
    CHECK(chunk_duration_ms(2, 4) == 2000);
    CHECK(chunk_duration_ms(1, 1) == 1000);
    CHECK(chunk_duration_ms(1, 4) == 4000);
    CHECK(chunk_duration_ms(4, 1) == 250);
    CHECK(chunk_duration_ms(1000, 1) == 1);

    // fps must divide 1000 into a whole frame period.
    CHECK_THROWS_AS(chunk_duration_ms(3, 1), Error);
    CHECK_THROWS_AS(chunk_duration_ms(7, 2), Error);
    CHECK_THROWS_AS(chunk_duration_ms(0, 1), Error);
    CHECK_THROWS_AS(chunk_duration_ms(-2, 1), Error);
    CHECK_THROWS_AS(chunk_duration_ms(2, 0), Error);
}

TEST_CASE("a known record interleaves to the expected grid") {
    HierarchicalRecord r = tiny_record();
    BuildOptions opt;
    opt.fps = 2;
    opt.stride_k = 1; // 500 ms chunks

    InterleavedSequence seq = build_sequence(r, opt);
    // Envelope end 9000 is an exact multiple: the grid still closes on the
    // right with an extra interval so "last" (ends exactly at 9000) fits.
    REQUIRE(seq.chunks.size() == 19);
    CHECK(seq.chunks.front().begin_ms == 0);
    CHECK(seq.chunks.back().begin_ms == 9000);
    CHECK(seq.chunks.back().end_ms == 9500);

    // Frames: one per 500 ms at fps 2 / stride 1, globally indexed.
    CHECK(seq.chunks[0].frames.size() == 1);
    CHECK(seq.chunks[7].frames[0].index == 7);
    CHECK(seq.chunks[7].frames[0].timestamp_ms == 3500);

    // Words land by end time: "first" ends 600 -> chunk [500, 1000).
    CHECK(seq.chunks[1].narration.size() == 1);
    CHECK(seq.chunks[1].narration[0].text == "first");
    CHECK(seq.chunks[18].narration.size() == 1);
    CHECK(seq.chunks[18].narration[0].text == "last");

    // Transitions at 0, 1000, 4000, 4000(step) -> tokens in their chunks.
    REQUIRE(seq.chunks[0].state.has_value());
    CHECK(seq.chunks[0].state->phase_label == "prep");
    CHECK(seq.chunks[0].state->step_label == "none");
    REQUIRE(seq.chunks[2].state.has_value());
    CHECK(seq.chunks[2].state->step_label == "open");
    REQUIRE(seq.chunks[8].state.has_value());
    CHECK(seq.chunks[8].state->phase_label == "work");
    CHECK(seq.chunks[8].state->step_label == "act"); // phase+step same instant
    CHECK(seq.state_token_count() == 3);
    CHECK(seq.collapsed.empty());

    CHECK(seq.context.text == "Tiny procedure"); // title-only by default
    CHECK(seq.flatten_words().size() == 5);
}

TEST_CASE("a non-multiple duration still gets a covering tail chunk") {
    HierarchicalRecord r = tiny_record();
    r.phases[1].end_ms = 9300;
    r.words.back().end_ms = 9300;
    BuildOptions opt; // fps 2, stride 1
    InterleavedSequence seq = build_sequence(r, opt);
    REQUIRE(seq.chunks.size() == 19);
    CHECK(seq.chunks.back().begin_ms == 9000);
    CHECK(seq.chunks.back().narration.back().text == "last");
}

TEST_CASE("multiple transitions in one chunk collapse to the last") {
    HierarchicalRecord r;
    r.video_id = "collapse";
    r.title = "t";
    r.meta_type = "m";
    r.phases = {{"a", 0, 5000}};
    r.steps = {{"s1", 100, 400, 0}, {"s2", 700, 900, 0}};
    BuildOptions opt;
    opt.fps = 1;
    opt.stride_k = 1; // 1000 ms chunks; all three transitions share chunk 0

    InterleavedSequence seq = build_sequence(r, opt);
    REQUIRE(seq.chunks[0].state.has_value());
    CHECK(seq.chunks[0].state->phase_label == "a");
    CHECK(seq.chunks[0].state->step_label == "s2");
    CHECK(seq.chunks[0].state->time_ms == 700);
    REQUIRE(seq.collapsed.size() == 2);
    CHECK(seq.collapsed[0] == CollapsedTransition{0, "a", "none"});
    CHECK(seq.collapsed[1] == CollapsedTransition{100, "a", "s1"});
    CHECK(seq.state_token_count() == 1);
}

TEST_CASE("every-chunk policy stamps the running state everywhere") {
    HierarchicalRecord r = tiny_record();
    r.phases[0].start_ms = 1000; // leave chunks before the first phase
    r.words[0] = {"first", 1000, 1200};
    BuildOptions opt;
    opt.fps = 2;
    opt.stride_k = 1;
    opt.policy = StatePolicy::EveryChunk;

    InterleavedSequence seq = build_sequence(r, opt);
    for (const auto& c : seq.chunks) {
        REQUIRE(c.state.has_value());
    }
    // Before any phase: explicit none/none stamped at the chunk begin.
    CHECK(seq.chunks[0].state->phase_label == "none");
    CHECK(seq.chunks[0].state->step_label == "none");
    CHECK(seq.chunks[0].state->time_ms == 0);
    CHECK(seq.chunks[1].state->phase_label == "none");
    // Transition chunks carry the transition time, not the chunk begin.
    CHECK(seq.chunks[2].state->phase_label == "prep");
    CHECK(seq.chunks[2].state->time_ms == 1000);
    // Carried-forward chunks restate the last transition at their own begin.
    CHECK(seq.chunks[3].state->phase_label == "prep");
    CHECK(seq.chunks[3].state->time_ms == 1500);
    CHECK(seq.state_token_count() == seq.chunks.size());
}

TEST_CASE("start offset moves earlier words into context or drops them") {
    HierarchicalRecord r = tiny_record();
    BuildOptions opt;
    opt.fps = 2;
    opt.stride_k = 1;
    opt.start_offset_ms = 2000;

    SUBCASE("asr history mode prefixes the earlier narration") {
        opt.mode = ConditioningMode::AsrHistory;
        InterleavedSequence seq = build_sequence(r, opt);
        CHECK(seq.context.text == "Tiny procedure first second");
        CHECK(seq.chunks.front().begin_ms == 2000);
        CHECK(seq.chunks.size() == 19 - 4);
        CHECK(seq.flatten_words().size() == 3); // two words predate the window

        // The state active at the window start is re-anchored there: the
        // last transition before 2000 was (prep, open) at 1000.
        REQUIRE(seq.chunks.front().state.has_value());
        CHECK(seq.chunks.front().state->phase_label == "prep");
        CHECK(seq.chunks.front().state->step_label == "open");
        CHECK(seq.chunks.front().state->time_ms == 2000);
    }

    SUBCASE("title-only mode omits them") {
        opt.mode = ConditioningMode::TitleOnly;
        InterleavedSequence seq = build_sequence(r, opt);
        CHECK(seq.context.text == "Tiny procedure");
        CHECK(seq.flatten_words().size() == 3);
    }

    SUBCASE("a transition exactly at the offset wins over the anchor") {
        opt.start_offset_ms = 4000; // phase "work" + step "act" start here
        InterleavedSequence seq = build_sequence(r, opt);
        REQUIRE(seq.chunks.front().state.has_value());
        CHECK(seq.chunks.front().state->phase_label == "work");
        CHECK(seq.chunks.front().state->step_label == "act");
        // One token for the real transition, no duplicate anchor.
        CHECK(seq.state_token_count() == 1);
    }

    SUBCASE("invalid offsets are rejected") {
        opt.start_offset_ms = 750; // not a chunk multiple
        CHECK_THROWS_AS(build_sequence(r, opt), Error);
        opt.start_offset_ms = -500;
        CHECK_THROWS_AS(build_sequence(r, opt), Error);
        opt.start_offset_ms = 9500; // beyond the record
        CHECK_THROWS_AS(build_sequence(r, opt), Error);
    }
}

TEST_CASE("interleaving requires a valid, non-empty record") {
    HierarchicalRecord empty;
    empty.video_id = "empty";
    CHECK_THROWS_AS(build_sequence(empty), Error);

    HierarchicalRecord broken = tiny_record();
    broken.phases[1].start_ms = 3000; // overlaps phase 0
    CHECK_THROWS_AS(build_sequence(broken), ValidationError);
}

TEST_CASE("fuzz: builder output equals the containment oracle") {
    // Randomized records crossed with every supported grid under test, with
    // and without a start offset, in both conditioning modes. The oracle
    // rebuilds everything by interval scans, so equality here pins down word
    // placement, transition placement, collapse order, frames, and context.
    DetRng rng(0x5eed0010);
    const int fps_values[] = {1, 2};
    const int strides[] = {1, 2, 4};
    int compared = 0;
    for (int iter = 0; iter < 200; ++iter) {
        HierarchicalRecord r = st::make_record(rng);
        for (int fps : fps_values) {
            for (int k : strides) {
                BuildOptions opt;
                opt.fps = fps;
                opt.stride_k = k;
                const Ms chunk = chunk_duration_ms(fps, k);
                const Ms duration = r.envelope_end_ms();
                opt.start_offset_ms =
                    chunk * static_cast<Ms>(rng.bounded(
                                static_cast<std::uint64_t>(duration / chunk) + 1));
                opt.mode = rng.coin_flip() ? ConditioningMode::AsrHistory
                                           : ConditioningMode::TitleOnly;
                opt.policy = rng.coin_flip() ? StatePolicy::OnTransition
                                             : StatePolicy::EveryChunk;

                InterleavedSequence fast = build_sequence(r, opt);
                InterleavedSequence slow = st::oracle_build(r, opt);
                REQUIRE_MESSAGE(fast == slow, "oracle mismatch for ", r.video_id, " fps=", fps,
                                " k=", k, " offset=", opt.start_offset_ms);
                ++compared;
            }
        }
    }
    CHECK(compared == 200 * 6);
}

TEST_CASE("fuzz: state tokens exactly account for the transitions") {
    DetRng rng(0x5eed0011);
    const int fps_values[] = {1, 2};
    const int strides[] = {1, 2, 4};
    for (int iter = 0; iter < 100; ++iter) {
        HierarchicalRecord r = st::make_record(rng);
        const std::size_t n_transitions = detect_transitions(r).size();
        for (int fps : fps_values) {
            for (int k : strides) {
                BuildOptions opt;
                opt.fps = fps;
                opt.stride_k = k;

                InterleavedSequence seq = build_sequence(r, opt);
                // Conservation: every transition became either a chunk's
                // state token or a logged collapse, nothing invented.
                CHECK(seq.state_token_count() + seq.collapsed.size() == n_transitions);

                // Containment: each token's chunk interval holds its time.
                for (const auto& c : seq.chunks) {
                    if (!c.state) continue;
                    CHECK(c.begin_ms <= c.state->time_ms);
                    CHECK(c.state->time_ms < c.end_ms);
                }

                // Under the every-chunk policy there is exactly one state
                // token per chunk, no exceptions.
                opt.policy = StatePolicy::EveryChunk;
                InterleavedSequence every = build_sequence(r, opt);
                for (const auto& c : every.chunks) {
                    REQUIRE(c.state.has_value());
                }
                CHECK(every.state_token_count() == every.chunks.size());
            }
        }
    }
}

TEST_CASE("token text serializes to the documented line format") {
    HierarchicalRecord r;
    r.video_id = "fmt";
    r.title = "Title text";
    r.meta_type = "m";
    r.phases = {{"a", 0, 1000}};
    r.words = {{"hi", 100, 300}};
    BuildOptions opt;
    opt.fps = 1;
    opt.stride_k = 1;

    InterleavedSequence seq = build_sequence(r, opt);
    const std::string expected =
        "<Context>Title text</Context>\n"
        "<Frame idx=0 t=0.000/>\n"
        "<State>Phase=a, Step=none</State>\n"
        "<Word t=0.100-0.300>hi</Word>\n"
        "<Frame idx=1 t=1.000/>\n";
    CHECK(serialize(seq) == expected);
}

TEST_CASE("escaping protects backslashes and newlines") {
    HierarchicalRecord r;
    r.video_id = "esc";
    r.title = "line one\nline two \\ backslash";
    r.meta_type = "m";
    r.phases = {{"a", 0, 1000}};
    r.words = {{"odd\\word", 100, 300}, {"two\nlines", 350, 600}};
    InterleavedSequence seq = build_sequence(r, BuildOptions{1, 1});

    const std::string text = serialize(seq);
    // The serialized form itself stays line-oriented.
    CHECK(text.find("odd\\\\word") != std::string::npos);
    CHECK(text.find("two\\nlines") != std::string::npos);
    CHECK(text.find("line one\\nline two") != std::string::npos);

    InterleavedSequence back = deserialize(text, serialize_meta(seq));
    CHECK(back == seq);
    CHECK(back.context.text == r.title);
    CHECK(back.chunks[0].narration[0].text == "odd\\word");
    CHECK(back.chunks[0].narration[1].text == "two\nlines");
}

TEST_CASE("fuzz: serialize/deserialize round-trip conserves everything") {
    DetRng rng(0x5eed0012);
    int checked = 0;
    for (int iter = 0; iter < 100; ++iter) {
        HierarchicalRecord r = st::make_record(rng);
        BuildOptions opt;
        opt.fps = rng.coin_flip() ? 1 : 2;
        opt.stride_k = 1 << rng.bounded(3);
        opt.policy = rng.coin_flip() ? StatePolicy::OnTransition : StatePolicy::EveryChunk;
        opt.mode = rng.coin_flip() ? ConditioningMode::AsrHistory : ConditioningMode::TitleOnly;

        InterleavedSequence seq = build_sequence(r, opt);
        InterleavedSequence back = deserialize(serialize(seq), serialize_meta(seq));
        REQUIRE(back == seq);

        // Word conservation against the source record: flattening the chunks
        // yields exactly the record's words, order, text and times included.
        std::vector<WordToken> flat = back.flatten_words();
        REQUIRE(flat.size() == r.words.size());
        for (std::size_t i = 0; i < flat.size(); ++i) {
            CHECK(flat[i].text == r.words[i].text);
            CHECK(flat[i].start_ms == r.words[i].start_ms);
            CHECK(flat[i].end_ms == r.words[i].end_ms);
        }
        ++checked;
    }
    CHECK(checked == 100);
}

TEST_CASE("the sidecar cross-checks the token text") {
    HierarchicalRecord r = tiny_record();
    InterleavedSequence seq = build_sequence(r, BuildOptions{2, 1});
    const std::string text = serialize(seq);
    const std::string meta = serialize_meta(seq);

    SUBCASE("chunk count mismatch") {
        std::string bad = meta;
        const auto pos = bad.find("\"n_chunks\": 19");
        REQUIRE(pos != std::string::npos);
        bad.replace(pos, 14, "\"n_chunks\": 18");
        CHECK_THROWS_AS(deserialize(text, bad), Error);
    }
    SUBCASE("missing state time") {
        std::string bad = meta;
        const auto pos = bad.find("\"state_times_ms\": [");
        REQUIRE(pos != std::string::npos);
        // Truncate the list to a single entry.
        const auto open = bad.find('[', pos);
        const auto close = bad.find(']', open);
        bad.replace(open, close - open + 1, "[0]");
        CHECK_THROWS_AS(deserialize(text, bad), Error);
    }
    SUBCASE("malformed sidecar JSON") { CHECK_THROWS_AS(deserialize(text, "{"), Error); }
    SUBCASE("unknown token line") {
        CHECK_THROWS_AS(deserialize("<Bogus/>\n", meta), Error);
    }
    SUBCASE("unterminated lines") {
        CHECK_THROWS_AS(deserialize("<Context>oops\n", meta), Error);
        CHECK_THROWS_AS(deserialize("<Frame idx=0 t=0.000\n", meta), Error);
        CHECK_THROWS_AS(deserialize("<Frame idx=0 t=0.000/>\n<Word t=0.1-0.2>x\n", meta),
                        Error);
    }
    SUBCASE("bad timestamps") {
        CHECK_THROWS_AS(deserialize("<Frame idx=0 t=zero/>\n", meta), Error);
        CHECK_THROWS_AS(deserialize("<Frame idx=0 t=0.99/>\n", meta), Error); // 2-digit frac
    }
    SUBCASE("state or word before any frame") {
        CHECK_THROWS_AS(deserialize("<State>Phase=a, Step=b</State>\n", meta), Error);
        CHECK_THROWS_AS(deserialize("<Word t=0.100-0.200>x</Word>\n", meta), Error);
    }
}
