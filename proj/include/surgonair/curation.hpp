#pragma once

#include "surgonair/client.hpp"
#include "surgonair/transcript.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace surgonair {

enum class SentenceClass { Action, Explanation, Interaction };

const char* to_string(SentenceClass c);
// Lenient label parse ("ACTION", "action.", " Action"); nullopt if no match.
std::optional<SentenceClass> sentence_class_from_label(std::string_view label);

// Outcome of one correction attempt. A rewrite is applied only when it keeps
// the word count; otherwise the original sentence is retained and the reason
// recorded. Timestamps are never touched either way.
struct RewriteResult {
    std::string sentence_id;
    std::vector<std::string> original_words;
    std::vector<std::string> corrected_words;
    bool accepted = false;
    std::string rejection_reason; // empty when accepted
};

struct CurationOptions {
    std::size_t max_in_flight = 4; // concurrent client calls
    RetryPolicy retry;
    std::string correction_instruction; // defaults to the bundled prompt asset
    std::vector<std::string>* warnings = nullptr; // optional sink for log lines
};

struct CorrectionOutcome {
    Transcript transcript;
    std::vector<RewriteResult> rewrites; // one per flagged sentence, transcript order
};

// Rewrites each flagged sentence through the client. Unflagged sentences pass
// through untouched.
CorrectionOutcome correct_flagged(const Transcript& t,
                                  const std::set<std::string>& flagged,
                                  LanguageModelClient& client,
                                  const CurationOptions& options = {});

// Classifies every sentence. Labels the pipeline cannot parse fall back to
// Explanation (conservative: such sentences are dropped by the action filter).
std::map<std::string, SentenceClass> classify_sentences(
    const Transcript& t, LanguageModelClient& client,
    const CurationOptions& options = {});

// Keeps exactly the Action sentences, order and timestamps preserved. The
// class map must cover every sentence.
Transcript filter_actions(const Transcript& t,
                          const std::map<std::string, SentenceClass>& classes);

// Bundled prompt assets (versioned text, also shipping under prompts/).
const std::string& correction_instruction_asset();
const std::string& classification_prompt_asset();
const std::string& judge_prompt_asset();
const std::string& step_summary_prompt_asset();

} // namespace surgonair
