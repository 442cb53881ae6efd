#include "surgonair/curation.hpp"

#include "surgonair/error.hpp"
#include "surgonair/util.hpp"

#include <algorithm>
#include <iostream>
#include <mutex>

namespace surgonair {

const char* to_string(SentenceClass c) {
    switch (c) {
    case SentenceClass::Action: return "ACTION";
    case SentenceClass::Explanation: return "EXPLANATION";
    case SentenceClass::Interaction: return "INTERACTION";
    }
    return "?";
}

std::optional<SentenceClass> sentence_class_from_label(std::string_view label) {
    // Tolerate trailing punctuation and surrounding chatter as long as exactly
    // one label appears as a whole word ("action" inside "interaction" must
    // not count as a second hit).
    bool a = false, e = false, i = false;
    std::string token;
    auto flush = [&] {
        if (token == "action") a = true;
        if (token == "explanation") e = true;
        if (token == "interaction") i = true;
        token.clear();
    };
    for (char c : to_lower(label)) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
            token.push_back(c);
        } else {
            flush();
        }
    }
    flush();
    if (a && !e && !i) return SentenceClass::Action;
    if (e && !a && !i) return SentenceClass::Explanation;
    if (i && !a && !e) return SentenceClass::Interaction;
    return std::nullopt;
}

namespace {

void emit_warning(const CurationOptions& options, const std::string& line) {
    if (options.warnings) {
        options.warnings->push_back(line);
    } else {
        std::cerr << "[surgonair] " << line << "\n";
    }
}

} // namespace

CorrectionOutcome correct_flagged(const Transcript& t,
                                  const std::set<std::string>& flagged,
                                  LanguageModelClient& client,
                                  const CurationOptions& options) {
    for (const auto& id : flagged) {
        if (!t.find_sentence(id)) {
            throw Error(ErrorCode::InvalidArgument,
                        "flagged sentence id not in transcript: " + id);
        }
    }

    const std::string& instruction = options.correction_instruction.empty()
                                         ? correction_instruction_asset()
                                         : options.correction_instruction;

    // Indices of flagged sentences, transcript order.
    std::vector<std::size_t> flagged_idx;
    for (std::size_t i = 0; i < t.sentences.size(); ++i) {
        if (flagged.count(t.sentences[i].id)) flagged_idx.push_back(i);
    }

    std::vector<std::string> responses(flagged_idx.size());
    parallel_for(flagged_idx.size(), options.max_in_flight, [&](std::size_t k) {
        const Sentence& s = t.sentences[flagged_idx[k]];
        try {
            responses[k] = retry_client_call(options.retry, [&] {
                return client.correct(s.text(), instruction);
            });
        } catch (const Error& e) {
            if (e.retryable()) {
                throw Error(ErrorCode::Client,
                            "correction failed for sentence " + s.id + ": " + e.what());
            }
            throw;
        }
    });

    CorrectionOutcome outcome;
    outcome.transcript = t;
    for (std::size_t k = 0; k < flagged_idx.size(); ++k) {
        Sentence& s = outcome.transcript.sentences[flagged_idx[k]];
        RewriteResult r;
        r.sentence_id = s.id;
        for (const auto& w : s.words) r.original_words.push_back(w.text);
        r.corrected_words = split_whitespace(responses[k]);

        if (r.corrected_words.size() != r.original_words.size()) {
            r.accepted = false;
            r.rejection_reason = "word count changed (" +
                                 std::to_string(r.original_words.size()) + " -> " +
                                 std::to_string(r.corrected_words.size()) + ")";
            emit_warning(options, "rewrite rejected for " + s.id + ": " + r.rejection_reason);
        } else {
            r.accepted = true;
            for (std::size_t i = 0; i < s.words.size(); ++i) {
                s.words[i].text = r.corrected_words[i]; // timestamps untouched
            }
        }
        outcome.rewrites.push_back(std::move(r));
    }
    return outcome;
}

std::map<std::string, SentenceClass> classify_sentences(const Transcript& t,
                                                        LanguageModelClient& client,
                                                        const CurationOptions& options) {
    if (t.sentences.empty()) {
        throw Error(ErrorCode::EmptyInput, "cannot classify an empty transcript");
    }

    std::vector<std::string> labels(t.sentences.size());
    parallel_for(t.sentences.size(), options.max_in_flight, [&](std::size_t i) {
        labels[i] = retry_client_call(options.retry, [&] {
            return client.classify(t.sentences[i].text());
        });
    });

    std::map<std::string, SentenceClass> classes;
    for (std::size_t i = 0; i < t.sentences.size(); ++i) {
        auto parsed = sentence_class_from_label(labels[i]);
        if (!parsed) {
            emit_warning(options, "unparseable class label '" + labels[i] +
                                      "' for sentence " + t.sentences[i].id +
                                      "; treating as EXPLANATION");
            parsed = SentenceClass::Explanation;
        }
        classes[t.sentences[i].id] = *parsed;
    }
    return classes;
}

Transcript filter_actions(const Transcript& t,
                          const std::map<std::string, SentenceClass>& classes) {
    Transcript out;
    out.video_id = t.video_id;
    for (const auto& s : t.sentences) {
        auto it = classes.find(s.id);
        if (it == classes.end()) {
            throw ValidationError("no class assigned for sentence " + s.id);
        }
        if (it->second == SentenceClass::Action) {
            out.sentences.push_back(s);
        }
    }
    return out;
}

} // namespace surgonair
