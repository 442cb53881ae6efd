#include "surgonair/client.hpp"

#include "surgonair/error.hpp"
#include "surgonair/util.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <thread>

namespace surgonair {

using nlohmann::json;

namespace {

// Stems that mark a sentence as describing an on-screen surgical action.
const std::array<const char*, 36> kActionStems = {
    "retract", "grasp",   "dissect", "divid",  "clip",    "incis",
    "insert",  "introduc", "sutur",  "fixat",  "stapl",   "coagulat",
    "cauteriz", "irrigat", "aspirat", "expos",  "mobiliz", "ligat",
    "transect", "remov",  "plac",    "advanc", "withdraw", "elevat",
    "deploy",  "secur",   "clamp",   "pull",   "push",    "lift",
    "fix",     "cut",     "open",    "clos",   "tie",     "releas",
};

const std::array<const char*, 10> kInteractionMarkers = {
    "thank you", "thanks for watching", "subscribe",  "welcome",
    "let's",     "question",            "comments",   "hello everyone",
    "see you",   "in this video",
};

// Per-word terminology fixes. One entry deliberately expands to two words so
// the rejection path is reachable with the mock.
const std::map<std::string, std::string>& correction_table() {
    static const std::map<std::string, std::string> table = {
        {"messy", "mesh"},
        {"tisue", "tissue"},
        {"artary", "artery"},
        {"durt", "duct"},
        {"cistic", "cystic"},
        {"clump", "clamp"},
        {"collbladder", "gallbladder"},
        {"trocker", "trocar"},
        {"hernial", "hernia"},
        {"vshape", "v shaped"},
    };
    return table;
}

std::string strip_punct(std::string_view word) {
    std::string out;
    for (char c : word) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '-') out.push_back(c);
    }
    return out;
}

std::vector<std::string> content_tokens(const std::string& text) {
    std::vector<std::string> out;
    for (const auto& w : split_whitespace(text)) {
        std::string t = strip_punct(to_lower(w));
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

int overlap_score(const std::vector<std::string>& reference,
                  const std::vector<std::string>& candidate) {
    std::map<std::string, int> budget;
    for (const auto& t : reference) ++budget[t];
    int score = 0;
    for (const auto& t : candidate) {
        auto it = budget.find(t);
        if (it != budget.end() && it->second > 0) {
            --it->second;
            ++score;
        }
    }
    return score;
}

} // namespace

std::string MockLanguageModelClient::correct(const std::string& sentence,
                                             const std::string& /*instruction*/) {
    std::vector<std::string> words = split_whitespace(sentence);
    std::vector<std::string> out;
    out.reserve(words.size());
    for (const auto& w : words) {
        const std::string key = strip_punct(to_lower(w));
        auto it = correction_table().find(key);
        if (it == correction_table().end()) {
            out.push_back(w);
            continue;
        }
        std::string repl = it->second;
        if (!w.empty() && std::isupper(static_cast<unsigned char>(w[0])) && !repl.empty()) {
            repl[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(repl[0])));
        }
        out.push_back(repl);
    }
    return join(out, " ");
}

std::string MockLanguageModelClient::classify(const std::string& sentence) {
    const std::string lower = to_lower(sentence);
    for (const char* marker : kInteractionMarkers) {
        if (lower.find(marker) != std::string::npos) return "INTERACTION";
    }
    for (const auto& raw : split_whitespace(lower)) {
        const std::string word = strip_punct(raw);
        for (const char* stem : kActionStems) {
            if (word.rfind(stem, 0) == 0) return "ACTION";
        }
    }
    return "EXPLANATION";
}

std::vector<StepProposal> MockLanguageModelClient::summarize_steps(
    const std::vector<SentenceSpan>& sentences, const StepConstraints& constraints) {
    std::vector<StepProposal> out;
    if (sentences.empty()) return out;

    for (const auto& s : sentences) {
        if (to_lower(s.text).find("overlapfault") != std::string::npos) {
            // Deliberately broken proposal; the pipeline must fall back.
            Ms mid = (constraints.segment_start_ms + constraints.segment_end_ms) / 2;
            out.push_back({"first half", constraints.segment_start_ms,
                           mid + (constraints.segment_end_ms - constraints.segment_start_ms) / 4});
            out.push_back({"second half", mid, constraints.segment_end_ms});
            return out;
        }
    }

    const std::size_t n = sentences.size();
    const std::size_t n_steps = std::min<std::size_t>(
        static_cast<std::size_t>(constraints.max_steps), (n + 2) / 3);
    const std::size_t base = n / n_steps;
    const std::size_t rem = n % n_steps;
    std::size_t pos = 0;
    for (std::size_t g = 0; g < n_steps; ++g) {
        const std::size_t count = base + (g < rem ? 1 : 0);
        const SentenceSpan& first = sentences[pos];
        const SentenceSpan& last = sentences[pos + count - 1];
        std::vector<std::string> words = split_whitespace(to_lower(first.text));
        if (words.size() > 4) words.resize(4);
        for (auto& w : words) w = strip_punct(w);
        out.push_back({join(words, " "), first.start_ms, last.end_ms});
        pos += count;
    }
    return out;
}

std::string MockLanguageModelClient::judge(const std::string& reference,
                                           const std::string& first,
                                           const std::string& second) {
    const auto ref = content_tokens(reference);
    const int a = overlap_score(ref, content_tokens(first));
    const int b = overlap_score(ref, content_tokens(second));
    std::string verdict = a > b ? "FIRST" : (b > a ? "SECOND" : "TIE");
    return verdict + " (token overlap " + std::to_string(a) + " vs " + std::to_string(b) + ")";
}

// ---------------------------------------------------------------------------

HttpClientConfig http_config_from_env(HttpClientConfig base) {
    if (const char* v = std::getenv("SURGONAIR_ENDPOINT")) base.endpoint = v;
    if (const char* v = std::getenv("SURGONAIR_API_KEY")) base.api_key = v;
    if (const char* v = std::getenv("SURGONAIR_MODEL")) base.model = v;
    if (const char* v = std::getenv("SURGONAIR_TIMEOUT_MS")) base.timeout_ms = std::atoi(v);
    return base;
}

struct HttpLanguageModelClient::Impl {
    HttpClientConfig config;

    json post(const std::string& task, json input) {
        json body = {{"task", task}, {"model", config.model}, {"input", std::move(input)}};

        httplib::Client cli(config.endpoint);
        cli.set_connection_timeout(config.timeout_ms / 1000, (config.timeout_ms % 1000) * 1000);
        cli.set_read_timeout(config.timeout_ms / 1000, (config.timeout_ms % 1000) * 1000);
        httplib::Headers headers;
        if (!config.api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + config.api_key);
        }

        auto res = cli.Post("/v1/complete", headers, body.dump(), "application/json");
        if (!res) {
            throw Error(ErrorCode::Client,
                        "transport failure contacting " + config.endpoint + " (" +
                            httplib::to_string(res.error()) + ")");
        }
        if (res->status != 200) {
            throw Error(ErrorCode::Client, "model server returned HTTP " +
                                               std::to_string(res->status));
        }
        try {
            return json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::Client,
                        std::string("unparseable model server response: ") + e.what());
        }
    }
};

HttpLanguageModelClient::HttpLanguageModelClient(HttpClientConfig config)
    : impl_(std::make_unique<Impl>()) {
    if (config.endpoint.empty()) {
        throw Error(ErrorCode::InvalidArgument, "http client requires an endpoint");
    }
    impl_->config = std::move(config);
}

HttpLanguageModelClient::~HttpLanguageModelClient() = default;

std::string HttpLanguageModelClient::correct(const std::string& sentence,
                                             const std::string& instruction) {
    json out = impl_->post("correct", {{"sentence", sentence}, {"instruction", instruction}});
    return out.value("text", std::string{});
}

std::string HttpLanguageModelClient::classify(const std::string& sentence) {
    json out = impl_->post("classify", {{"sentence", sentence}});
    return out.value("text", std::string{});
}

std::vector<StepProposal> HttpLanguageModelClient::summarize_steps(
    const std::vector<SentenceSpan>& sentences, const StepConstraints& constraints) {
    json sent = json::array();
    for (const auto& s : sentences) {
        sent.push_back({{"text", s.text}, {"start_ms", s.start_ms}, {"end_ms", s.end_ms}});
    }
    json out = impl_->post("steps", {{"sentences", std::move(sent)},
                                     {"min_steps", constraints.min_steps},
                                     {"max_steps", constraints.max_steps},
                                     {"segment_start_ms", constraints.segment_start_ms},
                                     {"segment_end_ms", constraints.segment_end_ms}});
    std::vector<StepProposal> proposals;
    if (out.contains("steps") && out["steps"].is_array()) {
        for (const auto& j : out["steps"]) {
            proposals.push_back({j.value("label", std::string{}),
                                 j.value("start_ms", Ms{0}), j.value("end_ms", Ms{0})});
        }
    }
    return proposals;
}

std::string HttpLanguageModelClient::judge(const std::string& reference,
                                           const std::string& first,
                                           const std::string& second) {
    json out = impl_->post("judge", {{"reference", reference},
                                     {"first", first},
                                     {"second", second}});
    return out.value("text", std::string{});
}

// ---------------------------------------------------------------------------

CachingClient::CachingClient(LanguageModelClient& inner, std::string cache_dir)
    : inner_(inner), cache_dir_(std::move(cache_dir)) {}

std::optional<std::string> CachingClient::lookup(const std::string& key) const {
    namespace fs = std::filesystem;
    fs::path p = fs::path(cache_dir_) / (key + ".txt");
    std::error_code ec;
    if (!fs::exists(p, ec)) return std::nullopt;
    return read_file(p);
}

void CachingClient::store(const std::string& key, const std::string& value) const {
    atomic_write_file(std::filesystem::path(cache_dir_) / (key + ".txt"), value);
}

namespace {
std::string cache_key(std::string_view method, std::initializer_list<std::string_view> parts) {
    std::string buf(method);
    for (auto p : parts) {
        buf += '\x1f'; // unit separator; keeps distinct inputs from colliding
        buf += p;
    }
    return std::string(method) + "-" + fnv1a64_hex(buf);
}
} // namespace

std::string CachingClient::correct(const std::string& sentence,
                                   const std::string& instruction) {
    const std::string key = cache_key("correct", {sentence, instruction});
    if (auto hit = lookup(key)) return *hit;
    std::string value = inner_.correct(sentence, instruction);
    store(key, value);
    return value;
}

std::string CachingClient::classify(const std::string& sentence) {
    const std::string key = cache_key("classify", {sentence});
    if (auto hit = lookup(key)) return *hit;
    std::string value = inner_.classify(sentence);
    store(key, value);
    return value;
}

std::vector<StepProposal> CachingClient::summarize_steps(
    const std::vector<SentenceSpan>& sentences, const StepConstraints& constraints) {
    json sent = json::array();
    for (const auto& s : sentences) {
        sent.push_back({{"text", s.text}, {"start_ms", s.start_ms}, {"end_ms", s.end_ms}});
    }
    const std::string key = cache_key(
        "steps", {sent.dump(), std::to_string(constraints.min_steps),
                  std::to_string(constraints.max_steps),
                  std::to_string(constraints.segment_start_ms),
                  std::to_string(constraints.segment_end_ms)});
    if (auto hit = lookup(key)) {
        std::vector<StepProposal> proposals;
        for (const auto& j : json::parse(*hit)) {
            proposals.push_back({j.at("label").get<std::string>(),
                                 j.at("start_ms").get<Ms>(), j.at("end_ms").get<Ms>()});
        }
        return proposals;
    }
    auto proposals = inner_.summarize_steps(sentences, constraints);
    json out = json::array();
    for (const auto& p : proposals) {
        out.push_back({{"label", p.label}, {"start_ms", p.start_ms}, {"end_ms", p.end_ms}});
    }
    store(key, out.dump());
    return proposals;
}

std::string CachingClient::judge(const std::string& reference, const std::string& first,
                                 const std::string& second) {
    const std::string key = cache_key("judge", {reference, first, second});
    if (auto hit = lookup(key)) return *hit;
    std::string value = inner_.judge(reference, first, second);
    store(key, value);
    return value;
}

// ---------------------------------------------------------------------------

std::string retry_client_call(const RetryPolicy& policy,
                              const std::function<std::string()>& fn) {
    int attempt = 0;
    for (;;) {
        try {
            return fn();
        } catch (const Error& e) {
            ++attempt;
            if (!e.retryable() || attempt >= policy.max_attempts) throw;
            const int delay = policy.backoff_base_ms * (1 << (attempt - 1));
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        }
    }
}

} // namespace surgonair
