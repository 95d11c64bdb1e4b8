#include "iterex/backends.hpp"

#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "iterex/ingest.hpp"
#include "iterex/metrics.hpp"
#include "json.hpp"

namespace iterex::backends {

using nlohmann::json;

std::string to_string(BackendKind kind) {
    switch (kind) {
        case BackendKind::RemoteChat: return "remote_chat";
        case BackendKind::ScriptedMock: return "scripted_mock";
        case BackendKind::HeuristicMock: return "heuristic_mock";
        case BackendKind::EmbeddingRemote: return "embedding_remote";
        case BackendKind::EmbeddingMock: return "embedding_mock";
    }
    return "scripted_mock";
}

BackendKind backend_kind_from_string(const std::string& name) {
    if (name == "remote_chat") return BackendKind::RemoteChat;
    if (name == "scripted_mock") return BackendKind::ScriptedMock;
    if (name == "heuristic_mock") return BackendKind::HeuristicMock;
    if (name == "embedding_remote") return BackendKind::EmbeddingRemote;
    if (name == "embedding_mock") return BackendKind::EmbeddingMock;
    throw BackendError(BackendErrorKind::Config, "unknown backend kind: " + name);
}

double parse_rating(const std::string& model_output) {
    static const std::regex number_re(R"([-+]?(\d+(\.\d*)?|\.\d+))");
    std::smatch match;
    if (!std::regex_search(model_output, match, number_re))
        throw BackendError(BackendErrorKind::NoNumberFound,
                           "no numeric rating in output: " + model_output);
    const double value = std::stod(match.str());
    if (!(value >= 0.0 && value <= 5.0))
        throw BackendError(BackendErrorKind::OutOfRange,
                           "rating " + match.str() + " outside [0,5]");
    return value;
}

double evaluate_explanation(TextBackend& backend, const Mcq& mcq,
                            const std::string& explanation,
                            const GenParams& params, int retry_limit,
                            int iteration) {
    const auto prompt = prompts::render_evaluation(mcq, explanation);
    CallContext ctx{mcq.id, iteration, CallKind::Evaluator};
    std::string last_error;
    for (int attempt = 0; attempt <= retry_limit; ++attempt) {
        const std::string output = backend.generate(prompt, params, ctx);
        try {
            return parse_rating(output);
        } catch (const BackendError& e) {
            if (e.kind() != BackendErrorKind::NoNumberFound &&
                e.kind() != BackendErrorKind::OutOfRange)
                throw;
            last_error = e.what();
        }
    }
    throw BackendError(BackendErrorKind::EvaluationFailed,
                       "evaluation failed after " + std::to_string(retry_limit + 1) +
                           " attempts (" + last_error + ")");
}

// ---- in-flight request limiter ----

namespace {

struct InflightLimiter {
    std::mutex mutex;
    std::condition_variable cv;
    int limit = 8;
    int active = 0;

    void acquire() {
        std::unique_lock lock(mutex);
        cv.wait(lock, [this] { return active < limit; });
        ++active;
    }
    void release() {
        {
            std::lock_guard lock(mutex);
            --active;
        }
        cv.notify_one();
    }
};

InflightLimiter& limiter() {
    static InflightLimiter instance;
    return instance;
}

struct InflightGuard {
    InflightGuard() { limiter().acquire(); }
    ~InflightGuard() { limiter().release(); }
};

}  // namespace

void set_remote_inflight_limit(int limit) {
    if (limit < 1)
        throw BackendError(BackendErrorKind::Config, "in-flight limit must be >= 1");
    {
        std::lock_guard lock(limiter().mutex);
        limiter().limit = limit;
    }
    limiter().cv.notify_all();
}

// ---- httplib transport ----

namespace {

class HttplibTransport : public HttpTransport {
  public:
    std::optional<HttpResponse> post_json(
        const std::string& url,
        const std::vector<std::pair<std::string, std::string>>& headers,
        const std::string& body) override {
        const auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) return std::nullopt;
        const auto path_start = url.find('/', scheme_end + 3);
        const std::string base =
            path_start == std::string::npos ? url : url.substr(0, path_start);
        const std::string path =
            path_start == std::string::npos ? "/" : url.substr(path_start);

        httplib::Client client(base);
        client.set_connection_timeout(10);
        client.set_read_timeout(120);
        httplib::Headers hdrs;
        for (const auto& [k, v] : headers) hdrs.emplace(k, v);
        auto res = client.Post(path, hdrs, body, "application/json");
        if (!res) return std::nullopt;
        return HttpResponse{res->status, res->body};
    }
};

std::string resolve_api_key(const BackendDescriptor& descriptor) {
    if (descriptor.api_key_env.empty()) return {};
    const char* key = std::getenv(descriptor.api_key_env.c_str());
    if (!key)
        throw BackendError(BackendErrorKind::Config,
                           "environment variable " + descriptor.api_key_env +
                               " is not set for backend " + descriptor.id);
    return key;
}

bool retryable(const std::optional<HttpResponse>& response) {
    if (!response) return true;  // connection-level failure
    return response->status == 429 || response->status >= 500;
}

// POSTs with exponential backoff. Returns the successful body; records each
// attempt and the delays that preceded retries.
std::string post_with_retry(HttpTransport& transport, const Sleeper& sleeper,
                            const RetryPolicy& policy, const std::string& url,
                            const std::vector<std::pair<std::string, std::string>>& headers,
                            const std::string& body, int* attempts_out,
                            std::vector<std::chrono::milliseconds>* backoffs_out) {
    std::string last_failure = "no attempt made";
    if (backoffs_out) backoffs_out->clear();
    for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
        if (attempts_out) *attempts_out = attempt;
        std::optional<HttpResponse> response;
        {
            InflightGuard guard;
            response = transport.post_json(url, headers, body);
        }
        if (response && response->status == 200) return response->body;
        if (!retryable(response)) {
            throw BackendError(BackendErrorKind::Transport,
                               "request to " + url + " failed with status " +
                                   std::to_string(response->status) + ": " +
                                   response->body);
        }
        last_failure = response ? "status " + std::to_string(response->status)
                                : "connection failure";
        if (attempt < policy.max_attempts) {
            const auto delay = policy.backoff_base * (1L << (attempt - 1));
            if (backoffs_out) backoffs_out->push_back(delay);
            if (sleeper) sleeper(delay);
        }
    }
    throw BackendError(BackendErrorKind::Transport,
                       "request to " + url + " failed after " +
                           std::to_string(policy.max_attempts) + " attempts (" +
                           last_failure + ")");
}

void guard_input_limit(const prompts::PromptText& prompt, long limit) {
    const double estimated = static_cast<double>(ingest::word_count(prompt.text)) * 1.3;
    if (estimated > static_cast<double>(limit))
        throw BackendError(BackendErrorKind::TruncationRisk,
                           "prompt estimated at " +
                               std::to_string(static_cast<long>(estimated)) +
                               " tokens exceeds the backend limit of " +
                               std::to_string(limit));
}

void default_sleep(std::chrono::milliseconds delay) {
    std::this_thread::sleep_for(delay);
}

}  // namespace

std::unique_ptr<HttpTransport> make_httplib_transport() {
    return std::make_unique<HttplibTransport>();
}

// ---- remote chat ----

RemoteChatBackend::RemoteChatBackend(BackendDescriptor descriptor,
                                     std::unique_ptr<HttpTransport> transport,
                                     Sleeper sleeper)
    : descriptor_(std::move(descriptor)),
      api_key_(resolve_api_key(descriptor_)),
      transport_(transport ? std::move(transport) : make_httplib_transport()),
      sleeper_(sleeper ? std::move(sleeper) : default_sleep) {
    if (descriptor_.retry.max_attempts < 1)
        throw BackendError(BackendErrorKind::Config, "max attempts must be >= 1");
}

std::string RemoteChatBackend::generate(const prompts::PromptText& prompt,
                                        const GenParams& params,
                                        const CallContext&) {
    guard_input_limit(prompt, descriptor_.input_token_limit);

    json request;
    request["model"] = descriptor_.model;
    request["messages"] = json::array(
        {json{{"role", "user"}, {"content", prompt.text}}});
    request["temperature"] = params.temperature;
    request["max_tokens"] = params.max_output_tokens;
    if (params.seed) request["seed"] = *params.seed;

    std::vector<std::pair<std::string, std::string>> headers;
    if (!api_key_.empty())
        headers.emplace_back("Authorization", "Bearer " + api_key_);

    int attempts = 0;
    std::vector<std::chrono::milliseconds> backoffs;
    const std::string body =
        post_with_retry(*transport_, sleeper_, descriptor_.retry,
                        descriptor_.endpoint, headers, request.dump(), &attempts,
                        &backoffs);
    last_attempt_count_.store(attempts);
    {
        std::lock_guard lock(backoff_mutex_);
        last_backoffs_ = backoffs;
    }

    json response = json::parse(body, nullptr, false);
    if (response.is_discarded() || !response.contains("choices") ||
        response["choices"].empty() ||
        !response["choices"][0].contains("message"))
        throw BackendError(BackendErrorKind::Transport,
                           "malformed chat completion response");
    const std::string text =
        response["choices"][0]["message"].value("content", "");
    if (text.empty())
        throw BackendError(BackendErrorKind::EmptyOutput, "model returned no text");
    return text;
}

std::vector<std::chrono::milliseconds> RemoteChatBackend::last_backoffs() const {
    std::lock_guard lock(backoff_mutex_);
    return last_backoffs_;
}

// ---- scripted mock ----

ScriptedMockBackend::ScriptedMockBackend(std::string id, std::istream& fixture_jsonl)
    : id_(std::move(id)) {
    std::string line;
    size_t line_no = 0;
    while (std::getline(fixture_jsonl, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw BackendError(BackendErrorKind::Config,
                               "script line " + std::to_string(line_no) +
                                   ": not a json object");
        try {
            const auto kind = j.at("kind").get<std::string>();
            if (kind != "generator" && kind != "evaluator")
                throw BackendError(BackendErrorKind::Config,
                                   "script line " + std::to_string(line_no) +
                                       ": kind must be generator or evaluator");
            Key key{j.at("mcq_id").get<std::string>(),
                    j.at("iteration").get<int>(),
                    kind == "generator" ? static_cast<int>(CallKind::Generator)
                                        : static_cast<int>(CallKind::Evaluator)};
            entries_[key].texts.push_back(j.at("text").get<std::string>());
        } catch (const json::exception& e) {
            throw BackendError(BackendErrorKind::Config,
                               "script line " + std::to_string(line_no) + ": " +
                                   e.what());
        }
    }
}

std::unique_ptr<ScriptedMockBackend> ScriptedMockBackend::from_file(
    std::string id, const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw BackendError(BackendErrorKind::Config,
                           "cannot open script fixture: " + path);
    return std::make_unique<ScriptedMockBackend>(std::move(id), in);
}

std::string ScriptedMockBackend::generate(const prompts::PromptText&,
                                          const GenParams&,
                                          const CallContext& ctx) {
    std::lock_guard lock(mutex_);
    Key key{ctx.mcq_id, ctx.iteration, static_cast<int>(ctx.kind)};
    auto it = entries_.find(key);
    if (it == entries_.end())
        throw BackendError(
            BackendErrorKind::ScriptMiss,
            "no scripted output for mcq_id=" + ctx.mcq_id + " iteration=" +
                std::to_string(ctx.iteration) + " kind=" +
                (ctx.kind == CallKind::Generator ? "generator" : "evaluator"));
    Entry& entry = it->second;
    const size_t index = std::min(entry.next, entry.texts.size() - 1);
    ++entry.next;
    const std::string& text = entry.texts[index];
    if (text.empty())
        throw BackendError(BackendErrorKind::EmptyOutput,
                           "scripted output is empty for mcq_id=" + ctx.mcq_id);
    return text;
}

// ---- heuristic mock ----

namespace {

std::string extract_line_after(const std::string& text, const std::string& label) {
    const auto pos = text.find(label);
    if (pos == std::string::npos) return {};
    const auto start = pos + label.size();
    const auto end = text.find('\n', start);
    return text.substr(start, end == std::string::npos ? std::string::npos
                                                       : end - start);
}

}  // namespace

std::string HeuristicMockBackend::generate(const prompts::PromptText& prompt,
                                           const GenParams&,
                                           const CallContext& ctx) {
    if (ctx.kind == CallKind::Evaluator) {
        const std::string marker = "\nExplanation: ";
        const auto pos = prompt.text.find(marker);
        const std::string explanation =
            pos == std::string::npos ? prompt.text
                                     : prompt.text.substr(pos + marker.size());
        const double rating =
            std::min(5.0, static_cast<double>(ingest::word_count(explanation)) / 20.0);
        return prompts::format_score(rating);
    }

    std::string answer = extract_line_after(prompt.text, "Correct Answer: ");
    if (answer.empty()) answer = "the stated option";
    std::string text = "The correct answer is " + answer +
                       " because it matches the conditions described in the "
                       "question stem.";
    for (int i = 1; i < ctx.iteration; ++i)
        text += " Reviewing the distractors again shows why each alternative "
                "fails to satisfy the question.";
    return text;
}

// ---- mock embeddings ----

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t fnv1a(const std::string& text) {
    uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

}  // namespace

std::vector<std::pair<std::string, std::vector<double>>>
MockEmbeddingBackend::embed_tokens(const std::string& text) {
    if (text.empty())
        throw BackendError(BackendErrorKind::Config, "cannot embed empty text");
    const auto tokens = metrics::tokenize(text);
    if (tokens.empty())
        throw BackendError(BackendErrorKind::Config,
                           "text has no tokens to embed");

    std::vector<std::pair<std::string, std::vector<double>>> result;
    result.reserve(tokens.size());
    for (const auto& token : tokens) {
        const uint64_t base =
            splitmix64(fnv1a(token) ^ splitmix64(static_cast<uint64_t>(seed_)));
        std::vector<double> vec(static_cast<size_t>(dim_));
        double norm_sq = 0.0;
        for (int d = 0; d < dim_; ++d) {
            const uint64_t bits = splitmix64(base + static_cast<uint64_t>(d));
            // top 53 bits -> uniform in [0,1) -> [-1,1)
            const double u =
                static_cast<double>(bits >> 11) / 9007199254740992.0;
            vec[static_cast<size_t>(d)] = 2.0 * u - 1.0;
            norm_sq += vec[static_cast<size_t>(d)] * vec[static_cast<size_t>(d)];
        }
        const double norm = std::sqrt(norm_sq);
        for (auto& v : vec) v /= norm;
        result.emplace_back(token, std::move(vec));
    }
    return result;
}

// ---- remote embeddings ----

RemoteEmbeddingBackend::RemoteEmbeddingBackend(
    BackendDescriptor descriptor, std::unique_ptr<HttpTransport> transport,
    Sleeper sleeper)
    : descriptor_(std::move(descriptor)),
      api_key_(resolve_api_key(descriptor_)),
      transport_(transport ? std::move(transport) : make_httplib_transport()),
      sleeper_(sleeper ? std::move(sleeper) : default_sleep) {}

std::vector<std::pair<std::string, std::vector<double>>>
RemoteEmbeddingBackend::embed_tokens(const std::string& text) {
    if (text.empty())
        throw BackendError(BackendErrorKind::Config, "cannot embed empty text");
    const auto tokens = metrics::tokenize(text);
    if (tokens.empty())
        throw BackendError(BackendErrorKind::Config,
                           "text has no tokens to embed");

    json request;
    request["model"] = descriptor_.model;
    request["input"] = tokens;

    std::vector<std::pair<std::string, std::string>> headers;
    if (!api_key_.empty())
        headers.emplace_back("Authorization", "Bearer " + api_key_);

    const std::string body =
        post_with_retry(*transport_, sleeper_, descriptor_.retry,
                        descriptor_.endpoint, headers, request.dump(), nullptr,
                        nullptr);
    json response = json::parse(body, nullptr, false);
    if (response.is_discarded() || !response.contains("data") ||
        response["data"].size() != tokens.size())
        throw BackendError(BackendErrorKind::Transport,
                           "malformed embeddings response");

    std::vector<std::pair<std::string, std::vector<double>>> result;
    result.reserve(tokens.size());
    for (size_t i = 0; i < tokens.size(); ++i) {
        auto vec = response["data"][i].at("embedding").get<std::vector<double>>();
        double norm_sq = 0.0;
        for (double v : vec) norm_sq += v * v;
        if (norm_sq <= 0.0)
            throw BackendError(BackendErrorKind::Transport,
                               "zero-length embedding returned");
        const double norm = std::sqrt(norm_sq);
        for (auto& v : vec) v /= norm;
        result.emplace_back(tokens[i], std::move(vec));
    }
    return result;
}

// ---- factories ----

std::unique_ptr<TextBackend> make_text_backend(const BackendDescriptor& descriptor) {
    switch (descriptor.kind) {
        case BackendKind::RemoteChat:
            return std::make_unique<RemoteChatBackend>(descriptor);
        case BackendKind::ScriptedMock:
            return ScriptedMockBackend::from_file(descriptor.id,
                                                  descriptor.script_path);
        case BackendKind::HeuristicMock:
            return std::make_unique<HeuristicMockBackend>(descriptor.id);
        default:
            throw BackendError(BackendErrorKind::Config,
                               "backend " + descriptor.id +
                                   " is not a text-generation kind");
    }
}

std::unique_ptr<EmbeddingBackend> make_embedding_backend(
    const BackendDescriptor& descriptor) {
    switch (descriptor.kind) {
        case BackendKind::EmbeddingMock:
            return std::make_unique<MockEmbeddingBackend>(descriptor.seed,
                                                          descriptor.embedding_dim);
        case BackendKind::EmbeddingRemote:
            return std::make_unique<RemoteEmbeddingBackend>(descriptor);
        default:
            throw BackendError(BackendErrorKind::Config,
                               "backend " + descriptor.id +
                                   " is not an embedding kind");
    }
}

}  // namespace iterex::backends
