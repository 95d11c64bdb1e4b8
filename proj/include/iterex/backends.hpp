#pragma once

#include <atomic>
#include <chrono>
#include <deque>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "iterex/prompts.hpp"
#include "iterex/types.hpp"

namespace iterex::backends {

enum class BackendKind {
    RemoteChat,
    ScriptedMock,
    HeuristicMock,
    EmbeddingRemote,
    EmbeddingMock,
};

std::string to_string(BackendKind kind);
BackendKind backend_kind_from_string(const std::string& name);

struct RetryPolicy {
    int max_attempts = 3;  // >= 1
    std::chrono::milliseconds backoff_base{250};
};

struct BackendDescriptor {
    std::string id;
    BackendKind kind = BackendKind::ScriptedMock;
    std::string endpoint;     // chat/embeddings URL for remote kinds
    std::string model;        // remote model name
    std::string api_key_env;  // env var holding the bearer token, optional
    std::string script_path;  // fixture for scripted mocks
    RetryPolicy retry;
    long input_token_limit = 8000;  // estimated-token guard before sending
    long seed = 0;                  // embedding mock
    int embedding_dim = 32;         // embedding mock
};

enum class BackendErrorKind {
    Transport,
    ScriptMiss,
    EmptyOutput,
    TruncationRisk,
    NoNumberFound,
    OutOfRange,
    EvaluationFailed,
    Config,
};

class BackendError : public std::runtime_error {
  public:
    BackendError(BackendErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}
    BackendErrorKind kind() const { return kind_; }

  private:
    BackendErrorKind kind_;
};

enum class CallKind { Generator, Evaluator };

// Keying information for mock backends; remote backends ignore it.
struct CallContext {
    std::string mcq_id;
    int iteration = 1;
    CallKind kind = CallKind::Generator;
};

class TextBackend {
  public:
    virtual ~TextBackend() = default;
    virtual std::string generate(const prompts::PromptText& prompt,
                                 const GenParams& params,
                                 const CallContext& ctx) = 0;
    virtual const std::string& id() const = 0;
};

class EmbeddingBackend {
  public:
    virtual ~EmbeddingBackend() = default;
    // One L2-normalized vector per token of the text, in token order.
    virtual std::vector<std::pair<std::string, std::vector<double>>> embed_tokens(
        const std::string& text) = 0;
};

// First decimal-number token in the text, accepted iff within [0,5].
// Throws BackendError{NoNumberFound} or BackendError{OutOfRange}; both signal
// the caller to retry the evaluation.
double parse_rating(const std::string& model_output);

// Renders the evaluation prompt, queries the backend, and parses the rating.
// Unparseable outputs are re-asked up to retry_limit times; after
// retry_limit + 1 failed attempts throws BackendError{EvaluationFailed}.
double evaluate_explanation(TextBackend& backend, const Mcq& mcq,
                            const std::string& explanation,
                            const GenParams& params, int retry_limit,
                            int iteration = 1);

// ---- transport abstraction for remote kinds ----

struct HttpResponse {
    int status = 0;
    std::string body;
};

class HttpTransport {
  public:
    virtual ~HttpTransport() = default;
    // Returns nullopt on connection-level failure.
    virtual std::optional<HttpResponse> post_json(
        const std::string& url,
        const std::vector<std::pair<std::string, std::string>>& headers,
        const std::string& body) = 0;
};

std::unique_ptr<HttpTransport> make_httplib_transport();

using Sleeper = std::function<void(std::chrono::milliseconds)>;

// Process-wide cap on in-flight remote requests, shared by every remote
// backend instance.
void set_remote_inflight_limit(int limit);

// ---- concrete backends ----

// Chat-completions-style client. The whole rendered prompt is sent as a
// single user-role message. Transient failures (connect errors, 429, 5xx)
// are retried with exponential backoff; other statuses fail immediately.
class RemoteChatBackend : public TextBackend {
  public:
    RemoteChatBackend(BackendDescriptor descriptor,
                      std::unique_ptr<HttpTransport> transport = nullptr,
                      Sleeper sleeper = nullptr);

    std::string generate(const prompts::PromptText& prompt,
                         const GenParams& params, const CallContext& ctx) override;
    const std::string& id() const override { return descriptor_.id; }

    int last_attempt_count() const { return last_attempt_count_.load(); }
    std::vector<std::chrono::milliseconds> last_backoffs() const;

  private:
    BackendDescriptor descriptor_;
    std::string api_key_;
    std::unique_ptr<HttpTransport> transport_;
    Sleeper sleeper_;
    std::atomic<int> last_attempt_count_{0};
    mutable std::mutex backoff_mutex_;
    std::vector<std::chrono::milliseconds> last_backoffs_;
};

// Replays fixture texts keyed by (mcq_id, iteration, kind). Repeated keys in
// the fixture are consumed per attempt, in file order; the final entry
// repeats once the queue is exhausted.
class ScriptedMockBackend : public TextBackend {
  public:
    ScriptedMockBackend(std::string id, std::istream& fixture_jsonl);
    static std::unique_ptr<ScriptedMockBackend> from_file(std::string id,
                                                          const std::string& path);

    std::string generate(const prompts::PromptText& prompt,
                         const GenParams& params, const CallContext& ctx) override;
    const std::string& id() const override { return id_; }

  private:
    struct Entry {
        std::vector<std::string> texts;
        size_t next = 0;
    };
    using Key = std::tuple<std::string, int, int>;

    std::string id_;
    std::mutex mutex_;
    std::map<Key, Entry> entries_;
};

// Deterministic rule-based stand-in: as an evaluator it rates min(5, n/20)
// where n is the word count of the "Explanation:" section of the prompt; as a
// generator it paraphrases the answer line, growing by one sentence per
// iteration.
class HeuristicMockBackend : public TextBackend {
  public:
    explicit HeuristicMockBackend(std::string id) : id_(std::move(id)) {}

    std::string generate(const prompts::PromptText& prompt,
                         const GenParams& params, const CallContext& ctx) override;
    const std::string& id() const override { return id_; }

  private:
    std::string id_;
};

// Hash-projected token vectors: identical tokens map to identical unit-norm
// vectors for a given seed and dimension.
class MockEmbeddingBackend : public EmbeddingBackend {
  public:
    MockEmbeddingBackend(long seed, int dim) : seed_(seed), dim_(dim) {}

    std::vector<std::pair<std::string, std::vector<double>>> embed_tokens(
        const std::string& text) override;

  private:
    long seed_;
    int dim_;
};

// Embeddings-endpoint client; one request per text, one vector per token,
// normalized after receipt.
class RemoteEmbeddingBackend : public EmbeddingBackend {
  public:
    RemoteEmbeddingBackend(BackendDescriptor descriptor,
                           std::unique_ptr<HttpTransport> transport = nullptr,
                           Sleeper sleeper = nullptr);

    std::vector<std::pair<std::string, std::vector<double>>> embed_tokens(
        const std::string& text) override;

  private:
    BackendDescriptor descriptor_;
    std::string api_key_;
    std::unique_ptr<HttpTransport> transport_;
    Sleeper sleeper_;
};

std::unique_ptr<TextBackend> make_text_backend(const BackendDescriptor& descriptor);
std::unique_ptr<EmbeddingBackend> make_embedding_backend(
    const BackendDescriptor& descriptor);

}  // namespace iterex::backends
