#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "iterex/backends.hpp"
#include "iterex/prompts.hpp"
#include "json.hpp"

using namespace iterex;
using backends::BackendError;
using backends::BackendErrorKind;
using backends::CallContext;
using backends::CallKind;

namespace {

Mcq fixture_mcq() {
    Mcq mcq;
    mcq.id = "q1";
    mcq.stem = "Which organelle produces ATP?";
    mcq.answer = "Mitochondria";
    mcq.distractors = {"Nucleus"};
    mcq.avg_rating = 3.0;
    mcq.num_ratings = 12;
    return mcq;
}

// Transport scripted with a fixed response sequence per call.
class FakeTransport : public backends::HttpTransport {
  public:
    explicit FakeTransport(std::vector<std::optional<backends::HttpResponse>> responses)
        : responses_(std::move(responses)) {}

    std::optional<backends::HttpResponse> post_json(
        const std::string&, const std::vector<std::pair<std::string, std::string>>&,
        const std::string& body) override {
        last_body = body;
        ++calls;
        if (responses_.empty()) return std::nullopt;
        auto response = responses_.front();
        responses_.erase(responses_.begin());
        return response;
    }

    int calls = 0;
    std::string last_body;

  private:
    std::vector<std::optional<backends::HttpResponse>> responses_;
};

backends::HttpResponse ok_chat(const std::string& text) {
    nlohmann::json j;
    j["choices"] = nlohmann::json::array(
        {{{"message", {{"role", "assistant"}, {"content", text}}}}});
    return {200, j.dump()};
}

std::string word_text(int n) {
    std::string out;
    for (int i = 0; i < n; ++i) {
        if (i) out += " ";
        out += "word";
    }
    return out;
}

}  // namespace

TEST_SUITE("backends") {

TEST_CASE("parse_rating finds the first number") {
    CHECK(backends::parse_rating("4.2") == doctest::Approx(4.2));
    CHECK(backends::parse_rating("The quality rating score is 3.5.") ==
          doctest::Approx(3.5));
    CHECK(backends::parse_rating("Score: 5") == doctest::Approx(5.0));
}

TEST_CASE("parse_rating rejects missing or out-of-range numbers") {
    CHECK_THROWS_AS(backends::parse_rating("excellent question"), BackendError);
    try {
        backends::parse_rating("excellent question");
    } catch (const BackendError& e) {
        CHECK(e.kind() == BackendErrorKind::NoNumberFound);
    }
    try {
        backends::parse_rating("I rate this 7 out of 10");
    } catch (const BackendError& e) {
        CHECK(e.kind() == BackendErrorKind::OutOfRange);
    }
    CHECK_THROWS_AS(backends::parse_rating("-1.5 stars"), BackendError);
}

TEST_CASE("parse_rating round-trips two-decimal formatting") {
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> dist(0.0, 5.0);
    for (int i = 0; i < 200; ++i) {
        const double x = std::round(dist(rng) * 100.0) / 100.0;
        CHECK(backends::parse_rating(prompts::format_score(x)) ==
              doctest::Approx(x).epsilon(1e-12));
    }
}

TEST_CASE("scripted mock replays its fixture by key") {
    std::istringstream fixture(
        R"({"iteration": 1, "kind": "generator", "mcq_id": "q1", "text": "scripted text one"})");
    backends::ScriptedMockBackend backend("gen", fixture);
    prompts::PromptText prompt{"anything", prompts::RoleTag::Generation, {}};
    CHECK(backend.generate(prompt, {}, {"q1", 1, CallKind::Generator}) ==
          "scripted text one");
    CHECK_THROWS_AS(backend.generate(prompt, {}, {"q1", 2, CallKind::Generator}),
                    BackendError);
    try {
        backend.generate(prompt, {}, {"q2", 1, CallKind::Generator});
    } catch (const BackendError& e) {
        CHECK(e.kind() == BackendErrorKind::ScriptMiss);
    }
}

TEST_CASE("scripted sequences are consumed per attempt") {
    std::istringstream fixture(
        R"({"iteration": 1, "kind": "evaluator", "mcq_id": "q1", "text": "no score here"}
{"iteration": 1, "kind": "evaluator", "mcq_id": "q1", "text": "3.0"})");
    backends::ScriptedMockBackend backend("eval", fixture);
    CHECK(backends::evaluate_explanation(backend, fixture_mcq(), "some text", {},
                                         /*retry_limit=*/1) == doctest::Approx(3.0));
}

TEST_CASE("evaluation fails after exhausting retries") {
    std::istringstream fixture(
        R"({"iteration": 1, "kind": "evaluator", "mcq_id": "q1", "text": "garbage"}
{"iteration": 1, "kind": "evaluator", "mcq_id": "q1", "text": "still garbage"})");
    backends::ScriptedMockBackend backend("eval", fixture);
    try {
        backends::evaluate_explanation(backend, fixture_mcq(), "some text", {}, 1);
        FAIL("expected EvaluationFailed");
    } catch (const BackendError& e) {
        CHECK(e.kind() == BackendErrorKind::EvaluationFailed);
    }
}

TEST_CASE("heuristic evaluator rates by explanation length") {
    backends::HeuristicMockBackend backend("eval");
    const double rating = backends::evaluate_explanation(
        backend, fixture_mcq(), word_text(40), {}, 0);
    CHECK(rating == doctest::Approx(2.0));
    // caps at 5
    CHECK(backends::evaluate_explanation(backend, fixture_mcq(), word_text(400),
                                         {}, 0) == doctest::Approx(5.0));
}

TEST_CASE("heuristic generator is deterministic and iteration-aware") {
    backends::HeuristicMockBackend backend("gen");
    const auto prompt = prompts::render_generation_initial(fixture_mcq());
    const auto first = backend.generate(prompt, {}, {"q1", 1, CallKind::Generator});
    CHECK(first == backend.generate(prompt, {}, {"q1", 1, CallKind::Generator}));
    CHECK(first.find("Mitochondria") != std::string::npos);
    const auto third = backend.generate(prompt, {}, {"q1", 3, CallKind::Generator});
    CHECK(third.size() > first.size());
}

TEST_CASE("remote backend retries transient failures with backoff") {
    auto transport = std::make_unique<FakeTransport>(
        std::vector<std::optional<backends::HttpResponse>>{
            std::nullopt,
            backends::HttpResponse{503, "busy"},
            ok_chat("hello from the model"),
        });
    auto* transport_ptr = transport.get();

    std::vector<std::chrono::milliseconds> slept;
    backends::BackendDescriptor descriptor;
    descriptor.id = "remote";
    descriptor.kind = backends::BackendKind::RemoteChat;
    descriptor.endpoint = "http://localhost:9/v1/chat/completions";
    descriptor.model = "test-model";
    descriptor.retry.max_attempts = 3;
    descriptor.retry.backoff_base = std::chrono::milliseconds(10);

    backends::RemoteChatBackend backend(
        descriptor, std::move(transport),
        [&slept](std::chrono::milliseconds d) { slept.push_back(d); });

    prompts::PromptText prompt{"say hello", prompts::RoleTag::Generation, {}};
    GenParams params;
    params.seed = 42;
    const auto text = backend.generate(prompt, params, {});
    CHECK(text == "hello from the model");
    CHECK(backend.last_attempt_count() == 3);
    CHECK(transport_ptr->calls == 3);

    // delays are nondecreasing (exponential doubling)
    REQUIRE(slept.size() == 2);
    CHECK(slept[0] == std::chrono::milliseconds(10));
    CHECK(slept[1] == std::chrono::milliseconds(20));
    CHECK(backend.last_backoffs() == slept);

    // request carried the prompt as one user message
    const auto body = nlohmann::json::parse(transport_ptr->last_body);
    CHECK(body.at("messages").size() == 1);
    CHECK(body["messages"][0].at("role") == "user");
    CHECK(body["messages"][0].at("content") == "say hello");
    CHECK(body.at("seed") == 42);
}

TEST_CASE("remote backend gives up after max attempts") {
    auto transport = std::make_unique<FakeTransport>(
        std::vector<std::optional<backends::HttpResponse>>{std::nullopt, std::nullopt});
    backends::BackendDescriptor descriptor;
    descriptor.id = "remote";
    descriptor.endpoint = "http://localhost:9/v1/chat/completions";
    descriptor.retry.max_attempts = 2;
    backends::RemoteChatBackend backend(descriptor, std::move(transport),
                                        [](std::chrono::milliseconds) {});
    prompts::PromptText prompt{"hi", prompts::RoleTag::Generation, {}};
    try {
        backend.generate(prompt, {}, {});
        FAIL("expected Transport error");
    } catch (const BackendError& e) {
        CHECK(e.kind() == BackendErrorKind::Transport);
    }
}

TEST_CASE("client errors are not retried") {
    auto transport = std::make_unique<FakeTransport>(
        std::vector<std::optional<backends::HttpResponse>>{
            backends::HttpResponse{400, "bad request"}});
    auto* transport_ptr = transport.get();
    backends::BackendDescriptor descriptor;
    descriptor.endpoint = "http://localhost:9/v1/chat/completions";
    descriptor.retry.max_attempts = 3;
    backends::RemoteChatBackend backend(descriptor, std::move(transport),
                                        [](std::chrono::milliseconds) {});
    prompts::PromptText prompt{"hi", prompts::RoleTag::Generation, {}};
    CHECK_THROWS_AS(backend.generate(prompt, {}, {}), BackendError);
    CHECK(transport_ptr->calls == 1);
}

TEST_CASE("oversized prompts are rejected before any request") {
    auto transport = std::make_unique<FakeTransport>(
        std::vector<std::optional<backends::HttpResponse>>{});
    auto* transport_ptr = transport.get();
    backends::BackendDescriptor descriptor;
    descriptor.endpoint = "http://localhost:9/v1/chat/completions";
    descriptor.input_token_limit = 100;
    backends::RemoteChatBackend backend(descriptor, std::move(transport),
                                        [](std::chrono::milliseconds) {});
    prompts::PromptText prompt{word_text(90), prompts::RoleTag::Generation, {}};
    // 90 words * 1.3 = 117 estimated tokens > 100
    try {
        backend.generate(prompt, {}, {});
        FAIL("expected TruncationRisk");
    } catch (const BackendError& e) {
        CHECK(e.kind() == BackendErrorKind::TruncationRisk);
    }
    CHECK(transport_ptr->calls == 0);
}

TEST_CASE("empty model output is an error") {
    auto transport = std::make_unique<FakeTransport>(
        std::vector<std::optional<backends::HttpResponse>>{ok_chat("")});
    backends::BackendDescriptor descriptor;
    descriptor.endpoint = "http://localhost:9/v1/chat/completions";
    backends::RemoteChatBackend backend(descriptor, std::move(transport),
                                        [](std::chrono::milliseconds) {});
    prompts::PromptText prompt{"hi", prompts::RoleTag::Generation, {}};
    try {
        backend.generate(prompt, {}, {});
        FAIL("expected EmptyOutput");
    } catch (const BackendError& e) {
        CHECK(e.kind() == BackendErrorKind::EmptyOutput);
    }
}

TEST_CASE("mock embeddings are deterministic unit vectors") {
    backends::MockEmbeddingBackend backend(7, 32);
    const auto vectors = backend.embed_tokens("a b a");
    REQUIRE(vectors.size() == 3);
    CHECK(vectors[0].first == "a");
    CHECK(vectors[2].first == "a");
    CHECK(vectors[0].second == vectors[2].second);
    CHECK(vectors[0].second != vectors[1].second);
    for (const auto& [token, vec] : vectors) {
        double norm_sq = 0.0;
        for (double v : vec) norm_sq += v * v;
        CHECK(std::sqrt(norm_sq) == doctest::Approx(1.0).epsilon(1e-9));
    }

    backends::MockEmbeddingBackend same_seed(7, 32);
    CHECK(same_seed.embed_tokens("a b a") == vectors);
    backends::MockEmbeddingBackend other_seed(8, 32);
    CHECK(other_seed.embed_tokens("a b a") != vectors);
}

TEST_CASE("embedding empty text is rejected") {
    backends::MockEmbeddingBackend backend(7, 32);
    CHECK_THROWS_AS(backend.embed_tokens(""), BackendError);
}

TEST_CASE("remote embeddings normalize one vector per token") {
    nlohmann::json response;
    response["data"] = nlohmann::json::array(
        {{{"embedding", {3.0, 4.0}}}, {{"embedding", {0.0, 2.0}}}});
    auto transport = std::make_unique<FakeTransport>(
        std::vector<std::optional<backends::HttpResponse>>{
            backends::HttpResponse{200, response.dump()}});
    backends::BackendDescriptor descriptor;
    descriptor.endpoint = "http://localhost:9/v1/embeddings";
    descriptor.model = "embed-model";
    backends::RemoteEmbeddingBackend backend(descriptor, std::move(transport),
                                             [](std::chrono::milliseconds) {});
    const auto vectors = backend.embed_tokens("alpha beta");
    REQUIRE(vectors.size() == 2);
    CHECK(vectors[0].first == "alpha");
    CHECK(vectors[0].second[0] == doctest::Approx(0.6));
    CHECK(vectors[0].second[1] == doctest::Approx(0.8));
    CHECK(vectors[1].second[1] == doctest::Approx(1.0));
}

TEST_CASE("remote embeddings reject a count mismatch") {
    nlohmann::json response;
    response["data"] = nlohmann::json::array({{{"embedding", {1.0, 0.0}}}});
    auto transport = std::make_unique<FakeTransport>(
        std::vector<std::optional<backends::HttpResponse>>{
            backends::HttpResponse{200, response.dump()}});
    backends::BackendDescriptor descriptor;
    descriptor.endpoint = "http://localhost:9/v1/embeddings";
    backends::RemoteEmbeddingBackend backend(descriptor, std::move(transport),
                                             [](std::chrono::milliseconds) {});
    try {
        backend.embed_tokens("alpha beta");
        FAIL("expected Transport error");
    } catch (const BackendError& e) {
        CHECK(e.kind() == BackendErrorKind::Transport);
    }
}

TEST_CASE("backend kind names round-trip") {
    using backends::BackendKind;
    for (auto kind : {BackendKind::RemoteChat, BackendKind::ScriptedMock,
                      BackendKind::HeuristicMock, BackendKind::EmbeddingRemote,
                      BackendKind::EmbeddingMock})
        CHECK(backends::backend_kind_from_string(backends::to_string(kind)) == kind);
    CHECK_THROWS_AS(backends::backend_kind_from_string("local_gpu"), BackendError);
}

}  // TEST_SUITE
