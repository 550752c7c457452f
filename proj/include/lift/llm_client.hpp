#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lift/error.hpp"

namespace lift {

struct ChatRequest {
    std::string system;
    std::string user;
    double temperature = 0.0;
    std::size_t max_tokens = 512;
    std::optional<std::int64_t> seed;
    /// Sample identifier carried into logs; never sent to the server.
    std::string correlation_id;

    /// Throws usage error unless temperature is in [0, 2] and max_tokens >= 1.
    void validate() const;
};

struct EndpointConfig {
    std::string base_url = "http://127.0.0.1:8000/v1";
    std::string model_name = "default";
    std::optional<std::string> api_key;
    std::chrono::milliseconds timeout{60'000};
    std::size_t max_in_flight = 4;
    std::size_t max_retries = 3;
    std::chrono::milliseconds retry_base_delay{500};
    std::chrono::milliseconds retry_max_delay{8'000};

    void validate() const;
};

/// Anything that turns a chat request into the assistant's reply text.
/// Implementations must be safe to call from several threads at once.
class ChatClient {
public:
    virtual ~ChatClient() = default;

    /// Throws lift::Error (transport, request or parse kind) on failure.
    virtual std::string chat(const ChatRequest& request) = 0;

    /// Upper bound on concurrent chat() calls issued by chat_batch.
    virtual std::size_t max_in_flight() const noexcept { return 1; }
};

/// Wait before retry number `attempt` (0-based): base * 2^attempt with
/// +-20% jitter, capped at retry_max_delay.
std::chrono::milliseconds backoff_delay(const EndpointConfig& cfg, std::size_t attempt, double jitter_unit);

/// OpenAI-compatible POST {base_url}/chat/completions.
class HttpChatClient final : public ChatClient {
public:
    explicit HttpChatClient(EndpointConfig cfg);

    std::string chat(const ChatRequest& request) override;
    std::size_t max_in_flight() const noexcept override { return cfg_.max_in_flight; }

    const EndpointConfig& config() const noexcept { return cfg_; }
    /// Total HTTP attempts made so far, retries included.
    std::size_t attempts() const noexcept { return attempts_.load(); }

    nlohmann::json request_body(const ChatRequest& request) const;

private:
    EndpointConfig cfg_;
    std::string origin_;  // scheme://host[:port]
    std::string path_;    // path prefix + /chat/completions
    std::atomic<std::size_t> attempts_{0};
};

/// One-shot convenience over HttpChatClient.
std::string chat(const EndpointConfig& cfg, const ChatRequest& request);

struct ChatResult {
    bool ok = false;
    std::string text;
    ErrorKind error_kind = ErrorKind::transport;
    std::string error;
};

/// Runs every request with at most client.max_in_flight() in flight.
/// result[i] always belongs to requests[i]; failures stay local to their slot.
std::vector<ChatResult> chat_batch(ChatClient& client, const std::vector<ChatRequest>& requests);

struct MockAlternative {
    std::string text;
    double weight = 1.0;
};

struct MockRule {
    std::string contains;                // substring of the user text, if nonempty
    std::optional<std::string> pattern;  // ECMAScript regex searched in the user text
    std::vector<MockAlternative> responses;
    std::optional<ErrorKind> fail_with;  // simulate a failed call instead of answering

    bool matches(const std::string& user) const;

    std::optional<std::regex> compiled;
};

/// Scripted offline backend. The first matching rule answers. A rule with
/// several weighted alternatives samples one from softmax(log w / T), seeded
/// by the request seed and prompt text; at T = 0 the heaviest wins.
/// Identical (script, request) pairs always yield identical bytes.
struct MockScript {
    std::vector<MockRule> rules;
    std::string default_response;
    std::chrono::milliseconds max_latency{0};

    /// {"rules": [{"contains"|"pattern": ..., "response": "..." |
    ///   "responses": [{"text": ..., "weight": w}], "fail": "transport"}],
    ///  "default_response": "...", "max_latency_ms": n}
    static MockScript from_json(const nlohmann::json& doc);
    static MockScript load(const std::filesystem::path& path);

    /// Index of the first matching rule.
    std::optional<std::size_t> match(const std::string& user) const;
    std::string respond(const ChatRequest& request) const;
};

class MockChatClient final : public ChatClient {
public:
    explicit MockChatClient(MockScript script, std::size_t max_in_flight = 4);

    std::string chat(const ChatRequest& request) override;
    std::size_t max_in_flight() const noexcept override { return max_in_flight_; }

    std::size_t calls() const noexcept { return calls_.load(); }
    std::size_t peak_in_flight() const noexcept { return peak_.load(); }
    const MockScript& script() const noexcept { return script_; }

private:
    MockScript script_;
    std::size_t max_in_flight_;
    std::atomic<std::size_t> calls_{0};
    std::atomic<std::size_t> in_flight_{0};
    std::atomic<std::size_t> peak_{0};
};

}  // namespace lift
