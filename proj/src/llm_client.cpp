#include "lift/llm_client.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "lift/parallel.hpp"
#include "lift/rng.hpp"
#include "lift/text_util.hpp"

namespace lift {

namespace {

std::string server_message(const std::string& body) {
    auto doc = nlohmann::json::parse(body, nullptr, false);
    if (!doc.is_discarded() && doc.is_object() && doc.contains("error")) {
        const auto& err = doc.at("error");
        if (err.is_object() && err.contains("message") && err.at("message").is_string())
            return err.at("message").get<std::string>();
        if (err.is_string()) return err.get<std::string>();
    }
    return body.substr(0, 500);
}

}  // namespace

void ChatRequest::validate() const {
    if (!(temperature >= 0.0 && temperature <= 2.0))
        throw Error(ErrorKind::usage, "temperature must lie in [0, 2], got " + format_shortest(temperature));
    if (max_tokens < 1) throw Error(ErrorKind::usage, "max_tokens must be at least 1");
}

void EndpointConfig::validate() const {
    if (max_in_flight < 1) throw Error(ErrorKind::usage, "endpoint.max_in_flight must be at least 1");
    if (timeout.count() <= 0) throw Error(ErrorKind::usage, "endpoint.timeout must be positive");
    if (base_url.empty()) throw Error(ErrorKind::usage, "endpoint.base_url is empty");
}

std::chrono::milliseconds backoff_delay(const EndpointConfig& cfg, std::size_t attempt, double jitter_unit) {
    const double base = static_cast<double>(cfg.retry_base_delay.count()) * std::ldexp(1.0, static_cast<int>(std::min<std::size_t>(attempt, 30)));
    const double jitter = 1.0 + 0.2 * (2.0 * std::clamp(jitter_unit, 0.0, 1.0) - 1.0);
    const double capped = std::min(base * jitter, static_cast<double>(cfg.retry_max_delay.count()));
    return std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(capped)));
}

HttpChatClient::HttpChatClient(EndpointConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto scheme_end = cfg_.base_url.find("://");
    if (scheme_end == std::string::npos)
        throw Error(ErrorKind::usage, "endpoint.base_url needs a scheme: " + cfg_.base_url);
    const auto path_start = cfg_.base_url.find('/', scheme_end + 3);
    origin_ = cfg_.base_url.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? "" : cfg_.base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    path_ = prefix + "/chat/completions";
}

nlohmann::json HttpChatClient::request_body(const ChatRequest& request) const {
    nlohmann::json body;
    body["model"] = cfg_.model_name;
    body["messages"] = nlohmann::json::array({
        {{"role", "system"}, {"content", request.system}},
        {{"role", "user"}, {"content", request.user}},
    });
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_tokens;
    if (request.seed) body["seed"] = *request.seed;
    return body;
}

std::string HttpChatClient::chat(const ChatRequest& request) {
    request.validate();
    const std::string payload =
        request_body(request).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    const auto& id = request.correlation_id;

    httplib::Headers headers;
    if (cfg_.api_key) headers.emplace("Authorization", "Bearer " + *cfg_.api_key);

    Rng jitter(derive_seed(fnv1a(id), fnv1a(request.user)));
    std::string last_error;
    for (std::size_t attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(backoff_delay(cfg_, attempt - 1, jitter.uniform()));
        ++attempts_;

        httplib::Client client(origin_);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());

        spdlog::debug("[{}] POST {}{} attempt {} ({} bytes)", id, origin_, path_, attempt + 1, payload.size());
        auto res = client.Post(path_, headers, payload, "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            spdlog::warn("[{}] {}", id, last_error);
            continue;
        }
        if (res->status >= 500) {
            last_error = "server error " + std::to_string(res->status) + ": " + server_message(res->body);
            spdlog::warn("[{}] {}", id, last_error);
            continue;
        }
        if (res->status >= 400)
            throw Error(ErrorKind::request,
                        "request rejected (" + std::to_string(res->status) + "): " + server_message(res->body));

        auto doc = nlohmann::json::parse(res->body, nullptr, false);
        if (doc.is_discarded() || !doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty())
            throw Error(ErrorKind::parse, "malformed completion response: " + res->body.substr(0, 200));
        const auto& message = doc["choices"][0]["message"];
        if (!message.is_object() || !message.contains("content") || !message["content"].is_string())
            throw Error(ErrorKind::parse, "completion response lacks choices[0].message.content");
        auto content = message["content"].get<std::string>();
        spdlog::debug("[{}] response {} bytes", id, content.size());
        return content;
    }
    throw Error(ErrorKind::transport, "gave up after " + std::to_string(cfg_.max_retries + 1) +
                                          " attempt(s) to " + origin_ + path_ + ": " + last_error);
}

std::string chat(const EndpointConfig& cfg, const ChatRequest& request) {
    HttpChatClient client(cfg);
    return client.chat(request);
}

std::vector<ChatResult> chat_batch(ChatClient& client, const std::vector<ChatRequest>& requests) {
    std::vector<ChatResult> results(requests.size());
    parallel_for(requests.size(), client.max_in_flight(), [&](std::size_t i) {
        auto& slot = results[i];
        try {
            slot.text = client.chat(requests[i]);
            slot.ok = true;
        } catch (const Error& e) {
            slot.error_kind = e.kind();
            slot.error = e.what();
        } catch (const std::exception& e) {
            slot.error_kind = ErrorKind::transport;
            slot.error = e.what();
        }
    });
    return results;
}

bool MockRule::matches(const std::string& user) const {
    if (!contains.empty() && user.find(contains) == std::string::npos) return false;
    if (compiled && !std::regex_search(user, *compiled)) return false;
    return true;
}

MockScript MockScript::from_json(const nlohmann::json& doc) {
    MockScript script;
    try {
        if (doc.contains("rules")) {
            for (const auto& r : doc.at("rules")) {
                MockRule rule;
                rule.contains = r.value("contains", std::string{});
                if (r.contains("pattern")) {
                    rule.pattern = r.at("pattern").get<std::string>();
                    rule.compiled.emplace(*rule.pattern, std::regex::ECMAScript | std::regex::optimize);
                }
                if (r.contains("response")) rule.responses.push_back({r.at("response").get<std::string>(), 1.0});
                if (r.contains("responses")) {
                    for (const auto& alt : r.at("responses")) {
                        if (alt.is_string()) {
                            rule.responses.push_back({alt.get<std::string>(), 1.0});
                        } else {
                            rule.responses.push_back({alt.at("text").get<std::string>(), alt.value("weight", 1.0)});
                        }
                    }
                }
                if (r.contains("fail")) {
                    const auto kind = r.at("fail").get<std::string>();
                    rule.fail_with = kind == "request" ? ErrorKind::request : ErrorKind::transport;
                }
                if (rule.responses.empty() && !rule.fail_with)
                    throw Error(ErrorKind::validation, "mock rule without response");
                for (const auto& alt : rule.responses) {
                    if (!(alt.weight > 0.0)) throw Error(ErrorKind::validation, "mock weights must be positive");
                }
                script.rules.push_back(std::move(rule));
            }
        }
        script.default_response = doc.value("default_response", std::string{});
        script.max_latency = std::chrono::milliseconds(doc.value("max_latency_ms", 0));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::validation, std::string("mock script: ") + e.what());
    } catch (const std::regex_error& e) {
        throw Error(ErrorKind::validation, std::string("mock script pattern: ") + e.what());
    }
    return script;
}

MockScript MockScript::load(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path.string()));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::validation, "mock script " + path.string() + ": " + e.what());
    }
    return from_json(doc);
}

std::optional<std::size_t> MockScript::match(const std::string& user) const {
    for (std::size_t i = 0; i < rules.size(); ++i) {
        if (rules[i].matches(user)) return i;
    }
    return std::nullopt;
}

std::string MockScript::respond(const ChatRequest& request) const {
    const auto hit = match(request.user);
    if (!hit) return default_response;
    const auto& rule = rules[*hit];
    if (rule.fail_with) throw Error(*rule.fail_with, "mock: scripted failure for rule " + std::to_string(*hit));

    const auto& alts = rule.responses;
    if (alts.size() == 1) return alts.front().text;
    if (request.temperature <= 0.0) {
        return std::max_element(alts.begin(), alts.end(),
                                [](const MockAlternative& a, const MockAlternative& b) { return a.weight < b.weight; })
            ->text;
    }

    std::vector<double> logits(alts.size());
    for (std::size_t i = 0; i < alts.size(); ++i) logits[i] = std::log(alts[i].weight) / request.temperature;
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (auto& l : logits) {
        l = std::exp(l - top);
        total += l;
    }
    const auto stream = fnv1a(request.system, fnv1a(request.user));
    Rng rng(derive_seed(static_cast<std::uint64_t>(request.seed.value_or(0)), stream));
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < alts.size(); ++i) {
        if (u < logits[i]) return alts[i].text;
        u -= logits[i];
    }
    return alts.back().text;
}

MockChatClient::MockChatClient(MockScript script, std::size_t max_in_flight)
    : script_(std::move(script)), max_in_flight_(std::max<std::size_t>(1, max_in_flight)) {}

std::string MockChatClient::chat(const ChatRequest& request) {
    request.validate();
    ++calls_;
    const std::size_t now = ++in_flight_;
    std::size_t peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
    struct Leave {
        std::atomic<std::size_t>& counter;
        ~Leave() { --counter; }
    } leave{in_flight_};

    if (script_.max_latency.count() > 0) {
        const auto h = fnv1a(request.user) % static_cast<std::uint64_t>(script_.max_latency.count() + 1);
        std::this_thread::sleep_for(std::chrono::milliseconds(h));
    }
    spdlog::debug("[{}] mock request", request.correlation_id);
    return script_.respond(request);
}

}  // namespace lift
