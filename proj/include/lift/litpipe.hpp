#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lift/knowledge_base.hpp"
#include "lift/llm_client.hpp"

namespace lift {

struct PaperDoc {
    std::string doc_id;
    std::filesystem::path path;
    std::string markdown;
    std::size_t token_estimate = 0;
};

/// ceil(code points / 4); the tokenizer lives on the server.
std::size_t estimate_tokens(std::string_view text) noexcept;

struct IngestError {
    std::filesystem::path path;
    std::string message;
};

struct IngestResult {
    std::vector<PaperDoc> docs;
    std::vector<IngestError> errors;
};

/// One document per *.md file, sorted by file name; doc_id is the stem.
/// Unreadable or empty files are reported in errors and skipped.
IngestResult ingest_markdown(const std::filesystem::path& dir);

struct PaperSummary {
    std::string doc_id;
    bool relevant = false;
    std::string hypotheses;
    std::string data_conditions;
    std::vector<std::string> factors;
    std::string conclusion;
    bool parse_failed = false;
    bool truncated = false;
};

nlohmann::ordered_json to_json(const PaperSummary& summary);

struct ScreeningOptions {
    std::size_t context_budget_tokens = 120'000;
    std::size_t max_retries = 2;  // re-asks after a malformed answer
    double temperature = 0.0;
    std::size_t max_tokens = 1024;
};

ChatRequest screening_request(const PaperDoc& doc, const ScreeningOptions& opts, bool* truncated = nullptr);

/// Asks the model whether the paper is relevant and what it found.
/// Transport errors propagate; persistently malformed answers come back
/// as relevant=false with parse_failed set.
PaperSummary screen_paper(const PaperDoc& doc, ChatClient& llm, const ScreeningOptions& opts = {});

/// Screens every document with up to llm.max_in_flight() concurrent calls.
/// Output order equals corpus order.
std::vector<PaperSummary> screen_corpus(const std::vector<PaperDoc>& docs, ChatClient& llm,
                                        const ScreeningOptions& opts = {});

struct AggregationOptions {
    std::size_t max_retries = 2;
    double temperature = 0.0;
    std::size_t max_tokens = 4096;
};

ChatRequest aggregation_request(const std::vector<PaperSummary>& summaries, const AggregationOptions& opts);

/// Condenses the relevant summaries into a per-variable knowledge base.
/// Either returns a base that passes validate_kb or throws validation error
/// listing the gaps of the last attempt.
KnowledgeBase aggregate_kb(const std::vector<PaperSummary>& summaries, ChatClient& llm,
                           const AggregationOptions& opts = {});

}  // namespace lift
