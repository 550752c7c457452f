#include "lift/litpipe.hpp"

#include <algorithm>
#include <fstream>

#include <spdlog/spdlog.h>

#include "lift/assets.hpp"
#include "lift/catalog.hpp"
#include "lift/error.hpp"
#include "lift/json_extract.hpp"
#include "lift/parallel.hpp"
#include "lift/text_util.hpp"

namespace lift {

namespace {

std::string text_field(const nlohmann::json& doc, const char* key) {
    if (!doc.contains(key)) return {};
    const auto& v = doc.at(key);
    if (v.is_string()) return v.get<std::string>();
    if (v.is_null()) return {};
    return v.dump();
}

// Cuts the tail so that roughly `budget` tokens remain, without splitting a
// UTF-8 sequence.
std::string truncate_to_budget(const std::string& text, std::size_t budget) {
    const std::size_t keep_points = budget * 4;
    std::size_t points = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) {
            if (points == keep_points) return text.substr(0, i);
            ++points;
        }
    }
    return text;
}

std::optional<PaperSummary> parse_summary(const std::string& raw, const std::string& doc_id) {
    const auto doc = extract_json_object(raw, [](const nlohmann::json& j) {
        return j.contains("relevant") && j.at("relevant").is_boolean();
    });
    if (!doc) return std::nullopt;

    PaperSummary s;
    s.doc_id = doc_id;
    s.relevant = doc->at("relevant").get<bool>();
    s.hypotheses = text_field(*doc, "hypotheses");
    s.data_conditions = text_field(*doc, "data_conditions");
    s.conclusion = text_field(*doc, "conclusion");
    if (doc->contains("factors") && doc->at("factors").is_array()) {
        for (const auto& f : doc->at("factors")) {
            std::string factor = f.is_string() ? f.get<std::string>() : f.dump();
            if (!trim(factor).empty()) s.factors.push_back(std::move(factor));
        }
    }
    if (s.relevant && s.factors.empty()) return std::nullopt;
    return s;
}

std::string definitions_block() {
    std::string out;
    for (const auto& spec : catalog()) {
        out += "- ";
        out += spec.name;
        out += " (";
        out += to_string(spec.group);
        out += ", ";
        out += spec.units;
        out += "): ";
        out += spec.description;
        out += '\n';
    }
    if (!out.empty()) out.pop_back();
    return out;
}

}  // namespace

std::size_t estimate_tokens(std::string_view text) noexcept { return (utf8_length(text) + 3) / 4; }

IngestResult ingest_markdown(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec))
        throw Error(ErrorKind::io, "corpus directory does not exist: " + dir.string());

    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
        if (entry.path().extension() == ".md" && !entry.is_directory()) files.push_back(entry.path());
    }
    if (ec) throw Error(ErrorKind::io, "cannot list " + dir.string() + ": " + ec.message());
    std::sort(files.begin(), files.end(),
              [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });

    IngestResult result;
    for (const auto& path : files) {
        try {
            PaperDoc doc;
            doc.doc_id = path.stem().string();
            doc.path = path;
            doc.markdown = read_file(path.string());
            if (trim(doc.markdown).empty()) {
                result.errors.push_back({path, "empty document"});
                continue;
            }
            doc.token_estimate = estimate_tokens(doc.markdown);
            result.docs.push_back(std::move(doc));
        } catch (const Error& e) {
            result.errors.push_back({path, e.what()});
        }
    }
    return result;
}

nlohmann::ordered_json to_json(const PaperSummary& summary) {
    nlohmann::ordered_json j;
    j["doc_id"] = summary.doc_id;
    j["relevant"] = summary.relevant;
    j["hypotheses"] = summary.hypotheses;
    j["data_conditions"] = summary.data_conditions;
    j["factors"] = summary.factors;
    j["conclusion"] = summary.conclusion;
    return j;
}

ChatRequest screening_request(const PaperDoc& doc, const ScreeningOptions& opts, bool* truncated) {
    std::string body = doc.markdown;
    const bool cut = doc.token_estimate > opts.context_budget_tokens;
    if (cut) {
        spdlog::warn("document {} has ~{} tokens, truncating tail to {}", doc.doc_id, doc.token_estimate,
                     opts.context_budget_tokens);
        body = truncate_to_budget(body, opts.context_budget_tokens);
    }
    if (truncated) *truncated = cut;

    ChatRequest req;
    req.system = std::string(trim(asset("prompts/screening_system.txt")));
    req.user = substitute(asset("prompts/screening_user.txt"), {{"doc_id", doc.doc_id}, {"markdown", body}});
    req.temperature = opts.temperature;
    req.max_tokens = opts.max_tokens;
    req.correlation_id = "screen:" + doc.doc_id;
    return req;
}

PaperSummary screen_paper(const PaperDoc& doc, ChatClient& llm, const ScreeningOptions& opts) {
    bool truncated = false;
    const auto req = screening_request(doc, opts, &truncated);
    for (std::size_t attempt = 0; attempt <= opts.max_retries; ++attempt) {
        const auto raw = llm.chat(req);
        if (auto summary = parse_summary(raw, doc.doc_id)) {
            summary->truncated = truncated;
            return *summary;
        }
        spdlog::warn("screening answer for {} is malformed (attempt {})", doc.doc_id, attempt + 1);
    }
    PaperSummary failed;
    failed.doc_id = doc.doc_id;
    failed.parse_failed = true;
    failed.truncated = truncated;
    return failed;
}

std::vector<PaperSummary> screen_corpus(const std::vector<PaperDoc>& docs, ChatClient& llm,
                                        const ScreeningOptions& opts) {
    std::vector<PaperSummary> out(docs.size());
    parallel_for(docs.size(), llm.max_in_flight(), [&](std::size_t i) { out[i] = screen_paper(docs[i], llm, opts); });
    return out;
}

ChatRequest aggregation_request(const std::vector<PaperSummary>& summaries, const AggregationOptions& opts) {
    std::string lines;
    for (const auto& s : summaries) {
        if (!s.relevant) continue;
        lines += to_json(s).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
        lines += '\n';
    }
    if (!lines.empty()) lines.pop_back();

    ChatRequest req;
    req.system = std::string(trim(asset("prompts/aggregation_system.txt")));
    req.user = substitute(asset("prompts/aggregation_user.txt"),
                          {{"definitions", definitions_block()}, {"summaries", lines}});
    req.temperature = opts.temperature;
    req.max_tokens = opts.max_tokens;
    req.correlation_id = "aggregate";
    return req;
}

KnowledgeBase aggregate_kb(const std::vector<PaperSummary>& summaries, ChatClient& llm,
                           const AggregationOptions& opts) {
    const auto relevant = std::count_if(summaries.begin(), summaries.end(), [](const auto& s) { return s.relevant; });
    if (relevant == 0) throw Error(ErrorKind::precondition, "aggregate_kb: no relevant paper summaries");

    const auto req = aggregation_request(summaries, opts);
    std::string last_problem = "no answer";
    for (std::size_t attempt = 0; attempt <= opts.max_retries; ++attempt) {
        const auto raw = llm.chat(req);
        const auto doc = extract_json_object(raw, [](const nlohmann::json& j) { return j.contains("variables"); });
        if (!doc) {
            last_problem = "answer contains no JSON object with \"variables\"";
            continue;
        }
        try {
            auto kb = kb_from_json(*doc);
            const auto report = validate_kb(kb);
            if (report.passed) return kb;
            last_problem = report.summary();
        } catch (const Error& e) {
            last_problem = e.what();
        }
        spdlog::warn("knowledge base answer rejected (attempt {}): {}", attempt + 1, last_problem);
    }
    throw Error(ErrorKind::validation, "aggregation error: " + last_problem);
}

}  // namespace lift
