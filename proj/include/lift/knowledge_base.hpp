#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace lift {

struct KnowledgeEntry {
    std::string definition;
    std::string impact;
    std::string combination_impact;

    bool operator==(const KnowledgeEntry&) const = default;
};

/// Per-variable literature knowledge injected into prompts. Keys are variable
/// names; a valid base covers exactly the catalog with every field filled.
struct KnowledgeBase {
    std::map<std::string, KnowledgeEntry> variables;

    bool operator==(const KnowledgeBase&) const = default;
};

struct KbIssue {
    std::string variable;
    std::string field;  // empty for missing/surplus keys
    std::string problem;
};

struct KbValidationReport {
    bool passed = false;
    std::size_t filled_cells = 0;
    std::size_t expected_cells = 0;
    std::vector<KbIssue> issues;

    std::string summary() const;
};

KbValidationReport validate_kb(const KnowledgeBase& kb);

/// Throws validation error carrying the report summary unless kb passes.
void require_valid(const KnowledgeBase& kb);

/// {"variables": {...}} with catalog variables first, in catalog order.
nlohmann::ordered_json to_json(const KnowledgeBase& kb);

/// Lenient structural parse: missing fields become empty strings so that
/// validate_kb can name them. Throws validation error if the shape is wrong.
KnowledgeBase kb_from_json(const nlohmann::json& doc);

KnowledgeBase load_kb(const std::filesystem::path& path);
void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path);

/// Knowledge base bundled with the project (literature-derived entries).
const KnowledgeBase& reference_kb();

}  // namespace lift
