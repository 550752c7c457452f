#include "lift/knowledge_base.hpp"

#include <fstream>

#include "lift/assets.hpp"
#include "lift/catalog.hpp"
#include "lift/error.hpp"
#include "lift/text_util.hpp"

namespace lift {

namespace {

constexpr std::array<std::string_view, 3> kFields{"definition", "impact", "combination_impact"};

const std::string& field_of(const KnowledgeEntry& e, std::string_view field) {
    if (field == "definition") return e.definition;
    if (field == "impact") return e.impact;
    return e.combination_impact;
}

}  // namespace

std::string_view asset(std::string_view name) {
    if (auto a = find_asset(name)) return *a;
    throw Error(ErrorKind::io, "missing built-in asset " + std::string(name));
}

std::string KbValidationReport::summary() const {
    std::string out = (passed ? "pass" : "fail");
    out += ", " + std::to_string(filled_cells) + "/" + std::to_string(expected_cells) + " cells";
    for (const auto& issue : issues) {
        out += "; " + issue.variable;
        if (!issue.field.empty()) out += "." + issue.field;
        out += ": " + issue.problem;
    }
    return out;
}

KbValidationReport validate_kb(const KnowledgeBase& kb) {
    KbValidationReport report;
    report.expected_cells = kNumVariables * kFields.size();
    for (const auto& spec : catalog()) {
        const std::string name(spec.name);
        const auto it = kb.variables.find(name);
        if (it == kb.variables.end()) {
            report.issues.push_back({name, "", "missing variable"});
            continue;
        }
        for (auto field : kFields) {
            if (trim(field_of(it->second, field)).empty()) {
                report.issues.push_back({name, std::string(field), "empty"});
            } else {
                ++report.filled_cells;
            }
        }
    }
    for (const auto& [name, entry] : kb.variables) {
        if (!is_catalog_variable(name)) report.issues.push_back({name, "", "surplus variable not in catalog"});
    }
    report.passed = report.issues.empty();
    return report;
}

void require_valid(const KnowledgeBase& kb) {
    const auto report = validate_kb(kb);
    if (!report.passed) throw Error(ErrorKind::validation, "knowledge base invalid: " + report.summary());
}

nlohmann::ordered_json to_json(const KnowledgeBase& kb) {
    nlohmann::ordered_json vars = nlohmann::ordered_json::object();
    auto emit = [&](const std::string& name, const KnowledgeEntry& e) {
        nlohmann::ordered_json entry;
        entry["definition"] = e.definition;
        entry["impact"] = e.impact;
        entry["combination_impact"] = e.combination_impact;
        vars[name] = std::move(entry);
    };
    for (const auto& spec : catalog()) {
        const std::string name(spec.name);
        if (auto it = kb.variables.find(name); it != kb.variables.end()) emit(name, it->second);
    }
    for (const auto& [name, entry] : kb.variables) {
        if (!is_catalog_variable(name)) emit(name, entry);
    }
    nlohmann::ordered_json doc;
    doc["variables"] = std::move(vars);
    return doc;
}

KnowledgeBase kb_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("variables") || !doc.at("variables").is_object())
        throw Error(ErrorKind::validation, "knowledge base JSON must be an object with a \"variables\" object");
    KnowledgeBase kb;
    for (const auto& [name, value] : doc.at("variables").items()) {
        if (!value.is_object())
            throw Error(ErrorKind::validation, "knowledge base entry '" + name + "' is not an object");
        KnowledgeEntry e;
        auto text = [&](const char* key) -> std::string {
            if (!value.contains(key)) return {};
            const auto& v = value.at(key);
            if (v.is_string()) return v.get<std::string>();
            if (v.is_null()) return {};
            return v.dump();
        };
        e.definition = text("definition");
        e.impact = text("impact");
        e.combination_impact = text("combination_impact");
        kb.variables.emplace(name, std::move(e));
    }
    return kb;
}

KnowledgeBase load_kb(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path.string()));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::validation, "knowledge base " + path.string() + ": " + e.what());
    }
    return kb_from_json(doc);
}

void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out << to_json(kb).dump(2) << '\n';
    if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

const KnowledgeBase& reference_kb() {
    static const KnowledgeBase kb = kb_from_json(nlohmann::json::parse(asset("kb/reference_kb.json")));
    return kb;
}

}  // namespace lift
