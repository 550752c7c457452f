#include "lift/textualize.hpp"

#include <algorithm>
#include <fstream>

#include "lift/assets.hpp"
#include "lift/error.hpp"
#include "lift/json_extract.hpp"
#include "lift/text_util.hpp"

namespace lift {

namespace {

std::string render_user(const TrajectoryRecord& record, std::string_view format) {
    std::string fmt(trim(format));
    return substitute(asset("prompts/user.txt"), {{"variables", render_variables_block(record)}, {"format", fmt}});
}

std::string render_system(std::string_view tmpl, const KnowledgeBase& kb, KnowledgeMode mode) {
    return substitute(tmpl, {{"knowledge", render_knowledge(kb, mode)}});
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; }

}  // namespace

std::string_view to_string(Task task) noexcept { return task == Task::predict ? "predict" : "interpret"; }

std::string render_knowledge(const KnowledgeBase& kb, KnowledgeMode mode) {
    auto doc = to_json(kb);
    if (mode == KnowledgeMode::definitions_only) {
        for (auto& [name, entry] : doc["variables"].items()) {
            nlohmann::ordered_json slim;
            slim["definition"] = entry["definition"];
            entry = std::move(slim);
        }
    }
    return doc.dump(2);
}

std::string render_variables_block(const TrajectoryRecord& record) {
    std::string out;
    const auto specs = catalog();
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& spec = specs[i];
        out += "- ";
        out += spec.name;
        out += " = ";
        out += format_fixed(record.features(static_cast<Eigen::Index>(i)), 2);
        out += ' ';
        out += spec.units;
        out += ": ";
        out += spec.description;
        if (i + 1 < specs.size()) out += '\n';
    }
    return out;
}

PromptRenderer::PromptRenderer(const KnowledgeBase& kb, KnowledgeMode mode) {
    const auto report = validate_kb(kb);
    if (!report.passed) throw Error(ErrorKind::validation, "cannot render prompts: " + report.summary());
    task1_system_ = render_system(asset("prompts/task1_system.txt"), kb, mode);
    task2_system_ = render_system(asset("prompts/task2_system.txt"), kb, mode);
}

PromptBundle PromptRenderer::task1(const TrajectoryRecord& record) const {
    return {task1_system_, render_user(record, asset("prompts/task1_format.txt")), Task::predict};
}

PromptBundle PromptRenderer::task2(const TrajectoryRecord& record) const {
    if (record.risk_label != 1)
        throw Error(ErrorKind::precondition,
                    "interpretation prompts are defined for high-risk trips only ('" + record.trajectory_id + "')");
    return {task2_system_, render_user(record, asset("prompts/task2_format.txt")), Task::interpret};
}

PromptBundle render_task1(const TrajectoryRecord& record, const KnowledgeBase& kb, KnowledgeMode mode) {
    return PromptRenderer(kb, mode).task1(record);
}

PromptBundle render_task2(const TrajectoryRecord& record, const KnowledgeBase& kb, KnowledgeMode mode) {
    if (record.risk_label != 1)
        throw Error(ErrorKind::precondition,
                    "interpretation prompts are defined for high-risk trips only ('" + record.trajectory_id + "')");
    return PromptRenderer(kb, mode).task2(record);
}

PredictionOutcome parse_task1(std::string_view raw) {
    const std::string lower = to_lower_ascii(raw);
    std::size_t pos = lower.find("risk");
    while (pos != std::string::npos) {
        std::size_t i = pos + 4;
        while (i < lower.size() && is_space(lower[i])) ++i;
        if (i < lower.size() && lower[i] == ':') {
            ++i;
            while (i < lower.size() && is_space(lower[i])) ++i;
            const std::string_view rest = std::string_view(lower).substr(i);
            if (rest.starts_with("high")) return {1, std::string(raw)};
            if (rest.starts_with("low")) return {0, std::string(raw)};
        }
        pos = lower.find("risk", pos + 1);
    }
    throw Error(ErrorKind::parse, "unparseable prediction: no 'RISK: HIGH|LOW' found");
}

InterpretationOutcome parse_task2(std::string_view raw) {
    const auto doc = extract_json_object(raw, [](const nlohmann::json& j) { return j.contains("key_variables"); });
    if (!doc) throw Error(ErrorKind::parse, "unparseable interpretation: no JSON object with key_variables");

    InterpretationOutcome out;
    out.raw_text = std::string(raw);

    const auto& vars = doc->at("key_variables");
    if (vars.is_array()) {
        for (const auto& v : vars) {
            if (v.is_string() && is_catalog_variable(v.get_ref<const std::string&>())) {
                out.key_variables.insert(v.get<std::string>());
            } else {
                ++out.dropped_names;
            }
        }
    }
    if (doc->contains("key_combinations") && doc->at("key_combinations").is_array()) {
        for (const auto& combo : doc->at("key_combinations")) {
            if (!combo.is_array()) continue;
            std::set<std::string> members;
            for (const auto& v : combo) {
                if (v.is_string() && is_catalog_variable(v.get_ref<const std::string&>())) {
                    members.insert(v.get<std::string>());
                } else {
                    ++out.dropped_names;
                }
            }
            if (members.size() >= 2) out.key_combinations.insert(Combination(members.begin(), members.end()));
        }
    }
    if (out.key_variables.empty())
        throw Error(ErrorKind::parse, "unparseable interpretation: no catalog variable among key_variables");
    return out;
}

std::string combination_label(const Combination& combination) { return join(combination, "+"); }

std::string task1_answer(int label) { return label == 1 ? "RISK: HIGH" : "RISK: LOW"; }

SftExample make_sft_example(const TrajectoryRecord& record, const PromptRenderer& renderer) {
    auto bundle = renderer.task1(record);
    return {std::move(bundle.system_text), std::move(bundle.user_text), task1_answer(record.risk_label)};
}

std::size_t export_sft(const Dataset& train, const KnowledgeBase& kb, const std::filesystem::path& path,
                       KnowledgeMode mode) {
    if (train.empty()) throw Error(ErrorKind::precondition, "export_sft: training set is empty");
    const PromptRenderer renderer(kb, mode);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    std::size_t lines = 0;
    for (const auto& record : train.records()) {
        const auto example = make_sft_example(record, renderer);
        nlohmann::ordered_json line;
        line["system"] = example.system;
        line["user"] = example.user;
        line["assistant"] = example.assistant;
        out << line.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
        ++lines;
    }
    out.flush();
    if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
    return lines;
}

}  // namespace lift
