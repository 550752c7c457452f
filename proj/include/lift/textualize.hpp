#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "lift/dataset.hpp"
#include "lift/knowledge_base.hpp"

namespace lift {

enum class Task { predict, interpret };

std::string_view to_string(Task task) noexcept;

/// How much of the knowledge base enters the system prompt. The ablation
/// setting keeps only the variable definitions.
enum class KnowledgeMode { full, definitions_only };

/// Rendered model input: shared system prefix plus per-sample user text.
struct PromptBundle {
    std::string system_text;
    std::string user_text;
    Task task = Task::predict;

    bool operator==(const PromptBundle&) const = default;
};

/// Renders prompts for a fixed knowledge base. The system text for each
/// task is computed once, so every sample shares a byte-identical prefix
/// that the serving stack can cache.
class PromptRenderer {
public:
    /// Throws validation error if kb does not cover the catalog.
    explicit PromptRenderer(const KnowledgeBase& kb, KnowledgeMode mode = KnowledgeMode::full);

    PromptBundle task1(const TrajectoryRecord& record) const;
    /// Precondition: record.risk_label == 1.
    PromptBundle task2(const TrajectoryRecord& record) const;

    const std::string& system_text(Task task) const noexcept {
        return task == Task::predict ? task1_system_ : task2_system_;
    }

private:
    std::string task1_system_;
    std::string task2_system_;
};

PromptBundle render_task1(const TrajectoryRecord& record, const KnowledgeBase& kb,
                          KnowledgeMode mode = KnowledgeMode::full);
PromptBundle render_task2(const TrajectoryRecord& record, const KnowledgeBase& kb,
                          KnowledgeMode mode = KnowledgeMode::full);

/// The "name = value unit: definition" lines, values to two decimals.
std::string render_variables_block(const TrajectoryRecord& record);

/// Knowledge base as it appears inside the system prompt.
std::string render_knowledge(const KnowledgeBase& kb, KnowledgeMode mode);

struct PredictionOutcome {
    int label = 0;
    std::string raw_text;
};

/// Variable names sorted ascending, no duplicates.
using Combination = std::vector<std::string>;

struct InterpretationOutcome {
    std::set<std::string> key_variables;
    std::set<Combination> key_combinations;
    std::size_t dropped_names = 0;  // names outside the catalog, discarded
    std::string raw_text;
};

/// First case-insensitive "RISK: HIGH|LOW" in the text. Throws parse error
/// when there is none.
PredictionOutcome parse_task1(std::string_view raw);

/// Embedded {"key_variables": [...], "key_combinations": [[...], ...]}.
/// Throws parse error when no such object exists or no catalog variable
/// survives filtering.
InterpretationOutcome parse_task2(std::string_view raw);

std::string combination_label(const Combination& combination);

/// Gold answer for a label, in the grammar parse_task1 accepts.
std::string task1_answer(int label);

struct SftExample {
    std::string system;
    std::string user;
    std::string assistant;
};

SftExample make_sft_example(const TrajectoryRecord& record, const PromptRenderer& renderer);

/// One {"system","user","assistant"} object per line. Returns the line count.
std::size_t export_sft(const Dataset& train, const KnowledgeBase& kb, const std::filesystem::path& path,
                       KnowledgeMode mode = KnowledgeMode::full);

}  // namespace lift
