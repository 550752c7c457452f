#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lift/dataset.hpp"
#include "lift/knowledge_base.hpp"
#include "lift/llm_client.hpp"
#include "lift/random_forest.hpp"
#include "lift/textualize.hpp"

namespace lift {

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t tn = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    std::size_t total() const noexcept { return tp + tn + fp + fn; }
    bool operator==(const ConfusionCounts&) const = default;
};

/// Throws usage error on length mismatch or empty input.
ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels);

struct MetricReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    ConfusionCounts counts;
    /// Answers without a readable label; scored as low risk.
    std::size_t unparseable_count = 0;
    /// Calls that failed after retries; also scored as low risk.
    std::size_t transport_errors = 0;
};

/// Precision and recall are 0 when their denominators are 0, and f1 is 0
/// whenever precision + recall is 0.
MetricReport metrics(const ConfusionCounts& counts);

nlohmann::ordered_json to_json(const MetricReport& report);

/// One line of the per-sample JSONL log.
struct SampleLog {
    std::string trajectory_id;
    Task task = Task::predict;
    std::string raw_text;
    nlohmann::ordered_json parsed;  // null when the answer was unusable
    int truth = 0;
    std::size_t trial = 0;
    std::string error;  // transport or parse diagnostics, empty on success
};

nlohmann::ordered_json to_json(const SampleLog& log);
void write_jsonl(const std::vector<SampleLog>& logs, const std::filesystem::path& path);

struct Task1Options {
    double temperature = 0.0;
    KnowledgeMode mode = KnowledgeMode::full;
    std::size_t max_tokens = 64;
    std::uint64_t seed = 0;
};

struct Task1Run {
    MetricReport report;
    std::vector<int> predictions;
    std::vector<SampleLog> log;
};

/// Binary risk prediction over every record of eval_set.
Task1Run run_task1(ChatClient& llm, const Dataset& eval_set, const KnowledgeBase& kb, const Task1Options& opts = {});

struct ImportanceDistribution {
    std::size_t trials = 0;
    /// Per trial: how many sample answers named each variable.
    std::vector<std::map<std::string, std::size_t>> per_trial_counts;
    std::vector<std::map<Combination, std::size_t>> combination_counts;
    double temperature = 0.0;
    std::size_t sample_count = 0;
    std::size_t unparseable_count = 0;
    std::size_t transport_errors = 0;
};

nlohmann::ordered_json to_json(const ImportanceDistribution& dist);

struct Task2Options {
    std::size_t trials = 10;
    double temperature = 0.5;
    KnowledgeMode mode = KnowledgeMode::full;
    std::size_t max_tokens = 256;
    std::uint64_t seed = 0;
};

struct Task2Run {
    ImportanceDistribution distribution;
    std::vector<SampleLog> log;
};

/// Repeats the interpretation prompt over the same risky records for every
/// trial. Trials differ only in the request seed.
Task2Run run_task2(ChatClient& llm, const Dataset& risky, const KnowledgeBase& kb, const Task2Options& opts = {});

/// Request seed for a trial, kept within the positive int32 range that
/// OpenAI-compatible servers accept.
std::int64_t trial_seed(std::uint64_t seed, std::size_t trial) noexcept;

struct RankedEntry {
    std::string item;
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation across trials
};

/// Sorted by mean descending, ties by item name ascending.
struct RankedList {
    std::vector<RankedEntry> entries;

    std::optional<std::size_t> position(std::string_view item) const;
};

nlohmann::ordered_json to_json(const RankedList& list);

/// Mean and std of per-trial counts. Variables never named are omitted.
RankedList rank_importance(const ImportanceDistribution& dist);

/// Combinations whose mean count is strictly above min_mean.
RankedList rank_combinations(const ImportanceDistribution& dist, double min_mean = 2.0);

/// Random-forest importance as a ranked list (std 0).
RankedList rank_from_importance(const ImportanceVector& importance);

/// Per-variable std of the counts across trials, for every catalog variable
/// named in at least one trial.
std::map<std::string, double> count_dispersion(const ImportanceDistribution& dist);

/// count_dispersion averaged over the whole catalog; a variable that was
/// never named has a constant count of 0 and adds nothing.
double mean_dispersion(const ImportanceDistribution& dist);

struct RankingComparison {
    std::size_t top_k_overlap = 0;
    double spearman = 0.0;
};

/// Top-k overlap and Spearman correlation over the union of items, where an
/// item missing from one list takes that list's worst rank + 1.
RankingComparison compare_rankings(const RankedList& a, const RankedList& b, std::size_t k);

nlohmann::ordered_json to_json(const RankingComparison& comparison);

}  // namespace lift
