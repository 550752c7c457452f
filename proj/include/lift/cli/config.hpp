#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lift/dataset.hpp"
#include "lift/litpipe.hpp"
#include "lift/llm_client.hpp"
#include "lift/random_forest.hpp"

namespace lift::cli {

struct PathSettings {
    std::filesystem::path dataset;
    std::filesystem::path kb;
    std::filesystem::path corpus_dir;
    std::filesystem::path sft_out;
    std::filesystem::path training_config;
    std::filesystem::path report_out;  // directory for reports and sample logs
};

struct EvalSettings {
    double temperature = 0.5;          // interpretation task
    double predict_temperature = 0.0;  // prediction task
    std::size_t trials = 10;
    EvalRatio eval_ratio;
    /// Seeds of the repeated random-forest fits averaged into the baseline.
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    double train_fraction = 0.5;
    std::size_t smote_k = 5;
    double combination_min_mean = 2.0;
    std::size_t max_combinations_tested = 5;
    std::size_t compare_top_k = 4;
};

struct PermanovaSettings {
    std::size_t n_perm = 999;
    /// Each level a p-value falls below earns one star.
    std::vector<double> alpha_levels{0.05, 0.01, 0.001};
};

/// Handed to the external fine-tuning runner next to the SFT file.
struct TrainingSettings {
    std::string base_model = "Qwen2.5-7B-Instruct";
    double learning_rate = 1.0e-4;
    double num_train_epochs = 3.0;
    std::string lr_scheduler_type = "cosine";
    double warmup_ratio = 0.1;
    std::size_t per_device_train_batch_size = 1;
    std::size_t gradient_accumulation_steps = 8;
    std::string precision = "bf16";
    std::size_t lora_rank = 8;
    double lora_alpha = 16.0;
};

struct HarnessConfig {
    std::uint64_t seed = 42;
    EndpointConfig endpoint;
    /// Adapter tag -> served model name, used by the ablation command.
    std::map<std::string, std::string> adapters;
    PathSettings paths;
    EvalSettings eval;
    std::optional<std::filesystem::path> synthesis;
    ForestParams rf;
    PermanovaSettings permanova;
    TrainingSettings training;
    ScreeningOptions screening;
    AggregationOptions aggregation;

    /// Bytes of the file the config was read from ("" for defaults).
    std::string source_bytes;
};

/// Defaults with every path placed under base_dir.
HarnessConfig default_config(const std::filesystem::path& base_dir);

/// Relative paths resolve against the config file's directory. Unknown keys
/// and out-of-range values are validation errors.
HarnessConfig load_config(const std::filesystem::path& path);
HarnessConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);

nlohmann::ordered_json training_config_json(const TrainingSettings& training, const std::filesystem::path& train_file);

std::string sha256_hex(std::string_view bytes);

}  // namespace lift::cli
