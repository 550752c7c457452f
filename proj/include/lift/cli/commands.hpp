#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lift/cli/config.hpp"
#include "lift/error.hpp"
#include "lift/llm_client.hpp"
#include "lift/textualize.hpp"

namespace lift::cli {

/// Process exit status for each error kind: usage 2, validation 3,
/// transport 4, I/O 5, anything else 1.
int exit_code(ErrorKind kind) noexcept;

struct Context {
    HarnessConfig config;
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> mock_script;
    /// Command-line settings that change results, folded into config_hash.
    std::vector<std::string> overrides;

    /// Mock backend when a script was given, else the HTTP endpoint with the
    /// API key taken from LIFT_API_KEY.
    std::unique_ptr<ChatClient> make_client(const std::string& model_name) const;

    /// SHA-256 over the config bytes, the mock script bytes and overrides.
    std::string config_hash() const;
};

struct RunReport {
    nlohmann::ordered_json json;
    std::string text;
    std::filesystem::path json_path;
};

enum class EvalTask { predict, interpret, both };

struct Counts {
    std::size_t rows = 0;
    std::size_t positives = 0;
};

Counts cmd_synth(const Context& ctx, std::size_t n, const std::optional<std::filesystem::path>& out);
RunReport cmd_build_kb(const Context& ctx);
RunReport cmd_export_sft(const Context& ctx);
RunReport cmd_eval(const Context& ctx, EvalTask task);
RunReport cmd_stability(const Context& ctx, const std::vector<double>& temperatures, std::size_t resamples);
RunReport cmd_ablate(const Context& ctx, bool kb_on, const std::string& adapter_tag);

/// Plain-text tables for a RunReport JSON document.
std::string render_summary(const nlohmann::json& report);

/// "***", "**", "*" or "ns": one star per alpha level the p-value is below.
std::string stars(double p_value, const std::vector<double>& alpha_levels);

/// Parses arguments, runs the command and maps failures to exit codes.
int run(const std::vector<std::string>& args);

}  // namespace lift::cli
