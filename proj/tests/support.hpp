#pragma once

// Fixtures shared by the unit tests and the acceptance runner.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lift/catalog.hpp"
#include "lift/dataset.hpp"
#include "lift/knowledge_base.hpp"
#include "lift/textualize.hpp"

namespace lift::fixture {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("lift-" + tag + "-" + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream(path, std::ios::binary) << text;
}

inline std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// A plausible trip with every invariant satisfied.
inline TrajectoryRecord sample_record(const std::string& id, int label) {
    TrajectoryRecord r;
    r.trajectory_id = id;
    r.vehicle_id = "veh-7";
    r.features << 0.25, 7.5, 0.62, 0.4, 1.25, 62.4, 6.52, 58.1, 4.75, 71.3;
    r.risk_label = label;
    return r;
}

/// Records whose s_std_s values are spread so that ids and user texts differ.
inline Dataset risky_fixture(std::size_t n) {
    std::vector<TrajectoryRecord> records;
    for (std::size_t i = 0; i < n; ++i) {
        auto r = sample_record("risky-" + std::to_string(i), 1);
        r.features(6) = 5.0 + 0.1 * static_cast<double>(i);
        records.push_back(r);
    }
    return Dataset(std::move(records), Provenance::derived);
}

/// 1791 synthetic trips with exactly 74 risky ones, the fleet's proportions.
inline Dataset fleet_fixture(std::uint64_t seed = 7) {
    auto spec = SynthesisSpec::table_defaults();
    spec.risk_rate = 0.0;
    auto records = synthesize(spec, 1791, seed).records();
    for (std::size_t i = 0; i < 74; ++i) records[i * 24 + 3].risk_label = 1;
    return Dataset(std::move(records), Provenance::synthetic);
}

/// Layout of the golden prompt files.
inline std::string golden_text(const PromptBundle& b) {
    return "[system]\n" + b.system_text + "\n[user]\n" + b.user_text + "\n";
}

inline nlohmann::json task2_answer(const std::vector<std::string>& vars,
                                   const std::vector<std::vector<std::string>>& combos) {
    return {{"key_variables", vars}, {"key_combinations", combos}};
}

/// Screening answer for a relevant or irrelevant paper.
inline std::string screening_answer(bool relevant) {
    nlohmann::json j{{"relevant", relevant},
                     {"hypotheses", relevant ? "Speed variance raises conflict risk." : ""},
                     {"data_conditions", relevant ? "Expressway truck trajectories." : ""},
                     {"factors", relevant ? nlohmann::json::array({"speed variance", "traffic speed"})
                                          : nlohmann::json::array()},
                     {"conclusion", relevant ? "Unstable speed increases risk." : ""}};
    return j.dump();
}

/// Writes `total` markdown papers; the first `relevant` carry the marker
/// RELEVANT-FIXTURE in their body, the rest do not.
inline void write_corpus(const fs::path& dir, std::size_t total, std::size_t relevant) {
    for (std::size_t i = 0; i < total; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "paper-%03zu.md", i + 1);
        std::string body = "# Paper " + std::to_string(i + 1) + "\n\n";
        body += i < relevant ? "RELEVANT-FIXTURE: truck forward collision risk factors.\n"
                             : "An unrelated study of pedestrian signal timing.\n";
        write_file(dir / name, body);
    }
}

/// Mock rules answering screening and aggregation prompts for a corpus made
/// by write_corpus, aggregating into the reference knowledge base.
inline nlohmann::json literature_rules() {
    auto rules = nlohmann::json::array();
    rules.push_back({{"contains", "Paper summaries (JSON"}, {"response", to_json(reference_kb()).dump()}});
    rules.push_back({{"contains", "RELEVANT-FIXTURE"}, {"response", screening_answer(true)}});
    rules.push_back({{"contains", "\"relevant\": true or false"}, {"response", screening_answer(false)}});
    return rules;
}

}  // namespace lift::fixture
