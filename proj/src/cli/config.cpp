#include "lift/cli/config.hpp"

#include <array>
#include <fstream>
#include <set>

#include <openssl/evp.h>

#include "lift/error.hpp"
#include "lift/text_util.hpp"

namespace lift::cli {

namespace fs = std::filesystem;

namespace {

// Reads one JSON object, remembering which keys were consumed so that
// leftovers (usually typos) can be reported.
class Section {
public:
    Section(const nlohmann::json& doc, std::string where) : doc_(doc), where_(std::move(where)) {
        if (!doc_.is_object()) fail("must be an object");
    }

    ~Section() = default;

    bool has(const char* key) {
        seen_.insert(key);
        return doc_.contains(key) && !doc_.at(key).is_null();
    }

    template <typename T>
    void read(const char* key, T& out) {
        if (!has(key)) return;
        try {
            out = doc_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            fail(std::string("'") + key + "' has the wrong type");
        }
    }

    void read_path(const char* key, fs::path& out, const fs::path& base) {
        std::string s;
        read(key, s);
        if (!s.empty()) out = resolve(base, s);
    }

    void read_ms(const char* key, std::chrono::milliseconds& out) {
        std::int64_t ms = out.count();
        read(key, ms);
        if (ms < 0) fail(std::string("'") + key + "' must not be negative");
        out = std::chrono::milliseconds(ms);
    }

    Section child(const char* key) {
        seen_.insert(key);
        static const nlohmann::json empty = nlohmann::json::object();
        if (!doc_.contains(key) || doc_.at(key).is_null()) return Section(empty, where_ + "." + key);
        return Section(doc_.at(key), where_ + "." + key);
    }

    const nlohmann::json& raw(const char* key) const { return doc_.at(key); }

    void finish() const {
        for (const auto& [key, value] : doc_.items()) {
            if (!seen_.count(key)) fail("unknown key '" + key + "'");
        }
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw Error(ErrorKind::validation, "config " + where_ + ": " + msg);
    }

    static fs::path resolve(const fs::path& base, const std::string& s) {
        fs::path p(s);
        return p.is_absolute() ? p : (base / p).lexically_normal();
    }

private:
    const nlohmann::json& doc_;
    std::string where_;
    std::set<std::string> seen_;
};

void check_range(bool ok, const std::string& msg) {
    if (!ok) throw Error(ErrorKind::validation, "config: " + msg);
}

}  // namespace

HarnessConfig default_config(const fs::path& base_dir) {
    HarnessConfig cfg;
    cfg.paths.dataset = base_dir / "data/trips.csv";
    cfg.paths.kb = base_dir / "data/knowledge_base.json";
    cfg.paths.corpus_dir = base_dir / "corpus";
    cfg.paths.sft_out = base_dir / "data/sft.jsonl";
    cfg.paths.training_config = base_dir / "data/training_config.json";
    cfg.paths.report_out = base_dir / "reports";
    return cfg;
}

HarnessConfig config_from_json(const nlohmann::json& doc, const fs::path& base_dir) {
    HarnessConfig cfg = default_config(base_dir);
    Section top(doc, "root");
    top.read("seed", cfg.seed);

    {
        auto s = top.child("endpoint");
        s.read("base_url", cfg.endpoint.base_url);
        s.read("model_name", cfg.endpoint.model_name);
        s.read_ms("timeout_ms", cfg.endpoint.timeout);
        s.read("max_in_flight", cfg.endpoint.max_in_flight);
        s.read("max_retries", cfg.endpoint.max_retries);
        s.read_ms("retry_base_delay_ms", cfg.endpoint.retry_base_delay);
        s.read_ms("retry_max_delay_ms", cfg.endpoint.retry_max_delay);
        s.read("adapters", cfg.adapters);
        if (s.has("api_key")) s.fail("'api_key' is not read from files; set LIFT_API_KEY instead");
        s.finish();
    }
    {
        auto s = top.child("paths");
        s.read_path("dataset", cfg.paths.dataset, base_dir);
        s.read_path("kb", cfg.paths.kb, base_dir);
        s.read_path("corpus_dir", cfg.paths.corpus_dir, base_dir);
        s.read_path("sft_out", cfg.paths.sft_out, base_dir);
        s.read_path("training_config", cfg.paths.training_config, base_dir);
        s.read_path("report_out", cfg.paths.report_out, base_dir);
        s.finish();
    }
    {
        auto s = top.child("eval");
        s.read("temperature", cfg.eval.temperature);
        s.read("predict_temperature", cfg.eval.predict_temperature);
        s.read("trials", cfg.eval.trials);
        s.read("seeds", cfg.eval.seeds);
        s.read("train_fraction", cfg.eval.train_fraction);
        s.read("smote_k", cfg.eval.smote_k);
        s.read("combination_min_mean", cfg.eval.combination_min_mean);
        s.read("max_combinations_tested", cfg.eval.max_combinations_tested);
        s.read("compare_top_k", cfg.eval.compare_top_k);
        if (s.has("eval_ratio")) {
            const auto& r = s.raw("eval_ratio");
            if (!r.is_array() || r.size() != 2 || !r[0].is_number_unsigned() || !r[1].is_number_unsigned())
                s.fail("'eval_ratio' must be [risky, nonrisky]");
            cfg.eval.eval_ratio = {r[0].get<std::size_t>(), r[1].get<std::size_t>()};
        }
        s.finish();
    }
    if (top.has("synthesis")) {
        std::string p;
        top.read("synthesis", p);
        if (!p.empty()) cfg.synthesis = Section::resolve(base_dir, p);
    }
    {
        auto s = top.child("rf");
        s.read("n_trees", cfg.rf.n_trees);
        s.read("max_depth", cfg.rf.max_depth);
        s.read("min_leaf", cfg.rf.min_leaf);
        s.read("bootstrap", cfg.rf.bootstrap);
        s.read("features_per_split", cfg.rf.features_per_split);
        s.read("max_workers", cfg.rf.max_workers);
        s.finish();
    }
    {
        auto s = top.child("permanova");
        s.read("n_perm", cfg.permanova.n_perm);
        s.read("alpha_levels", cfg.permanova.alpha_levels);
        s.finish();
    }
    {
        auto s = top.child("training");
        auto& t = cfg.training;
        s.read("base_model", t.base_model);
        s.read("learning_rate", t.learning_rate);
        s.read("num_train_epochs", t.num_train_epochs);
        s.read("lr_scheduler_type", t.lr_scheduler_type);
        s.read("warmup_ratio", t.warmup_ratio);
        s.read("per_device_train_batch_size", t.per_device_train_batch_size);
        s.read("gradient_accumulation_steps", t.gradient_accumulation_steps);
        s.read("precision", t.precision);
        s.read("lora_rank", t.lora_rank);
        s.read("lora_alpha", t.lora_alpha);
        s.finish();
    }
    {
        auto s = top.child("literature");
        s.read("context_budget_tokens", cfg.screening.context_budget_tokens);
        s.read("screening_retries", cfg.screening.max_retries);
        s.read("screening_max_tokens", cfg.screening.max_tokens);
        s.read("aggregation_retries", cfg.aggregation.max_retries);
        s.read("aggregation_max_tokens", cfg.aggregation.max_tokens);
        s.finish();
    }
    top.finish();

    check_range(cfg.eval.temperature >= 0.0 && cfg.eval.temperature <= 2.0, "eval.temperature must be in [0, 2]");
    check_range(cfg.eval.predict_temperature >= 0.0 && cfg.eval.predict_temperature <= 2.0,
                "eval.predict_temperature must be in [0, 2]");
    check_range(cfg.eval.trials >= 1, "eval.trials must be at least 1");
    check_range(cfg.eval.train_fraction > 0.0 && cfg.eval.train_fraction < 1.0, "eval.train_fraction must be in (0, 1)");
    check_range(cfg.eval.eval_ratio.risky >= 1, "eval.eval_ratio risky part must be at least 1");
    check_range(!cfg.eval.seeds.empty(), "eval.seeds must not be empty");
    check_range(cfg.eval.smote_k >= 1, "eval.smote_k must be at least 1");
    check_range(cfg.eval.compare_top_k >= 1, "eval.compare_top_k must be at least 1");
    check_range(cfg.rf.n_trees >= 1 && cfg.rf.min_leaf >= 1, "rf.n_trees and rf.min_leaf must be at least 1");
    check_range(cfg.permanova.n_perm >= 1, "permanova.n_perm must be at least 1");
    for (double a : cfg.permanova.alpha_levels) check_range(a > 0.0 && a < 1.0, "permanova.alpha_levels must be in (0, 1)");
    check_range(cfg.training.lora_rank >= 1, "training.lora_rank must be at least 1");
    try {
        cfg.endpoint.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::validation, std::string("config endpoint: ") + e.what());
    }
    return cfg;
}

HarnessConfig load_config(const fs::path& path) {
    std::string bytes;
    try {
        bytes = read_file(path.string());
    } catch (const Error& e) {
        throw Error(ErrorKind::io, std::string("cannot read config: ") + e.what());
    }
    const auto doc = nlohmann::json::parse(bytes, nullptr, false);
    if (doc.is_discarded()) throw Error(ErrorKind::validation, "config " + path.string() + " is not valid JSON");
    const auto base = fs::absolute(path).parent_path();
    auto cfg = config_from_json(doc, base);
    cfg.source_bytes = std::move(bytes);
    return cfg;
}

nlohmann::ordered_json training_config_json(const TrainingSettings& t, const fs::path& train_file) {
    nlohmann::ordered_json j;
    j["base_model"] = t.base_model;
    j["train_file"] = train_file.string();
    j["format"] = "chat_jsonl";
    j["precision"] = t.precision;
    j["learning_rate"] = t.learning_rate;
    j["num_train_epochs"] = t.num_train_epochs;
    j["lr_scheduler_type"] = t.lr_scheduler_type;
    j["warmup_ratio"] = t.warmup_ratio;
    j["per_device_train_batch_size"] = t.per_device_train_batch_size;
    j["gradient_accumulation_steps"] = t.gradient_accumulation_steps;
    j["lora"] = {{"rank", t.lora_rank}, {"alpha", t.lora_alpha}};
    return j;
}

std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorKind::io, "sha256 failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += kHex[digest[i] >> 4];
        out += kHex[digest[i] & 0xF];
    }
    return out;
}

}  // namespace lift::cli
