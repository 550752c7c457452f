#include "lift/cli/commands.hpp"

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "lift/catalog.hpp"
#include "lift/dataset.hpp"
#include "lift/evaluator.hpp"
#include "lift/knowledge_base.hpp"
#include "lift/litpipe.hpp"
#include "lift/permanova.hpp"
#include "lift/random_forest.hpp"
#include "lift/rng.hpp"
#include "lift/text_util.hpp"

namespace lift::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Independent random streams for each stage of a run.
enum Stream : std::uint64_t {
    kSplit = 1,
    kEvalSample = 2,
    kTask1 = 3,
    kTask2 = 4,
    kSmote = 5,
    kPermanova = 6,
    kResample = 100,
};

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorKind::io, "write failed: " + path.string());
}

void require_file(const fs::path& path, const char* what) {
    std::error_code ec;
    if (!fs::exists(path, ec)) throw Error(ErrorKind::io, std::string(what) + " not found: " + path.string());
}

ojson report_header(const Context& ctx, const std::string& command) {
    ojson j;
    j["command"] = command;
    j["config_hash"] = ctx.config_hash();
    j["seed"] = ctx.seed;
    j["backend"] = ctx.mock_script ? "mock" : "http";
    j["timestamps"] = {{"started", utc_now()}, {"finished", nullptr}};
    return j;
}

RunReport finish_report(const Context& ctx, ojson json, const std::string& name) {
    json["timestamps"]["finished"] = utc_now();
    RunReport r;
    r.json_path = ctx.config.paths.report_out / (name + ".json");
    r.text = render_summary(json);
    r.json = std::move(json);
    write_text(r.json_path, r.json.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n");
    write_text(ctx.config.paths.report_out / (name + ".txt"), r.text);
    return r;
}

Dataset load_dataset(const Context& ctx) {
    require_file(ctx.config.paths.dataset, "dataset");
    return load_csv(ctx.config.paths.dataset);
}

KnowledgeBase load_knowledge(const Context& ctx) {
    require_file(ctx.config.paths.kb, "knowledge base");
    return load_kb(ctx.config.paths.kb);
}

Dataset balanced_train(const Context& ctx, const Dataset& train, std::uint64_t stream) {
    return smote_balance(train, ctx.config.eval.smote_k, derive_seed(ctx.seed, stream));
}

// Every call failing means the backend is down rather than flaky.
void check_backend(std::size_t failed, std::size_t total, const std::vector<SampleLog>& log) {
    if (total == 0 || failed < total) return;
    std::string detail;
    for (const auto& l : log) {
        if (!l.error.empty()) {
            detail = l.error;
            break;
        }
    }
    throw Error(ErrorKind::transport, "all " + std::to_string(total) + " model calls failed; first error: " + detail);
}

Combination split_label(const std::string& label) {
    Combination out;
    for (auto part : split_view(label, '+')) out.emplace_back(part);
    return out;
}

std::string model_for(const Context& ctx, const std::string& adapter_tag) {
    if (adapter_tag.empty()) return ctx.config.endpoint.model_name;
    const auto it = ctx.config.adapters.find(adapter_tag);
    if (it == ctx.config.adapters.end())
        throw Error(ErrorKind::usage, "unknown adapter tag '" + adapter_tag + "' (not in endpoint.adapters)");
    return it->second;
}

ImportanceVector rf_baseline(const Context& ctx, const Dataset& balanced, ForestModel* first_model, ojson& per_seed) {
    std::vector<ImportanceVector> runs;
    per_seed = ojson::array();
    for (std::size_t i = 0; i < ctx.config.eval.seeds.size(); ++i) {
        auto params = ctx.config.rf;
        params.seed = ctx.config.eval.seeds[i];
        auto model = rf_train(balanced, params);
        runs.push_back(rf_importance(model));
        per_seed.push_back({{"seed", params.seed}, {"importance", to_json(runs.back())}});
        if (i == 0 && first_model) *first_model = std::move(model);
    }
    return mean_importance(runs);
}

ojson run_permanova(const Context& ctx, const Dataset& data, const RankedList& combos) {
    auto results = ojson::array();
    const auto limit = std::min(combos.entries.size(), ctx.config.eval.max_combinations_tested);
    for (std::size_t i = 0; i < limit; ++i) {
        const auto& label = combos.entries[i].item;
        ojson entry;
        entry["combination"] = label;
        entry["mean_count"] = combos.entries[i].mean;
        try {
            PermanovaOptions opts{ctx.config.permanova.n_perm, derive_seed(ctx.seed, kPermanova + 1000 * i)};
            const auto result = permanova(data, split_label(label), opts);
            entry["result"] = to_json(result);
            entry["stars"] = stars(result.p_value, ctx.config.permanova.alpha_levels);
        } catch (const Error& e) {
            // one untestable combination should not sink the whole report
            entry["result"] = nullptr;
            entry["error"] = e.what();
            entry["stars"] = "n/a";
        }
        results.push_back(std::move(entry));
    }
    return results;
}

struct EvalRun {
    std::string name;
    EvalTask task = EvalTask::both;
    KnowledgeMode mode = KnowledgeMode::full;
    std::string model_name;
};

ojson evaluate(const Context& ctx, const EvalRun& run, ojson report) {
    const auto& cfg = ctx.config;
    const auto data = load_dataset(ctx);
    const auto kb = load_knowledge(ctx);
    const auto parts = split(data, cfg.eval.train_fraction, derive_seed(ctx.seed, kSplit));
    const auto eval_set = sample_eval(parts.test, cfg.eval.eval_ratio, derive_seed(ctx.seed, kEvalSample));
    auto llm = ctx.make_client(run.model_name);
    spdlog::info("evaluation set: {} trips ({} risky)", eval_set.size(), eval_set.positive_count());

    report["model_name"] = run.model_name;
    report["knowledge"] = run.mode == KnowledgeMode::full ? "full" : "definitions_only";
    report["eval_set"] = {{"size", eval_set.size()}, {"risky", eval_set.positive_count()}};
    report["metric_report"] = nullptr;
    report["rf_metric_report"] = nullptr;
    report["rankings"] = nullptr;
    report["permanova_results"] = nullptr;

    const auto balanced = balanced_train(ctx, parts.train, kSmote);
    ForestModel rf_model;
    ojson rf_per_seed;
    const auto rf_mean = rf_baseline(ctx, balanced, &rf_model, rf_per_seed);

    if (run.task != EvalTask::interpret) {
        Task1Options opts{cfg.eval.predict_temperature, run.mode, 64, derive_seed(ctx.seed, kTask1)};
        const auto t1 = run_task1(*llm, eval_set, kb, opts);
        write_jsonl(t1.log, cfg.paths.report_out / "logs" / (run.name + "-predict.jsonl"));
        check_backend(t1.report.transport_errors, eval_set.size(), t1.log);
        report["metric_report"] = to_json(t1.report);

        const auto rf_pred = rf_predict(rf_model, eval_set.records());
        const auto labels = eval_set.labels();
        report["rf_metric_report"] =
            to_json(metrics(confusion(rf_pred, std::vector<int>(labels.data(), labels.data() + labels.size()))));
    }

    if (run.task != EvalTask::predict) {
        const auto risky = eval_set.with_label(1);
        Task2Options opts{cfg.eval.trials, cfg.eval.temperature, run.mode, 256, derive_seed(ctx.seed, kTask2)};
        const auto t2 = run_task2(*llm, risky, kb, opts);
        write_jsonl(t2.log, cfg.paths.report_out / "logs" / (run.name + "-interpret.jsonl"));
        check_backend(t2.distribution.transport_errors, risky.size() * cfg.eval.trials, t2.log);

        const auto variables = rank_importance(t2.distribution);
        const auto combos = rank_combinations(t2.distribution, cfg.eval.combination_min_mean);
        const auto rf_rank = rank_from_importance(rf_mean);
        ojson rankings;
        rankings["variables"] = to_json(variables);
        rankings["combinations"] = to_json(combos);
        rankings["combination_min_mean"] = cfg.eval.combination_min_mean;
        rankings["random_forest"] = to_json(rf_rank);
        auto cmp = to_json(compare_rankings(variables, rf_rank, cfg.eval.compare_top_k));
        cmp["k"] = cfg.eval.compare_top_k;
        rankings["comparison"] = std::move(cmp);
        report["rankings"] = std::move(rankings);
        report["importance_distribution"] = to_json(t2.distribution);
        report["permanova_results"] = run_permanova(ctx, data, combos);
    }
    report["rf_importance"] = {{"mean", to_json(rf_mean)}, {"per_seed", std::move(rf_per_seed)}};
    return report;
}

std::string fixed(const ojson& v, int decimals = 2) {
    if (v.is_number()) return format_fixed(v.get<double>(), decimals);
    if (v.is_string()) return v.get<std::string>();
    return "-";
}

void render_metrics(std::string& out, const nlohmann::json& r) {
    out += "Prediction performance\n";
    out += fmt::format("{:<16}{:>10}{:>11}{:>8}{:>10}\n", "Model", "Accuracy", "Precision", "Recall", "F1-score");
    auto row = [&](const char* name, const nlohmann::json& m) {
        if (m.is_null()) return;
        out += fmt::format("{:<16}{:>10}{:>11}{:>8}{:>10}\n", name, fixed(m["accuracy"]), fixed(m["precision"]),
                           fixed(m["recall"]), fixed(m["f1"]));
    };
    row("LLM", r["metric_report"]);
    if (r.contains("rf_metric_report")) row("Random forest", r["rf_metric_report"]);
    const auto& m = r["metric_report"];
    out += fmt::format("confusion: tp={} fp={} tn={} fn={}; unparseable answers: {}; failed calls: {}\n\n",
                       m["tp"].get<std::size_t>(), m["fp"].get<std::size_t>(), m["tn"].get<std::size_t>(),
                       m["fn"].get<std::size_t>(), m["unparseable_count"].get<std::size_t>(),
                       m["transport_errors"].get<std::size_t>());
}

void render_rankings(std::string& out, const nlohmann::json& r) {
    const auto& rk = r["rankings"];
    std::size_t trials = 0;
    std::size_t samples = 0;
    if (r.contains("importance_distribution")) {
        trials = r["importance_distribution"]["trials"].get<std::size_t>();
        samples = r["importance_distribution"]["sample_count"].get<std::size_t>();
    }
    out += fmt::format("Key variables (mean count over {} trials of {} risky samples)\n", trials, samples);
    out += fmt::format("{:<6}{:<12}{:>10}{:>9}{:>10}{:>9}\n", "Rank", "Variable", "Mean", "Std", "RF imp.", "RF rank");
    const auto& rf = rk["random_forest"];
    std::size_t rank = 0;
    for (const auto& e : rk["variables"]) {
        std::string rf_imp = "-";
        std::string rf_rank = "-";
        for (const auto& f : rf) {
            if (f["item"] == e["item"]) {
                rf_imp = fixed(f["mean"], 3);
                rf_rank = std::to_string(f["rank"].get<std::size_t>());
            }
        }
        out += fmt::format("{:<6}{:<12}{:>10}{:>9}{:>10}{:>9}\n", ++rank, e["item"].get<std::string>(),
                           fixed(e["mean"]), fixed(e["std"]), rf_imp, rf_rank);
    }
    const auto& cmp = rk["comparison"];
    out += fmt::format("top-{} overlap with random forest: {}; Spearman: {}\n\n", cmp["k"].get<std::size_t>(),
                       cmp["top_k_overlap"].get<std::size_t>(), fixed(cmp["spearman"], 3));

    out += fmt::format("Key variable combinations (mean count > {})\n", fixed(rk["combination_min_mean"]));
    if (rk["combinations"].empty()) {
        out += "(none)\n\n";
        return;
    }
    out += fmt::format("{:<6}{:<36}{:>8}{:>10}{:>8}\n", "Rank", "Combination", "Mean", "p-value", "Sig.");
    rank = 0;
    for (const auto& e : rk["combinations"]) {
        std::string p = "-";
        std::string sig = "-";
        if (r["permanova_results"].is_array()) {
            for (const auto& t : r["permanova_results"]) {
                if (t["combination"] != e["item"]) continue;
                sig = t["stars"].get<std::string>();
                if (!t["result"].is_null()) p = fixed(t["result"]["p_value"], 3);
            }
        }
        out += fmt::format("{:<6}{:<36}{:>8}{:>10}{:>8}\n", ++rank, e["item"].get<std::string>(), fixed(e["mean"]), p, sig);
    }
    out += "\n";
}

void render_stability(std::string& out, const nlohmann::json& st) {
    const auto& temps = st["temperatures"];
    if (!temps.empty()) {
        out += "Key-variable count dispersion (std across trials) by temperature\n";
        out += fmt::format("{:<12}", "Variable");
        for (const auto& t : temps) out += fmt::format("{:>10}", "T=" + format_shortest(t["temperature"].get<double>()));
        out += "\n";
        for (const auto& spec : catalog()) {
            const std::string name(spec.name);
            out += fmt::format("{:<12}", name);
            for (const auto& t : temps) {
                const auto& d = t["dispersion"];
                out += fmt::format("{:>10}", d.contains(name) ? fixed(d[name]) : "-");
            }
            out += "\n";
        }
        out += fmt::format("{:<12}", "mean");
        for (const auto& t : temps) out += fmt::format("{:>10}", fixed(t["mean_dispersion"]));
        out += fmt::format("\nnon-decreasing in temperature: {}\n\n", st["dispersion_non_decreasing"].get<bool>() ? "yes" : "no");
    }
    const auto& rf = st["rf_resamples"];
    if (!rf.is_null() && rf["count"].get<std::size_t>() > 0) {
        out += fmt::format("Random-forest importance across {} resampled 1:1 datasets\n", rf["count"].get<std::size_t>());
        out += fmt::format("{:<12}{:>10}{:>10}\n", "Variable", "Mean", "Std");
        for (const auto& e : rf["summary"]) {
            out += fmt::format("{:<12}{:>10}{:>10}\n", e["item"].get<std::string>(), fixed(e["mean"], 4),
                               fixed(e["std"], 4));
        }
        out += "\n";
    }
}

ojson summarise_vectors(const std::vector<ImportanceVector>& runs) {
    auto out = ojson::array();
    if (runs.empty()) return out;
    RankedList list;
    for (std::size_t v = 0; v < runs.front().names.size(); ++v) {
        double mean = 0.0;
        for (const auto& r : runs) mean += r.values(static_cast<Eigen::Index>(v));
        mean /= static_cast<double>(runs.size());
        double ss = 0.0;
        for (const auto& r : runs) {
            const double d = r.values(static_cast<Eigen::Index>(v)) - mean;
            ss += d * d;
        }
        const double sd = runs.size() > 1 ? std::sqrt(ss / static_cast<double>(runs.size() - 1)) : 0.0;
        list.entries.push_back({runs.front().names[v], mean, sd});
    }
    std::sort(list.entries.begin(), list.entries.end(), [](const auto& a, const auto& b) {
        return a.mean != b.mean ? a.mean > b.mean : a.item < b.item;
    });
    return to_json(list);
}

std::vector<double> parse_temperatures(const std::vector<std::string>& raw) {
    std::vector<double> out;
    for (const auto& item : raw) {
        for (auto part : split_view(item, ',')) {
            part = trim(part);
            if (part.empty()) continue;
            double t = 0.0;
            const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), t);
            if (ec != std::errc() || ptr != part.data() + part.size())
                throw Error(ErrorKind::usage, "invalid temperature '" + std::string(part) + "'");
            out.push_back(t);
        }
    }
    return out;
}

}  // namespace

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::usage: return 2;
        case ErrorKind::validation: return 3;
        case ErrorKind::transport: return 4;
        case ErrorKind::io: return 5;
        default: return 1;
    }
}

std::unique_ptr<ChatClient> Context::make_client(const std::string& model_name) const {
    if (mock_script) {
        return std::make_unique<MockChatClient>(MockScript::load(*mock_script), config.endpoint.max_in_flight);
    }
    auto endpoint = config.endpoint;
    endpoint.model_name = model_name;
    if (const char* key = std::getenv("LIFT_API_KEY"); key && *key) endpoint.api_key = key;
    return std::make_unique<HttpChatClient>(std::move(endpoint));
}

std::string Context::config_hash() const {
    std::string material = config.source_bytes;
    material += "\n--mock\n";
    if (mock_script) material += read_file(mock_script->string());
    material += "\n--overrides\n";
    for (const auto& o : overrides) material += o + "\n";
    return sha256_hex(material);
}

std::string stars(double p_value, const std::vector<double>& alpha_levels) {
    std::size_t n = 0;
    for (double a : alpha_levels) n += p_value < a ? 1 : 0;
    return n == 0 ? "ns" : std::string(n, '*');
}

Counts cmd_synth(const Context& ctx, std::size_t n, const std::optional<fs::path>& out) {
    if (n == 0) throw Error(ErrorKind::usage, "synth: --n must be at least 1");
    SynthesisSpec spec = SynthesisSpec::table_defaults();
    if (ctx.config.synthesis) spec = load_synthesis_spec(*ctx.config.synthesis);
    const auto data = synthesize(spec, n, ctx.seed);
    const auto path = out.value_or(ctx.config.paths.dataset);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_csv(data, path);
    std::cout << "wrote " << data.size() << " rows (" << data.positive_count() << " risky, " << data.negative_count()
              << " non-risky) to " << path.string() << "\n";
    return {data.size(), data.positive_count()};
}

RunReport cmd_build_kb(const Context& ctx) {
    auto report = report_header(ctx, "build-kb");
    const auto ingest = ingest_markdown(ctx.config.paths.corpus_dir);
    for (const auto& e : ingest.errors) spdlog::warn("skipping {}: {}", e.path.string(), e.message);
    const auto total = ingest.docs.size() + ingest.errors.size();
    if (ingest.docs.empty())
        throw Error(ErrorKind::precondition, "build-kb: no readable markdown documents in " +
                                                 ctx.config.paths.corpus_dir.string());

    auto llm = ctx.make_client(ctx.config.endpoint.model_name);
    const auto summaries = screen_corpus(ingest.docs, *llm, ctx.config.screening);
    std::size_t relevant = 0;
    std::size_t failed = 0;
    std::size_t truncated = 0;
    std::string lines;
    for (const auto& s : summaries) {
        relevant += s.relevant ? 1 : 0;
        failed += s.parse_failed ? 1 : 0;
        truncated += s.truncated ? 1 : 0;
        auto j = to_json(s);
        j["parse_failed"] = s.parse_failed;
        lines += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
    }
    write_text(ctx.config.paths.report_out / "screening.jsonl", lines);
    std::cout << relevant << "/" << total << " relevant\n";

    const auto kb = aggregate_kb(summaries, *llm, ctx.config.aggregation);
    const auto validation = validate_kb(kb);
    if (!validation.passed) throw Error(ErrorKind::validation, validation.summary());
    if (ctx.config.paths.kb.has_parent_path()) fs::create_directories(ctx.config.paths.kb.parent_path());
    save_kb(kb, ctx.config.paths.kb);
    std::cout << "knowledge base: " << validation.filled_cells << "/" << validation.expected_cells
              << " cells filled, written to " << ctx.config.paths.kb.string() << "\n";

    report["corpus"] = {{"documents", total},
                        {"ingest_errors", ingest.errors.size()},
                        {"relevant", relevant},
                        {"screening_failures", failed},
                        {"truncated", truncated}};
    report["kb_path"] = ctx.config.paths.kb.string();
    report["kb_cells"] = {{"filled", validation.filled_cells}, {"expected", validation.expected_cells}};
    return finish_report(ctx, std::move(report), "build-kb");
}

RunReport cmd_export_sft(const Context& ctx) {
    auto report = report_header(ctx, "export-sft");
    const auto data = load_dataset(ctx);
    const auto kb = load_knowledge(ctx);
    const auto parts = split(data, ctx.config.eval.train_fraction, derive_seed(ctx.seed, kSplit));
    const auto balanced = balanced_train(ctx, parts.train, kSmote);
    const auto& paths = ctx.config.paths;
    if (paths.sft_out.has_parent_path()) fs::create_directories(paths.sft_out.parent_path());
    const auto lines = export_sft(balanced, kb, paths.sft_out);
    write_text(paths.training_config, training_config_json(ctx.config.training, paths.sft_out).dump(2) + "\n");
    std::cout << "exported " << lines << " examples (" << balanced.positive_count() << " risky, "
              << balanced.negative_count() << " non-risky) to " << paths.sft_out.string() << "\n"
              << "training config written to " << paths.training_config.string() << "\n";

    report["train"] = {{"original", parts.train.size()},
                       {"original_risky", parts.train.positive_count()},
                       {"balanced", balanced.size()},
                       {"balanced_risky", balanced.positive_count()}};
    report["sft_out"] = paths.sft_out.string();
    report["training_config"] = paths.training_config.string();
    return finish_report(ctx, std::move(report), "export-sft");
}

RunReport cmd_eval(const Context& ctx, EvalTask task) {
    static constexpr const char* kNames[] = {"predict", "interpret", "both"};
    auto report = report_header(ctx, "eval");
    report["task"] = kNames[static_cast<int>(task)];
    EvalRun run{"eval", task, KnowledgeMode::full, ctx.config.endpoint.model_name};
    return finish_report(ctx, evaluate(ctx, run, std::move(report)), "eval");
}

RunReport cmd_ablate(const Context& ctx, bool kb_on, const std::string& adapter_tag) {
    const std::string tag = std::string("kb-") + (kb_on ? "on" : "off") + "_adapter-" + adapter_tag;
    auto report = report_header(ctx, "ablate");
    report["tag"] = tag;
    report["ablation"] = {{"kb", kb_on ? "on" : "off"}, {"adapter", adapter_tag}};
    EvalRun run{"ablate-" + tag, EvalTask::both, kb_on ? KnowledgeMode::full : KnowledgeMode::definitions_only,
                model_for(ctx, adapter_tag)};
    return finish_report(ctx, evaluate(ctx, run, std::move(report)), "ablate-" + tag);
}

RunReport cmd_stability(const Context& ctx, const std::vector<double>& temperatures, std::size_t resamples) {
    if (temperatures.empty() && resamples == 0)
        throw Error(ErrorKind::usage, "stability: give --temps and/or --resamples");
    for (double t : temperatures) {
        if (!(t >= 0.0 && t <= 2.0)) throw Error(ErrorKind::usage, "stability: temperatures must be in [0, 2]");
    }
    const auto& cfg = ctx.config;
    auto report = report_header(ctx, "stability");
    const auto data = load_dataset(ctx);

    ojson stability;
    stability["temperatures"] = ojson::array();
    stability["dispersion_non_decreasing"] = true;
    if (!temperatures.empty()) {
        const auto kb = load_knowledge(ctx);
        const auto parts = split(data, cfg.eval.train_fraction, derive_seed(ctx.seed, kSplit));
        const auto eval_set = sample_eval(parts.test, cfg.eval.eval_ratio, derive_seed(ctx.seed, kEvalSample));
        const auto risky = eval_set.with_label(1);
        auto llm = ctx.make_client(cfg.endpoint.model_name);
        double previous = -1.0;
        for (double t : temperatures) {
            // same seed at every temperature, so only decoding spread differs
            Task2Options opts{cfg.eval.trials, t, KnowledgeMode::full, 256, derive_seed(ctx.seed, kTask2)};
            const auto t2 = run_task2(*llm, risky, kb, opts);
            write_jsonl(t2.log, cfg.paths.report_out / "logs" / ("stability-T" + format_shortest(t) + ".jsonl"));
            check_backend(t2.distribution.transport_errors, risky.size() * cfg.eval.trials, t2.log);
            ojson entry;
            entry["temperature"] = t;
            ojson disp = ojson::object();
            for (const auto& [name, sd] : count_dispersion(t2.distribution)) disp[name] = sd;
            entry["dispersion"] = std::move(disp);
            const double mean = mean_dispersion(t2.distribution);
            entry["mean_dispersion"] = mean;
            entry["ranking"] = to_json(rank_importance(t2.distribution));
            entry["distribution"] = to_json(t2.distribution);
            if (mean + 1e-12 < previous) stability["dispersion_non_decreasing"] = false;
            previous = mean;
            stability["temperatures"].push_back(std::move(entry));
        }
    }

    stability["rf_resamples"] = {{"count", resamples}};
    if (resamples > 0) {
        std::vector<ImportanceVector> runs;
        auto vectors = ojson::array();
        for (std::size_t r = 0; r < resamples; ++r) {
            const auto parts = split(data, cfg.eval.train_fraction, derive_seed(ctx.seed, kResample + r));
            const auto balanced = balanced_train(ctx, parts.train, kResample + 1000 + r);
            auto params = cfg.rf;
            params.seed = derive_seed(ctx.seed, kResample + 2000 + r);
            runs.push_back(rf_importance(rf_train(balanced, params)));
            vectors.push_back(to_json(runs.back()));
            spdlog::info("resample {}/{} done", r + 1, resamples);
        }
        stability["rf_resamples"]["importance_vectors"] = std::move(vectors);
        stability["rf_resamples"]["summary"] = summarise_vectors(runs);
    }
    report["stability_tables"] = std::move(stability);
    return finish_report(ctx, std::move(report), "stability");
}

std::string render_summary(const nlohmann::json& r) {
    std::string out;
    out += fmt::format("command: {}", r.value("command", std::string("?")));
    if (r.contains("tag")) out += fmt::format(" ({})", r["tag"].get<std::string>());
    out += fmt::format("\nconfig hash: {}\n", r.value("config_hash", std::string("?")));
    if (r.contains("model_name")) {
        out += fmt::format("model: {}; knowledge: {}\n", r["model_name"].get<std::string>(),
                           r["knowledge"].get<std::string>());
    }
    if (r.contains("eval_set")) {
        out += fmt::format("evaluation set: {} trips, {} risky\n", r["eval_set"]["size"].get<std::size_t>(),
                           r["eval_set"]["risky"].get<std::size_t>());
    }
    out += "\n";
    if (r.contains("metric_report") && !r["metric_report"].is_null()) render_metrics(out, r);
    if (r.contains("rankings") && !r["rankings"].is_null()) render_rankings(out, r);
    if (r.contains("stability_tables")) render_stability(out, r["stability_tables"]);
    if (r.contains("corpus")) {
        const auto& c = r["corpus"];
        out += fmt::format("{}/{} relevant ({} screening failures, {} truncated)\n", c["relevant"].get<std::size_t>(),
                           c["documents"].get<std::size_t>(), c["screening_failures"].get<std::size_t>(),
                           c["truncated"].get<std::size_t>());
    }
    if (r.contains("train")) {
        const auto& t = r["train"];
        out += fmt::format("training split: {} trips ({} risky), balanced to {} ({} risky)\n",
                           t["original"].get<std::size_t>(), t["original_risky"].get<std::size_t>(),
                           t["balanced"].get<std::size_t>(), t["balanced_risky"].get<std::size_t>());
    }
    return out;
}

int run(const std::vector<std::string>& args) {
    CLI::App app{"Truck driving risk prediction and interpretation harness"};
    app.require_subcommand(1);
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string mock;
    std::string log_level = "info";
    app.add_option("--config", config_path, "Harness configuration JSON");
    app.add_option("--seed", seed, "Override the configured seed");
    app.add_option("--mock", mock, "Scripted mock backend instead of the HTTP endpoint");
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

    auto* synth = app.add_subcommand("synth", "Synthesise a trip dataset CSV");
    std::size_t n = 0;
    std::string synth_out;
    synth->add_option("--n", n, "Number of trips")->required();
    synth->add_option("--out", synth_out, "Output CSV (default: paths.dataset)");

    auto* build_kb = app.add_subcommand("build-kb", "Screen the corpus and aggregate the knowledge base");
    auto* export_sft_cmd = app.add_subcommand("export-sft", "Write the fine-tuning JSONL and training config");

    auto* eval = app.add_subcommand("eval", "Run the prediction and/or interpretation evaluation");
    std::string task = "both";
    eval->add_option("--task", task, "predict, interpret or both")
        ->check(CLI::IsMember({"predict", "interpret", "both"}));

    auto* stability = app.add_subcommand("stability", "Temperature sweep and resampling robustness");
    std::vector<std::string> temps;
    std::size_t resamples = 0;
    stability->add_option("--temps", temps, "Temperatures, space or comma separated");
    stability->add_option("--resamples", resamples, "Random-forest resampled datasets");

    auto* ablate = app.add_subcommand("ablate", "Knowledge and adapter ablation run");
    std::string kb_flag = "on";
    std::string adapter;
    ablate->add_option("--kb", kb_flag, "on or off")->check(CLI::IsMember({"on", "off"}));
    ablate->add_option("--adapter", adapter, "Adapter tag from endpoint.adapters")->required();

    auto* report = app.add_subcommand("report", "Print the text summary of a saved report");
    std::string report_path;
    report->add_option("path", report_path, "Report JSON (default: <report_out>/eval.json)");

    std::vector<const char*> argv{"lift"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_code(ErrorKind::usage);
    }

    try {
        auto logger = spdlog::get("lift");
        if (!logger) logger = spdlog::stderr_color_mt("lift");
        spdlog::set_default_logger(logger);
        const auto level = spdlog::level::from_str(log_level);
        if (level == spdlog::level::off && log_level != "off")
            throw Error(ErrorKind::usage, "unknown log level '" + log_level + "'");
        spdlog::set_level(level);

        Context ctx;
        ctx.config = config_path.empty() ? default_config(fs::current_path()) : load_config(config_path);
        ctx.seed = seed.value_or(ctx.config.seed);
        if (seed) ctx.overrides.push_back("seed=" + std::to_string(*seed));
        if (!mock.empty()) {
            require_file(mock, "mock script");
            ctx.mock_script = fs::absolute(mock);
        }

        auto print = [](const RunReport& r) {
            std::cout << r.text << "report written to " << r.json_path.string() << "\n";
        };
        if (*synth) {
            cmd_synth(ctx, n, synth_out.empty() ? std::nullopt : std::optional<fs::path>(synth_out));
        } else if (*build_kb) {
            cmd_build_kb(ctx);
        } else if (*export_sft_cmd) {
            cmd_export_sft(ctx);
        } else if (*eval) {
            const auto t = task == "predict" ? EvalTask::predict : task == "interpret" ? EvalTask::interpret : EvalTask::both;
            print(cmd_eval(ctx, t));
        } else if (*stability) {
            const auto values = parse_temperatures(temps);
            for (double t : values) ctx.overrides.push_back("temperature=" + format_shortest(t));
            ctx.overrides.push_back("resamples=" + std::to_string(resamples));
            print(cmd_stability(ctx, values, resamples));
        } else if (*ablate) {
            ctx.overrides.push_back("kb=" + kb_flag);
            ctx.overrides.push_back("adapter=" + adapter);
            print(cmd_ablate(ctx, kb_flag == "on", adapter));
        } else if (*report) {
            const fs::path path = report_path.empty() ? ctx.config.paths.report_out / "eval.json" : fs::path(report_path);
            require_file(path, "report");
            const auto doc = nlohmann::json::parse(read_file(path.string()), nullptr, false);
            if (doc.is_discarded()) throw Error(ErrorKind::validation, path.string() + " is not valid JSON");
            std::cout << render_summary(doc);
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error (io): " << e.what() << "\n";
        return exit_code(ErrorKind::io);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace lift::cli
