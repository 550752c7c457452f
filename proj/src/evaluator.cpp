#include "lift/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <spdlog/spdlog.h>

#include "lift/catalog.hpp"
#include "lift/error.hpp"
#include "lift/rng.hpp"

namespace lift {

namespace {

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

// Sample standard deviation; 0 for fewer than two values.
double sample_std(const std::vector<double>& values) {
    if (values.size() < 2) return 0.0;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

void sort_ranked(std::vector<RankedEntry>& entries) {
    std::sort(entries.begin(), entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
        if (a.mean != b.mean) return a.mean > b.mean;
        return a.item < b.item;
    });
}

template <typename Key>
std::vector<RankedEntry> summarise(const std::vector<std::map<Key, std::size_t>>& per_trial, std::size_t trials,
                                   auto&& label) {
    std::set<Key> keys;
    for (const auto& counts : per_trial) {
        for (const auto& [key, count] : counts) {
            if (count > 0) keys.insert(key);
        }
    }
    std::vector<RankedEntry> out;
    for (const auto& key : keys) {
        std::vector<double> values;
        for (const auto& counts : per_trial) {
            const auto it = counts.find(key);
            values.push_back(it == counts.end() ? 0.0 : static_cast<double>(it->second));
        }
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(trials);
        out.push_back({label(key), mean, sample_std(values)});
    }
    return out;
}

nlohmann::ordered_json interpretation_json(const InterpretationOutcome& outcome) {
    nlohmann::ordered_json j;
    j["key_variables"] = outcome.key_variables;
    auto combos = nlohmann::ordered_json::array();
    for (const auto& c : outcome.key_combinations) combos.push_back(c);
    j["key_combinations"] = std::move(combos);
    if (outcome.dropped_names > 0) j["dropped_names"] = outcome.dropped_names;
    return j;
}

}  // namespace

ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size())
        throw Error(ErrorKind::usage, "confusion: " + std::to_string(predictions.size()) + " predictions for " +
                                          std::to_string(labels.size()) + " labels");
    if (predictions.empty()) throw Error(ErrorKind::usage, "confusion: empty input");
    ConfusionCounts c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool p = predictions[i] == 1;
        const bool t = labels[i] == 1;
        if (p && t) ++c.tp;
        else if (p) ++c.fp;
        else if (t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

MetricReport metrics(const ConfusionCounts& c) {
    if (c.total() == 0) throw Error(ErrorKind::usage, "metrics: no counts");
    MetricReport r;
    r.counts = c;
    r.accuracy = ratio(c.tp + c.tn, c.total());
    r.precision = ratio(c.tp, c.tp + c.fp);
    r.recall = ratio(c.tp, c.tp + c.fn);
    r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

nlohmann::ordered_json to_json(const MetricReport& report) {
    nlohmann::ordered_json j;
    j["accuracy"] = report.accuracy;
    j["precision"] = report.precision;
    j["recall"] = report.recall;
    j["f1"] = report.f1;
    j["tp"] = report.counts.tp;
    j["tn"] = report.counts.tn;
    j["fp"] = report.counts.fp;
    j["fn"] = report.counts.fn;
    j["unparseable_count"] = report.unparseable_count;
    j["transport_errors"] = report.transport_errors;
    return j;
}

nlohmann::ordered_json to_json(const SampleLog& log) {
    nlohmann::ordered_json j;
    j["trajectory_id"] = log.trajectory_id;
    j["task"] = std::string(to_string(log.task));
    j["raw_text"] = log.raw_text;
    j["parsed"] = log.parsed;
    j["truth"] = log.truth;
    j["trial"] = log.trial;
    if (!log.error.empty()) j["error"] = log.error;
    return j;
}

void write_jsonl(const std::vector<SampleLog>& logs, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    for (const auto& log : logs) out << to_json(log).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    if (!out) throw Error(ErrorKind::io, "write failed: " + path.string());
}

std::int64_t trial_seed(std::uint64_t seed, std::size_t trial) noexcept {
    return static_cast<std::int64_t>(derive_seed(seed, trial) & 0x7fffffffULL);
}

Task1Run run_task1(ChatClient& llm, const Dataset& eval_set, const KnowledgeBase& kb, const Task1Options& opts) {
    if (eval_set.empty()) throw Error(ErrorKind::precondition, "run_task1: empty evaluation set");
    const PromptRenderer renderer(kb, opts.mode);

    const auto& records = eval_set.records();
    std::vector<ChatRequest> requests;
    requests.reserve(records.size());
    for (const auto& rec : records) {
        auto prompt = renderer.task1(rec);
        ChatRequest req;
        req.system = std::move(prompt.system_text);
        req.user = std::move(prompt.user_text);
        req.temperature = opts.temperature;
        req.max_tokens = opts.max_tokens;
        req.seed = trial_seed(opts.seed, 0);
        req.correlation_id = "task1:" + rec.trajectory_id;
        requests.push_back(std::move(req));
    }
    const auto results = chat_batch(llm, requests);

    Task1Run run;
    run.predictions.assign(records.size(), 0);
    std::size_t unparseable = 0;
    std::size_t failed = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        SampleLog log;
        log.trajectory_id = records[i].trajectory_id;
        log.task = Task::predict;
        log.truth = records[i].risk_label;
        if (!results[i].ok) {
            ++failed;
            log.error = std::string(to_string(results[i].error_kind)) + ": " + results[i].error;
        } else {
            log.raw_text = results[i].text;
            try {
                const auto outcome = parse_task1(results[i].text);
                run.predictions[i] = outcome.label;
                log.parsed = {{"label", outcome.label}};
            } catch (const Error& e) {
                ++unparseable;
                log.error = e.what();
            }
        }
        run.log.push_back(std::move(log));
    }
    if (failed > 0) spdlog::warn("task 1: {} of {} calls failed, scored as low risk", failed, records.size());
    if (unparseable > 0) spdlog::warn("task 1: {} unparseable answers scored as low risk", unparseable);

    const auto labels = eval_set.labels();
    const std::vector<int> truth(labels.data(), labels.data() + labels.size());
    run.report = metrics(confusion(run.predictions, truth));
    run.report.unparseable_count = unparseable;
    run.report.transport_errors = failed;
    return run;
}

nlohmann::ordered_json to_json(const ImportanceDistribution& dist) {
    nlohmann::ordered_json j;
    j["trials"] = dist.trials;
    j["temperature"] = dist.temperature;
    j["sample_count"] = dist.sample_count;
    j["unparseable_count"] = dist.unparseable_count;
    j["transport_errors"] = dist.transport_errors;
    auto vars = nlohmann::ordered_json::array();
    for (const auto& counts : dist.per_trial_counts) {
        nlohmann::ordered_json t = nlohmann::ordered_json::object();
        for (const auto& spec : catalog()) {
            const auto it = counts.find(std::string(spec.name));
            if (it != counts.end()) t[it->first] = it->second;
        }
        vars.push_back(std::move(t));
    }
    j["per_trial_counts"] = std::move(vars);
    auto combos = nlohmann::ordered_json::array();
    for (const auto& counts : dist.combination_counts) {
        nlohmann::ordered_json t = nlohmann::ordered_json::object();
        for (const auto& [combo, count] : counts) t[combination_label(combo)] = count;
        combos.push_back(std::move(t));
    }
    j["combination_counts"] = std::move(combos);
    return j;
}

Task2Run run_task2(ChatClient& llm, const Dataset& risky, const KnowledgeBase& kb, const Task2Options& opts) {
    if (opts.trials == 0) throw Error(ErrorKind::precondition, "run_task2: trials must be at least 1");
    if (risky.empty()) throw Error(ErrorKind::precondition, "run_task2: no risky records");
    for (const auto& rec : risky.records()) {
        if (rec.risk_label != 1)
            throw Error(ErrorKind::precondition, "run_task2: record " + rec.trajectory_id + " is not labelled risky");
    }
    const PromptRenderer renderer(kb, opts.mode);
    const auto& records = risky.records();

    Task2Run run;
    auto& dist = run.distribution;
    dist.trials = opts.trials;
    dist.temperature = opts.temperature;
    dist.sample_count = records.size();

    for (std::size_t trial = 0; trial < opts.trials; ++trial) {
        std::vector<ChatRequest> requests;
        requests.reserve(records.size());
        for (const auto& rec : records) {
            auto prompt = renderer.task2(rec);
            ChatRequest req;
            req.system = std::move(prompt.system_text);
            req.user = std::move(prompt.user_text);
            req.temperature = opts.temperature;
            req.max_tokens = opts.max_tokens;
            req.seed = trial_seed(opts.seed, trial);
            req.correlation_id = "task2:" + rec.trajectory_id + ":" + std::to_string(trial);
            requests.push_back(std::move(req));
        }
        const auto results = chat_batch(llm, requests);

        std::map<std::string, std::size_t> var_counts;
        std::map<Combination, std::size_t> combo_counts;
        for (std::size_t i = 0; i < records.size(); ++i) {
            SampleLog log;
            log.trajectory_id = records[i].trajectory_id;
            log.task = Task::interpret;
            log.truth = 1;
            log.trial = trial;
            if (!results[i].ok) {
                ++dist.transport_errors;
                log.error = std::string(to_string(results[i].error_kind)) + ": " + results[i].error;
            } else {
                log.raw_text = results[i].text;
                try {
                    const auto outcome = parse_task2(results[i].text);
                    // sets already hold each name and combination once per answer
                    for (const auto& v : outcome.key_variables) ++var_counts[v];
                    for (const auto& c : outcome.key_combinations) ++combo_counts[c];
                    log.parsed = interpretation_json(outcome);
                } catch (const Error& e) {
                    ++dist.unparseable_count;
                    log.error = e.what();
                }
            }
            run.log.push_back(std::move(log));
        }
        dist.per_trial_counts.push_back(std::move(var_counts));
        dist.combination_counts.push_back(std::move(combo_counts));
    }
    if (dist.unparseable_count > 0)
        spdlog::warn("task 2: {} unparseable answers over {} trials", dist.unparseable_count, dist.trials);
    if (dist.transport_errors > 0) spdlog::warn("task 2: {} calls failed", dist.transport_errors);
    return run;
}

std::optional<std::size_t> RankedList::position(std::string_view item) const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].item == item) return i;
    }
    return std::nullopt;
}

nlohmann::ordered_json to_json(const RankedList& list) {
    auto j = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < list.entries.size(); ++i) {
        const auto& e = list.entries[i];
        j.push_back({{"rank", i + 1}, {"item", e.item}, {"mean", e.mean}, {"std", e.std}});
    }
    return j;
}

RankedList rank_importance(const ImportanceDistribution& dist) {
    if (dist.trials == 0) throw Error(ErrorKind::precondition, "rank_importance: no trials");
    RankedList list{summarise(dist.per_trial_counts, dist.trials, [](const std::string& s) { return s; })};
    sort_ranked(list.entries);
    return list;
}

RankedList rank_combinations(const ImportanceDistribution& dist, double min_mean) {
    if (dist.trials == 0) return {};
    auto entries = summarise(dist.combination_counts, dist.trials, [](const Combination& c) { return combination_label(c); });
    std::erase_if(entries, [&](const RankedEntry& e) { return !(e.mean > min_mean); });
    sort_ranked(entries);
    return RankedList{std::move(entries)};
}

RankedList rank_from_importance(const ImportanceVector& importance) {
    RankedList list;
    for (std::size_t i = 0; i < importance.names.size(); ++i)
        list.entries.push_back({importance.names[i], importance.values(static_cast<Eigen::Index>(i)), 0.0});
    sort_ranked(list.entries);
    return list;
}

std::map<std::string, double> count_dispersion(const ImportanceDistribution& dist) {
    std::map<std::string, double> out;
    for (const auto& e : summarise(dist.per_trial_counts, std::max<std::size_t>(dist.trials, 1),
                                   [](const std::string& s) { return s; }))
        out[e.item] = e.std;
    return out;
}

double mean_dispersion(const ImportanceDistribution& dist) {
    double sum = 0.0;
    for (const auto& [name, sd] : count_dispersion(dist)) sum += sd;
    return sum / static_cast<double>(kNumVariables);
}

RankingComparison compare_rankings(const RankedList& a, const RankedList& b, std::size_t k) {
    if (k == 0) throw Error(ErrorKind::precondition, "compare_rankings: k must be at least 1");
    RankingComparison out;
    std::set<std::string> top_a;
    for (std::size_t i = 0; i < std::min(k, a.entries.size()); ++i) top_a.insert(a.entries[i].item);
    for (std::size_t i = 0; i < std::min(k, b.entries.size()); ++i) out.top_k_overlap += top_a.count(b.entries[i].item);

    std::set<std::string> items;
    for (const auto& e : a.entries) items.insert(e.item);
    for (const auto& e : b.entries) items.insert(e.item);
    if (items.empty()) return out;

    std::vector<double> ra;
    std::vector<double> rb;
    for (const auto& item : items) {
        const auto pa = a.position(item);
        const auto pb = b.position(item);
        ra.push_back(pa ? static_cast<double>(*pa + 1) : static_cast<double>(a.entries.size() + 1));
        rb.push_back(pb ? static_cast<double>(*pb + 1) : static_cast<double>(b.entries.size() + 1));
    }
    const auto n = static_cast<double>(items.size());
    double ma = 0.0;
    double mb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) {
        // a single item or all-tied ranks: agreement is all there is to say
        out.spearman = ra == rb ? 1.0 : 0.0;
    } else {
        out.spearman = sab / std::sqrt(saa * sbb);
    }
    return out;
}

nlohmann::ordered_json to_json(const RankingComparison& comparison) {
    return {{"top_k_overlap", comparison.top_k_overlap}, {"spearman", comparison.spearman}};
}

}  // namespace lift
