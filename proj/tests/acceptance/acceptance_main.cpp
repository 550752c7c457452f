// Acceptance runner: one PASS/FAIL line per primary criterion, nonzero exit
// if any fails. Everything runs offline against the scripted mock backend.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cli_support.hpp"
#include "lift/catalog.hpp"
#include "lift/evaluator.hpp"
#include "lift/permanova.hpp"
#include "lift/random_forest.hpp"
#include "lift/rng.hpp"
#include "lift/textualize.hpp"

using namespace lift;
namespace fx = lift::fixture;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

struct Criterion {
    std::string name;
    double limit_s;
    std::function<Outcome()> check;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt_double(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

// ---- metric identity --------------------------------------------------------

Outcome metric_identity() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto r = metrics({42, 152, 24, 2});
    const double elapsed = seconds_since(t0);
    o.require(std::abs(r.accuracy - 0.88) <= 0.005, "accuracy " + fmt_double(r.accuracy));
    o.require(std::abs(r.precision - 0.64) <= 0.005, "precision " + fmt_double(r.precision));
    o.require(std::abs(r.recall - 0.95) <= 0.005, "recall " + fmt_double(r.recall));
    o.require(std::abs(r.f1 - 0.76) <= 0.005, "f1 " + fmt_double(r.f1));
    o.require(elapsed < 1e-3, "metrics() took " + fmt_double(elapsed * 1e3, 3) + " ms");
    if (o.ok)
        o.detail = "acc " + fmt_double(r.accuracy) + " prec " + fmt_double(r.precision) + " rec " +
                   fmt_double(r.recall) + " f1 " + fmt_double(r.f1);
    return o;
}

// ---- PERMANOVA --------------------------------------------------------------

Eigen::MatrixXd normal(std::mt19937_64& gen, int rows, int cols, double shift = 0.0) {
    std::normal_distribution<double> nd(shift, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = nd(gen);
    return m;
}

// Pseudo-F through group centroids on z-scored columns.
double centroid_f(const Eigen::MatrixXd& raw, const std::vector<bool>& first) {
    Eigen::MatrixXd x = raw;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double m = x.col(c).mean();
        const double sd = std::sqrt((x.col(c).array() - m).square().mean());
        x.col(c) = (x.col(c).array() - m) / sd;
    }
    const Eigen::RowVectorXd grand = x.colwise().mean();
    double sst = 0.0, ssw = 0.0;
    for (int g = 0; g < 2; ++g) {
        Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(x.cols());
        int n = 0;
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            if (first[i] == (g == 0)) c += x.row(i), ++n;
        c /= n;
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            if (first[i] == (g == 0)) ssw += (x.row(i) - c).squaredNorm();
    }
    for (Eigen::Index i = 0; i < x.rows(); ++i) sst += (x.row(i) - grand).squaredNorm();
    return (sst - ssw) / (ssw / static_cast<double>(x.rows() - 2));
}

Outcome permanova_exactness() {
    Outcome o;
    std::mt19937_64 gen(2024);
    const std::vector<Eigen::Index> cols{0, 1, 2};
    int cases = 0;
    for (int rep = 0; rep < 25; ++rep) {
        const auto a = normal(gen, 4, 3, rep % 5 * 0.4);
        const auto b = normal(gen, 4, 3);
        const auto r = permanova(a, b, cols, {.n_perm = 999, .seed = static_cast<std::uint64_t>(rep)});

        Eigen::MatrixXd pooled(8, 3);
        pooled << a, b;
        const double f_obs = centroid_f(pooled, {true, true, true, true, false, false, false, false});
        int at_least = 0, total = 0;
        for (int mask = 0; mask < 256; ++mask) {
            if (__builtin_popcount(mask) != 4) continue;
            std::vector<bool> first(8);
            for (int i = 0; i < 8; ++i) first[i] = (mask >> i) & 1;
            ++total;
            at_least += centroid_f(pooled, first) >= f_obs - 1e-9 * std::max(1.0, f_obs);
        }
        o.require(total == 70, "enumerated " + std::to_string(total) + " assignments");
        o.require(r.exhaustive && r.n_permutations == 69, "not exhaustive on N=8");
        o.require(r.p_value == at_least / 70.0, "rep " + std::to_string(rep) + ": p " + fmt_double(r.p_value, 6) +
                                                     " vs enumeration " + fmt_double(at_least / 70.0, 6));
        ++cases;
    }
    if (o.ok) o.detail = std::to_string(cases) + " datasets, p equal to 70-assignment enumeration";
    return o;
}

Outcome permanova_power_calibration() {
    Outcome o;
    const std::vector<Eigen::Index> col{0};
    std::mt19937_64 gen(77);
    // two pooled standard deviations apart
    const auto a = normal(gen, 50, 1, 2.0);
    const auto b = normal(gen, 50, 1);
    const auto power = permanova(a, b, col, {.n_perm = 999, .seed = 1});
    o.require(power.p_value <= 0.01, "separated groups gave p " + fmt_double(power.p_value));

    int above = 0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        std::mt19937_64 g(1000 + s);
        const auto x = normal(g, 50, 1);
        const auto y = normal(g, 50, 1);
        above += permanova(x, y, col, {.n_perm = 999, .seed = s}).p_value > 0.05;
    }
    o.require(above >= 45, "null p > 0.05 in only " + std::to_string(above) + "/50 seeds");
    if (o.ok) o.detail = "separated p " + fmt_double(power.p_value) + "; null p > 0.05 in " + std::to_string(above) + "/50";
    return o;
}

// ---- SMOTE --------------------------------------------------------------------

// Is s on the segment between two distinct minority originals?
bool on_some_segment(const Eigen::VectorXd& s, const std::vector<Eigen::VectorXd>& minority) {
    for (std::size_t i = 0; i < minority.size(); ++i) {
        for (std::size_t j = 0; j < minority.size(); ++j) {
            if (i == j) continue;
            const Eigen::VectorXd d = minority[j] - minority[i];
            const double len2 = d.squaredNorm();
            if (len2 == 0.0) continue;
            const double lambda = (s - minority[i]).dot(d) / len2;
            if (lambda < -1e-9 || lambda > 1 + 1e-9) continue;
            const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
            if ((minority[i] + lambda * d - s).cwiseAbs().maxCoeff() <= 1e-9 * scale) return true;
        }
    }
    return false;
}

Outcome smote_suite() {
    Outcome o;
    const auto parts = split(fx::fleet_fixture(), 0.5, 3);
    std::size_t synthetic_checked = 0;
    for (std::size_t k : {1u, 3u, 5u}) {
        const auto train = parts.train;
        const auto out = smote_balance(train, k, 10 + k);
        o.require(out.positive_count() == out.negative_count(),
                  "k=" + std::to_string(k) + ": " + std::to_string(out.positive_count()) + " vs " +
                      std::to_string(out.negative_count()));
        o.require(out.negative_count() == train.negative_count(), "majority class changed");

        std::vector<Eigen::VectorXd> minority;
        for (const auto& r : train.records())
            if (r.risk_label == 1) minority.push_back(r.features);
        for (std::size_t i = 0; i < train.size(); ++i)
            o.require(out[i].trajectory_id == train[i].trajectory_id && out[i].features == train[i].features,
                      "original row " + std::to_string(i) + " altered");
        for (std::size_t i = train.size(); i < out.size(); ++i) {
            o.require(out[i].risk_label == 1, "synthetic row labelled non-risky");
            o.require(on_some_segment(out[i].features, minority),
                      "synthetic row " + out[i].trajectory_id + " is not a convex combination of two minority rows");
            ++synthetic_checked;
        }
        o.require(to_csv(smote_balance(out, k, 99)) == to_csv(out), "not idempotent on balanced input");
    }
    if (o.ok) o.detail = std::to_string(synthetic_checked) + " synthetic rows on minority segments; balanced and idempotent";
    return o;
}

// ---- random forest ------------------------------------------------------------

Outcome rf_suite() {
    Outcome o;
    std::mt19937_64 gen(5);
    std::normal_distribution<double> nd;
    const int n = 800;
    Eigen::MatrixXd x(n, kNumVariables);
    Eigen::VectorXi y(n);
    for (int i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = nd(gen);
        y(i) = x(i, 6) > 0.0 ? 1 : 0;  // perfectly split at 0 on one variable, nine noise columns
    }
    std::vector<std::string> names;
    for (const auto& spec : catalog()) names.emplace_back(spec.name);
    ForestParams p;
    p.n_trees = 200;
    p.seed = 1;
    const auto model = rf_train(x.topRows(n / 2), y.head(n / 2), names, p);
    const auto preds = rf_predict(model, x.bottomRows(n / 2));
    int hit = 0;
    for (int i = 0; i < n / 2; ++i) hit += preds[static_cast<std::size_t>(i)] == y(n / 2 + i);
    const double acc = hit / static_cast<double>(n / 2);
    o.require(acc >= 0.95, "separable held-out accuracy " + fmt_double(acc));

    // 1D split at x = 0 is learned exactly on the training data
    Eigen::MatrixXd x1(40, 1);
    Eigen::VectorXi y1(40);
    for (int i = 0; i < 40; ++i) {
        x1(i, 0) = (i - 19.5) / 10.0;
        y1(i) = x1(i, 0) > 0.0;
    }
    ForestParams p1;
    p1.n_trees = 25;
    p1.min_leaf = 1;
    const auto pred1 = rf_predict(rf_train(x1, y1, {"x"}, p1), x1);
    int hit1 = 0;
    for (int i = 0; i < 40; ++i) hit1 += pred1[static_cast<std::size_t>(i)] == y1(i);
    o.require(hit1 == 40, "1D split training accuracy " + std::to_string(hit1) + "/40");

    auto spec = SynthesisSpec::table_defaults();
    spec.risk_rate = 0.2;
    spec.risk_shift[*variable_index("s_std_s")] = 1.5;
    int first = 0;
    double worst_norm = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto data = synthesize(spec, 1000, 100 + seed);
        ForestParams fp;
        fp.n_trees = 100;
        fp.seed = seed;
        const auto imp = rf_importance(rf_train(data, fp));
        Eigen::Index top;
        imp.values.maxCoeff(&top);
        first += imp.names[static_cast<std::size_t>(top)] == "s_std_s";
        worst_norm = std::max(worst_norm, std::abs(imp.values.sum() - 1.0));
    }
    o.require(first >= 9, "s_std_s ranked first in " + std::to_string(first) + "/10 seeds");
    o.require(worst_norm <= 1e-9, "importance sums off by " + fmt_double(worst_norm, 12));
    if (o.ok)
        o.detail = "held-out accuracy " + fmt_double(acc) + "; planted variable first in " + std::to_string(first) +
                   "/10; |sum-1| <= " + fmt_double(worst_norm, 12);
    return o;
}

// ---- end-to-end -------------------------------------------------------------

std::vector<std::string> sorted_names(const nlohmann::json& arr) {
    std::set<std::string> s;
    for (const auto& v : arr) s.insert(v.get<std::string>());
    return {s.begin(), s.end()};
}

std::string label_of(const std::vector<std::string>& combo) {
    std::string out;
    for (const auto& v : combo) out += (out.empty() ? "" : "+") + v;
    return out;
}

Outcome end_to_end() {
    Outcome o;
    fx::TempDir dir("e2e");
    nlohmann::json seeds = nlohmann::json::array();
    for (int s = 0; s < 10; ++s) seeds.push_back(s);
    const auto cfg_path = fx::write_harness_config(
        dir.path(), {{"eval", {{"trials", 10}, {"seeds", seeds}}}, {"rf", {{"n_trees", 200}, {"max_depth", 12}}},
                     {"permanova", {{"n_perm", 999}}}});
    fx::write_corpus(dir / "corpus", 20, 0);
    const auto mock_path = fx::offline_mock();
    const std::vector<std::string> base{"--config", cfg_path.string(), "--mock", mock_path.string(), "--log-level", "warn"};
    const auto step = [&](std::vector<std::string> args) {
        args.insert(args.begin(), base.begin(), base.end());
        const auto r = fx::run_cli(args);
        o.require(r.code == 0, args[base.size()] + " exited " + std::to_string(r.code) + ": " + r.out);
        return r;
    };
    step({"synth", "--n", "1791"});
    step({"build-kb"});
    step({"export-sft"});
    step({"eval", "--task", "both"});
    if (!o.ok) return o;

    const auto report = fx::read_json(dir / "reports" / "eval.json");
    const auto cfg = fx::read_json(cfg_path);
    const auto script_doc = fx::read_json(mock_path);
    const auto script = MockScript::from_json(script_doc);
    const auto data = load_csv(dir / "trips.csv");
    const auto kb = load_kb(dir / "kb.json");
    const PromptRenderer renderer(kb);
    std::map<std::string, const TrajectoryRecord*> by_id;
    for (const auto& r : data.records()) by_id[r.trajectory_id] = &r;

    // Recount: ask the script for every (sample, trial) pair the run covered
    // and tally the answers without going through the harness parsers.
    const std::size_t trials = cfg["eval"]["trials"];
    const double temperature = cfg["eval"]["temperature"];
    const std::uint64_t task2_seed = derive_seed(cfg["seed"].get<std::uint64_t>(), 4);
    std::vector<std::map<std::string, std::size_t>> var_counts(trials);
    std::vector<std::map<std::string, std::size_t>> combo_counts(trials);
    std::set<std::string> risky_ids;
    std::size_t lines = 0;
    std::istringstream log(fx::slurp(dir / "reports" / "logs" / "eval-interpret.jsonl"));
    std::string line;
    while (std::getline(log, line)) {
        const auto entry = nlohmann::json::parse(line);
        const std::string id = entry["trajectory_id"];
        const std::size_t trial = entry["trial"];
        const auto it = by_id.find(id);
        if (it == by_id.end() || trial >= trials) {
            o.require(false, "log names unknown sample " + id);
            return o;
        }
        risky_ids.insert(id);
        ++lines;
        const auto prompt = renderer.task2(*it->second);
        ChatRequest req;
        req.system = prompt.system_text;
        req.user = prompt.user_text;
        req.temperature = temperature;
        req.seed = static_cast<std::int64_t>(derive_seed(task2_seed, trial) & 0x7fffffffULL);
        const auto text = script.respond(req);
        o.require(text == entry["raw_text"], "logged answer for " + id + " differs from the script");
        const auto answer = nlohmann::json::parse(text);
        for (const auto& v : sorted_names(answer["key_variables"])) ++var_counts[trial][v];
        std::set<std::string> combos;
        for (const auto& c : answer["key_combinations"]) combos.insert(label_of(sorted_names(c)));
        for (const auto& c : combos) ++combo_counts[trial][c];
    }
    const std::size_t risky = report["eval_set"]["risky"];
    o.require(risky_ids.size() == risky && lines == risky * trials,
              std::to_string(lines) + " log lines for " + std::to_string(risky) + " risky x " + std::to_string(trials));

    const auto& dist = report["importance_distribution"];
    for (std::size_t t = 0; t < trials && o.ok; ++t) {
        std::map<std::string, std::size_t> reported = dist["per_trial_counts"][t];
        o.require(reported == var_counts[t], "trial " + std::to_string(t) + " variable counts differ from recount");
        std::map<std::string, std::size_t> reported_combos = dist["combination_counts"][t];
        o.require(reported_combos == combo_counts[t], "trial " + std::to_string(t) + " combination counts differ");
    }

    // Most frequent combination by construction: softmax(log w / T) mass per
    // combination over the interpretation rule's alternatives.
    std::map<std::string, double> mass;
    for (const auto& rule : script_doc["rules"]) {
        if (!rule.contains("responses")) continue;
        double z = 0.0;
        for (const auto& alt : rule["responses"]) z += std::pow(alt["weight"].get<double>(), 1.0 / temperature);
        for (const auto& alt : rule["responses"]) {
            const auto answer = nlohmann::json::parse(alt["text"].get<std::string>());
            std::set<std::string> combos;
            for (const auto& c : answer["key_combinations"]) combos.insert(label_of(sorted_names(c)));
            for (const auto& c : combos) mass[c] += std::pow(alt["weight"].get<double>(), 1.0 / temperature) / z;
        }
    }
    const auto expected_top =
        std::max_element(mass.begin(), mass.end(), [](const auto& a, const auto& b) { return a.second < b.second; })->first;
    const auto& combos = report["rankings"]["combinations"];
    o.require(!combos.empty() && combos[0]["item"] == expected_top,
              "top combination " + (combos.empty() ? std::string("<none>") : combos[0]["item"].get<std::string>()) +
                  ", script favours " + expected_top);
    if (o.ok)
        o.detail = std::to_string(lines) + " answers recounted exactly; top combination " + expected_top + " (p " +
                   fmt_double(report["permanova_results"][0]["result"]["p_value"].get<double>()) + ")";
    return o;
}

// ---- prompts and SFT ----------------------------------------------------------

Outcome prompt_determinism() {
    Outcome o;
    const auto record = fx::sample_record("golden-1", 1);
    for (const auto& [file, render] :
         std::vector<std::pair<std::string, std::function<PromptBundle()>>>{
             {"task1_prompt.txt", [&] { return render_task1(record, reference_kb()); }},
             {"task2_prompt.txt", [&] { return render_task2(record, reference_kb()); }}}) {
        const auto first = fx::golden_text(render());
        o.require(first == fx::golden_text(render()), file + " differs between two renders");
        o.require(first == fx::slurp(std::filesystem::path(LIFT_GOLDEN_DIR) / file), file + " differs from golden file");
    }
    const PromptRenderer renderer(reference_kb());
    const auto fleet = fx::fleet_fixture();
    std::set<std::string> systems, users;
    for (const auto& r : fleet.records()) {
        systems.insert(renderer.task1(r).system_text);
        users.insert(renderer.task1(r).user_text);
        if (r.risk_label == 1) systems.insert(renderer.task2(r).system_text);
    }
    o.require(systems.size() == 2, std::to_string(systems.size()) + " distinct system texts over the fleet");
    if (o.ok)
        o.detail = "golden files match; one system text per task over " + std::to_string(fleet.size()) + " trips, " +
                   std::to_string(users.size()) + " distinct user texts";
    return o;
}

Outcome sft_round_trip() {
    Outcome o;
    fx::TempDir dir("sft");
    const auto parts = split(fx::fleet_fixture(), 0.5, 1);
    const auto train = smote_balance(parts.train, 5, 2);
    const auto written = export_sft(train, reference_kb(), dir / "sft.jsonl");
    std::istringstream lines(fx::slurp(dir / "sft.jsonl"));
    std::string line;
    std::size_t i = 0, matched = 0;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        if (i < train.size()) {
            try {
                matched += parse_task1(j["assistant"].get<std::string>()).label == train[i].risk_label;
            } catch (const Error&) {
            }
        }
        ++i;
    }
    o.require(written == train.size() && i == train.size(), std::to_string(i) + " lines for " + std::to_string(train.size()));
    o.require(matched == train.size(), std::to_string(matched) + "/" + std::to_string(train.size()) + " labels recovered");
    if (o.ok) o.detail = std::to_string(matched) + "/" + std::to_string(train.size()) + " assistant texts re-parse to their labels";
    return o;
}

// ---- stability ---------------------------------------------------------------

Outcome stability_monotonicity() {
    Outcome o;
    fx::TempDir dir("stability");
    const auto cfg = fx::write_harness_config(dir.path(), {{"eval", {{"trials", 10}}}});
    fx::write_corpus(dir / "corpus", 4, 0);
    for (const auto& args : std::vector<std::vector<std::string>>{
             {"synth", "--n", "1791"},
             {"build-kb"},
             {"stability", "--temps", "0.01,0.5,1.0", "--resamples", "3"}}) {
        std::vector<std::string> full{"--config", cfg.string(), "--mock", fx::offline_mock().string(), "--log-level", "warn"};
        full.insert(full.end(), args.begin(), args.end());
        const auto r = fx::run_cli(full);
        o.require(r.code == 0, args[0] + " exited " + std::to_string(r.code) + ": " + r.out);
    }
    if (!o.ok) return o;

    const auto report = fx::read_json(dir / "reports" / "stability.json");
    std::vector<double> recomputed;
    std::string trace;
    for (const auto& entry : report["stability_tables"]["temperatures"]) {
        // mean over the catalog of the per-variable sample std across trials
        const auto& per_trial = entry["distribution"]["per_trial_counts"];
        const double n = static_cast<double>(per_trial.size());
        double total = 0.0;
        for (const auto& spec : catalog()) {
            std::vector<double> c;
            for (const auto& t : per_trial) c.push_back(t.value(std::string(spec.name), 0.0));
            double mean = 0.0;
            for (double v : c) mean += v / n;
            double ss = 0.0;
            for (double v : c) ss += (v - mean) * (v - mean);
            total += n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
        }
        const double disp = total / static_cast<double>(kNumVariables);
        o.require(std::abs(disp - entry["mean_dispersion"].get<double>()) <= 1e-9,
                  "reported dispersion disagrees with recount at T=" + fmt_double(entry["temperature"].get<double>(), 2));
        recomputed.push_back(disp);
        trace += (trace.empty() ? "" : " <= ") + fmt_double(disp, 3);
    }
    o.require(recomputed.size() == 3, "expected three temperatures");
    for (std::size_t i = 1; i < recomputed.size(); ++i)
        o.require(recomputed[i] >= recomputed[i - 1], "dispersion decreased: " + trace);
    o.require(report["stability_tables"]["dispersion_non_decreasing"].get<bool>(), "report flags a decrease");
    if (o.ok) o.detail = "mean dispersion " + trace + " at T = 0.01, 0.5, 1.0";
    return o;
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {"metric identity", 1.0, metric_identity},
        {"PERMANOVA exactness", 1.0, permanova_exactness},
        {"PERMANOVA power/calibration", 30.0, permanova_power_calibration},
        {"SMOTE property suite", 5.0, smote_suite},
        {"RF behavioral suite", 60.0, rf_suite},
        {"end-to-end offline run", 120.0, end_to_end},
        {"prompt determinism", 60.0, prompt_determinism},
        {"SFT round-trip", 60.0, sft_round_trip},
        {"stability monotonicity", 120.0, stability_monotonicity},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o.ok = false;
            o.detail = std::string("threw: ") + e.what();
        }
        const double elapsed = seconds_since(t0);
        if (o.ok && elapsed > c.limit_s) {
            o.ok = false;
            o.detail = "took " + fmt_double(elapsed, 2) + " s, limit " + fmt_double(c.limit_s, 0) + " s";
        }
        failed += !o.ok;
        std::cout << (o.ok ? "PASS" : "FAIL") << "  " << c.name << " (" << fmt_double(elapsed, 2) << " s): " << o.detail
                  << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
