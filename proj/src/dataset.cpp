#include "lift/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "lift/error.hpp"
#include "lift/rng.hpp"
#include "lift/text_util.hpp"

namespace lift {

namespace {

constexpr std::string_view kHeader =
    "trajectory_id,vehicle_id,l_f_col,l_std_s,l_fam,s_f_col,s_lane_d,s_avg_s,s_std_s,lk_avg_s,lk_std_s,lk_max_s,"
    "risk_label";

constexpr std::size_t kNumColumns = kNumVariables + 3;
constexpr std::size_t kFleetVehicles = 68;

std::size_t index_of(std::string_view name) { return *variable_index(name); }

bool parse_double(std::string_view text, double& out) {
    text = trim(text);
    if (text.empty()) return false;
    if (text.front() == '+') text.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc{} && ptr == text.data() + text.size();
}

void check_header(std::string_view line) {
    const auto expected = split_view(kHeader, ',');
    std::vector<std::string_view> got;
    for (auto col : split_view(line, ',')) got.push_back(trim(col));

    for (auto name : expected) {
        if (std::find(got.begin(), got.end(), name) == got.end())
            throw Error(ErrorKind::validation, "schema error: missing column '" + std::string(name) + "'");
    }
    for (auto name : got) {
        if (std::find(expected.begin(), expected.end(), name) == expected.end())
            throw Error(ErrorKind::validation, "schema error: unexpected column '" + std::string(name) + "'");
    }
    if (got.size() != expected.size())
        throw Error(ErrorKind::validation, "schema error: duplicated column in header");
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (got[i] != expected[i])
            throw Error(ErrorKind::validation, "schema error: column '" + std::string(expected[i]) +
                                                   "' expected at position " + std::to_string(i + 1));
    }
}

std::vector<std::size_t> indices_with_label(const Dataset& ds, int label) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds[i].risk_label == label) idx.push_back(i);
    }
    return idx;
}

Dataset pick(const Dataset& ds, std::vector<std::size_t> indices, Provenance provenance) {
    std::sort(indices.begin(), indices.end());
    std::vector<TrajectoryRecord> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(ds[i]);
    return Dataset(std::move(out), provenance);
}

}  // namespace

double TrajectoryRecord::feature(std::string_view name) const {
    const auto idx = variable_index(name);
    if (!idx) throw Error(ErrorKind::validation, "unknown variable '" + std::string(name) + "'");
    return features(static_cast<Eigen::Index>(*idx));
}

std::optional<std::string> record_violation(const TrajectoryRecord& record) {
    if (record.risk_label != 0 && record.risk_label != 1) return "risk_label must be 0 or 1";
    const auto specs = catalog();
    for (std::size_t i = 0; i < kNumVariables; ++i) {
        const double v = record.features(static_cast<Eigen::Index>(i));
        if (!std::isfinite(v)) return std::string(specs[i].name) + " is not finite";
        if (v < 0.0) return std::string(specs[i].name) + " is negative";
    }
    if (record.feature("l_fam") > 1.0) return std::string("l_fam exceeds 1");
    if (record.feature("lk_max_s") < record.feature("lk_avg_s")) return std::string("lk_max_s is below lk_avg_s");
    return std::nullopt;
}

std::string_view to_string(Provenance provenance) noexcept {
    switch (provenance) {
        case Provenance::ingested: return "ingested";
        case Provenance::synthetic: return "synthetic";
        case Provenance::derived: return "derived";
    }
    return "unknown";
}

Dataset::Dataset(std::vector<TrajectoryRecord> records, Provenance provenance)
    : records_(std::move(records)), provenance_(provenance) {
    std::unordered_set<std::string> seen;
    seen.reserve(records_.size());
    for (const auto& r : records_) {
        if (!seen.insert(r.trajectory_id).second)
            throw Error(ErrorKind::validation, "duplicate trajectory_id '" + r.trajectory_id + "'");
    }
}

std::size_t Dataset::positive_count() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(records_.begin(), records_.end(), [](const TrajectoryRecord& r) { return r.risk_label == 1; }));
}

Dataset Dataset::with_label(int label) const {
    std::vector<TrajectoryRecord> out;
    for (const auto& r : records_) {
        if (r.risk_label == label) out.push_back(r);
    }
    return Dataset(std::move(out), provenance_);
}

Eigen::MatrixXd Dataset::feature_matrix() const {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(kNumVariables));
    for (std::size_t i = 0; i < size(); ++i) x.row(static_cast<Eigen::Index>(i)) = records_[i].features.transpose();
    return x;
}

Eigen::VectorXi Dataset::labels() const {
    Eigen::VectorXi y(static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) y(static_cast<Eigen::Index>(i)) = records_[i].risk_label;
    return y;
}

std::string_view csv_header() noexcept { return kHeader; }

Dataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open dataset " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::validation, "schema error: empty file " + path.string());
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    check_header(line);

    std::vector<TrajectoryRecord> records;
    std::unordered_set<std::string> seen;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        ++row;
        const auto where = "row " + std::to_string(row) + ": ";
        const auto cols = split_view(line, ',');
        if (cols.size() != kNumColumns)
            throw Error(ErrorKind::validation, where + "expected " + std::to_string(kNumColumns) + " fields, got " +
                                                   std::to_string(cols.size()));

        TrajectoryRecord rec;
        rec.trajectory_id = std::string(trim(cols[0]));
        rec.vehicle_id = std::string(trim(cols[1]));
        if (rec.trajectory_id.empty()) throw Error(ErrorKind::validation, where + "empty trajectory_id");
        for (std::size_t v = 0; v < kNumVariables; ++v) {
            double value = 0.0;
            if (!parse_double(cols[v + 2], value))
                throw Error(ErrorKind::validation, where + "non-numeric value for " +
                                                       std::string(catalog()[v].name) + ": '" +
                                                       std::string(trim(cols[v + 2])) + "'");
            rec.features(static_cast<Eigen::Index>(v)) = value;
        }
        const auto label = trim(cols[kNumColumns - 1]);
        if (label == "0") {
            rec.risk_label = 0;
        } else if (label == "1") {
            rec.risk_label = 1;
        } else {
            throw Error(ErrorKind::validation, where + "risk_label must be 0 or 1, got '" + std::string(label) + "'");
        }
        if (auto bad = record_violation(rec)) throw Error(ErrorKind::validation, where + *bad);
        if (!seen.insert(rec.trajectory_id).second)
            throw Error(ErrorKind::validation, where + "duplicate trajectory_id '" + rec.trajectory_id + "'");
        records.push_back(std::move(rec));
    }
    return Dataset(std::move(records), Provenance::ingested);
}

std::string to_csv(const Dataset& dataset) {
    std::string out(kHeader);
    out += '\n';
    for (const auto& r : dataset.records()) {
        out += r.trajectory_id;
        out += ',';
        out += r.vehicle_id;
        for (Eigen::Index v = 0; v < r.features.size(); ++v) {
            out += ',';
            out += format_shortest(r.features(v));
        }
        out += ',';
        out += std::to_string(r.risk_label);
        out += '\n';
    }
    return out;
}

void write_csv(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out << to_csv(dataset);
    if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

SynthesisSpec SynthesisSpec::table_defaults() {
    SynthesisSpec spec;
    auto set = [&](std::string_view name, double mean, double std, double max, double min) {
        spec.moments[index_of(name)] = VariableMoments{mean, std, min, max};
    };
    set("l_f_col", 0.13, 0.08, 0.27, 0.00);
    set("l_std_s", 7.17, 0.59, 8.63, 6.12);
    set("l_fam", 0.38, 0.09, 0.49, 0.08);
    set("s_f_col", 0.15, 0.18, 0.96, 0.00);
    set("s_lane_d", 0.05, 0.08, 0.58, 0.00);
    set("s_avg_s", 11.55, 2.61, 21.54, 3.19);
    set("s_std_s", 6.52, 1.36, 11.97, 0.78);
    set("lk_avg_s", 69.09, 7.20, 95.56, 40.83);
    set("lk_std_s", 12.63, 2.94, 33.52, 3.23);
    set("lk_max_s", 96.16, 7.32, 123.00, 71.00);
    spec.risk_rate = 74.0 / 1791.0;
    return spec;
}

std::vector<std::string> SynthesisSpec::violations() const {
    std::vector<std::string> out;
    const auto specs = catalog();
    for (std::size_t i = 0; i < kNumVariables; ++i) {
        const auto& m = moments[i];
        const std::string name(specs[i].name);
        if (!std::isfinite(m.mean) || !std::isfinite(m.std) || !std::isfinite(m.min) || !std::isfinite(m.max)) {
            out.push_back(name + ": non-finite moment");
            continue;
        }
        if (m.min > m.mean) out.push_back(name + ": min > mean");
        if (m.mean > m.max) out.push_back(name + ": mean > max");
        if (m.std < 0.0) out.push_back(name + ": std < 0");
        if (!std::isfinite(risk_shift[i])) out.push_back(name + ": non-finite risk_shift");
    }
    if (!(risk_rate >= 0.0 && risk_rate <= 1.0)) out.push_back("risk_rate outside [0, 1]");
    const auto& avg = moments[index_of("lk_avg_s")];
    const auto& mx = moments[index_of("lk_max_s")];
    if (mx.max < avg.min) out.push_back("lk_max_s range lies below lk_avg_s range");
    if (moments[index_of("l_fam")].max > 1.0) out.push_back("l_fam: max > 1");
    for (std::size_t i = 0; i < kNumVariables; ++i) {
        if (moments[i].min < 0.0) out.push_back(std::string(specs[i].name) + ": min < 0");
    }
    return out;
}

SynthesisSpec load_synthesis_spec(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path.string()));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::validation, "synthesis spec " + path.string() + ": " + e.what());
    }
    auto spec = SynthesisSpec::table_defaults();
    try {
        if (doc.contains("risk_rate")) spec.risk_rate = doc.at("risk_rate").get<double>();
        if (doc.contains("variables")) {
            for (const auto& [name, entry] : doc.at("variables").items()) {
                const auto idx = variable_index(name);
                if (!idx) throw Error(ErrorKind::validation, "synthesis spec: unknown variable '" + name + "'");
                auto& m = spec.moments[*idx];
                if (entry.contains("mean")) m.mean = entry.at("mean").get<double>();
                if (entry.contains("std")) m.std = entry.at("std").get<double>();
                if (entry.contains("min")) m.min = entry.at("min").get<double>();
                if (entry.contains("max")) m.max = entry.at("max").get<double>();
                if (entry.contains("risk_shift")) spec.risk_shift[*idx] = entry.at("risk_shift").get<double>();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::validation, "synthesis spec " + path.string() + ": " + e.what());
    }
    return spec;
}

Dataset synthesize(const SynthesisSpec& spec, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw Error(ErrorKind::usage, "synthesize: n must be at least 1");
    if (auto bad = spec.violations(); !bad.empty())
        throw Error(ErrorKind::validation, "invalid synthesis spec: " + join(bad, "; "));

    const auto avg_idx = static_cast<Eigen::Index>(index_of("lk_avg_s"));
    const auto max_idx = static_cast<Eigen::Index>(index_of("lk_max_s"));

    Rng rng(seed);
    std::vector<TrajectoryRecord> records;
    records.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        TrajectoryRecord rec;
        std::ostringstream id;
        id << "syn-" << std::setw(6) << std::setfill('0') << (i + 1);
        rec.trajectory_id = id.str();
        rec.risk_label = rng.bernoulli(spec.risk_rate) ? 1 : 0;
        rec.vehicle_id = "veh-" + std::to_string(rng.index(kFleetVehicles) + 1);
        for (std::size_t v = 0; v < kNumVariables; ++v) {
            const auto& m = spec.moments[v];
            const double shift = rec.risk_label == 1 ? spec.risk_shift[v] * m.std : 0.0;
            const double draw = m.mean + shift + m.std * rng.normal();
            rec.features(static_cast<Eigen::Index>(v)) = std::clamp(draw, m.min, m.max);
        }
        // The traffic maximum cannot sit below the traffic mean of the same trip.
        rec.features(max_idx) = std::max(rec.features(max_idx), rec.features(avg_idx));
        records.push_back(std::move(rec));
    }
    return Dataset(std::move(records), Provenance::synthetic);
}

SplitResult split(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw Error(ErrorKind::usage, "split: train_fraction must lie in (0, 1)");

    Rng rng(seed);
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;
    for (int label : {0, 1}) {
        auto idx = indices_with_label(dataset, label);
        if (idx.size() < 2)
            throw Error(ErrorKind::precondition, "stratification error: class " + std::to_string(label) + " has " +
                                                     std::to_string(idx.size()) + " member(s), need at least 2");
        rng.shuffle(std::span<std::size_t>(idx));
        const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(idx.size()) * train_fraction));
        train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        test_idx.insert(test_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    }
    return {pick(dataset, std::move(train_idx), dataset.provenance()),
            pick(dataset, std::move(test_idx), dataset.provenance())};
}

Dataset smote_balance(const Dataset& train, std::size_t k_neighbors, std::uint64_t seed) {
    if (k_neighbors == 0) throw Error(ErrorKind::usage, "smote: k_neighbors must be at least 1");
    const std::size_t positives = train.positive_count();
    const std::size_t negatives = train.negative_count();
    if (positives == negatives) return train;

    const int minority_label = positives < negatives ? 1 : 0;
    const auto minority = indices_with_label(train, minority_label);
    const std::size_t m = minority.size();
    if (m < 2)
        throw Error(ErrorKind::precondition,
                    "insufficient data: minority class has " + std::to_string(m) + " record(s), need at least 2");
    const std::size_t needed = std::max(positives, negatives) - m;

    const Eigen::MatrixXd x = train.feature_matrix();
    const Eigen::RowVectorXd mean = x.colwise().mean();
    Eigen::RowVectorXd scale = ((x.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(x.rows()))
                                   .sqrt()
                                   .matrix();
    for (Eigen::Index j = 0; j < scale.size(); ++j) {
        if (scale(j) <= 0.0) scale(j) = 1.0;
    }

    Eigen::MatrixXd z(static_cast<Eigen::Index>(m), x.cols());
    for (std::size_t i = 0; i < m; ++i) {
        const auto row = static_cast<Eigen::Index>(minority[i]);
        z.row(static_cast<Eigen::Index>(i)) = (x.row(row) - mean).cwiseQuotient(scale);
    }

    const std::size_t k = std::min(k_neighbors, m - 1);
    std::vector<std::vector<std::size_t>> neighbours(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<std::pair<double, std::size_t>> dist;
        dist.reserve(m - 1);
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i) continue;
            dist.emplace_back((z.row(static_cast<Eigen::Index>(i)) - z.row(static_cast<Eigen::Index>(j))).squaredNorm(),
                              j);
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        for (std::size_t r = 0; r < k; ++r) neighbours[i].push_back(dist[r].second);
    }

    std::unordered_set<std::string> ids;
    for (const auto& r : train.records()) ids.insert(r.trajectory_id);

    std::vector<TrajectoryRecord> out = train.records();
    out.reserve(out.size() + needed);
    Rng rng(seed);
    std::size_t serial = 0;
    for (std::size_t s = 0; s < needed; ++s) {
        const std::size_t base = rng.index(m);
        const std::size_t nn = neighbours[base][rng.index(k)];
        const double u = rng.uniform_closed();
        const auto& a = train[minority[base]];
        const auto& b = train[minority[nn]];

        TrajectoryRecord rec;
        do {
            rec.trajectory_id = "smote-" + std::to_string(++serial);
        } while (ids.count(rec.trajectory_id));
        ids.insert(rec.trajectory_id);
        rec.vehicle_id = a.vehicle_id;
        rec.features = a.features + u * (b.features - a.features);
        rec.risk_label = minority_label;
        out.push_back(std::move(rec));
    }
    return Dataset(std::move(out), Provenance::derived);
}

Dataset sample_eval(const Dataset& test, EvalRatio ratio, std::uint64_t seed, std::optional<std::size_t> risky_count) {
    if (ratio.risky == 0) throw Error(ErrorKind::usage, "sample_eval: risky side of the ratio must be positive");
    auto risky = indices_with_label(test, 1);
    if (risky_count) {
        if (*risky_count > risky.size())
            throw Error(ErrorKind::precondition, "sampling error: requested " + std::to_string(*risky_count) +
                                                     " risky records, only " + std::to_string(risky.size()) +
                                                     " available");
        risky.resize(*risky_count);
    }
    auto nonrisky = indices_with_label(test, 0);
    const std::size_t wanted = risky.size() * ratio.nonrisky / ratio.risky;
    if (wanted > nonrisky.size())
        throw Error(ErrorKind::precondition, "sampling error: need " + std::to_string(wanted) +
                                                 " non-risky records, only " + std::to_string(nonrisky.size()) +
                                                 " available (shortfall " +
                                                 std::to_string(wanted - nonrisky.size()) + ")");

    Rng rng(seed);
    for (std::size_t i = 0; i < wanted; ++i) {
        const std::size_t j = i + rng.index(nonrisky.size() - i);
        std::swap(nonrisky[i], nonrisky[j]);
    }
    nonrisky.resize(wanted);

    std::vector<std::size_t> chosen = std::move(risky);
    chosen.insert(chosen.end(), nonrisky.begin(), nonrisky.end());
    return pick(test, std::move(chosen), Provenance::derived);
}

}  // namespace lift
