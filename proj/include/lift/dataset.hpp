#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "lift/catalog.hpp"

namespace lift {

struct TrajectoryRecord {
    std::string trajectory_id;
    std::string vehicle_id;
    FeatureVector features = FeatureVector::Zero();
    int risk_label = 0;

    double feature(std::string_view name) const;
};

/// Empty when the record satisfies the value-domain invariants; otherwise a
/// short description of the first violation.
std::optional<std::string> record_violation(const TrajectoryRecord& record);

enum class Provenance { ingested, synthetic, derived };

std::string_view to_string(Provenance provenance) noexcept;

/// Ordered collection of trips with unique trajectory ids.
class Dataset {
public:
    Dataset() = default;
    /// Throws validation error on duplicate trajectory ids.
    Dataset(std::vector<TrajectoryRecord> records, Provenance provenance);

    const std::vector<TrajectoryRecord>& records() const noexcept { return records_; }
    Provenance provenance() const noexcept { return provenance_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    const TrajectoryRecord& operator[](std::size_t i) const { return records_[i]; }

    std::size_t positive_count() const noexcept;
    std::size_t negative_count() const noexcept { return size() - positive_count(); }

    /// Records with the given label, in dataset order.
    Dataset with_label(int label) const;

    /// n x 10 matrix, rows in dataset order, columns in catalog order.
    Eigen::MatrixXd feature_matrix() const;
    Eigen::VectorXi labels() const;

private:
    std::vector<TrajectoryRecord> records_;
    Provenance provenance_ = Provenance::ingested;
};

/// Exact CSV header accepted by load_csv and produced by write_csv.
std::string_view csv_header() noexcept;

Dataset load_csv(const std::filesystem::path& path);
void write_csv(const Dataset& dataset, const std::filesystem::path& path);
/// Same bytes write_csv would produce.
std::string to_csv(const Dataset& dataset);

struct VariableMoments {
    double mean = 0.0;
    double std = 0.0;
    double min = 0.0;
    double max = 0.0;
};

/// Marginal generator for synthetic trips. Variables are independent,
/// clipped normals; the risky class is shifted by risk_shift standard
/// deviations per variable.
struct SynthesisSpec {
    std::array<VariableMoments, kNumVariables> moments{};
    double risk_rate = 0.0;
    std::array<double, kNumVariables> risk_shift{};

    /// Descriptive statistics of the reference fleet data, no class shift,
    /// positive rate 74/1791.
    static SynthesisSpec table_defaults();

    /// Violated bounds, one entry per problem; empty when valid.
    std::vector<std::string> violations() const;
};

/// Reads {"risk_rate": r, "variables": {"<name>": {"mean","std","min","max","risk_shift"}}}.
/// Unspecified variables and fields keep their table_defaults() values.
SynthesisSpec load_synthesis_spec(const std::filesystem::path& path);

Dataset synthesize(const SynthesisSpec& spec, std::size_t n, std::uint64_t seed);

struct SplitResult {
    Dataset train;
    Dataset test;
};

/// Label-stratified split; each class contributes floor(count * fraction)
/// records to train. Both sides keep the input's relative order.
SplitResult split(const Dataset& dataset, double train_fraction, std::uint64_t seed);

/// Oversamples the minority class to the majority count by interpolating
/// toward one of the k nearest minority neighbours (z-scored Euclidean).
Dataset smote_balance(const Dataset& train, std::size_t k_neighbors, std::uint64_t seed);

struct EvalRatio {
    std::size_t risky = 1;
    std::size_t nonrisky = 4;
};

/// Takes the risky records (all of them, or the first risky_count) plus
/// risky_count * nonrisky / risky uniformly drawn non-risky records. The
/// result keeps the input's relative order.
Dataset sample_eval(const Dataset& test, EvalRatio ratio, std::uint64_t seed,
                    std::optional<std::size_t> risky_count = std::nullopt);

}  // namespace lift
