#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "lift/dataset.hpp"

namespace lift {

/// Two-group permutational MANOVA on z-scored Euclidean distances.
struct PermanovaResult {
    double pseudo_f = 0.0;
    /// (1 + #{permuted F >= observed F}) / (1 + n_permutations)
    double p_value = 1.0;
    std::size_t n_permutations = 0;
    std::pair<std::size_t, std::size_t> observed_groups{0, 0};
    /// Every distinct relabelling was visited instead of sampling.
    bool exhaustive = false;
};

nlohmann::ordered_json to_json(const PermanovaResult& result);

struct PermanovaOptions {
    std::size_t n_perm = 999;
    std::uint64_t seed = 0;
};

/// Squared Euclidean distances between rows.
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& points);

/// Pseudo-F from a squared-distance matrix and a two-group membership mask
/// (true = first group), via SS_T = sum_{i<j} d2 / N and
/// SS_W = sum_g sum_{i<j in g} d2 / n_g.
double pseudo_f(const Eigen::MatrixXd& sq_dist, const std::vector<bool>& in_first);

/// Tests whether the selected columns differ between the two row groups.
/// When n_perm covers every distinct relabelling (C(N, n_small) - 1 of
/// them) the test enumerates them all and the p-value is exact. Otherwise
/// n_perm random relabellings are drawn and n_perm must be at least 99.
PermanovaResult permanova(const Eigen::MatrixXd& group_a, const Eigen::MatrixXd& group_b,
                          std::span<const Eigen::Index> columns, const PermanovaOptions& opts = {});

/// Risky versus non-risky records of a dataset over the named variables.
PermanovaResult permanova(const Dataset& data, const std::vector<std::string>& variables,
                          const PermanovaOptions& opts = {});

enum class Significance { ns, one_star, two_stars, three_stars };

Significance significance_stars(double p_value);
std::string_view to_string(Significance s) noexcept;

}  // namespace lift
