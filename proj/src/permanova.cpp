#include "lift/permanova.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lift/error.hpp"
#include "lift/rng.hpp"

namespace lift {

namespace {

// Number of distinct subsets of size k, saturating well above any n_perm.
double binomial(std::size_t n, std::size_t k) {
    k = std::min(k, n - k);
    double c = 1.0;
    for (std::size_t i = 1; i <= k; ++i) {
        c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
        if (c > 1e15) return 1e15;
    }
    return std::round(c);
}

// Pairwise sums needed to evaluate SS_W for any subset in O(|subset|^2).
struct DistanceSums {
    Eigen::MatrixXd d2;
    Eigen::VectorXd row_sums;
    double total_pairs = 0.0;  // sum over i<j
    std::size_t n = 0;

    explicit DistanceSums(const Eigen::MatrixXd& points) : d2(squared_distances(points)), n(points.rows()) {
        row_sums = d2.rowwise().sum();
        total_pairs = row_sums.sum() / 2.0;
    }

    double pseudo_f_for(std::span<const std::size_t> subset) const {
        double within_subset = 0.0;
        double subset_rows = 0.0;
        for (std::size_t a = 0; a < subset.size(); ++a) {
            const auto i = static_cast<Eigen::Index>(subset[a]);
            subset_rows += row_sums(i);
            for (std::size_t b = a + 1; b < subset.size(); ++b) within_subset += d2(i, static_cast<Eigen::Index>(subset[b]));
        }
        const double within_rest = total_pairs - subset_rows + within_subset;
        const auto n_sub = static_cast<double>(subset.size());
        const auto n_rest = static_cast<double>(n - subset.size());
        const auto n_all = static_cast<double>(n);
        const double ss_total = total_pairs / n_all;
        const double ss_within = within_subset / n_sub + within_rest / n_rest;
        const double ss_between = ss_total - ss_within;
        if (ss_within <= 0.0) return ss_between > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
        return std::max(0.0, ss_between / (ss_within / (n_all - 2.0)));
    }
};

bool at_least(double permuted, double observed) {
    if (std::isinf(observed)) return std::isinf(permuted);
    return permuted >= observed - 1e-10 * std::max(1.0, std::abs(observed));
}

}  // namespace

nlohmann::ordered_json to_json(const PermanovaResult& result) {
    nlohmann::ordered_json j;
    j["pseudo_f"] = std::isfinite(result.pseudo_f) ? nlohmann::ordered_json(result.pseudo_f) : nlohmann::ordered_json("inf");
    j["p_value"] = result.p_value;
    j["n_permutations"] = result.n_permutations;
    j["observed_groups"] = {result.observed_groups.first, result.observed_groups.second};
    j["exhaustive"] = result.exhaustive;
    j["significance"] = std::string(to_string(significance_stars(result.p_value)));
    return j;
}

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& points) {
    const Eigen::Index n = points.rows();
    Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double d = (points.row(i) - points.row(j)).squaredNorm();
            d2(i, j) = d;
            d2(j, i) = d;
        }
    }
    return d2;
}

double pseudo_f(const Eigen::MatrixXd& sq_dist, const std::vector<bool>& in_first) {
    const auto n = static_cast<std::size_t>(sq_dist.rows());
    if (in_first.size() != n) throw Error(ErrorKind::usage, "pseudo_f: membership size mismatch");
    double within[2] = {0.0, 0.0};
    double total = 0.0;
    std::size_t sizes[2] = {0, 0};
    for (std::size_t i = 0; i < n; ++i) {
        ++sizes[in_first[i] ? 0 : 1];
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = sq_dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            total += d;
            if (in_first[i] == in_first[j]) within[in_first[i] ? 0 : 1] += d;
        }
    }
    if (sizes[0] == 0 || sizes[1] == 0) throw Error(ErrorKind::usage, "pseudo_f: both groups must be nonempty");
    const double ss_total = total / static_cast<double>(n);
    const double ss_within = within[0] / static_cast<double>(sizes[0]) + within[1] / static_cast<double>(sizes[1]);
    const double ss_between = ss_total - ss_within;
    if (ss_within <= 0.0) return ss_between > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    return std::max(0.0, ss_between / (ss_within / (static_cast<double>(n) - 2.0)));
}

PermanovaResult permanova(const Eigen::MatrixXd& group_a, const Eigen::MatrixXd& group_b,
                          std::span<const Eigen::Index> columns, const PermanovaOptions& opts) {
    const auto na = static_cast<std::size_t>(group_a.rows());
    const auto nb = static_cast<std::size_t>(group_b.rows());
    if (na < 2 || nb < 2) throw Error(ErrorKind::precondition, "permanova: each group needs at least 2 rows");
    if (columns.empty()) throw Error(ErrorKind::precondition, "permanova: no variables selected");
    if (group_a.cols() != group_b.cols()) throw Error(ErrorKind::precondition, "permanova: column count mismatch");
    for (auto c : columns) {
        if (c < 0 || c >= group_a.cols()) throw Error(ErrorKind::precondition, "permanova: column out of range");
    }

    const std::size_t n = na + nb;
    Eigen::MatrixXd pooled(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t k = 0; k < columns.size(); ++k) {
        const auto col = static_cast<Eigen::Index>(k);
        pooled.col(col).head(static_cast<Eigen::Index>(na)) = group_a.col(columns[k]);
        pooled.col(col).tail(static_cast<Eigen::Index>(nb)) = group_b.col(columns[k]);
    }
    // z-score over the pooled rows; constant columns carry no distance.
    bool any_spread = false;
    for (Eigen::Index c = 0; c < pooled.cols(); ++c) {
        const double mean = pooled.col(c).mean();
        const double sd = std::sqrt((pooled.col(c).array() - mean).square().mean());
        if (sd > 0.0 && std::isfinite(sd)) {
            pooled.col(c) = (pooled.col(c).array() - mean) / sd;
            any_spread = true;
        } else {
            pooled.col(c).setZero();
        }
    }
    if (!any_spread) throw Error(ErrorKind::degenerate, "permanova: all points identical in the selected variables");

    const DistanceSums sums(pooled);
    if (sums.total_pairs <= 0.0) throw Error(ErrorKind::degenerate, "permanova: zero total dispersion");

    // Enumerate the smaller group; the larger one is its complement.
    const bool first_is_small = na <= nb;
    const std::size_t n_small = first_is_small ? na : nb;
    std::vector<std::size_t> observed(n_small);
    std::iota(observed.begin(), observed.end(), first_is_small ? 0 : na);

    PermanovaResult result;
    result.observed_groups = {na, nb};
    result.pseudo_f = sums.pseudo_f_for(observed);

    const double distinct = binomial(n, n_small);
    std::size_t exceed = 0;
    if (static_cast<double>(opts.n_perm) >= distinct - 1.0) {
        result.exhaustive = true;
        std::vector<std::size_t> subset(n_small);
        std::iota(subset.begin(), subset.end(), 0);
        for (;;) {
            if (subset != observed && at_least(sums.pseudo_f_for(subset), result.pseudo_f)) ++exceed;
            ++result.n_permutations;
            // advance to the next k-subset in lexicographic order
            std::size_t i = n_small;
            while (i > 0 && subset[i - 1] == n - n_small + (i - 1)) --i;
            if (i == 0) break;
            ++subset[i - 1];
            for (std::size_t j = i; j < n_small; ++j) subset[j] = subset[j - 1] + 1;
        }
        --result.n_permutations;  // the observed labelling is not a permutation
    } else {
        if (opts.n_perm < 99)
            throw Error(ErrorKind::precondition, "permanova: n_perm must be at least 99 unless it covers all " +
                                                     std::to_string(static_cast<long long>(distinct)) +
                                                     " relabellings");
        Rng rng(opts.seed);
        std::vector<std::size_t> order(n);
        for (std::size_t p = 0; p < opts.n_perm; ++p) {
            std::iota(order.begin(), order.end(), 0);
            for (std::size_t i = 0; i < n_small; ++i) std::swap(order[i], order[i + rng.index(n - i)]);
            if (at_least(sums.pseudo_f_for(std::span<const std::size_t>(order.data(), n_small)), result.pseudo_f))
                ++exceed;
        }
        result.n_permutations = opts.n_perm;
    }
    result.p_value = static_cast<double>(1 + exceed) / static_cast<double>(1 + result.n_permutations);
    return result;
}

PermanovaResult permanova(const Dataset& data, const std::vector<std::string>& variables,
                          const PermanovaOptions& opts) {
    std::vector<Eigen::Index> columns;
    for (const auto& name : variables) {
        const auto idx = variable_index(name);
        if (!idx) throw Error(ErrorKind::precondition, "permanova: unknown variable '" + name + "'");
        columns.push_back(static_cast<Eigen::Index>(*idx));
    }
    return permanova(data.with_label(1).feature_matrix(), data.with_label(0).feature_matrix(), columns, opts);
}

Significance significance_stars(double p_value) {
    if (p_value < 0.001) return Significance::three_stars;
    if (p_value < 0.01) return Significance::two_stars;
    if (p_value < 0.05) return Significance::one_star;
    return Significance::ns;
}

std::string_view to_string(Significance s) noexcept {
    switch (s) {
        case Significance::ns: return "ns";
        case Significance::one_star: return "*";
        case Significance::two_stars: return "**";
        case Significance::three_stars: return "***";
    }
    return "ns";
}

}  // namespace lift
