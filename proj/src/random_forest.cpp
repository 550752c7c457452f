#include "lift/random_forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "lift/error.hpp"
#include "lift/parallel.hpp"
#include "lift/rng.hpp"

namespace lift {

namespace {

double gini(double c0, double c1) {
    const double n = c0 + c1;
    if (n <= 0.0) return 0.0;
    const double p0 = c0 / n;
    const double p1 = c1 / n;
    return 1.0 - p0 * p0 - p1 * p1;
}

struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double decrease = 0.0;
};

class TreeBuilder {
public:
    TreeBuilder(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, const ForestParams& params, std::size_t mtry,
                std::uint64_t seed)
        : x_(x), y_(y), params_(params), mtry_(mtry), rng_(seed) {}

    DecisionTree build() {
        const auto n = static_cast<std::size_t>(x_.rows());
        std::vector<std::size_t> rows(n);
        if (params_.bootstrap) {
            for (auto& r : rows) r = rng_.index(n);
        } else {
            std::iota(rows.begin(), rows.end(), 0);
        }
        tree_.impurity_decrease.assign(static_cast<std::size_t>(x_.cols()), 0.0);
        grow(rows, 0);
        return std::move(tree_);
    }

private:
    int grow(std::vector<std::size_t>& rows, std::size_t depth) {
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        std::array<double, 2> counts{};
        for (auto r : rows) counts[y_(static_cast<Eigen::Index>(r)) == 1 ? 1 : 0] += 1.0;
        tree_.nodes[static_cast<std::size_t>(id)].class_counts = counts;

        const bool pure = counts[0] == 0.0 || counts[1] == 0.0;
        if (pure || depth >= params_.max_depth || rows.size() < 2 * params_.min_leaf) return id;

        const auto split = best_split(rows, counts);
        if (split.feature < 0) return id;

        std::vector<std::size_t> left;
        std::vector<std::size_t> right;
        for (auto r : rows) {
            (x_(static_cast<Eigen::Index>(r), split.feature) <= split.threshold ? left : right).push_back(r);
        }
        rows.clear();
        rows.shrink_to_fit();
        tree_.impurity_decrease[static_cast<std::size_t>(split.feature)] += split.decrease;

        const int l = grow(left, depth + 1);
        const int r = grow(right, depth + 1);
        auto& node = tree_.nodes[static_cast<std::size_t>(id)];
        node.feature = split.feature;
        node.threshold = split.threshold;
        node.left = l;
        node.right = r;
        return id;
    }

    SplitChoice best_split(const std::vector<std::size_t>& rows, const std::array<double, 2>& counts) {
        const auto d = static_cast<std::size_t>(x_.cols());
        std::vector<std::size_t> features(d);
        std::iota(features.begin(), features.end(), 0);
        for (std::size_t i = 0; i < mtry_; ++i) std::swap(features[i], features[i + rng_.index(d - i)]);

        const double n = static_cast<double>(rows.size());
        const double parent = n * gini(counts[0], counts[1]);
        const auto min_leaf = static_cast<double>(params_.min_leaf);

        SplitChoice best;
        std::vector<std::pair<double, int>> column(rows.size());
        for (std::size_t f = 0; f < mtry_; ++f) {
            const auto feat = static_cast<Eigen::Index>(features[f]);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const auto r = static_cast<Eigen::Index>(rows[i]);
                column[i] = {x_(r, feat), y_(r) == 1 ? 1 : 0};
            }
            std::sort(column.begin(), column.end());

            std::array<double, 2> left{};
            for (std::size_t i = 0; i + 1 < column.size(); ++i) {
                left[static_cast<std::size_t>(column[i].second)] += 1.0;
                if (column[i].first == column[i + 1].first) continue;
                const double nl = static_cast<double>(i + 1);
                const double nr = n - nl;
                if (nl < min_leaf || nr < min_leaf) continue;
                const double child = nl * gini(left[0], left[1]) + nr * gini(counts[0] - left[0], counts[1] - left[1]);
                const double decrease = parent - child;
                if (decrease > best.decrease + 1e-12) {
                    best.feature = static_cast<int>(feat);
                    best.threshold = 0.5 * (column[i].first + column[i + 1].first);
                    // midpoint can round onto the upper value for adjacent doubles
                    if (!(best.threshold < column[i + 1].first)) best.threshold = column[i].first;
                    best.decrease = decrease;
                }
            }
        }
        return best;
    }

    const Eigen::MatrixXd& x_;
    const Eigen::VectorXi& y_;
    const ForestParams& params_;
    std::size_t mtry_;
    Rng rng_;
    DecisionTree tree_;
};

}  // namespace

int DecisionTree::predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    std::size_t at = 0;
    while (nodes[at].feature >= 0) {
        const auto& node = nodes[at];
        at = static_cast<std::size_t>(row(node.feature) <= node.threshold ? node.left : node.right);
    }
    return nodes[at].class_counts[1] > nodes[at].class_counts[0] ? 1 : 0;
}

ForestModel rf_train(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, std::vector<std::string> feature_names,
                     const ForestParams& params) {
    if (x.rows() != y.size()) throw Error(ErrorKind::usage, "rf_train: feature/label size mismatch");
    if (static_cast<std::size_t>(x.cols()) != feature_names.size())
        throw Error(ErrorKind::usage, "rf_train: feature name count mismatch");
    if (x.rows() == 0 || x.cols() == 0) throw Error(ErrorKind::precondition, "rf_train: empty training set");
    const auto positives = (y.array() == 1).count();
    if (positives == 0 || positives == y.size())
        throw Error(ErrorKind::precondition, "rf_train: training set must contain both classes");
    if (params.n_trees == 0 || params.min_leaf == 0) throw Error(ErrorKind::usage, "rf_train: invalid parameters");

    const auto d = static_cast<std::size_t>(x.cols());
    std::size_t mtry = params.features_per_split;
    if (mtry == 0) mtry = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d))));
    mtry = std::clamp<std::size_t>(mtry, 1, d);

    ForestModel model;
    model.feature_names = std::move(feature_names);
    model.seed = params.seed;
    model.trees.resize(params.n_trees);
    const std::size_t workers = params.max_workers ? params.max_workers : std::max(1u, std::thread::hardware_concurrency());
    parallel_for(params.n_trees, workers, [&](std::size_t t) {
        model.trees[t] = TreeBuilder(x, y, params, mtry, derive_seed(params.seed, t)).build();
    });
    return model;
}

ForestModel rf_train(const Dataset& train, const ForestParams& params) {
    std::vector<std::string> names;
    for (const auto& spec : catalog()) names.emplace_back(spec.name);
    return rf_train(train.feature_matrix(), train.labels(), std::move(names), params);
}

std::vector<int> rf_predict(const ForestModel& model, const Eigen::MatrixXd& x) {
    if (!model.trees.empty() && static_cast<std::size_t>(x.cols()) != model.feature_names.size())
        throw Error(ErrorKind::usage, "rf_predict: expected " + std::to_string(model.feature_names.size()) +
                                          " features, got " + std::to_string(x.cols()));
    std::vector<int> out(static_cast<std::size_t>(x.rows()), 0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        std::size_t votes = 0;
        for (const auto& tree : model.trees) votes += static_cast<std::size_t>(tree.predict(x.row(i)));
        out[static_cast<std::size_t>(i)] = 2 * votes > model.trees.size() ? 1 : 0;
    }
    return out;
}

std::vector<int> rf_predict(const ForestModel& model, const std::vector<TrajectoryRecord>& records) {
    if (records.empty()) return {};
    const auto specs = catalog();
    if (model.feature_names.size() != specs.size())
        throw Error(ErrorKind::usage, "rf_predict: model features do not match the variable catalog");
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (model.feature_names[i] != specs[i].name)
            throw Error(ErrorKind::usage, "rf_predict: unknown feature '" + model.feature_names[i] + "'");
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(specs.size()));
    for (std::size_t i = 0; i < records.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = records[i].features.transpose();
    return rf_predict(model, x);
}

double ImportanceVector::of(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return values(static_cast<Eigen::Index>(i));
    }
    throw Error(ErrorKind::usage, "importance: unknown feature '" + std::string(name) + "'");
}

nlohmann::ordered_json to_json(const ImportanceVector& importance) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < importance.names.size(); ++i)
        j[importance.names[i]] = importance.values(static_cast<Eigen::Index>(i));
    return j;
}

ImportanceVector rf_importance(const ForestModel& model) {
    const auto d = static_cast<Eigen::Index>(model.feature_names.size());
    ImportanceVector out{model.feature_names, Eigen::VectorXd::Zero(d)};
    for (const auto& tree : model.trees) {
        const Eigen::Map<const Eigen::VectorXd> dec(tree.impurity_decrease.data(), d);
        const double total = dec.sum();
        if (total > 0.0) out.values += dec / total;
    }
    const double total = out.values.sum();
    if (total > 0.0) out.values /= total;
    return out;
}

ImportanceVector mean_importance(const std::vector<ImportanceVector>& runs) {
    if (runs.empty()) return {};
    ImportanceVector out{runs.front().names, Eigen::VectorXd::Zero(runs.front().values.size())};
    for (const auto& r : runs) {
        if (r.names != out.names) throw Error(ErrorKind::usage, "mean_importance: feature mismatch");
        out.values += r.values;
    }
    out.values /= static_cast<double>(runs.size());
    return out;
}

}  // namespace lift
