#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "lift/dataset.hpp"

namespace lift {

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::array<double, 2> class_counts{};
};

/// Axis-aligned binary tree; rows with x[feature] <= threshold go left.
struct DecisionTree {
    std::vector<TreeNode> nodes;
    /// Sample-weighted Gini decrease accumulated per feature.
    std::vector<double> impurity_decrease;

    int predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
};

struct ForestParams {
    std::size_t n_trees = 200;
    std::size_t max_depth = 12;
    std::size_t min_leaf = 2;
    bool bootstrap = true;
    /// 0 means floor(sqrt(d)).
    std::size_t features_per_split = 0;
    std::uint64_t seed = 0;
    std::size_t max_workers = 0;  // 0: hardware concurrency
};

struct ForestModel {
    std::vector<DecisionTree> trees;
    std::vector<std::string> feature_names;
    std::uint64_t seed = 0;
};

/// Gini random forest. Tree t is grown from its own derived seed, so the
/// model does not depend on how trees are spread across threads.
ForestModel rf_train(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, std::vector<std::string> feature_names,
                     const ForestParams& params);
ForestModel rf_train(const Dataset& train, const ForestParams& params);

/// Majority vote across trees; ties vote 0.
std::vector<int> rf_predict(const ForestModel& model, const Eigen::MatrixXd& x);
/// Requires the model to be trained on the catalog variables.
std::vector<int> rf_predict(const ForestModel& model, const std::vector<TrajectoryRecord>& records);

struct ImportanceVector {
    std::vector<std::string> names;
    Eigen::VectorXd values;

    double of(std::string_view name) const;
};

nlohmann::ordered_json to_json(const ImportanceVector& importance);

/// Mean decrease in impurity: per-tree shares averaged over trees and
/// normalised to sum 1 (all zeros when no tree ever split).
ImportanceVector rf_importance(const ForestModel& model);

/// Element-wise mean of importance vectors over the same features.
ImportanceVector mean_importance(const std::vector<ImportanceVector>& runs);

}  // namespace lift
