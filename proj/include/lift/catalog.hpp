#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace lift {

inline constexpr std::size_t kNumVariables = 10;

enum class VariableGroup { long_term, short_term, traffic };

std::string_view to_string(VariableGroup group) noexcept;

struct VariableSpec {
    std::string_view name;
    VariableGroup group;
    std::string_view description;
    std::string_view units;
};

/// Feature vector in catalog order.
using FeatureVector = Eigen::Matrix<double, static_cast<int>(kNumVariables), 1>;

/// The ten model inputs: long-term pattern, trip behaviour, traffic state.
std::span<const VariableSpec, kNumVariables> catalog() noexcept;

/// Catalog position of a variable name, if it is one of the ten.
std::optional<std::size_t> variable_index(std::string_view name) noexcept;

bool is_catalog_variable(std::string_view name) noexcept;

}  // namespace lift
