#include "lift/catalog.hpp"
#include "lift/error.hpp"

#include <algorithm>

namespace lift {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::usage: return "usage";
        case ErrorKind::validation: return "validation";
        case ErrorKind::transport: return "transport";
        case ErrorKind::request: return "request";
        case ErrorKind::io: return "io";
        case ErrorKind::parse: return "parse";
        case ErrorKind::precondition: return "precondition";
        case ErrorKind::degenerate: return "degenerate";
    }
    return "unknown";
}

std::string_view to_string(VariableGroup group) noexcept {
    switch (group) {
        case VariableGroup::long_term: return "long_term";
        case VariableGroup::short_term: return "short_term";
        case VariableGroup::traffic: return "traffic";
    }
    return "unknown";
}

namespace {

constexpr std::array<VariableSpec, kNumVariables> kCatalog{{
    {"l_f_col", VariableGroup::long_term, "Frequency of forward collision warning in historical trips", "times/km"},
    {"l_std_s", VariableGroup::long_term, "Standard deviation of longterm driving speed", "m/s"},
    {"l_fam", VariableGroup::long_term, "Ratio of historical trips that passed the target road segment", "ratio"},
    {"s_f_col", VariableGroup::short_term, "Frequency of forward collision warning during the trip", "times/km"},
    {"s_lane_d", VariableGroup::short_term, "Frequency of lane departure warning during the trip", "times/km"},
    {"s_avg_s", VariableGroup::short_term, "Average driving speed of the trip", "m/s"},
    {"s_std_s", VariableGroup::short_term, "Standard deviation of driving speed during the trip", "m/s"},
    {"lk_avg_s", VariableGroup::traffic, "Average traffic speed of road segments passed during the trip", "km/h"},
    {"lk_std_s", VariableGroup::traffic, "Standard deviation of traffic speed of road segments passed during the trip",
     "km/h"},
    {"lk_max_s", VariableGroup::traffic, "Maximum traffic speed of road segments passed during the trip", "km/h"},
}};

}  // namespace

std::span<const VariableSpec, kNumVariables> catalog() noexcept { return kCatalog; }

std::optional<std::size_t> variable_index(std::string_view name) noexcept {
    const auto it = std::find_if(kCatalog.begin(), kCatalog.end(), [&](const VariableSpec& s) { return s.name == name; });
    if (it == kCatalog.end()) return std::nullopt;
    return static_cast<std::size_t>(it - kCatalog.begin());
}

bool is_catalog_variable(std::string_view name) noexcept { return variable_index(name).has_value(); }

}  // namespace lift
