#pragma once

#include <functional>
#include <optional>
#include <string_view>

#include <nlohmann/json.hpp>

namespace lift {

/// Finds the first balanced {...} span in free text that parses as a JSON
/// object and satisfies accept. Model answers often wrap JSON in prose or
/// code fences; this never throws on malformed input.
std::optional<nlohmann::json> extract_json_object(
    std::string_view text, const std::function<bool(const nlohmann::json&)>& accept = {});

}  // namespace lift
