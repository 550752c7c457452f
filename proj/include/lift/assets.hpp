#pragma once

#include <optional>
#include <string_view>

namespace lift {

/// Text assets compiled into the library, keyed as "<dir>/<file>", e.g.
/// "prompts/task1_system.txt" or "kb/reference_kb.json".
std::optional<std::string_view> find_asset(std::string_view name) noexcept;

/// find_asset or throw.
std::string_view asset(std::string_view name);

}  // namespace lift
