#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lift {

/// Shortest decimal form that round-trips to the same double.
std::string format_shortest(double value);

/// Fixed-point with the given number of decimals, locale-independent.
std::string format_fixed(double value, int decimals);

std::string_view trim(std::string_view text) noexcept;

std::vector<std::string_view> split_view(std::string_view text, char delimiter);

std::string to_lower_ascii(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view separator);

/// Replaces every {{key}} in tmpl. Unknown keys are left untouched.
std::string substitute(std::string_view tmpl, const std::vector<std::pair<std::string_view, std::string>>& values);

/// Number of UTF-8 code points.
std::size_t utf8_length(std::string_view text) noexcept;

std::string read_file(const std::string& path);

}  // namespace lift
