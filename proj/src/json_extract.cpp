#include "lift/json_extract.hpp"

namespace lift {

namespace {

// End offset (exclusive) of the object opening at text[open], or npos when
// braces never balance. String literals are skipped so braces inside them
// do not count.
std::size_t balanced_end(std::string_view text, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = open; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i + 1;
        }
    }
    return std::string_view::npos;
}

}  // namespace

std::optional<nlohmann::json> extract_json_object(std::string_view text,
                                                  const std::function<bool(const nlohmann::json&)>& accept) {
    constexpr int kMaxCandidates = 4096;
    std::size_t pos = text.find('{');
    for (int tried = 0; pos != std::string_view::npos && tried < kMaxCandidates; ++tried) {
        const std::size_t end = balanced_end(text, pos);
        if (end != std::string_view::npos) {
            auto doc = nlohmann::json::parse(text.substr(pos, end - pos), nullptr, /*allow_exceptions=*/false);
            if (!doc.is_discarded() && doc.is_object() && (!accept || accept(doc))) return doc;
        }
        pos = text.find('{', pos + 1);
    }
    return std::nullopt;
}

}  // namespace lift
