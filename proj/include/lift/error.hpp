#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lift {

/// Broad failure category. The CLI maps each kind onto a distinct exit code.
enum class ErrorKind {
    usage,
    validation,  // schema, bounds, knowledge-base gaps
    transport,   // network failure or exhausted retries
    request,     // server rejected the request (4xx)
    io,
    parse,       // unparseable model response
    precondition,
    degenerate,  // numerically degenerate input
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace lift
