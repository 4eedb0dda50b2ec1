#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace gptgeo {

/// Library-wide exception. `code()` is a stable machine-readable reason
/// (e.g. "invalid_geometry", "incompatible_schema", "undefined_rca").
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

} // namespace gptgeo
