#pragma once

#include <stdexcept>
#include <string>

namespace otoc {

// Every error raised by the library carries the name of the module that
// raised it, so the CLI can emit a tagged machine-readable record.
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& what)
        : std::runtime_error(what), module_(std::move(module)) {}

    const std::string& module() const noexcept { return module_; }

private:
    std::string module_;
};

// Input that fails a documented precondition (bad sizes, probabilities out
// of range, unknown names). Maps to exit code 2 in the CLI.
class ValidationError : public Error {
public:
    using Error::Error;
};

}  // namespace otoc
