#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace blmm {

// Failure categories; the CLI maps them to process exit codes
// (input -> 2, numeric -> 3, oracle -> 4).
enum class ErrorKind { Input, Numeric, Oracle };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), kind_(kind), code_(std::move(code)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    std::string code_;
};

[[noreturn]] inline void throw_input(const std::string& code, const std::string& message) {
    throw Error(ErrorKind::Input, code, message);
}

[[noreturn]] inline void throw_numeric(const std::string& code, const std::string& message) {
    throw Error(ErrorKind::Numeric, code, message);
}

[[noreturn]] inline void throw_oracle(const std::string& code, const std::string& message) {
    throw Error(ErrorKind::Oracle, code, message);
}

}  // namespace blmm
