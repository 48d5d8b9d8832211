#pragma once

#include <concepts>
#include <stdexcept>
#include <string>

namespace hicolora {

enum class ErrorKind {
    Argument,   // bad shapes, out-of-range arguments
    Numerical,  // non-convergence, non-finite values
    Config,     // invalid configuration or schema
    Format,     // malformed input files
    Lookup,     // missing keys
    Contract,   // precondition on object state violated
    Io,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const char* what) {
    if (!cond) fail(kind, what);
}

/// Builds the message only on failure.
template <std::invocable F>
void require(bool cond, ErrorKind kind, F&& make_what) {
    if (!cond) fail(kind, std::forward<F>(make_what)());
}

}  // namespace hicolora
