#pragma once

#include <stdexcept>
#include <string>

namespace hfm {

enum class ErrorKind {
    shape,        // array sizes or particle layout do not match
    domain,       // argument outside the valid range
    unsupported,  // operation not defined for this system variant
    config,       // bad job configuration
    numeric,      // non-finite values, failed projections, rejection budget
    io,           // file access or format errors
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
    if (!condition) fail(kind, what);
}

}  // namespace hfm
