#pragma once

#include <stdexcept>
#include <string>

namespace cavspin {

enum class ErrorKind
{
    invalid_argument,
    config,
    data,
    fit,
    io,
};

class Error : public std::runtime_error
{
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what)
{
    throw Error(kind, what);
}

inline void require(bool ok, const std::string& what, ErrorKind kind = ErrorKind::invalid_argument)
{
    if (!ok)
        fail(kind, what);
}

} // namespace cavspin
