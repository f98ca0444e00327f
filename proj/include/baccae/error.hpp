#pragma once

#include <stdexcept>
#include <string>

namespace baccae {

enum class ErrorKind {
    Load,
    Io,
    Parse,
    Parameter,
    Dimension,
    Manifest,
    Architecture,
    Usage,
    Completeness,
    Range,
    Embedding,
    Config,
    Dependency,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library; the kind says which contract broke.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace baccae
