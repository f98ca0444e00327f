#include "baccae/error.hpp"

namespace baccae {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Load: return "load";
        case ErrorKind::Io: return "io";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Parameter: return "parameter";
        case ErrorKind::Dimension: return "dimension";
        case ErrorKind::Manifest: return "manifest";
        case ErrorKind::Architecture: return "architecture";
        case ErrorKind::Usage: return "usage";
        case ErrorKind::Completeness: return "completeness";
        case ErrorKind::Range: return "range";
        case ErrorKind::Embedding: return "embedding";
        case ErrorKind::Config: return "config";
        case ErrorKind::Dependency: return "dependency";
    }
    return "unknown";
}

}  // namespace baccae
