#include "sexid/errors.hpp"

namespace sexid {

std::string_view to_string(ErrorCategory c) noexcept {
    switch (c) {
        case ErrorCategory::format: return "format";
        case ErrorCategory::validation: return "validation";
        case ErrorCategory::argument: return "argument";
        case ErrorCategory::config: return "config";
        case ErrorCategory::consistency: return "consistency";
        case ErrorCategory::transport: return "transport";
        case ErrorCategory::load: return "load";
        case ErrorCategory::coverage: return "coverage";
        case ErrorCategory::routing: return "routing";
        case ErrorCategory::statistics: return "statistics";
        case ErrorCategory::io: return "io";
    }
    return "unknown";
}

}  // namespace sexid
