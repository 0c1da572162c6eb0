#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sexid {

/// Machine-parsable failure categories. The CLI prints the category name on
/// a single stderr line so callers can branch on it without parsing prose.
enum class ErrorCategory {
    format,
    validation,
    argument,
    config,
    consistency,
    transport,
    load,
    coverage,
    routing,
    statistics,
    io,
};

std::string_view to_string(ErrorCategory c) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

struct FormatError : Error {
    explicit FormatError(const std::string& m) : Error(ErrorCategory::format, m) {}
};
struct ValidationError : Error {
    explicit ValidationError(const std::string& m) : Error(ErrorCategory::validation, m) {}
};
struct ArgumentError : Error {
    explicit ArgumentError(const std::string& m) : Error(ErrorCategory::argument, m) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error(ErrorCategory::config, m) {}
};
struct ConsistencyError : Error {
    explicit ConsistencyError(const std::string& m) : Error(ErrorCategory::consistency, m) {}
};
struct LoadError : Error {
    explicit LoadError(const std::string& m) : Error(ErrorCategory::load, m) {}
};
struct CoverageError : Error {
    explicit CoverageError(const std::string& m) : Error(ErrorCategory::coverage, m) {}
};
struct RoutingError : Error {
    explicit RoutingError(const std::string& m) : Error(ErrorCategory::routing, m) {}
};
struct StatisticsError : Error {
    explicit StatisticsError(const std::string& m) : Error(ErrorCategory::statistics, m) {}
};
struct IoError : Error {
    explicit IoError(const std::string& m) : Error(ErrorCategory::io, m) {}
};

/// Retriable failure talking to a translation provider. Carries the id of
/// the example whose text could not be translated.
class TransportError : public Error {
public:
    TransportError(std::string item_id, const std::string& m)
        : Error(ErrorCategory::transport, m), item_id_(std::move(item_id)) {}
    const std::string& item_id() const noexcept { return item_id_; }

private:
    std::string item_id_;
};

}  // namespace sexid
