#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mlconvgec {

/// Broad failure classes. The CLI prints the category name so scripts can
/// branch on it without parsing messages.
enum class ErrorCategory {
    dimension,
    length,
    config,
    ingestion,
    alignment,
    parse,
    contract,
    dependency,
    evaluation,
    training,
    io,
};

inline std::string_view category_name(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::dimension: return "dimension";
        case ErrorCategory::length: return "length";
        case ErrorCategory::config: return "config";
        case ErrorCategory::ingestion: return "ingestion";
        case ErrorCategory::alignment: return "alignment";
        case ErrorCategory::parse: return "parse";
        case ErrorCategory::contract: return "contract";
        case ErrorCategory::dependency: return "dependency";
        case ErrorCategory::evaluation: return "evaluation";
        case ErrorCategory::training: return "training";
        case ErrorCategory::io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
  public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

  private:
    ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory c, const std::string& message) {
    throw Error(c, message);
}

}  // namespace mlconvgec
