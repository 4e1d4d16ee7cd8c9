#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace iseat {

// Shape / structural violations (mismatched extents, misaligned parameter sets).
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values or other numerical breakdowns.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration; `path` is the offending field, dotted from the root.
struct ConfigError : std::runtime_error {
    ConfigError(std::string field_path, std::string what)
        : std::runtime_error(field_path.empty() ? what : field_path + ": " + what),
          path(std::move(field_path)),
          message(std::move(what)) {}
    std::string path;
    std::string message;
};

// Malformed input data (IDX streams etc).
struct DataError : std::runtime_error {
    enum class Kind { bad_magic, truncated, count_mismatch, bad_value };
    DataError(Kind k, std::size_t byte_offset, const std::string& what)
        : std::runtime_error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
          kind(k),
          offset(byte_offset) {}
    Kind kind;
    std::size_t offset;
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace iseat
