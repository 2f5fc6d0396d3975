#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace psbfem {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user input: invalid generator parameters, inconsistent boundary
/// conditions, unknown names.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Mesh construction or validation failure.
class MeshError : public Error {
public:
    using Error::Error;
};

/// Numerical failure while building one element. Carries the cell id when
/// known (npos otherwise).
class ElementError : public Error {
public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    explicit ElementError(const std::string& what, std::size_t cell = npos)
        : Error(cell == npos ? what : "cell " + std::to_string(cell) + ": " + what),
          cell_(cell), detail_(what) {}

    std::size_t cell() const noexcept { return cell_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    std::size_t cell_;
    std::string detail_;
};

/// Global linear solve failure (singular system, residual gate violated).
class SolverError : public Error {
public:
    using Error::Error;
};

/// File could not be read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// Input-deck or expression syntax error with 1-based line/column.
class ParseError : public Error {
public:
    ParseError(const std::string& message, std::size_t line, std::size_t column)
        : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " +
                message),
          message_(message), line_(line), column_(column) {}

    const std::string& message() const noexcept { return message_; }
    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::string message_;
    std::size_t line_;
    std::size_t column_;
};

}  // namespace psbfem
