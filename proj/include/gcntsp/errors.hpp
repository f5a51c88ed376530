#pragma once

#include <stdexcept>
#include <string>

namespace gcntsp {

/// Bad argument value (wrong n, k out of range, unknown enum name, ...).
class InvalidArgument : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Problem too large for an exact solver.
class SizeLimitError : public std::length_error {
  public:
    using std::length_error::length_error;
};

/// Malformed dataset / checkpoint / config input. `line()` is 1-based, 0 when unknown.
class ParseError : public std::runtime_error {
  public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

/// Tensor shapes that do not fit together.
class ShapeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Operation called in the wrong state (backward twice, adam without grads).
class StateError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

} // namespace gcntsp
