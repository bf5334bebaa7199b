#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cass {

class ShapeError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class IndexError : public std::out_of_range {
  public:
    using std::out_of_range::out_of_range;
};

// Non-finite values where the math requires finite ones (NaN gradients, NaN losses).
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
  public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

  private:
    std::size_t line_;
};

// Dataset-level problems outside parsing (missing labels, empty splits, unreadable files).
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

std::string shape_to_string(const std::vector<std::size_t>& shape);

}  // namespace cass
