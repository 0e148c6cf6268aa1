#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace kdn {

// Coarse error categories; the CLI maps each to a distinct exit code.
enum class ErrorKind {
  invalid_argument,
  infeasible_parameters,
  unreachable,
  inconsistent_input,
  instability,
  schema,
  parse,
  training_failure,
  insufficient_data,
  state,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InstabilityError : public Error {
 public:
  InstabilityError(std::vector<std::size_t> links, const std::string& what)
      : Error(ErrorKind::instability, what), links_(std::move(links)) {}

  // Directed link indices whose utilization reached the stability limit.
  const std::vector<std::size_t>& overloaded_links() const noexcept { return links_; }

 private:
  std::vector<std::size_t> links_;
};

enum class ParseFailure { syntax, unknown_identifier, duplicate_objective };

class ParseError : public Error {
 public:
  ParseError(ParseFailure failure, std::size_t line, std::size_t column, const std::string& msg)
      : Error(ErrorKind::parse,
              "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + msg),
        failure_(failure),
        line_(line),
        column_(column) {}

  ParseFailure failure() const noexcept { return failure_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  ParseFailure failure_;
  std::size_t line_;
  std::size_t column_;
};

}  // namespace kdn
