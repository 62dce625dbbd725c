#pragma once

#include <stdexcept>
#include <string>

namespace semir {

// Caller broke a documented precondition (parity, shapes, counts).
class ContractViolation : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

class IndexError : public std::out_of_range {
public:
  using std::out_of_range::out_of_range;
};

class InvalidParams : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or truncated artifact on disk.
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// A pipeline stage failed; carries the stage name.
class StageError : public std::runtime_error {
public:
  StageError(std::string stage, const std::string &what)
      : std::runtime_error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string &stage() const { return stage_; }

private:
  std::string stage_;
};

} // namespace semir
