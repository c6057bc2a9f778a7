#pragma once

#include <stdexcept>
#include <string>

namespace seismo {

// Shape or extent mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Violated precondition on arguments that are otherwise well-formed.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Every key of some attention/softmax row is masked.
class DegenerateMaskError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A persisted artifact (checkpoint, dataset) does not match what the caller
// expects: wrong model kind, config, parameter names or shapes.
class ArtifactMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  IoError(const std::string& path, const std::string& what)
      : std::runtime_error(what + ": " + path), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace seismo
