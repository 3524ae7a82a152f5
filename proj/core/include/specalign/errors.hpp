#pragma once

#include <stdexcept>
#include <string>

namespace specalign {

// Root of every error raised by the library. Callers that only care about
// "something went wrong" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid option values or unknown enum names.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Counts that do not fit (batch larger than dataset, K larger than graph...).
class SizeError : public Error {
 public:
  using Error::Error;
};

// Malformed input files. Message carries row/column when known.
class ParseError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated by the caller.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Graph has an isolated node.
class ConnectivityError : public Error {
 public:
  ConnectivityError(const std::string& what, long node) : Error(what), node_(node) {}
  long node() const noexcept { return node_; }

 private:
  long node_;
};

// Degenerate scale, geometry or subspace (sigma == 0, rank-deficient anchors...).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Eigensolver failure, non-finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

// RANSAC could not find a large enough consensus set.
class RobustFitError : public Error {
 public:
  using Error::Error;
};

// Training aborted. iteration() is the 1-based iteration that failed.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, long iteration) : Error(what), iteration_(iteration) {}
  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

}  // namespace specalign
