#pragma once

#include <stdexcept>
#include <string>

namespace face {

// Malformed input files (CSV rows, JSON envelopes).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inputs that parse but violate a data or protocol invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical fit or solve that did not reach its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace face
