#pragma once

#include <stdexcept>
#include <string>

namespace evgrid {

// Base class for every library failure. `is_input()` separates bad
// configuration/data (usage errors) from numerical failures.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, bool input = false)
      : std::runtime_error(what), input_(input) {}
  bool is_input() const { return input_; }

 private:
  bool input_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line)
      : Error("line " + std::to_string(line) + ": " + what, true), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class TopologyError : public Error {
 public:
  explicit TopologyError(const std::string& what) : Error(what, true) {}
};

class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& what) : Error(what, true) {}
};

class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& what) : Error(what, true) {}
};

class UnsupportedError : public Error {
 public:
  explicit UnsupportedError(const std::string& what) : Error(what, true) {}
};

// g_inverse asked for a value outside the strictly increasing range of g.
class RangeError : public Error {
 public:
  explicit RangeError(const std::string& what) : Error(what) {}
};

class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(const std::string& what) : Error(what) {}
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double gap = 0.0)
      : Error(what), gap_(gap) {}
  double gap() const { return gap_; }

 private:
  double gap_;
};

class StabilityError : public Error {
 public:
  explicit StabilityError(const std::string& what) : Error(what) {}
};

}  // namespace evgrid
