#pragma once

#include <stdexcept>
#include <string>

namespace caprelab {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed application/dataset/trace/hint file. Carries a 1-based location
/// when the failure is syntactic.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line = 0, int column = 0)
      : Error(line > 0 ? what + " (line " + std::to_string(line) + ", column " +
                             std::to_string(column) + ")"
                       : what),
        line_(line),
        column_(column) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

/// A name in the model does not resolve to a declared type, field or method.
class ResolveError : public Error {
 public:
  ResolveError(const std::string& what, std::string name)
      : Error(what), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class AnalysisError : public Error {
 public:
  using Error::Error;
};

class HintError : public Error {
 public:
  using Error::Error;
};

class UnknownType : public Error {
 public:
  explicit UnknownType(const std::string& type)
      : Error("unknown type '" + type + "'") {}
};

class TraceError : public Error {
 public:
  using Error::Error;
};

class PlacementError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class SpecError : public Error {
 public:
  using Error::Error;
};

}  // namespace caprelab
