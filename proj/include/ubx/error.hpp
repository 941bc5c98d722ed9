#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ubx {

using LabelId = std::uint32_t;
inline constexpr LabelId kNoLabel = 0xffffffffu;

// Base for every diagnostic the pipeline raises. `code()` is the short
// machine-readable tag used in `error[<code>]` renderings.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const { return code_; }
  virtual std::string render() const;

 private:
  std::string code_;
};

class ParseError : public Error {
 public:
  ParseError(int line, int column, std::vector<std::string> expected,
             const std::string& message, std::string code = "parse");

  int line() const { return line_; }
  int column() const { return column_; }
  const std::vector<std::string>& expected() const { return expected_; }
  std::string render() const override;

 private:
  int line_;
  int column_;
  std::vector<std::string> expected_;
};

class UnboundVariable : public ParseError {
 public:
  UnboundVariable(int line, int column, const std::string& name);
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

// Errors anchored at a program label rather than a source span.
class LabeledError : public Error {
 public:
  LabeledError(std::string code, LabelId label, const std::string& message)
      : Error(std::move(code), message), label_(label) {}
  LabelId label() const { return label_; }
  std::string render() const override;

 private:
  LabelId label_;
};

// Signals that an internal invariant was broken (exit code 2 at the CLI).
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace ubx
