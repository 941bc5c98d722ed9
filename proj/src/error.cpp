#include "ubx/error.hpp"

#include <sstream>

namespace ubx {

std::string Error::render() const {
  return "error[" + code_ + "]: " + what();
}

ParseError::ParseError(int line, int column, std::vector<std::string> expected,
                       const std::string& message, std::string code)
    : Error(std::move(code), message),
      line_(line),
      column_(column),
      expected_(std::move(expected)) {}

std::string ParseError::render() const {
  std::ostringstream out;
  out << "error[" << code() << "] at " << line_ << ":" << column_ << ": "
      << what();
  if (!expected_.empty()) {
    out << " (expected one of:";
    for (const auto& e : expected_) out << " " << e;
    out << ")";
  }
  return out.str();
}

UnboundVariable::UnboundVariable(int line, int column, const std::string& name)
    : ParseError(line, column, {}, "unbound variable '" + name + "'",
                 "unbound-variable"),
      name_(name) {}

std::string LabeledError::render() const {
  return "error[" + code() + "] at #" + std::to_string(label_) + ": " + what();
}

}  // namespace ubx
