#pragma once

#include <stdexcept>
#include <string>

namespace mvgs {

/// Raised for contract violations and malformed inputs anywhere in the library.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Scene/config parse failures; carries the offending line when known.
class ParseError : public Error {
  public:
    ParseError(int line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    int line() const noexcept { return line_; }

  private:
    int line_;
};

}  // namespace mvgs
