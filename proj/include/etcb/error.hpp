#pragma once

#include <stdexcept>
#include <string>

namespace etcb {

// Every library error carries a short machine-readable code so the CLI can
// emit `error,<code>,<message>` lines.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

// Caller supplied something malformed (dimension mismatch, out-of-range value).
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error("input", what) {}
};

// An algorithm hypothesis does not hold for the given data.
class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& what)
      : Error("precondition", what) {}
};

// A numerical procedure failed to converge or certify its result.
class DiagnosticError : public Error {
 public:
  explicit DiagnosticError(const std::string& what)
      : Error("diagnostic", what) {}
};

class TimeoutError : public Error {
 public:
  explicit TimeoutError(const std::string& what) : Error("timeout", what) {}
};

namespace detail {
inline void require(bool cond, const std::string& what) {
  if (!cond) throw InputError(what);
}
}  // namespace detail

}  // namespace etcb
