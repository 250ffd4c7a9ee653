#pragma once

#include <stdexcept>
#include <string>

namespace mortpca {

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  success = 0,
  usage = 1,
  data = 2,
  numerical = 3,
};

/// Base class for all errors raised by the library. Each error knows which
/// exit code the CLI should report for it.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ExitCode code)
      : std::runtime_error(what), code_(code) {}

  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(what, ExitCode::usage) {}
};

/// Malformed, inconsistent, or incomplete input data.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what, ExitCode::data) {}
};

/// Argument outside the mathematical domain of a function (e.g. logit(0)).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what)
      : Error(what, ExitCode::data) {}
};

/// Estimation or optimisation failure.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(what, ExitCode::numerical) {}
};

}  // namespace mortpca
