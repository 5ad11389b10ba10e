#pragma once

#include <stdexcept>
#include <string>

namespace natscale {

/// Broad failure classes. The CLI maps each one to a process exit code.
enum class ErrorKind {
  Config,  // invalid configuration or arguments (exit 2)
  Input,   // unreadable or malformed input files (exit 3)
  Stage,   // a pipeline stage could not produce a valid result (exit 4)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string stage, const std::string& message)
      : std::runtime_error(stage.empty() ? message : stage + ": " + message),
        kind_(kind),
        stage_(std::move(stage)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& stage() const noexcept { return stage_; }

 private:
  ErrorKind kind_;
  std::string stage_;
};

inline Error config_error(const std::string& message) {
  return Error(ErrorKind::Config, "", message);
}

inline Error input_error(const std::string& message) {
  return Error(ErrorKind::Input, "", message);
}

inline Error stage_error(std::string stage, const std::string& message) {
  return Error(ErrorKind::Stage, std::move(stage), message);
}

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Input: return 3;
    case ErrorKind::Stage: return 4;
  }
  return 1;
}

}  // namespace natscale
