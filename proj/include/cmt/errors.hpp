#pragma once

#include <stdexcept>
#include <string>

namespace cmt {

/// File and stream failures; the CLI maps these to exit code 2.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A verification (gradient check, acceptance probe) did not meet tolerance;
/// the CLI maps these to exit code 3.
class CheckError : public std::runtime_error {
 public:
  explicit CheckError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cmt
