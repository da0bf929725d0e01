#pragma once

#include <stdexcept>
#include <string>

namespace uwhdn {

// Precondition / input-validation failures. The CLI maps these to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Runtime aborts (non-finite losses, I/O failures mid-run). CLI exit code 3.
class RuntimeFailure : public std::runtime_error {
 public:
  explicit RuntimeFailure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace uwhdn
