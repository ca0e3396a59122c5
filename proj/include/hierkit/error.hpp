#pragma once

#include <stdexcept>
#include <string>

namespace hierkit {

// Invalid domain data: schema violations, broken invariants, bad dimensions.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem and container-format failures: missing files, bad magic, short reads.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hierkit
