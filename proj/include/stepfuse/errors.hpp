#pragma once

#include <stdexcept>
#include <string>

namespace stepfuse {

// Violated precondition or malformed value (bad shape, non-finite entry, bad config).
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

// Class or sample index outside its valid range.
class IndexError : public std::out_of_range {
 public:
  explicit IndexError(const std::string& what) : std::out_of_range(what) {}
};

// Request would exceed a hard size guard (e.g. weight-grid enumeration).
class ResourceLimit : public std::runtime_error {
 public:
  explicit ResourceLimit(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace stepfuse
