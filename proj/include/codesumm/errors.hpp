#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace codesumm {

/// Tokenizing an input that reduces to zero tokens.
class EmptySequenceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or truncated checkpoint / vocabulary / corpus file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss; carries the offending batch index.
class DivergedError : public std::runtime_error {
 public:
  DivergedError(std::size_t batch_index, const std::string& what)
      : std::runtime_error(what), batch_index(batch_index) {}
  std::size_t batch_index;
};

}  // namespace codesumm
