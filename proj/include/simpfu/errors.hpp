#pragma once

#include <stdexcept>

namespace simpfu {

// Bad input from the caller: malformed files, out-of-range arguments.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace simpfu
