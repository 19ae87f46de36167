#pragma once

#include <stdexcept>
#include <string>

namespace nvrabi {

// Invalid user input: bad parameters, malformed files, config errors.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Integration blew up, a linear system was singular, or an iteration failed
// to reach its fixed point.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nvrabi
