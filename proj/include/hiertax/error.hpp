#pragma once

#include <stdexcept>
#include <string>

namespace hiertax {

/// Bad input: malformed files, invalid configuration, unknown tags.
/// The CLI maps these to exit status 1; anything else is a runtime failure.
class ValidationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace hiertax
