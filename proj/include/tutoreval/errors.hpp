#pragma once

#include <stdexcept>
#include <string>

namespace tutoreval {

/// Input violates a documented contract (bad label, duplicate id, shape mismatch...).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A file could not be opened, read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace tutoreval
