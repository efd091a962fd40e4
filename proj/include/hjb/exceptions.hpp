#pragma once

#include <stdexcept>
#include <string>

namespace hjb {

/// Base for failures caused by the data or the numerics rather than by misuse
/// of an interface. The CLI maps these to exit code 1.
class DomainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A query point lies outside the box an object is defined on.
class OutOfDomainError : public DomainError {
public:
    using DomainError::DomainError;
};

/// Euler-angle kinematics evaluated at (or numerically at) gimbal lock.
class SingularityError : public DomainError {
public:
    using DomainError::DomainError;
};

}  // namespace hjb
