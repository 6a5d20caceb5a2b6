#pragma once

#include <stdexcept>
#include <string>

namespace rankbsde {

/// Input failed a precondition (non-finite data, bad dimensions, unknown kind).
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// A problem descriptor failed one of the hypothesis checks and must not be solved.
class SpecRejected : public std::invalid_argument {
public:
    explicit SpecRejected(const std::string& what) : std::invalid_argument(what) {}
};

/// A numerical routine could not produce a result (singular system, step too large).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rankbsde
