#pragma once

#include <stdexcept>
#include <string>

namespace dpflow {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An argument outside the domain of a constitutive map or geometry routine.
class DomainError : public Error {
public:
    using Error::Error;
};

// Unparseable or physically inadmissible scenario data.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Linear or nonlinear solver breakdown.
class SolverError : public Error {
public:
    using Error::Error;
};

} // namespace dpflow
