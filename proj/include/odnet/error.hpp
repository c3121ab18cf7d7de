#pragma once

#include <stdexcept>
#include <string>

namespace odnet {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Link attributes out of domain (non-finite, nonpositive capacity, ...).
struct InvalidLinkError : Error {
    using Error::Error;
};

// Network / model / data file could not be parsed or failed validation.
struct ParseError : Error {
    using Error::Error;
};

struct AssemblyError : Error {
    using Error::Error;
};

struct ConvergenceError : Error {
    using Error::Error;
};

struct DomainError : Error {
    using Error::Error;
};

struct UnroutableDemandError : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

}  // namespace odnet
